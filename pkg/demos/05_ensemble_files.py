# A small loss-diversity ensemble written to disk, then re-fused and re-scored from the files
# the way the command line tool would. Takes a minute or two.

#cell 1
import tempfile
from pathlib import Path

from segens import EnsembleSpec, evaluate_ensemble
from segens.bench import BenchConfig, run_bench, write_bench
from segens.nnet import TrainConfig

cfg = BenchConfig(n_train=30, n_test=8, height=32, width=32, seed=5, train=TrainConfig(epochs=6, drop_every=3))
result = run_bench(cfg)
print(result.table_csv())

#cell 2
out = Path(tempfile.mkdtemp())
write_bench(result, cfg, out)
print(sorted(p.name for p in out.iterdir()))
print((out / "member_00" / "manifest.json").read_text()[:300], "...")

#cell 3
spec = EnsembleSpec.load(out / "ensemble.json")
report = evaluate_ensemble(spec, out / "truth")
print("ensemble dice from files", round(report.aggregate_dice, 6), "in memory", round(result.ensemble_dice, 6))

#cell 4
# the same steps from a shell:
#   segens fuse --spec OUT/ensemble.json --out-dir OUT/refused
#   segens eval --pred-dir OUT/refused --gt-dir OUT/truth
