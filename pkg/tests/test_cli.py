import filecmp
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from segens.cli import main
from segens.metrics import MetricReport
from segens.raster import load_raster, one_hot, save_mask, save_raster


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pair(tmp_path, rng):
    mask = rng.integers(0, 2, (8, 8))
    z = rng.normal(size=(8, 8, 2))
    pred = (np.exp(z) / np.exp(z).sum(axis=2, keepdims=True)).astype(np.float32).astype(np.float64)
    save_mask(tmp_path / "t.pgm", mask, 2)
    save_raster(tmp_path / "p.segf", pred)
    save_raster(tmp_path / "perfect.segf", one_hot(mask, 2))
    return tmp_path


def test_loss_perfect_prediction(pair, capsys):
    code, out, _ = run(capsys, "loss", "--kind", "gd", "--pred", pair / "perfect.segf", "--target", pair / "t.pgm")
    assert code == 0 and out.strip() == "0.000000000"


def test_loss_comb3_is_ssim_plus_gd(pair, capsys):
    vals = {}
    for kind in ("comb3", "ssim", "gd"):
        code, out, _ = run(capsys, "loss", "--kind", kind, "--pred", pair / "p.segf", "--target", pair / "t.pgm")
        assert code == 0
        vals[kind] = float(out)
    assert abs(vals["comb3"] - (vals["ssim"] + vals["gd"])) <= 1.5e-9


def test_loss_params_and_grad_out(pair, capsys):
    (pair / "params.json").write_text(json.dumps({"alpha": 0.5, "beta": 0.5, "ssim": {"window_size": 3}}))
    code, out, _ = run(capsys, "loss", "--kind", "comb3", "--pred", pair / "p.segf", "--target", pair / "t.pgm",
                       "--params", pair / "params.json", "--grad-out", pair / "g.segf")
    assert code == 0 and float(out) > 0
    assert load_raster(pair / "g.segf").shape == (8, 8, 2)


def test_loss_unknown_kind(pair, capsys):
    code, out, err = run(capsys, "loss", "--kind", "xyz", "--pred", pair / "p.segf", "--target", pair / "t.pgm")
    assert code != 0 and out == ""
    assert err.startswith("error:")
    for kind in ("gd", "bce", "comb3", "lc_ft"):
        assert kind in err


def test_loss_file_errors(pair, tmp_path, capsys):
    save_mask(tmp_path / "small.pgm", np.zeros((4, 4), dtype=int), 2)
    code, _, err = run(capsys, "loss", "--kind", "gd", "--pred", pair / "p.segf", "--target", tmp_path / "small.pgm")
    assert code != 0 and err.startswith("error:") and "mismatch" in err
    code, _, err = run(capsys, "loss", "--kind", "gd", "--pred", tmp_path / "nope.segf", "--target", pair / "t.pgm")
    assert code != 0 and err.startswith("error:")


def test_bad_arguments_use_error_prefix(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------


@pytest.fixture
def toy_eval(tmp_path):
    """Three 1x4 images with hand-countable overlaps."""
    gt, pred = tmp_path / "gt", tmp_path / "pred"
    gt.mkdir()
    pred.mkdir()
    cases = {
        "a": ([1, 1, 0, 0], [1, 1, 0, 0]),  # dice 1, iou 1
        "b": ([1, 1, 0, 0], [1, 0, 1, 0]),  # tp 1 fp 1 fn 1: dice 1/2, iou 1/3
        "c": ([0, 0, 0, 0], [1, 1, 1, 0]),  # tp 0 fp 3: 0, 0
    }
    for i, (t, p) in cases.items():
        save_mask(gt / f"{i}.pgm", np.array([t]), 2)
        save_mask(pred / f"{i}.pgm", np.array([p]), 2)
    return tmp_path


REFERENCE_CSV = (
    "image,dice,iou\n"
    "a,1.000000,1.000000\n"
    "b,0.500000,0.333333\n"
    "c,0.000000,0.000000\n"
    "AGGREGATE,0.500000,0.444444\n"
)


def test_eval_toy_matches_hand_csv(toy_eval, capsys):
    code, out, _ = run(capsys, "eval", "--pred-dir", toy_eval / "pred", "--gt-dir", toy_eval / "gt")
    assert code == 0 and out == REFERENCE_CSV
    code, out, _ = run(capsys, "eval", "--pred-dir", toy_eval / "pred", "--gt-dir", toy_eval / "gt",
                       "--mode", "pixel_level")
    # pooled: tp 3, fp 4, fn 1 -> dice 6/11, iou 3/8
    assert out.splitlines()[-1] == "AGGREGATE,0.545455,0.375000"


def test_eval_self_is_perfect(toy_eval, capsys):
    out_csv = toy_eval / "r.csv"
    code, _, _ = run(capsys, "--quiet", "eval", "--pred-dir", toy_eval / "gt", "--gt-dir", toy_eval / "gt",
                     "--out", out_csv)
    rep = MetricReport.from_csv(out_csv.read_text())
    assert code == 0 and rep.aggregate_dice == 1.0 and rep.aggregate_iou == 1.0


def test_eval_accepts_rasters(toy_eval, capsys):
    pred = toy_eval / "pred"
    for f in pred.iterdir():
        os.remove(f)
    save_raster(pred / "a.segf", one_hot(np.array([[1, 1, 0, 0]]), 2))
    save_raster(pred / "b.segf", one_hot(np.array([[1, 0, 1, 0]]), 2))
    save_raster(pred / "c.segf", one_hot(np.array([[1, 1, 1, 0]]), 2))
    code, out, _ = run(capsys, "eval", "--pred-dir", pred, "--gt-dir", toy_eval / "gt")
    assert code == 0 and out == REFERENCE_CSV


def test_eval_missing_prediction_named(toy_eval, capsys):
    os.remove(toy_eval / "pred" / "b.pgm")
    os.remove(toy_eval / "pred" / "c.pgm")
    code, out, err = run(capsys, "eval", "--pred-dir", toy_eval / "pred", "--gt-dir", toy_eval / "gt")
    assert code != 0 and out == ""
    assert err.startswith("error:") and "b" in err.split("no prediction for:")[1] and "c" in err


# --------------------------------------------------------------------------


@pytest.fixture
def members(tmp_path, rng):
    for name in ("m1", "m2"):
        d = tmp_path / name
        d.mkdir()
        for i in range(3):
            save_raster(d / f"x{i}.segf", rng.dirichlet([1, 1], size=(5, 6)))
    return tmp_path


def _spec(root, members, **kw):
    path = root / "spec.json"
    path.write_text(json.dumps({"members": members, **kw}))
    return path


def test_fuse_single_member_copies_bytes(members, capsys):
    spec = _spec(members, [{"dir": "m1", "weight": 3.0}])
    code, _, _ = run(capsys, "fuse", "--spec", spec, "--out-dir", members / "out")
    assert code == 0
    for i in range(3):
        assert filecmp.cmp(members / "m1" / f"x{i}.segf", members / "out" / f"x{i}.segf", shallow=False)


def test_fuse_hand_values(tmp_path, capsys):
    for name, p in (("a", 0.8), ("b", 0.4)):
        (tmp_path / name).mkdir()
        save_raster(tmp_path / name / "z.segf", np.array([[[1 - p, p]]]))
    for weights, expected in (((1, 1), 0.6), ((1, 10), 4.8 / 11)):
        spec = _spec(tmp_path, [{"dir": "a", "weight": weights[0]}, {"dir": "b", "weight": weights[1]}])
        code, _, _ = run(capsys, "fuse", "--spec", spec, "--out-dir", tmp_path / "out", "--pgm")
        assert code == 0
        assert load_raster(tmp_path / "out" / "z.segf")[0, 0, 1] == np.float32(expected)
    assert (tmp_path / "out" / "z.pgm").exists()


def test_fuse_is_thread_independent(members, capsys):
    spec = _spec(members, [{"dir": "m1", "weight": 1}, {"dir": "m2", "weight": 2}])
    run(capsys, "fuse", "--spec", spec, "--out-dir", members / "o1")
    run(capsys, "--threads", "3", "fuse", "--spec", spec, "--out-dir", members / "o2")
    for i in range(3):
        assert filecmp.cmp(members / "o1" / f"x{i}.segf", members / "o2" / f"x{i}.segf", shallow=False)


def test_fuse_zero_weight_sum(members, capsys):
    spec = _spec(members, [{"dir": "m1", "weight": 0}, {"dir": "m2", "weight": 0}])
    code, _, err = run(capsys, "fuse", "--spec", spec, "--out-dir", members / "out")
    assert code != 0 and err.startswith("error:")


def test_fuse_missing_member_file(members, capsys):
    os.remove(members / "m2" / "x1.segf")
    spec = _spec(members, [{"dir": "m1"}, {"dir": "m2"}])
    code, _, err = run(capsys, "fuse", "--spec", spec, "--out-dir", members / "out")
    assert code != 0 and "x1" in err and "m2" in err


# --------------------------------------------------------------------------


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_synth_is_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        code, _, _ = run(capsys, "--seed", "7", "synth", "--n", "10", "--h", "16", "--w", "16", "--out-dir", tmp_path / d)
        assert code == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a == b and len(a) == 20


def test_train_and_predict(tmp_path, capsys):
    run(capsys, "synth", "--n", "6", "--h", "16", "--w", "16", "--out-dir", tmp_path / "data", "--seed", "1")
    (tmp_path / "cfg.json").write_text(json.dumps({"epochs": 2, "batch_size": 2}))
    for d in ("r1", "r2"):
        code, out, _ = run(capsys, "train", "--data-dir", tmp_path / "data", "--out-dir", tmp_path / d,
                           "--config", tmp_path / "cfg.json", "--loss", "comb1", "--stochastic", "--seed", "5",
                           "--val-dir", tmp_path / "data", "--predict-dir", tmp_path / "data")
        assert code == 0 and "->" in out
    assert _tree(tmp_path / "r1") == _tree(tmp_path / "r2")
    manifest = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    assert manifest["loss"] == "comb1" and manifest["train"]["epochs"] == 2 and manifest["seed"] == 5
    assert len(manifest["activations"]) == 2
    hist = (tmp_path / "r1" / "history.csv").read_text().splitlines()
    assert hist[0] == "epoch,lr,train_loss,val_dice" and len(hist) == 4
    assert len(list((tmp_path / "r1" / "pred").iterdir())) == 6


def test_train_config_errors(tmp_path, capsys):
    run(capsys, "synth", "--n", "2", "--h", "8", "--w", "8", "--out-dir", tmp_path / "data")
    (tmp_path / "cfg.json").write_text(json.dumps({"drop_factor": 3}))
    code, _, err = run(capsys, "train", "--data-dir", tmp_path / "data", "--out-dir", tmp_path / "o",
                       "--config", tmp_path / "cfg.json")
    assert code != 0 and err.startswith("error:") and "drop_factor" in err


SMALL_BENCH = {"n_train": 6, "n_test": 3, "height": 16, "width": 16, "train": {"epochs": 1}}


def test_bench_table_shape_and_determinism(tmp_path, capsys):
    (tmp_path / "bench.json").write_text(json.dumps(SMALL_BENCH))
    tables = []
    for d in ("b1", "b2"):
        code, out, _ = run(capsys, "bench", "--config", tmp_path / "bench.json", "--out-dir", tmp_path / d)
        assert code == 0
        tables.append(out)
    rows = tables[0].splitlines()
    assert rows[0] == "model,loss,activations,dice,iou"
    assert len(rows) == 12 and rows[-1].startswith("ENSEMBLE,")
    assert [r.split(",")[1] for r in rows[1:11]] == ["gd", "gd", "tversky", "tversky", "comb1", "comb1",
                                                    "comb2", "comb2", "comb3", "comb3"]
    assert tables[0] == tables[1]
    assert _tree(tmp_path / "b1") == _tree(tmp_path / "b2")
    assert (tmp_path / "b1" / "table.csv").read_text() == tables[0]


def test_bench_artifacts_fuse_again_and_rescore(tmp_path, capsys):
    (tmp_path / "bench.json").write_text(json.dumps(SMALL_BENCH))
    out = tmp_path / "b"
    run(capsys, "--quiet", "bench", "--config", tmp_path / "bench.json", "--out-dir", out)
    table = (out / "table.csv").read_text().splitlines()
    # fusing the written member rasters reproduces the stored fused rasters
    code, _, _ = run(capsys, "fuse", "--spec", out / "ensemble.json", "--out-dir", tmp_path / "refused")
    assert code == 0
    for f in (out / "fused").iterdir():
        assert filecmp.cmp(f, tmp_path / "refused" / f.name, shallow=False)
    code, csv_text, _ = run(capsys, "eval", "--pred-dir", tmp_path / "refused", "--gt-dir", out / "truth")
    assert csv_text.splitlines()[-1].split(",")[1] == table[-1].split(",")[3]


def test_bench_config_errors(tmp_path, capsys):
    (tmp_path / "bench.json").write_text(json.dumps({"recipe": ["gd", "zz"]}))
    code, _, err = run(capsys, "bench", "--config", tmp_path / "bench.json", "--out-dir", tmp_path / "o")
    assert code != 0 and err.startswith("error:")
    (tmp_path / "bench.json").write_text(json.dumps({"recipe": ["gd"], "members": 3}))
    code, _, err = run(capsys, "bench", "--config", tmp_path / "bench.json", "--out-dir", tmp_path / "o")
    assert code != 0 and "members" in err


def test_console_entry_point(pair):
    res = subprocess.run([sys.executable, "-m", "segens.cli", "loss", "--kind", "zz", "--pred",
                          str(pair / "p.segf"), "--target", str(pair / "t.pgm")], capture_output=True, text=True)
    assert res.returncode == 1 and res.stderr.startswith("error:")
