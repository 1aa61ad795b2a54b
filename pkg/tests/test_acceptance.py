"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria". Run just these with

    pytest tests/test_acceptance.py -v

The training and ensemble criteria train real networks and take several
minutes on one CPU core.
"""

import functools
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE, make_instance
from segens.bench import BenchConfig, run_bench, write_bench
from segens.ensemble import binarize, fuse
from segens.gradcheck import numerical_gradient, relative_error
from segens.losses import LOSSES, LossParams, compute_loss, log_cosh_value, tversky_index
from segens.metrics import ConfusionCounts, dice, evaluate_dataset, iou
from segens.nnet import FcnModel, TrainConfig, synth_dataset, train
from segens.ssim import ssim_index


def criterion(name):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except Exception as exc:
                line = f"FAIL  {name}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                ACCEPTANCE.append(line)
                print(line)
                raise
            line = f"PASS  {name}: {detail} [{time.perf_counter() - t0:.1f}s]"
            ACCEPTANCE.append(line)
            print(line)
        return run
    return wrap


@criterion("gradient suite")
def test_gradient_suite():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {}
    for kind in LOSSES:
        w = 0.0
        for _ in range(50):
            y, t, _ = make_instance(rng, 8, 8, 2)
            ana = compute_loss(kind, y, t).grad
            num = numerical_gradient(lambda p: compute_loss(kind, p, t).value, y, h=1e-5)
            w = max(w, relative_error(ana, num).max())
        worst[kind] = w
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in worst.items() if not v <= 1e-4}
    assert not bad, f"relative error above 1e-4: {bad}"
    assert elapsed < 60, f"took {elapsed:.1f}s"
    return f"14 kinds x 50 instances, max rel err {max(worst.values()):.2e} <= 1e-4"


@criterion("oracle equivalence")
def test_oracle_equivalence():
    rng = np.random.default_rng(77)
    worst = 0.0
    for n in range(100):
        h, w = (16, 16) if n == 0 else tuple(int(v) for v in rng.integers(1, 17, 2))
        y, t, _ = make_instance(rng, h, w, 2)
        yl, tl = y.tolist(), t.tolist()
        for kind in LOSSES:
            err = abs(compute_loss(kind, y, t).value - oracles.loss(kind, yl, tl))
            assert err <= 1e-10, f"{kind} on {h}x{w}: |diff| = {err:.3e}"
            worst = max(worst, err)
    return f"100 instances up to 16x16, max |diff| {worst:.2e} <= 1e-10"


@criterion("tversky degeneration")
def test_tversky_degeneration():
    rng = np.random.default_rng(5)
    half = LossParams(alpha=0.5, beta=0.5)
    tiny = LossParams(alpha=0.5, beta=0.5, epsilon=1e-300)
    worst = 0.0
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(1, 17, 2))
        k = int(rng.integers(2, 5))
        y, t, _ = make_instance(rng, h, w, k)
        for c in range(k):
            a, b = y[..., c], t[..., c]
            inter, total = (a * b).sum(), a.sum() + b.sum()
            # with alpha = beta = 1/2 the smoothing acts like 2 eps on the Dice ratio;
            # plain Dice is recovered as eps -> 0
            eps = 2 * half.epsilon
            worst = max(worst, abs(tversky_index(y, t, c, half) - (2 * inter + eps) / (total + eps)),
                        abs(tversky_index(y, t, c, tiny) - 2 * inter / total))
    assert worst <= 1e-10, f"max |diff| {worst:.3e}"
    return f"100 instances, max |TI - Dice| {worst:.2e} <= 1e-10"


@criterion("metric identities")
def test_metric_identities():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        c = ConfusionCounts(*(int(v) for v in rng.integers(0, 10_000, 4)))
        d = Fraction(2 * c.tp, 2 * c.tp + c.fp + c.fn)
        assert Fraction(c.tp, c.tp + c.fp + c.fn) == d / (2 - d)
        # both metrics are correctly rounded images of the exact ratios
        assert dice(c) == float(d) and iou(c) == float(d / (2 - d))
    c = ConfusionCounts(tp=2, fp=1, fn=1)
    assert round(dice(c), 4) == 0.6667 and iou(c) == 0.5
    return "iou = dice/(2-dice) on 1000 random counts; tp=2 fp=1 fn=1 -> 0.6667, 0.5"


@criterion("ssim")
def test_ssim():
    rng = np.random.default_rng(31)
    worst_id = 0.0
    for _ in range(20):
        x = rng.random(tuple(int(v) for v in rng.integers(1, 33, 2)))
        worst_id = max(worst_id, abs(ssim_index(x, x)[0] - 1.0))
    assert worst_id <= 1e-9
    worst = 0.0
    for shape in [(1, 1), (3, 5), (11, 11), (16, 9), (32, 7), (20, 32), (32, 32)]:
        x, y = rng.random(shape), rng.random(shape)
        err = abs(ssim_index(x, y)[0] - oracles.ssim(x.tolist(), y.tolist()))
        assert err <= 1e-8, f"{shape}: {err:.3e}"
        worst = max(worst, err)
    return f"|ssim(x,x) - 1| {worst_id:.1e}; brute force up to 32x32 max |diff| {worst:.1e}"


@criterion("log-cosh asymptotics")
def test_log_cosh_asymptotics():
    small = np.linspace(-1e-2, 1e-2, 201)
    e_small = max(abs(log_cosh_value(x) - x * x / 2) for x in small)
    large = np.concatenate([np.linspace(20, 1000, 200), -np.linspace(20, 1000, 200), [1e6, -1e8]])
    e_large = max(abs(log_cosh_value(x) - (abs(x) - math.log(2))) for x in large)
    assert e_small <= 1e-6 and e_large <= 1e-6
    return f"|x| <= 1e-2: {e_small:.1e}; |x| >= 20: {e_large:.1e}"


@pytest.fixture(scope="module")
def bench_data():
    cfg = BenchConfig()
    data = synth_dataset(cfg.n_train + cfg.n_test, cfg.height, cfg.width, cfg.seed)
    return data[:cfg.n_train], data[cfg.n_train:]


@criterion("training efficacy")
def test_training_efficacy(bench_data):
    trainset, testset = bench_data
    t0 = time.perf_counter()
    parts = []
    for kind in ("gd", "tversky", "comb1", "comb2", "comb3"):
        model, hist = train(FcnModel(seed=42), trainset, TrainConfig(loss=kind, seed=42))
        ratio = hist.final_loss / hist.initial_loss
        assert ratio < 0.5, f"{kind}: final/initial = {ratio:.3f}"
        if kind == "gd":
            pairs = [(binarize(model(im)), m) for im, m in testset]
            test_dice = evaluate_dataset(pairs).aggregate_dice
            assert test_dice >= 0.90, f"gd test dice {test_dice:.4f}"
        parts.append(f"{kind} {ratio:.3f}")
    elapsed = time.perf_counter() - t0
    assert elapsed < 600, f"took {elapsed:.0f}s"
    return f"gd test dice {test_dice:.4f} >= 0.90; final/initial loss: {', '.join(parts)}"


@criterion("ensemble gain")
def test_ensemble_gain():
    parts = []
    for seed in (42, 43, 44):
        res = run_bench(BenchConfig(seed=seed))
        d = res.member_dice
        mean, median = float(d.mean()), statistics.median(d.tolist())
        assert res.ensemble_dice >= mean - 0.01, f"seed {seed}: {res.ensemble_dice:.4f} < mean {mean:.4f} - 0.01"
        assert res.ensemble_dice >= median, f"seed {seed}: {res.ensemble_dice:.4f} < median {median:.4f}"
        parts.append(f"seed {seed} ens {res.ensemble_dice:.4f} / mean {mean:.4f} / median {median:.4f}")
    return "; ".join(parts)


@criterion("fusion arithmetic")
def test_fusion_arithmetic():
    def fg(p):
        return np.array([[[1 - p, p]]])

    a = fuse([fg(0.8), fg(0.4)], [1, 1])[0, 0, 1]
    b = fuse([fg(0.4), fg(0.8)], [10, 1])[0, 0, 1]
    # exact rational results of the float inputs, then the stored SEGF values
    assert a == float((Fraction(0.8) + Fraction(0.4)) / 2)
    assert b == float((10 * Fraction(0.4) + Fraction(0.8)) / 11)
    assert np.float32(a) == np.float32(0.6) and np.float32(b) == np.float32(4.8 / 11)
    rng = np.random.default_rng(3)
    maps = [rng.dirichlet([1, 1], size=(16, 16)) for _ in range(5)]
    # scalings chosen so that every scaled weight is exactly s * w in binary64
    cases = [([3, 10, 25, 7, 40], (2, 3, 0.125, 10, 1e3)), ([0.3, 1.0, 2.5, 0.7, 4.0], (2, 0.25, 1024))]
    for w, scales in cases:
        base = fuse(maps, w)
        for s in scales:
            assert all(Fraction(x * s) == s * Fraction(x) for x in w)
            same = np.array_equal(base, fuse(maps, [x * s for x in w]))
            assert same, f"weights {w} scaled by {s} changed the fused map"
    return f"0.8/0.4 -> {float(a)!r}, 10:1 on 0.4/0.8 -> {float(b)!r} (float32-exact); scale invariance bitwise"


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@criterion("determinism")
def test_determinism(tmp_path):
    cfg = BenchConfig(n_train=12, n_test=4, height=32, width=32, seed=7, train=TrainConfig(epochs=2))
    trees = []
    for run in ("a", "b"):
        write_bench(run_bench(cfg), cfg, tmp_path / run)
        trees.append(_tree_bytes(tmp_path / run))
    a, b = trees
    assert a.keys() == b.keys()
    differ = [k for k in a if a[k] != b[k]]
    assert not differ, f"differing files: {differ[:5]}"
    kinds = {k.rsplit(".", 1)[-1] for k in a}
    assert {"segw", "segf", "csv"} <= kinds
    n_w = sum(k.endswith(".segw") for k in a)
    n_f = sum(k.startswith("fused") for k in a)
    return f"two runs bitwise-identical: {n_w} weight files, {n_f} fused rasters, table.csv"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
