"""Acceptance checks, one verdict line per criterion.

Each test prints ``PASS`` or ``FAIL`` with the measured numbers straight to
the terminal (visible without ``-s``) and then asserts the same condition.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import linalg

from hkrls.baselines import BaselineConfig, Method, fit_baseline
from hkrls.datasets import synth_2d, synth_3d
from hkrls.experiment import ExperimentConfig, list_presets, load_preset, run_experiment
from hkrls.hierarchic import (GridDataset, default_kernels, fit_2d, fit_3d, fit_general,
                              predict_points)
from hkrls.kernels import gaussian, product_kernel_matrix
from hkrls.metrics import cost_dominance_check, reports_to_csv
from hkrls.solver import krls_fit, krls_predict_many

SPEED_FLOOR = 5.0
NONSTILL_FACTOR = 10.0
MAX_ERR = 0.05


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, f"{label}: {detail}"
    return emit


def _oracle(data, kernels, Q):
    P, y = data.points(), data.flat_values()
    w = linalg.solve(product_kernel_matrix(kernels, P, P), y, assume_a="pos")
    return product_kernel_matrix(kernels, Q, P) @ w


def _grids():
    """Grid shapes with 1 to 4 axes and at most 200 points."""
    rng = np.random.default_rng(7)
    for n in (1, 2, 3, 4):
        shapes = [s for s in itertools.product(range(2, 8), repeat=n) if math.prod(s) <= 200]
        pick = rng.choice(len(shapes), size=min(len(shapes), 25), replace=False)
        for i in sorted(pick):
            yield shapes[i], rng


def test_c1_kronecker_equivalence(verdict):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for shape, rng in _grids():
        sig = rng.uniform(0.6, 1.2, size=len(shape))
        axes = tuple(np.cumsum(rng.uniform(1.2, 1.8, size=m) * s) for m, s in zip(shape, sig))
        data = GridDataset(axes, rng.normal(size=shape))
        ks = default_kernels(len(shape), sig)
        model = fit_general(data, ks, jitter=0.0)
        Q = np.column_stack([rng.uniform(a[0], a[-1], 20) for a in axes])
        worst = max(worst, float(np.abs(predict_points(model, Q) - _oracle(data, ks, Q)).max()))
        count += 1
    secs = time.perf_counter() - t0
    verdict("C1 Kronecker-oracle equivalence", worst <= 1e-7 and secs < 5,
            f"{count} grids, max |diff| {worst:.2e} (tol 1e-7), {secs:.2f} s (limit 5 s)")


def test_c2_interpolation(verdict):
    t0 = time.perf_counter()
    x, d1, d2 = np.linspace(0, 4, 12), np.linspace(0, 6, 11), np.linspace(0, 5, 7)
    g2 = GridDataset((x, d1), synth_2d(x[:, None], d1[None, :]))
    g3 = GridDataset((x, d1, d2), synth_3d(x[:, None, None], d1[None, :, None], d2[None, None, :]))
    g4 = GridDataset((x[:5], d1[:4], d2[:4], np.linspace(0, 3, 3)),
                     np.random.default_rng(0).normal(size=(5, 4, 4, 3)))
    worst = 0.0
    for fit, data in ((fit_2d, g2), (fit_3d, g3), (fit_general, g2), (fit_general, g3),
                      (fit_general, g4)):
        model = fit(data, default_kernels(data.ndim, [1.0] * data.ndim), jitter=0.0)
        err = np.abs(predict_points(model, data.points()) - data.flat_values()).max()
        worst = max(worst, float(err))
    secs = time.perf_counter() - t0
    verdict("C2 interpolation exactness", worst <= 1e-6 and secs < 2,
            f"max training residual {worst:.2e} (tol 1e-6), {secs:.2f} s (limit 2 s)")


def _hkrls_2d(seed):
    cfg = ExperimentConfig.from_dict({
        "dataset": {"kind": "synth2d", "counts": [145, 150]},
        "split": {"fraction": 0.8, "seed": seed},
        "methods": [{"hkrls": {"sigmas": [1.0, 0.3]}}],
    })
    return run_experiment(cfg)[0]


def test_c3_synth2d_five_seeds(verdict):
    reports = [_hkrls_2d(s) for s in range(5)]
    errs = [r.max_abs_error for r in reports]
    slowest = max(r.train_seconds for r in reports)
    ok = all(e <= MAX_ERR for e in errs) and slowest < 60
    verdict("C3 2-D synthetic 145x150, seeds 0-4", ok,
            "max errors " + ", ".join(f"{e:.4f}" for e in errs)
            + f" (tol {MAX_ERR}); slowest fit {slowest:.3f} s (limit 60 s)")


def test_c4_synth3d_scaled(verdict):
    t0 = time.perf_counter()
    r = run_experiment(load_preset("synth3d-scaled"))[0]
    secs = time.perf_counter() - t0
    verdict("C4 3-D synthetic 40x40x30", r.ok and r.max_abs_error <= MAX_ERR and secs < 120,
            f"max error {r.max_abs_error:.4f} (tol {MAX_ERR}), {secs:.1f} s (limit 120 s)")


@pytest.mark.slow
def test_c4_synth3d_full(verdict):
    r = run_experiment(load_preset("synth3d-scaled").full())[0]
    verdict("C4 3-D synthetic full grid (--full)", r.ok and r.max_abs_error <= MAX_ERR,
            f"max error {r.max_abs_error:.4f} (tol {MAX_ERR}), fit {r.train_seconds:.2f} s")


@pytest.fixture(scope="module")
def krls_small():
    t0 = time.perf_counter()
    reports = {r.method: r for r in run_experiment(load_preset("krls-small"))}
    return reports, time.perf_counter() - t0


def test_c5_speed_ordering(verdict, krls_small):
    rep, secs = krls_small
    h, k = rep["H-KRLS"], rep["KRLS"]
    ratio = k.train_seconds / h.train_seconds
    verdict("C5 H-KRLS vs KRLS training time (48x50)", ratio >= SPEED_FLOOR and secs < 120,
            f"KRLS {k.train_seconds:.4f} s / H-KRLS {h.train_seconds:.5f} s = {ratio:.0f}x "
            f"(floor {SPEED_FLOOR:.0f}x), preset {secs:.1f} s (limit 120 s)")


def test_c5_nonstill_error(verdict, krls_small):
    rep, _ = krls_small
    h, n = rep["H-KRLS"], rep["NONSTILL-KRLS"]
    factor = n.max_abs_error / h.max_abs_error
    verdict("C5 NONSTILL-KRLS error vs H-KRLS (48x50)", factor >= NONSTILL_FACTOR,
            f"NONSTILL {n.max_abs_error:.3e} / H-KRLS {h.max_abs_error:.3e} = {factor:.2f}x "
            f"(need >= {NONSTILL_FACTOR:.0f}x)")


def test_c6_cost_dominance(verdict):
    t0 = time.perf_counter()
    rep = cost_dominance_check(n_max=4, m_max=10, n_random=1000, seed=0)
    secs = time.perf_counter() - t0
    verdict("C6 cost dominance", rep.ok and rep.equal_checked == 36
            and rep.random_checked == 1000 and secs < 1,
            f"{rep.equal_checked} equal + {rep.random_checked} random grids, "
            f"{len(rep.violations)} violations, {secs:.3f} s (limit 1 s)")


def test_c7_budgets_disabled(verdict):
    rng = np.random.default_rng(0)
    P = rng.uniform(0, 10, size=(100, 2))
    y = np.sin(P[:, 0]) * np.cos(P[:, 1] / 2)
    Q = rng.uniform(0, 10, size=(50, 2))
    ref = krls_predict_many(krls_fit(P, y, gaussian(1.0), jitter=0.0), Q)[:, 0]
    cfgs = {
        "S-KRLS": BaselineConfig(Method.SPARSE_KRLS, ald_delta=0.0),
        "SW-KRLS": BaselineConfig(Method.SLIDING_WINDOW_KRLS, window=100, reg_c=0.0),
        "FB-KRLS": BaselineConfig(Method.FIXED_BUDGET_KRLS, window=100, lam=0.0, mu=0.0),
    }
    diffs = {name: float(np.abs(krls_predict_many(fit_baseline(P, y, c), Q)[:, 0] - ref).max())
             for name, c in cfgs.items()}
    verdict("C7 budgets disabled match batch KRLS", all(v <= 1e-6 for v in diffs.values()),
            ", ".join(f"{k} {v:.1e}" for k, v in diffs.items()) + " (tol 1e-6)")


def test_c7_ordering(verdict):
    t0 = time.perf_counter()
    reports = run_experiment(load_preset("compare-small"))
    secs = time.perf_counter() - t0
    errs = {r.method: r.max_abs_error for r in reports if r.method != "KRLS"}
    h = errs.pop("H-KRLS")
    ok = all(r.ok for r in reports) and len(errs) == 6 and all(h < e for e in errs.values())
    verdict("C7 H-KRLS smallest error among seven methods (48x50)", ok and secs < 600,
            f"H-KRLS {h:.3e} vs " + ", ".join(f"{k} {v:.3e}" for k, v in errs.items())
            + f"; {secs:.1f} s (limit 600 s)")


FAST_PRESETS = ["krls-small", "synth3d-scaled", "compare-small"]


@pytest.fixture(scope="module")
def full2d():
    return run_experiment(load_preset("synth2d-full"))


@pytest.mark.parametrize("name", [
    pytest.param(p, marks=() if p in FAST_PRESETS else pytest.mark.slow)
    for p in list_presets()])
def test_c8_determinism(verdict, name, request):
    first = request.getfixturevalue("full2d") if name == "synth2d-full" else None
    a = reports_to_csv(first or run_experiment(load_preset(name)), include_time=False)
    b = reports_to_csv(run_experiment(load_preset(name)), include_time=False)
    verdict(f"C8 determinism ({name})", a == b,
            "identical CSV without time columns" if a == b else "CSV outputs differ")


@pytest.mark.slow
def test_full_grid_2d_ordering(verdict, full2d):
    rep = {r.method: r for r in full2d}
    h = rep.pop("H-KRLS")
    s = rep["S-KRLS"].max_abs_error
    ok = (all(r.ok for r in full2d) and all(h.max_abs_error < r.max_abs_error for r in rep.values())
          and abs(s - 0.0232) <= 0.5 * 0.0232)
    verdict("full-size 2-D comparison 145x150", ok,
            f"H-KRLS {h.max_abs_error:.4f} vs "
            + ", ".join(f"{k} {r.max_abs_error:.4f}" for k, r in rep.items())
            + "; S-KRLS within 50% of 0.0232")
