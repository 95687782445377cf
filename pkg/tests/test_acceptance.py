"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line
in the terminal summary.  Criteria that cannot be met as stated are run
faithfully and marked ``xfail(strict=True)``."""

import csv
import itertools
import json
import math
import os

import numpy as np
import pytest
from scipy import stats

from conftest import record
from highpeaks.config import load_config
from highpeaks.critpoints import find_local_maxima
from highpeaks.diagnostics import grid_capture_rate, supercritical_emptiness
from highpeaks.harness import run_experiment
from highpeaks.interp import LagrangeGridEvaluator
from highpeaks.kacrice import berman_bound, expected_count
from highpeaks.kernels import bargmann_fock, joint_moment_matrix, random_plane_wave
from highpeaks.palm import conditional_cov, palm_couple, sample_qu
from highpeaks.rng import derive_seed, stream
from highpeaks.samplers import Box, GridSpec, sample_bf_series, sample_rpw_bessel, sample_stationary_grid

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs", "acceptance")
SEED = 20240611
QUIET = lambda msg: None  # noqa: E731


def _config(name):
    return load_config(os.path.join(CONFIGS, name))


def _report(out_dir):
    with open(os.path.join(out_dir, "report.json")) as fh:
        return json.load(fh)["cells"]


# --- 1 -------------------------------------------------------------------------------

def test_ac1_kernel_moment_exactness():
    bf = bargmann_fock(2)
    hand = np.array([
        [1, 0, 0, -1, -1, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [-1, 0, 0, 3, 1, 0],
        [-1, 0, 0, 1, 3, 0],
        [0, 0, 0, 0, 0, 1],
    ], dtype=float)
    exact = bool(np.array_equal(joint_moment_matrix(bf), hand))
    alphas = [a for a in itertools.product(range(5), repeat=2) if 0 < sum(a) <= 4]
    X = np.random.default_rng(7).uniform(-3, 3, (100, 2))
    h, E = 1e-4, np.eye(2) * 1e-4
    worst_low, worst_high = 0.0, 0.0
    fd_ok = True
    for k in (bf, random_plane_wave()):
        for a in alphas:
            i = 0 if a[0] > 0 else 1
            lower = (a[0] - (i == 0), a[1] - (i == 1))
            fd = (k.deriv[lower](X + E[i]) - k.deriv[lower](X - E[i])) / (2 * h)
            ex = k.deriv[a](X)
            if sum(a) <= 2:
                rel = np.max(np.abs(fd - ex) / np.maximum(np.abs(ex), 1e-2))
                worst_low = max(worst_low, rel)
                fd_ok &= bool(np.allclose(fd, ex, rtol=1e-6, atol=1e-8))
            else:
                err = np.max(np.abs(fd - ex))
                worst_high = max(worst_high, err)
                fd_ok &= bool(err <= 1e-4)
    ok = exact and fd_ok
    record("AC1 kernel/moment exactness", ok,
           f"matrix exact={exact}; FD worst rel (order<=2) {worst_low:.1e}, abs (order 3-4) {worst_high:.1e}")
    assert ok


# --- 2 -------------------------------------------------------------------------------

def _z_scores(sampler, pairs, target, n):
    pts = pairs.reshape(-1, 2)
    V = np.array([sampler(derive_seed(SEED, 2, s)).evaluator.value(pts) for s in range(n)]).reshape(n, -1, 2)
    prod = V[:, :, 0] * V[:, :, 1]
    se = prod.std(axis=0, ddof=1) / math.sqrt(n)
    return (prod.mean(axis=0) - target) / se


def test_ac2_sampler_law():
    rng = np.random.default_rng(SEED)
    pairs = rng.uniform(-2, 2, (10, 2, 2))
    lag = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=1)
    box = Box((-2.0, -2.0), (2.0, 2.0))
    z_bf = _z_scores(lambda s: sample_bf_series(s, box), pairs, np.exp(-0.5 * lag**2), 10_000)
    from scipy import special

    z_rpw = _z_scores(lambda s: sample_rpw_bessel(s, 2.0 * math.sqrt(2.0)), pairs, special.j0(lag), 10_000)
    ok = bool(np.all(np.abs(z_bf) < 3) and np.all(np.abs(z_rpw) < 3))
    record("AC2 sampler law", ok,
           f"max |z| BF {np.abs(z_bf).max():.2f}, RPW {np.abs(z_rpw).max():.2f} over 10 pairs, 10^4 seeds")
    assert ok


# --- 3 -------------------------------------------------------------------------------

def test_ac3_kac_rice_mean(tmp_path):
    cfg = _config("ac3.yaml")
    run_experiment(cfg, output_dir=str(tmp_path), log=QUIET)
    cell = _report(str(tmp_path))[0]
    target = expected_count(bargmann_fock(2), 2.5, 1600.0)
    rel = cell["lambda_hat"] / target - 1
    ok = abs(rel) <= 0.15
    record("AC3 Kac-Rice mean count", ok,
           f"mean {cell['lambda_hat']:.3f} vs {target:.3f} ({100 * rel:+.1f}%, tol 15%), 500 reps")
    assert ok


# --- 4 -------------------------------------------------------------------------------

def test_ac4_avoidance(tmp_path):
    cfg = _config("ac4.yaml")
    run_experiment(cfg, output_dir=str(tmp_path), log=QUIET)
    av = _report(str(tmp_path))[0]["avoidance"][0]
    gap = abs(av["p_empty"] - math.exp(-1))
    ok = gap <= 0.05
    record("AC4 avoidance -> Poisson", ok,
           f"p_empty {av['p_empty']:.4f} vs e^-1 {math.exp(-1):.4f} (|diff| {gap:.4f}, tol 0.05), 2000 reps")
    assert ok


# --- 5 and 11 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ac5_run(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ac5"))
    cfg = _config("ac5.yaml")
    run_experiment(cfg, output_dir=out, log=QUIET)
    return cfg, out


@pytest.mark.xfail(strict=True, reason="TV estimates at 2000 replicates sit at the Poisson sampling floor "
                                       "(measured 0.047, 0.030, 0.039); see the decisions ledger")
def test_ac5_tv_decay_direction(ac5_run):
    _, out = ac5_run
    cells = _report(out)
    tv = [c["tv_to_poisson"] for c in cells]
    est = [t["estimate"] for t in tv]
    decreasing = est[0] > est[1] > est[2]
    excludes = not (tv[2]["ci_low"] <= est[0] <= tv[2]["ci_high"])
    ok = decreasing and excludes
    detail = "; ".join(f"u={c['u']:g} lam {c['lambda_hat']:.2f} TV {t['estimate']:.4f} "
                       f"[{t['ci_low']:.4f}, {t['ci_high']:.4f}]" for c, t in zip(cells, tv))
    record("AC5 TV decay direction", ok, detail)
    assert ok


def test_ac11_determinism(ac5_run, tmp_path):
    cfg, out = ac5_run
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    run_experiment(cfg, output_dir=a, cells=[0], log=QUIET)
    run_experiment(cfg, output_dir=b, cells=[0], log=QUIET)
    same = all(open(os.path.join(a, f), "rb").read() == open(os.path.join(b, f), "rb").read()
               for f in ("counts.csv", "points.csv"))
    with open(os.path.join(out, "counts.csv")) as fh:
        full = [line for line in fh if line.startswith("0,") or line.startswith("cell")]
    with open(os.path.join(a, "counts.csv")) as fh:
        single = fh.readlines()
    ok = same and full == single
    record("AC11 determinism", ok,
           f"repeat run byte-identical={same}; single-cell rerun matches full run={full == single}")
    assert ok


# --- 6 -------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ac6_pairs():
    bf = bargmann_fock(2)
    dom = Box((-10.5, -10.5), (10.5, 10.5))
    draws = sample_qu(bf, 3.0, 100_000, derive_seed(SEED, 6), n_draws=1000)
    return [palm_couple(sample_bf_series(derive_seed(SEED, 6, k), dom), 3.0, 0, draw=draws[k])
            for k in range(1000)]


def _ring_points():
    r = np.linspace(5.0, 10.0, 26)
    t = np.linspace(0, 2 * math.pi, 96, endpoint=False)
    R, T = np.meshgrid(r, t)
    return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])


def test_ac6_palm_invariants(ac6_pairs):
    worst_grad, ok = 0.0, True
    o = np.zeros((1, 2))
    for pair in ac6_pairs:
        v, g, H = pair.f_tilde.jet(o)
        worst_grad = max(worst_grad, float(np.linalg.norm(g[0])))
        ok &= abs(v[0] - pair.draw.xi) <= 1e-8 and pair.draw.xi >= 3.0
        ok &= bool(np.linalg.eigvalsh(pair.draw.Z).max() < 0)
    ok &= worst_grad <= 1e-8
    rng = np.random.default_rng(SEED)
    worst_cf = 0.0
    for p, q in rng.uniform(-3, 3, (20, 2, 2)):
        s = p @ q
        closed = math.exp(-0.5 * (p - q) @ (p - q)) - math.exp(-0.5 * (p @ p + q @ q)) * (1 + s + 0.5 * s * s)
        worst_cf = max(worst_cf, abs(conditional_cov(bargmann_fock(2), p, q) - closed))
    ok &= worst_cf <= 1e-10
    record("AC6a Palm invariants", ok,
           f"1000 pairs: max |grad f~(0)| {worst_grad:.1e}, f~(0)=xi>=3, Z<0; "
           f"residual covariance vs corrected closed form max err {worst_cf:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the coupling error near radius 5 is about 1e-4; the 1e-6 "
                                       "bound holds only from radius ~6 (see the decisions ledger)")
def test_ac6_ring_closeness(ac6_pairs):
    P = _ring_points()
    sup = np.array([np.abs(pair.difference(P)).max() for pair in ac6_pairs])
    P6 = P[np.linalg.norm(P, axis=1) >= 6.0 - 1e-12]
    sup6 = max(np.abs(pair.difference(P6)).max() for pair in ac6_pairs)
    ok = bool(sup.max() < 1e-6)
    record("AC6b Palm ring closeness", ok,
           f"max sup_{{5<=|x|<=10}} |f~-f| {sup.max():.2e} (mean {sup.mean():.2e}); "
           f"from |x|>=6: {sup6:.2e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the printed closed form omits the gradient term of the projection")
def test_ac6_printed_closed_form():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for p, q in rng.uniform(-3, 3, (20, 2, 2)):
        (x1, y1), (x2, y2) = p, q
        bracket = 1 + 0.5 * (x1 * x2) ** 2 + 0.5 * (y1 * y2) ** 2 + 2 * x1 * y1 * x2 * y2
        printed = math.exp(-0.5 * (p - q) @ (p - q)) - math.exp(-0.5 * (p @ p + q @ q)) * bracket
        worst = max(worst, abs(conditional_cov(bargmann_fock(2), p, q) - printed))
    ok = worst <= 1e-10
    record("AC6c printed residual-covariance form", ok, f"max err vs printed form {worst:.2e} (tol 1e-10)")
    assert ok


# --- 7 -------------------------------------------------------------------------------

def _palm_marginal(u, n, x):
    bf = bargmann_fock(2)
    dom = Box((-1.0, -1.0), (x[0] + 1.0, 1.0))
    draws = sample_qu(bf, u, 100_000, derive_seed(SEED, 7, 0), n_draws=n)
    return np.array([palm_couple(sample_bf_series(derive_seed(SEED, 7, 1, k), dom), u, 0, draw=draws[k])
                     .f_tilde.value(np.array([x]))[0] for k in range(n)])


def test_ac7_palm_vs_definition():
    # by stationarity the field seen from any maximum >= u is the Palm field at 0,
    # so every interior maximum of a large field is an accepted sample
    u, x = 2.5, np.array([2.0, 0.0])
    bf = bargmann_fock(2)
    L, h = 60.0, 0.1
    spec = GridSpec((0.0, 0.0), h, (int(L / h) + 1,) * 2)
    win = Box((0.5, 0.5), (L - x[0] - 0.5, L - 0.5))
    oracle, s = [], 0
    while len(oracle) < 10_000:
        fld = sample_stationary_grid(bf, spec, derive_seed(SEED, 7, 2, s))
        z = np.array([p.location for p in find_local_maxima(fld, u, window=win)]).reshape(-1, 2)
        oracle.extend(LagrangeGridEvaluator(fld.grid).value(z + x))
        s += 1
    palm = _palm_marginal(u, 10_000, x)
    ks = stats.ks_2samp(oracle, palm).statistic
    ok = ks <= 0.08
    record("AC7 Palm vs definition", ok,
           f"KS {ks:.4f} (tol 0.08): {len(oracle)} maxima from {s} fields vs 10^4 palm_couple draws")
    assert ok


@pytest.mark.xfail(strict=True, reason="near-origin acceptance keeps ~2 of 10^4 fields; too few for a KS test")
def test_ac7_literal_near_origin_acceptance():
    u, x = 2.5, np.array([[2.0, 0.0]])
    dom = Box((-6.0, -6.0), (6.0, 6.0))
    near = Box((-0.1, -0.1), (0.1, 0.1))
    accepted = []
    for s in range(10_000):
        f = sample_bf_series(derive_seed(SEED, 7, 3, s), dom)
        mx = [p for p in find_local_maxima(f, u, window=near) if np.linalg.norm(p.location) <= 0.1]
        if mx:
            accepted.append(f.evaluator.value(x)[0])
    palm = _palm_marginal(u, 2000, x[0])
    ks = stats.ks_2samp(accepted, palm).statistic if len(accepted) >= 2 else 1.0
    ok = len(accepted) >= 100 and ks <= 0.08
    record("AC7b near-origin acceptance (literal)", ok, f"{len(accepted)} of 10^4 fields accepted; KS {ks:.3f}")
    assert ok


# --- 8 -------------------------------------------------------------------------------

def test_ac8_supercritical_slope():
    bf = bargmann_fock(2)
    ns = [50, 100, 200]
    res = [supercritical_emptiness(bf, n, 1.2, 2000, derive_seed(SEED, 8, n)) for n in ns]
    p = np.array([r.p_hit for r in res])
    slope = float(np.polyfit(np.log(ns), np.log(p), 1)[0]) if np.all(p > 0) else float("nan")
    ok = abs(slope - (-0.4)) <= 0.3
    record("AC8 supercritical slope", ok,
           "p_hit " + ", ".join(f"n={n}: {r.p_hit:.4f}" for n, r in zip(ns, res))
           + f"; slope {slope:.3f} (target -0.4 +/- 0.3)")
    assert ok


# --- 9 -------------------------------------------------------------------------------

def test_ac9_grid_capture():
    rates = grid_capture_rate(bargmann_fock(2), 3.0, [0.25, 1.0], 1000, derive_seed(SEED, 9))
    ok = rates[0.25] < rates[1.0]
    record("AC9 grid capture", ok, f"miss fraction b=0.25: {rates[0.25]:.3f}, b=1.0: {rates[1.0]:.3f}")
    assert ok


# --- 10 ------------------------------------------------------------------------------

def _random_correlation(rng, d=3):
    A = rng.standard_normal((d, d + 1))
    C = A @ A.T
    s = np.sqrt(np.diag(C))
    return C / np.outer(s, s)


def _mc_orthant(C, levels, seed, n=10_000_000, chunk=1_000_000):
    L = np.linalg.cholesky(C)
    rng = stream(seed)
    hit = 0
    for _ in range(n // chunk):
        X = rng.standard_normal((chunk, len(levels))) @ L.T
        hit += int(np.count_nonzero(np.all(X <= levels, axis=1)))
    return hit / n


def test_ac10_berman_soundness():
    rng = np.random.default_rng(SEED)
    ok, lines = True, []
    for k in range(10):
        C0, C1 = _random_correlation(rng), _random_correlation(rng)
        levels = rng.uniform(0.0, 2.5, 3)
        bound = berman_bound(C0, C1, levels)
        gap = abs(_mc_orthant(C0, levels, derive_seed(SEED, 10, k, 0))
                  - _mc_orthant(C1, levels, derive_seed(SEED, 10, k, 1)))
        ok &= gap <= bound
        ok &= berman_bound(C0, C0, levels) == 0.0
        lines.append(f"{gap:.4f}<={bound:.4f}")
    record("AC10 Berman bound soundness", ok, "MC gap vs bound: " + ", ".join(lines))
    assert ok
