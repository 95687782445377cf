"""
Measurable quantities of the high-maxima point process.

Counts are compared with Poisson laws in total variation, avoidance
probabilities with e^{-vol}, and the Palm coupling through the count
discrepancy outside a small ball.  Level-exceedance experiments (supercritical
emptiness, excursion fit, grid capture) work on circulant-embedding grid
fields refined by local interpolation.
"""

from dataclasses import asdict, dataclass, field as dc_field
import math
import warnings

import numpy as np
from scipy import special, stats
from scipy.spatial.distance import pdist

from .critpoints import find_local_maxima
from .interp import LagrangeGridEvaluator
from .kacrice import cluster_radius, mu_scaling
from .rng import derive_seed, stream
from .samplers import Box, GridSpec, sample_stationary_grid

__all__ = [
    "TVResult",
    "DiagnosticsReport",
    "histogram_from_counts",
    "tv_distance",
    "tv_to_poisson",
    "poisson_noise_floor",
    "avoidance_probability",
    "cluster_pairs",
    "cluster_radius_policy",
    "palm_count_discrepancy",
    "supercritical_level",
    "supercritical_emptiness",
    "excursion_fit",
    "grid_capture_rate",
    "exceedance_max",
]

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# count distributions
# ---------------------------------------------------------------------------

def histogram_from_counts(counts):
    """Frequency vector h with h[k] = #replicates with count k."""
    counts = np.asarray(counts, dtype=int)
    if counts.size and counts.min() < 0:
        raise ValueError("counts must be non-negative")
    return np.bincount(counts, minlength=1)


def _tv_pmf_poisson(p, lam):
    """TV between pmfs p (rows, over k = 0..K) and Poisson(lam), tail included."""
    p = np.atleast_2d(p)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (p.shape[0],))
    K = p.shape[1] - 1
    k = np.arange(K + 1)
    pois = np.exp(k[None, :] * np.log(np.maximum(lam[:, None], 1e-300)) - lam[:, None]
                  - special.gammaln(k + 1.0)[None, :])
    pois[lam == 0] = (k == 0)
    tail = stats.poisson.sf(K, lam)
    return 0.5 * (np.abs(p - pois).sum(axis=1) + tail)


def tv_distance(hist_a, hist_b):
    """TV between two empirical count histograms (frequency vectors)."""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    n = max(len(a), len(b))
    a = np.pad(a, (0, n - len(a))) / a.sum()
    b = np.pad(b, (0, n - len(b))) / b.sum()
    return float(0.5 * np.abs(a - b).sum())


@dataclass(frozen=True)
class TVResult:
    estimate: float
    ci_low: float
    ci_high: float
    lam: float
    n: int

    def to_dict(self):
        return asdict(self)


def tv_to_poisson(histogram, lam=None, n_boot=1000, seed=0, level=0.95):
    """TV distance between an empirical count law and Poisson(lam).

    Parameters
    ----------
    histogram : array
        Frequencies by count (``histogram[k]`` replicates had count k).
    lam : float, optional
        Poisson mean; ``None`` uses the empirical mean, re-estimated inside
        each bootstrap resample.
    n_boot : int
        Bootstrap resamples for the percentile interval.

    The mass beyond the largest observed count enters through the exact
    Poisson tail.
    """
    h = np.asarray(histogram, dtype=float)
    n = int(round(h.sum()))
    if n < 100:
        raise ValueError(f"need at least 100 replicates, got {n}")
    if lam is not None and not lam > 0:
        raise ValueError("lambda must be positive")
    p = h / n
    k = np.arange(len(h))
    lam_hat = float(p @ k)
    ref = lam_hat if lam is None else float(lam)
    est = float(_tv_pmf_poisson(p, ref)[0])
    rng = stream(seed)
    B = rng.multinomial(n, p, size=n_boot) / n
    lam_b = B @ k if lam is None else np.full(n_boot, ref)
    tvb = _tv_pmf_poisson(B, lam_b)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(tvb, [a, 1.0 - a])
    return TVResult(est, float(lo), float(hi), ref, n)


def poisson_noise_floor(lam, n, n_sim=500, seed=0, q=0.95):
    """Quantile ``q`` of the TV estimate when the counts really are Poisson.

    ``n`` draws from Poisson(lam) are compared with Poisson(their mean),
    mirroring :func:`tv_to_poisson` with ``lam=None``.
    """
    rng = stream(seed)
    X = rng.poisson(lam, size=(n_sim, n))
    K = int(X.max())
    P = np.stack([np.bincount(x, minlength=K + 1) for x in X]) / n
    tv = _tv_pmf_poisson(P, X.mean(axis=1))
    return float(np.quantile(tv, q))


# ---------------------------------------------------------------------------
# pattern statistics
# ---------------------------------------------------------------------------

def _open_count(pattern, box):
    if pattern.count == 0:
        return 0
    p = pattern.points
    lo, hi = np.array(box.lo), np.array(box.hi)
    return int(np.sum(np.all((p > lo) & (p < hi), axis=1)))


def avoidance_probability(patterns, boxes):
    """Empirical P(no point in B) next to e^{-vol(B)} for rescaled boxes.

    Returns a list of dicts with keys ``box``, ``p_empty``, ``poisson``.
    """
    if not patterns:
        raise ValueError("no patterns")
    out = []
    for box in boxes:
        for pat in patterns[:1]:
            w = pat.window
            if np.any(np.array(box.lo) < np.array(w.lo) - 1e-12) or np.any(
                np.array(box.hi) > np.array(w.hi) + 1e-12
            ):
                raise ValueError(f"box {box} is not inside the pattern window {w}")
        empty = sum(_open_count(p, box) == 0 for p in patterns)
        out.append({
            "box": box.to_dict(),
            "p_empty": empty / len(patterns),
            "poisson": math.exp(-box.volume),
        })
    return out


def cluster_radius_policy(u, policy="verbatim"):
    """Cluster radius in rescaled units (planar fields).

    ``verbatim`` is tau(u) as printed, for which mu(u) tau(u) = (2pi)^{3/4} u;
    ``normalized`` drops the (2pi)^{3/4} so that mu(u) tau(u) = u.
    """
    tau = cluster_radius(u)
    if policy == "verbatim":
        return tau
    if policy == "normalized":
        return tau / (2 * math.pi) ** 0.75
    raise ValueError(f"unknown tau policy {policy!r}")


def cluster_pairs(pattern, u, radius=None):
    """Ordered pairs of distinct points closer than tau(u) (rescaled units)."""
    tau = cluster_radius(u) if radius is None else float(radius)
    if pattern.count < 2:
        return 0
    return int(2 * np.sum(pdist(pattern.points) < tau))


def palm_count_discrepancy(pairs, u, window_side, grid_factor=0.25, radius=None):
    """Mean and standard error of |#max(f_tilde) - #max(f)| above u on the
    physical window [-R/2, R/2]^2 minus the ball of radius mu(u) tau(u).

    Returns (mean, se, per-pair differences).
    """
    R = float(window_side)
    win = Box((-R / 2, -R / 2), (R / 2, R / 2))
    rad = mu_scaling(u, 2) * cluster_radius(u) if radius is None else float(radius)
    diffs = []
    for pair in pairs:
        counts = []
        for fld in (pair.f, pair.tilde_field()):
            mx = find_local_maxima(fld, u, grid_factor, window=win)
            counts.append(sum(np.linalg.norm(p.location) >= rad for p in mx))
        diffs.append(abs(counts[1] - counts[0]))
    diffs = np.array(diffs, dtype=float)
    se = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) > 1 else float("nan")
    return float(diffs.mean()), se, diffs


# ---------------------------------------------------------------------------
# exceedance of a level by grid fields
# ---------------------------------------------------------------------------

def _line_maxima(ev, fixed, axis, nodes, values, u, margin, h):
    """Local maxima along one grid line that may exceed u, refined by 1-D
    Newton on the interpolant.  Returns (positions, heights)."""
    v = values
    cand = np.nonzero((v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] > u - margin))[0] + 1
    if len(cand) == 0:
        return np.zeros(0), np.zeros(0)
    a1, a2 = ((1, 0), (2, 0)) if axis == 0 else ((0, 1), (0, 2))

    def pts(t):
        c = np.full_like(t, fixed)
        return np.column_stack([t, c] if axis == 0 else [c, t])

    t0 = nodes[cand].astype(float)
    t = t0.copy()
    for _ in range(20):
        D = ev.derivatives(pts(t), [a1, a2])
        concave = D[a2] < 0
        step = np.where(concave, D[a1] / np.where(concave, D[a2], -1.0), 0.0)
        t = np.clip(np.clip(t - step, t0 - h, t0 + h), nodes[0], nodes[-1])
    return t, ev.value(pts(t))


def exceedance_max(field, u, cell=None):
    """Maximum of a grid field over its closed domain, resolved near u.

    Interior local maxima are refined by Newton on the 6 x 6 interpolant and
    edge maxima by 1-D Newton.  With ``cell`` given, also returns the
    indicators X_t = 1[max over cell t > u] for the cells of side ``cell``
    tiling the domain from its lower corner (cell edges must be grid lines).
    """
    g = field.grid
    h = g.spacing
    V = g.values
    ax, ay = g.axes
    u_eff = max(u, 1e-9)
    mx = find_local_maxima(field, u_eff, grid_factor=h * u_eff, spacing=h)
    ev = LagrangeGridEvaluator(g)
    margin = 3.0 * h * field.kernel.mean_gradient_norm()
    if cell is None:
        step = None
        lines_x, lines_y = [0, V.shape[0] - 1], [0, V.shape[1] - 1]
    else:
        step = int(round(cell / h))
        if abs(step * h - cell) > 1e-9 * cell:
            raise ValueError("cell side must be a multiple of the grid spacing")
        lines_x = list(range(0, V.shape[0], step))
        lines_y = list(range(0, V.shape[1], step))
        hits = np.zeros(((V.shape[0] - 1) // step, (V.shape[1] - 1) // step), dtype=bool)
        for p in mx:
            i = min(int((p.location[0] - ax[0]) // cell), hits.shape[0] - 1)
            j = min(int((p.location[1] - ay[0]) // cell), hits.shape[1] - 1)
            hits[i, j] = True
    top = max([p.height for p in mx], default=-np.inf)
    for axis, lines, fixed_axis, run_axis in ((0, lines_x, ax, ay), (1, lines_y, ay, ax)):
        for i in lines:
            vals = V[i, :] if axis == 0 else V[:, i]
            if vals.max() <= u - margin:
                continue
            t, hv = _line_maxima(ev, fixed_axis[i], 1 - axis, run_axis, vals, u, margin, h)
            top = max(top, vals.max(), hv.max(initial=-np.inf))
            if step is None:
                continue
            nseg = hits.shape[1 - axis]
            seg = np.maximum(vals[:-1].reshape(nseg, step).max(axis=1), vals[step::step])
            s_idx = np.clip(((t - run_axis[0]) // (step * h)).astype(int), 0, nseg - 1)
            np.maximum.at(seg, s_idx, hv)
            k = i // step
            for s in np.nonzero(seg > u)[0]:
                for kk in (k - 1, k):
                    if 0 <= kk < hits.shape[axis]:
                        if axis == 0:
                            hits[kk, s] = True
                        else:
                            hits[s, kk] = True
    return top if step is None else (top, hits)


def supercritical_level(n, alpha, d=2):
    """u(n) = sqrt(2 alpha d log n)."""
    return math.sqrt(2.0 * alpha * d * math.log(n))


@dataclass(frozen=True)
class SupercriticalResult:
    n: int
    alpha: float
    u: float
    p_hit: float
    se: float
    reference: float
    mean_cells_hit: float
    replicates: int

    def to_dict(self):
        return asdict(self)


def supercritical_emptiness(kernel, n, alpha, replicates, seed, spacing=0.2, max_n=400):
    """Probability that some unit cell of [0, n]^2 sees the field above u(n).

    Returns a :class:`SupercriticalResult`; ``reference`` is
    n^{(1-alpha) d} (log n)^{(d-1)/2}.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if n < 10:
        raise ValueError("n must be at least 10")
    if n > max_n:
        raise MemoryError(f"n = {n} exceeds the configured cap {max_n}")
    d = kernel.dimension
    u = supercritical_level(n, alpha, d)
    m = int(math.ceil(1.0 / spacing))
    h = 1.0 / m
    spec = GridSpec((0.0, 0.0), h, (n * m + 1, n * m + 1))
    hit = np.zeros(replicates, dtype=bool)
    cells = np.zeros(replicates)
    for r in range(replicates):
        fld = sample_stationary_grid(kernel, spec, derive_seed(seed, r))
        top, X = exceedance_max(fld, u, cell=1.0)
        hit[r] = top > u
        cells[r] = X.sum()
    p = float(hit.mean())
    ref = n ** ((1.0 - alpha) * d) * math.log(n) ** ((d - 1) / 2.0)
    se = math.sqrt(max(p * (1 - p), 1e-300) / replicates)
    return SupercriticalResult(int(n), float(alpha), u, p, se, ref, float(cells.mean()), int(replicates))


# ---------------------------------------------------------------------------
# excursion probability and grid capture
# ---------------------------------------------------------------------------

@dataclass
class ExcursionFit:
    C: float
    levels: list
    p_hat: list
    C_levels: list
    residuals: list
    dropped: list = dc_field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def excursion_fit(kernel, u_grid, region, replicates, seed, spacing=0.1):
    """Fit C in P(max_A f > u) ~ C vol(A) u^d Psi(u) across levels.

    Each level's constant is C_u = p_hat / (vol u^d Psi(u)); the
    least-squares fit on the log scale with unit slope is the mean of
    log C_u, and the residuals are log C_u - log C.  The same replicate
    fields serve every level.
    """
    u_grid = [float(u) for u in u_grid]
    if len(u_grid) < 3:
        raise ValueError("need at least three levels")
    d = kernel.dimension
    if not isinstance(region, Box):
        region = Box(*region)
    vol = region.volume
    spec = GridSpec.covering(region, spacing)
    tops = np.empty(replicates)
    for r in range(replicates):
        fld = sample_stationary_grid(kernel, spec, derive_seed(seed, r))
        tops[r] = exceedance_max(fld, min(u_grid))
    p_hat, levels, Cs, dropped = [], [], [], []
    for u in u_grid:
        p = float(np.mean(tops > u))
        if p == 0.0:
            warnings.warn(f"no exceedance at u = {u}; level dropped")
            dropped.append(u)
            continue
        levels.append(u)
        p_hat.append(p)
        Cs.append(p / (vol * u**d * stats.norm.sf(u)))
    logC = np.log(Cs)
    C = float(np.exp(logC.mean()))
    return ExcursionFit(C, levels, p_hat, [float(c) for c in Cs],
                        [float(v) for v in logC - logC.mean()], dropped)


def grid_capture_rate(kernel, u, b_grid, replicates, seed, side=None, max_spacing=0.1):
    """Fraction of replicates where the continuous maximum over the region
    exceeds u while no lattice point of spacing b/u does.

    The region is the centred box of physical side ``side`` (default mu(u),
    the unit rescaled box).  Lattices b u^{-1} Z^2 are anchored at the
    origin and are sub-lattices of one fine sampling grid.
    """
    b_grid = sorted(float(b) for b in b_grid)
    if len(b_grid) < 2:
        raise ValueError("need at least two grid factors")
    side = mu_scaling(u, kernel.dimension) if side is None else float(side)
    h = b_grid[0] / u
    m = max(1, int(math.ceil(h / max_spacing)))
    h /= m
    steps = []
    for b in b_grid:
        s = b / u / h
        if abs(s - round(s)) > 1e-6:
            raise ValueError("grid factors must be integer multiples of the smallest one")
        steps.append(int(round(s)))
    K = int(math.floor(side / 2.0 / h))
    n = 2 * K + 1
    spec = GridSpec((-K * h, -K * h), h, (n, n))
    miss = np.zeros(len(b_grid))
    for r in range(replicates):
        fld = sample_stationary_grid(kernel, spec, derive_seed(seed, r))
        top = exceedance_max(fld, u)
        if not top > u:
            continue
        V = fld.grid.values
        for q, s in enumerate(steps):
            lat = V[K % s :: s, K % s :: s]
            if not lat.max() > u:
                miss[q] += 1
    return {b: float(c / replicates) for b, c in zip(b_grid, miss)}


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    """Per-(u, R) cell summary.  ``to_dict`` gives the JSON schema."""

    u: float
    R: float
    n_replicates: int
    lambda_hat: float
    lambda_kac_rice: float
    count_histogram: list
    tv_to_poisson: dict = None
    tv_to_poisson_kac_rice: dict = None
    qclt: dict = None
    avoidance: list = dc_field(default_factory=list)
    cluster_pair_rate: float = 0.0
    palm_discrepancy: dict = None
    theorem_window: bool = True
    runtime: dict = dc_field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        return out
