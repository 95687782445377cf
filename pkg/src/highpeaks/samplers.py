"""
Field samplers.

* :func:`sample_bf_series` -- Bargmann-Fock field from its entire-series
  representation, exact in law up to a truncation bound.
* :func:`sample_rpw_bessel` -- random plane wave from its Fourier-Bessel
  expansion on a disk.
* :func:`sample_stationary_grid` -- any stationary kernel on a regular grid by
  circulant embedding.
* :func:`sample_block_independent` -- independent copies of a series field on
  disjoint blocks.

Series-backed realizations carry an evaluator with exact derivatives of the
truncated series; grid realizations carry values only.
"""

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
import math

import numpy as np
from scipy import fft as sfft
from scipy import special, stats

from .kernels import KernelFamily, bargmann_fock, random_plane_wave
from .rng import derive_seed, stream

__all__ = [
    "SamplerError",
    "Box",
    "GridSpec",
    "GridData",
    "FieldRealization",
    "Evaluator",
    "BFSeriesEvaluator",
    "RPWBesselEvaluator",
    "BlockEvaluator",
    "bf_truncation_degree",
    "rpw_truncation_order",
    "sample_bf_series",
    "sample_rpw_bessel",
    "sample_stationary_grid",
    "sample_block_independent",
    "DEFAULT_TOLERANCE",
]

DEFAULT_TOLERANCE = 1e-10
MAX_BF_DEGREE = 4000
MAX_RPW_ORDER = 2000
_CHUNK = 4096


class SamplerError(ValueError):
    """Raised when a sampler cannot honour its accuracy contract."""


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_i, hi_i]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError("box has hi < lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, side, d=2, center=None):
        c = np.zeros(d) if center is None else np.asarray(center, float)
        return cls(tuple(c - side / 2.0), tuple(c + side / 2.0))

    @property
    def dimension(self):
        return len(self.lo)

    @property
    def center(self):
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def half_widths(self):
        return 0.5 * (np.array(self.hi) - np.array(self.lo))

    @property
    def volume(self):
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(points)
        return np.all((p >= np.array(self.lo) - tol) & (p <= np.array(self.hi) + tol), axis=-1)

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class GridSpec:
    """Regular grid ``origin + spacing * (i, j)``, ``0 <= i < shape[0]``."""

    origin: tuple
    spacing: float
    shape: tuple

    @classmethod
    def covering(cls, box, spacing):
        """Smallest grid of the given spacing whose nodes cover ``box``."""
        lo = np.array(box.lo)
        n = np.ceil((np.array(box.hi) - lo) / spacing - 1e-9).astype(int) + 1
        return cls(tuple(lo), float(spacing), tuple(int(v) for v in n))

    def axes(self):
        return tuple(o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape))


@dataclass(frozen=True)
class GridData:
    axes: tuple
    values: np.ndarray
    spacing: float


@dataclass(frozen=True)
class FieldRealization:
    """One sampled field.

    Attributes
    ----------
    kernel : KernelModel
    seed : int
    domain : Box
    evaluator : Evaluator or None
        Analytic evaluator (series samplers); ``None`` for grid-only fields.
    grid : GridData or None
        Grid values (grid sampler only).
    truncation : int
        Series degree / Bessel order N (0 for grid fields).
    truncation_error_bound : float
        Sup over the domain of the omitted covariance mass.
    tolerance : float
    blocks : tuple of FieldRealization
        Sub-fields of a block-independent realization.
    """

    kernel: object
    seed: int
    domain: Box
    evaluator: object = None
    grid: GridData = None
    truncation: int = 0
    truncation_error_bound: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE
    blocks: tuple = dc_field(default=())
    sampler: str = ""

    @property
    def dimension(self):
        return self.domain.dimension

    def metadata(self):
        return {
            "kernel": self.kernel.id,
            "kernel_params": self.kernel.params,
            "sampler": self.sampler,
            "seed": int(self.seed),
            "domain": self.domain.to_dict(),
            "N": int(self.truncation),
            "tolerance": float(self.tolerance),
            "truncation_error_bound": float(self.truncation_error_bound),
        }


# ---------------------------------------------------------------------------
# evaluator protocol
# ---------------------------------------------------------------------------

GRAD = ((1, 0), (0, 1))
HESS = ((2, 0), (1, 1), (0, 2))
THIRD = ((3, 0), (2, 1), (1, 2), (0, 3))


class Evaluator:
    """Smooth planar field with exact partial derivatives.

    Subclasses implement :meth:`derivatives`, returning a dict mapping each
    requested exponent multi-index to an array over the points.
    """

    dimension = 2
    max_order = 3

    def derivatives(self, points, alphas):
        raise NotImplementedError

    def _pts(self, points):
        p = np.asarray(points, dtype=float)
        single = p.ndim == 1
        return np.atleast_2d(p), single

    def value(self, points):
        p, single = self._pts(points)
        v = self.derivatives(p, [(0, 0)])[(0, 0)]
        return v[0] if single else v

    def gradient(self, points):
        p, single = self._pts(points)
        D = self.derivatives(p, GRAD)
        g = np.stack([D[a] for a in GRAD], axis=-1)
        return g[0] if single else g

    def hessian(self, points):
        p, single = self._pts(points)
        D = self.derivatives(p, HESS)
        H = _assemble_hessian(D)
        return H[0] if single else H

    def third(self, points):
        """Array T[..., i, j, k] = d_i d_j d_k f."""
        p, single = self._pts(points)
        D = self.derivatives(p, THIRD)
        T = np.empty((len(p), 2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    n1 = (i == 0) + (j == 0) + (k == 0)
                    T[:, i, j, k] = D[(n1, 3 - n1)]
        return T[0] if single else T

    def jet(self, points):
        """Value, gradient and Hessian in one pass."""
        p, _ = self._pts(points)
        D = self.derivatives(p, ((0, 0),) + GRAD + HESS)
        g = np.stack([D[a] for a in GRAD], axis=-1)
        return D[(0, 0)], g, _assemble_hessian(D)

    def grid(self, axes, alphas=((0, 0),)):
        """Derivatives on the tensor grid ``axes[0] x axes[1]``.

        Returns a dict alpha -> array of shape (len(axes[0]), len(axes[1])).
        """
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        D = self.derivatives(pts, alphas)
        return {a: D[a].reshape(X.shape) for a in alphas}


def _assemble_hessian(D):
    h11, h12, h22 = D[(2, 0)], D[(1, 1)], D[(0, 2)]
    H = np.empty(h11.shape + (2, 2))
    H[..., 0, 0] = h11
    H[..., 0, 1] = h12
    H[..., 1, 0] = h12
    H[..., 1, 1] = h22
    return H


def _chunked(points, fn):
    """Apply ``fn`` (points -> dict of arrays) chunkwise and concatenate."""
    if len(points) <= _CHUNK:
        return fn(points)
    parts = [fn(points[s : s + _CHUNK]) for s in range(0, len(points), _CHUNK)]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# ---------------------------------------------------------------------------
# Bargmann-Fock entire series
# ---------------------------------------------------------------------------

def _bf_basis(x, N, mmax):
    """phi_j^(m)(x) for j <= N, m <= mmax, with phi_j = e^{-x^2/2} x^j / sqrt(j!).

    Values are formed in the log domain so that |x| up to ~100 neither
    underflows nor overflows; derivatives use the ladder
    phi_j' = sqrt(j) phi_{j-1} - sqrt(j+1) phi_{j+1}.
    Returns an array of shape (mmax + 1, len(x), N + 1).
    """
    x = np.asarray(x, dtype=float)
    L = N + mmax + 1
    j = np.arange(L)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(ax)
        logphi = -0.5 * x[:, None] ** 2 + j[None, :] * logx[:, None] - 0.5 * special.gammaln(j + 1.0)[None, :]
    logphi[:, 0] = -0.5 * x**2
    phi = np.exp(logphi)
    zero = ax == 0.0
    if np.any(zero):
        phi[zero, 1:] = 0.0
    neg = x < 0
    if np.any(neg):
        phi[np.ix_(neg, j[1::2])] *= -1.0
    out = np.empty((mmax + 1, len(x), N + 1))
    cur = phi
    out[0] = cur[:, : N + 1]
    sq = np.sqrt(np.arange(L + 1, dtype=float))
    for m in range(1, mmax + 1):
        n = cur.shape[1] - 1
        nxt = -sq[1 : n + 1] * cur[:, 1:]
        nxt[:, 1:] += sq[1:n] * cur[:, : n - 1]
        cur = nxt
        out[m] = cur[:, : N + 1]
    return out


class BFSeriesEvaluator(Evaluator):
    """f(x) = sum_{j,k} a_jk phi_j(x1 - c1) phi_k(x2 - c2)."""

    def __init__(self, coeffs, center):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.coeffs.setflags(write=False)
        self.center = np.asarray(center, dtype=float)
        self.N = self.coeffs.shape[0] - 1

    def derivatives(self, points, alphas):
        alphas = [tuple(a) for a in alphas]
        if any(sum(a) > self.max_order for a in alphas):
            raise ValueError("series evaluator supports derivatives up to order 3")
        p = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        m1 = max(a[0] for a in alphas)
        m2 = max(a[1] for a in alphas)

        def run(q):
            Bx = _bf_basis(q[:, 0], self.N, m1)
            By = _bf_basis(q[:, 1], self.N, m2)
            T = {}
            for a in set(a[0] for a in alphas):
                T[a] = Bx[a] @ self.coeffs
            return {a: np.einsum("pj,pj->p", T[a[0]], By[a[1]]) for a in alphas}

        return _chunked(p, run)

    def grid(self, axes, alphas=((0, 0),)):
        alphas = [tuple(a) for a in alphas]
        m1 = max(a[0] for a in alphas)
        m2 = max(a[1] for a in alphas)
        Bx = _bf_basis(np.asarray(axes[0], float) - self.center[0], self.N, m1)
        By = _bf_basis(np.asarray(axes[1], float) - self.center[1], self.N, m2)
        right = {}
        out = {}
        for a in alphas:
            if a[1] not in right:
                right[a[1]] = self.coeffs @ By[a[1]].T
            out[a] = Bx[a[0]] @ right[a[1]]
        return out


def bf_truncation_deficit(half_widths, N):
    """sup over the box of 1 - sum_{j,k<=N} phi_j(x1)^2 phi_k(x2)^2."""
    cdf = np.prod([stats.poisson.cdf(N, a * a) if a > 0 else 1.0 for a in half_widths])
    return float(max(0.0, 1.0 - cdf))


def bf_truncation_degree(half_widths, tolerance=DEFAULT_TOLERANCE, max_degree=MAX_BF_DEGREE):
    """Smallest N whose covariance deficit over the box is <= tolerance.

    phi_j(x)^2 is the Poisson(x^2) mass at j, so the deficit at a corner is
    one minus a product of Poisson distribution functions.
    """
    hw = [float(a) for a in half_widths]
    d = len(hw)
    per_axis = tolerance / d
    N = max(int(stats.poisson.isf(per_axis, a * a)) if a > 0 else 0 for a in hw)
    N = max(N, 1)
    while bf_truncation_deficit(hw, N) > tolerance:
        N += 1
    if N > max_degree:
        raise SamplerError(
            f"domain half-widths {hw} need series degree N={N} for tolerance "
            f"{tolerance:g}, above the configured maximum {max_degree}"
        )
    return N


def sample_bf_series(seed, domain, tolerance=DEFAULT_TOLERANCE, max_degree=MAX_BF_DEGREE):
    """Bargmann-Fock field on ``domain`` (d = 2) from its entire series.

    The expansion is centred at the box centre, which leaves the law
    unchanged by stationarity and keeps the degree as small as possible.

    Parameters
    ----------
    seed : int
    domain : Box
    tolerance : float
        Bound on the sup-norm of the omitted covariance mass.
    """
    if not isinstance(domain, Box):
        domain = Box(*domain)
    if domain.dimension != 2:
        raise SamplerError("the series sampler is planar")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    N = bf_truncation_degree(domain.half_widths, tolerance, max_degree)
    coeffs = stream(seed).standard_normal((N + 1, N + 1))
    ev = BFSeriesEvaluator(coeffs, domain.center)
    return FieldRealization(
        kernel=bargmann_fock(2),
        seed=int(seed),
        domain=domain,
        evaluator=ev,
        truncation=N,
        truncation_error_bound=bf_truncation_deficit(domain.half_widths, N),
        tolerance=tolerance,
        sampler="bf-series",
    )


# ---------------------------------------------------------------------------
# random plane wave, Fourier-Bessel series
# ---------------------------------------------------------------------------

class RPWBesselEvaluator(Evaluator):
    """f = Re sum_{n=0}^N g_n J_n(rho) e^{i n theta} about ``center``.

    Derivatives stay in the same family: with D = d1 + i d2 and
    Dbar = d1 - i d2, D(J_n e^{in.}) = -J_{n+1} e^{i(n+1).} and
    Dbar(J_n e^{in.}) = J_{n-1} e^{i(n-1).} for every integer n.
    """

    def __init__(self, gamma, center):
        self.gamma = np.asarray(gamma, dtype=complex)
        self.gamma.setflags(write=False)
        self.center = np.asarray(center, dtype=float)
        self.N = len(self.gamma) - 1

    def _coeffs(self, alpha, M):
        # coefficient vector over n = -M .. N + M
        c = np.zeros(self.N + 2 * M + 1, dtype=complex)
        c[M : M + self.N + 1] = self.gamma
        for _ in range(alpha[0]):
            D = np.zeros_like(c)
            D[1:] = -c[:-1]
            Db = np.zeros_like(c)
            Db[:-1] = c[1:]
            c = 0.5 * (D + Db)
        for _ in range(alpha[1]):
            D = np.zeros_like(c)
            D[1:] = -c[:-1]
            Db = np.zeros_like(c)
            Db[:-1] = c[1:]
            c = (D - Db) / 2j
        return c

    def derivatives(self, points, alphas):
        alphas = [tuple(a) for a in alphas]
        M = max(sum(a) for a in alphas)
        if M > self.max_order:
            raise ValueError("series evaluator supports derivatives up to order 3")
        n = np.arange(-M, self.N + M + 1)
        coeffs = {a: self._coeffs(a, M) for a in alphas}
        p = np.atleast_2d(np.asarray(points, dtype=float)) - self.center

        def run(q):
            rho = np.hypot(q[:, 0], q[:, 1])
            theta = np.arctan2(q[:, 1], q[:, 0])
            J = special.jv(np.abs(n)[None, :], rho[:, None])
            J = J * np.where((n < 0) & (n % 2 == 1), -1.0, 1.0)[None, :]
            E = J * np.exp(1j * n[None, :] * theta[:, None])
            return {a: (E @ coeffs[a]).real for a in alphas}

        return _chunked(p, run)


def rpw_tail_bound(radius, N):
    """2 sum_{n>N} ((r/2)^n / n!)^2, a uniform bound on the omitted mass
    2 sum_{n>N} J_n(rho)^2 for rho <= r."""
    if radius == 0:
        return 0.0
    lr = math.log(radius / 2.0)
    total = 0.0
    n = N + 1
    while True:
        term = 2.0 * math.exp(2.0 * (n * lr - math.lgamma(n + 1.0)))
        total += term
        if n > radius and term < 1e-30 * max(total, 1e-300):
            break
        n += 1
    return total


def rpw_truncation_order(radius, tolerance=DEFAULT_TOLERANCE, max_order=MAX_RPW_ORDER):
    N = max(1, int(math.e * radius / 2.0) - 1)
    N = min(N, max_order)
    while rpw_tail_bound(radius, N) > tolerance:
        N += 1
        if N > max_order:
            raise SamplerError(
                f"disk radius {radius} needs Bessel order above {max_order} for "
                f"tolerance {tolerance:g}"
            )
    # shrink while the bound still holds (the starting guess may be generous)
    while N > 1 and rpw_tail_bound(radius, N - 1) <= tolerance:
        N -= 1
    return N


def sample_rpw_bessel(seed, disk_radius, tolerance=DEFAULT_TOLERANCE, center=(0.0, 0.0),
                      max_order=MAX_RPW_ORDER):
    """Random plane wave on the disk of radius ``disk_radius``.

    f(rho, theta) = a_0 J_0(rho) + sqrt(2) sum_{n=1}^N J_n(rho)
    (a_n cos n theta + b_n sin n theta); by Graf's addition theorem the
    covariance is J_0(|x - y|) minus the tail controlled by
    :func:`rpw_tail_bound`.
    """
    if disk_radius <= 0:
        raise ValueError("disk_radius must be positive")
    N = rpw_truncation_order(disk_radius, tolerance, max_order)
    z = stream(seed).standard_normal((2, N + 1))
    gamma = np.sqrt(2.0) * (z[0] - 1j * z[1])
    gamma[0] = z[0, 0]
    c = np.asarray(center, float)
    ev = RPWBesselEvaluator(gamma, c)
    return FieldRealization(
        kernel=random_plane_wave(),
        seed=int(seed),
        domain=Box(tuple(c - disk_radius), tuple(c + disk_radius)),
        evaluator=ev,
        truncation=N,
        truncation_error_bound=rpw_tail_bound(disk_radius, N),
        tolerance=tolerance,
        sampler="rpw-bessel",
    )


# ---------------------------------------------------------------------------
# circulant embedding
# ---------------------------------------------------------------------------

def _kernel_key(kernel):
    if kernel.family == KernelFamily.CUSTOM_SPECTRAL:
        return ("custom", id(kernel))
    return (kernel.family.value, tuple(sorted(kernel.params.items())))


_PLANS = {}


def _correlation_range(kernel, tol, smax=1e4):
    """Distance beyond which |r| stays below ``tol`` along both axes and the
    diagonal (probed on a doubling ladder, then refined)."""
    dirs = np.array([[1.0, 0.0], [0.0, 1.0], [np.sqrt(0.5), np.sqrt(0.5)]])
    r0 = kernel.deriv[(0, 0)]
    s = 1.0
    while s < smax:
        tail = np.linspace(s, 4.0 * s, 64)
        vals = np.abs(r0((tail[:, None, None] * dirs[None]).reshape(-1, 2)))
        if np.all(vals < tol):
            break
        s *= 2.0
    return s


def _circulant_plan(kernel, spacing, shape, embed_tol):
    key = (_kernel_key(kernel), float(spacing), tuple(shape), float(embed_tol))
    if key in _PLANS:
        return _PLANS[key]
    rng_ = _correlation_range(kernel, embed_tol)
    pad = int(math.ceil(rng_ / spacing))
    sizes = [sfft.next_fast_len(n + min(pad, n), real=True) for n in shape]
    r0 = kernel.deriv[(0, 0)]
    for _ in range(5):
        lags = []
        for M in sizes:
            k = np.arange(M)
            lags.append(spacing * np.where(k <= M // 2, k, k - M))
        X, Y = np.meshgrid(lags[0], lags[1], indexing="ij")
        c = r0(np.stack([X, Y], axis=-1))
        lam = sfft.rfft2(c).real
        lmax = lam.max()
        if lam.min() >= -embed_tol * max(lmax, 1.0) * 1e2:
            break
        sizes = [sfft.next_fast_len(2 * M, real=True) for M in sizes]
    else:
        raise SamplerError(
            f"circulant embedding has negative eigenvalues (min {lam.min():.3g}); "
            "increase the padding or use a series sampler"
        )
    root = np.sqrt(np.clip(lam, 0.0, None))
    plan = (tuple(sizes), root)
    if len(_PLANS) > 32:
        _PLANS.clear()
    _PLANS[key] = plan
    return plan


def sample_stationary_grid(kernel, grid_spec, seed, embed_tol=1e-12):
    """Gaussian field with covariance ``kernel`` on a regular planar grid.

    The grid is embedded in a torus large enough that the kernel has decayed
    below ``embed_tol`` across the padding; the sample is
    ifft(sqrt(lambda) * fft(w)) for white noise w, which has exactly the
    circulant covariance.
    """
    if kernel.dimension != 2:
        raise SamplerError("the grid sampler is planar")
    sizes, root = _circulant_plan(kernel, grid_spec.spacing, grid_spec.shape, embed_tol)
    w = stream(seed).standard_normal(sizes)
    full = sfft.irfft2(root * sfft.rfft2(w), s=sizes)
    nx, ny = grid_spec.shape
    values = np.ascontiguousarray(full[:nx, :ny])
    values.setflags(write=False)
    axes = grid_spec.axes()
    return FieldRealization(
        kernel=kernel,
        seed=int(seed),
        domain=Box(tuple(a[0] for a in axes), tuple(a[-1] for a in axes)),
        grid=GridData(axes, values, grid_spec.spacing),
        truncation=0,
        truncation_error_bound=0.0,
        tolerance=embed_tol,
        sampler="circulant-grid",
    )


# ---------------------------------------------------------------------------
# block-independent field
# ---------------------------------------------------------------------------

class BlockEvaluator(Evaluator):
    """Dispatches points to the block that contains them (NaN in the gaps)."""

    def __init__(self, blocks):
        self.blocks = tuple(blocks)

    def derivatives(self, points, alphas):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = {tuple(a): np.full(len(p), np.nan) for a in alphas}
        for b in self.blocks:
            m = b.domain.contains(p)
            if np.any(m):
                D = b.evaluator.derivatives(p[m], alphas)
                for a in out:
                    out[a][m] = D[a]
        return out


def block_boxes(domain, a, delta):
    """Blocks of side ``a`` separated by gaps ``delta``, clipped to ``domain``."""
    edges = []
    for lo, hi in zip(domain.lo, domain.hi):
        starts = []
        s = lo
        while s < hi - 1e-12:
            starts.append((s, min(s + a, hi)))
            s += a + delta
        edges.append(starts)
    return [Box((x0, y0), (x1, y1)) for (x0, x1) in edges[0] for (y0, y1) in edges[1]]


def sample_block_independent(kernel, a, delta, domain, seed, tolerance=DEFAULT_TOLERANCE):
    """Independent copies of the series field on blocks of side ``a``.

    Block (i, j) uses the stream derived from ``(seed, i, j)``; a single
    block covering the whole domain reproduces the plain sampler.
    """
    if a <= 0 or delta < 0:
        raise ValueError("need a > 0 and delta >= 0")
    if not isinstance(domain, Box):
        domain = Box(*domain)
    boxes = block_boxes(domain, a, delta)
    if kernel.family == KernelFamily.BARGMANN_FOCK:
        def one(s, box):
            return sample_bf_series(s, box, tolerance)
    elif kernel.family == KernelFamily.RANDOM_PLANE_WAVE:
        def one(s, box):
            radius = float(np.linalg.norm(box.half_widths))
            f = sample_rpw_bessel(s, radius, tolerance, center=box.center)
            return FieldRealization(**{**f.__dict__, "domain": box})
    else:
        raise SamplerError(f"no series sampler for kernel {kernel.id}")
    if len(boxes) == 1:
        return one(seed, boxes[0])
    n_y = len({b.lo[1] for b in boxes})
    blocks = tuple(one(derive_seed(seed, k // n_y, k % n_y), b) for k, b in enumerate(boxes))
    return FieldRealization(
        kernel=kernel,
        seed=int(seed),
        domain=domain,
        evaluator=BlockEvaluator(blocks),
        truncation=max(b.truncation for b in blocks),
        truncation_error_bound=max(b.truncation_error_bound for b in blocks),
        tolerance=tolerance,
        blocks=blocks,
        sampler="block-independent",
    )
