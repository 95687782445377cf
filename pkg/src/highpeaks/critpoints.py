"""
Critical points of a sampled field above a level, and the rescaled point
pattern of high maxima.

The scan follows the discretisation heuristic that a lattice of spacing
b/u resolves the excursion set above u: lattice nodes whose value exceeds
u - margin and around which both gradient components change sign seed a
Newton iteration on grad f = 0.  Iterates are confined to one cell width
around their seed; converged points are classified by their Hessian.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .interp import LagrangeGridEvaluator, node_gradient
from .kacrice import mu_scaling
from .samplers import Box, GridSpec

__all__ = [
    "CriticalPoint",
    "PointPattern",
    "CritPointList",
    "find_local_maxima",
    "find_critical_points",
    "rescale_points",
    "scan_critical_points",
]

DEFAULT_B = 0.25
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 30


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    height: float
    grad_norm: float
    hess_eigs: tuple
    morse_index: int

    @property
    def is_maximum(self):
        return self.morse_index == len(self.hess_eigs)


@dataclass(frozen=True)
class PointPattern:
    """Maxima above ``level`` in rescaled coordinates x / mu(level)."""

    points: np.ndarray
    window: Box
    level: float
    scale: float
    physical_window_side: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.window.dimension)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self):
        return len(self.points)

    def count_in(self, box):
        if len(self.points) == 0:
            return 0
        return int(np.sum(box.contains(self.points)))


class CritPointList(list):
    """List of critical points carrying the scan tally as ``.tally``."""

    def __init__(self, items=(), tally=None):
        super().__init__(items)
        self.tally = dict(tally or {})


def _evaluator_and_lattice(field, h_target, region):
    if field.evaluator is not None:
        ev = field.evaluator
        spec = GridSpec.covering(region, h_target)
        axes = spec.axes()
        G = ev.grid(axes, [(0, 0), (1, 0), (0, 1)])
        return ev, axes, G[(0, 0)], G[(1, 0)], G[(0, 1)], spec.spacing
    if field.grid is not None:
        h = field.grid.spacing
        if h > h_target * (1 + 1e-9):
            raise ValueError(
                f"grid spacing {h:g} is coarser than the lattice spacing b/u = {h_target:g}; "
                "resample on a finer grid or raise grid_factor"
            )
        ev = LagrangeGridEvaluator(field.grid)
        gx, gy = node_gradient(field.grid.values, h)
        return ev, field.grid.axes, field.grid.values, gx, gy, h
    raise ValueError("field has neither an evaluator nor grid values")


def _sign_change(g):
    hi = ndimage.maximum_filter(g, size=3, mode="nearest")
    lo = ndimage.minimum_filter(g, size=3, mode="nearest")
    return (hi >= 0) & (lo <= 0)


def _newton(ev, starts, h, tol, max_iter):
    """Vectorised Newton on grad f = 0 with one-cell confinement.

    Returns (x, value, gradient, hessian, status) with status 0 converged,
    1 not converged, 2 left its cell, 3 singular Hessian.
    """
    n = len(starts)
    x = starts.copy()
    status = np.ones(n, dtype=int)
    val = np.zeros(n)
    grad = np.zeros((n, 2))
    hess = np.zeros((n, 2, 2))
    active = np.arange(n)
    bound = 1.5 * h
    for _ in range(max_iter + 1):
        if len(active) == 0:
            break
        v, g, H = ev.jet(x[active])
        gn = np.linalg.norm(g, axis=1)
        conv = gn <= tol
        idx = active[conv]
        status[idx] = 0
        val[idx], grad[idx], hess[idx] = v[conv], g[conv], H[conv]
        rest = ~conv
        active = active[rest]
        if len(active) == 0:
            break
        g, H = g[rest], H[rest]
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        sing = np.abs(det) < 1e-14
        status[active[sing]] = 3
        keep = ~sing
        active, g, H, det = active[keep], g[keep], H[keep], det[keep]
        # 2 x 2 solve written out
        step0 = (H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1]) / det
        step1 = (H[:, 0, 0] * g[:, 1] - H[:, 0, 1] * g[:, 0]) / det
        x[active, 0] -= step0
        x[active, 1] -= step1
        out = np.max(np.abs(x[active] - starts[active]), axis=1) > bound
        status[active[out]] = 2
        active = active[~out]
    return x, val, grad, hess, status


def _dedup(pts, heights, radius):
    order = np.lexsort((pts[:, 1], pts[:, 0], -heights))
    kept = []
    for i in order:
        if all(np.linalg.norm(pts[i] - pts[j]) > radius for j in kept):
            kept.append(i)
    return np.array(kept, dtype=int)


def scan_critical_points(field, u, grid_factor=DEFAULT_B, newton_tol=DEFAULT_TOL,
                         max_iter=DEFAULT_MAX_ITER, window=None, maxima_only=True,
                         grad_scale=None, spacing=None):
    """Critical points above ``u`` with a tally of the scan.

    Parameters
    ----------
    field : FieldRealization
    u : float
        Level; also sets the lattice spacing b/u.
    grid_factor : float
        b in the lattice spacing b/u.
    window : Box, optional
        Region to report (defaults to the field domain).
    maxima_only : bool
        Keep only points of Morse index d.
    grad_scale : float, optional
        Estimate of E||grad f|| used in the candidate margin; defaults to
        sqrt(tr Lambda) of the field's kernel.
    spacing : float, optional
        Lattice spacing; defaults to grid_factor / u.
    """
    if grid_factor <= 0:
        raise ValueError("grid_factor must be positive")
    if spacing is None:
        if u <= 0:
            raise ValueError("the scan needs u > 0 (it sets the lattice spacing b/u)")
        spacing = grid_factor / u
    if field.blocks:
        allpts = CritPointList(tally={})
        for blk in field.blocks:
            sub = scan_critical_points(blk, u, grid_factor, newton_tol, max_iter,
                                       None, maxima_only, grad_scale, spacing)
            for p in sub:
                if window is None or window.contains(p.location)[0]:
                    allpts.append(p)
            for k, v in sub.tally.items():
                allpts.tally[k] = allpts.tally.get(k, 0) + v
        allpts.sort(key=lambda p: tuple(p.location))
        return allpts

    domain = field.domain
    region = domain if window is None else window
    ev, axes, V, GX, GY, h = _evaluator_and_lattice(field, spacing, _scan_region(domain, region, spacing))
    if grad_scale is None:
        grad_scale = field.kernel.mean_gradient_norm() if field.kernel is not None else 1.0
    margin = 3.0 * spacing * grad_scale
    cand = (V > u - margin) & _sign_change(GX) & _sign_change(GY)
    ii, jj = np.nonzero(cand)
    starts = np.column_stack([axes[0][ii], axes[1][jj]])
    tally = {"candidates": len(starts), "converged": 0, "not_converged": 0,
             "left_cell": 0, "singular": 0}
    if len(starts) == 0:
        return CritPointList(tally=tally)
    x, val, grad, hess, status = _newton(ev, starts, h, newton_tol, max_iter)
    tally["converged"] = int(np.sum(status == 0))
    tally["not_converged"] = int(np.sum(status == 1))
    tally["left_cell"] = int(np.sum(status == 2))
    tally["singular"] = int(np.sum(status == 3))
    ok = status == 0
    ok &= val > u
    ok &= region.contains(x) & domain.contains(x)
    x, val, grad, hess = x[ok], val[ok], grad[ok], hess[ok]
    eigs = np.linalg.eigvalsh(hess) if len(x) else np.zeros((0, 2))
    index = np.sum(eigs < 0, axis=1)
    if maxima_only:
        keep = index == 2
        x, val, grad, eigs, index = x[keep], val[keep], grad[keep], eigs[keep], index[keep]
    sel = _dedup(x, val, 0.5 * spacing) if len(x) else np.zeros(0, dtype=int)
    pts = [
        CriticalPoint(
            location=x[i].copy(),
            height=float(val[i]),
            grad_norm=float(np.linalg.norm(grad[i])),
            hess_eigs=tuple(float(e) for e in eigs[i]),
            morse_index=int(index[i]),
        )
        for i in sel
    ]
    pts.sort(key=lambda p: tuple(p.location))
    return CritPointList(pts, tally)


def _scan_region(domain, region, h):
    """Region to lattice: the report window padded by two cells, inside the domain."""
    lo = np.maximum(np.array(region.lo) - 2 * h, domain.lo)
    hi = np.minimum(np.array(region.hi) + 2 * h, domain.hi)
    return Box(tuple(lo), tuple(hi))


def find_local_maxima(field, u, grid_factor=DEFAULT_B, newton_tol=DEFAULT_TOL,
                      max_iter=DEFAULT_MAX_ITER, window=None, **kw):
    """Local maxima of ``field`` with height above ``u``.

    Returns a :class:`CritPointList`, sorted lexicographically by location;
    ``.tally`` counts candidates dropped by the Newton stage.
    """
    return scan_critical_points(field, u, grid_factor, newton_tol, max_iter, window,
                                maxima_only=True, **kw)


def find_critical_points(field, u, grid_factor=DEFAULT_B, newton_tol=DEFAULT_TOL,
                         max_iter=DEFAULT_MAX_ITER, window=None, **kw):
    """All critical points above ``u`` (maxima, saddles and minima).

    For ``u <= 1`` the lattice spacing is ``grid_factor`` itself (b/u would
    degenerate as u approaches 0).
    """
    kw.setdefault("spacing", grid_factor / max(u, 1.0))
    return scan_critical_points(field, u, grid_factor, newton_tol, max_iter, window,
                                maxima_only=False, **kw)


def rescale_points(points, u, window_side):
    """Divide physical maxima locations by mu(u).

    Parameters
    ----------
    points : sequence of CriticalPoint or array (n, d)
        Must lie in the physical window [-R/2, R/2]^d.
    u : float
    window_side : float
        R.
    """
    if len(points) and isinstance(points[0], CriticalPoint):
        arr = np.array([p.location for p in points], dtype=float)
    else:
        arr = np.asarray(points, dtype=float)
    d = arr.shape[1] if arr.ndim == 2 and arr.size else 2
    arr = arr.reshape(-1, d)
    R = float(window_side)
    if np.any(np.abs(arr) > R / 2.0 + 1e-12):
        raise ValueError("point outside the physical window [-R/2, R/2]^d")
    mu = mu_scaling(u, d)
    half = R / (2.0 * mu)
    return PointPattern(arr / mu, Box((-half,) * d, (half,) * d), float(u), mu, R)
