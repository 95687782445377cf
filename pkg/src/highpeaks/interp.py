"""Local polynomial interpolation of grid-only fields.

A grid realization has no analytic evaluator; critical points are refined on
the tensor-product Lagrange interpolant through the surrounding 6 x 6 nodes.
For band-limited fields sampled at spacing h the interpolation error is of
order (k h)^6 / 6!, which is far below the Newton tolerance at the spacings
used here.
"""

import numpy as np

from .samplers import Evaluator

__all__ = ["LagrangeGridEvaluator", "node_gradient"]

_NODES = np.arange(-2, 4, dtype=float)


def _lagrange_coeffs():
    # row k: monomial coefficients (ascending) of the k-th basis polynomial
    V = np.vander(_NODES, increasing=True)
    return np.linalg.inv(V).T


_COEF = _lagrange_coeffs()


def _weights(s, m):
    """Derivative-m Lagrange weights at local coordinates s, shape (P, 6)."""
    P = len(s)
    powers = np.zeros((P, 6))
    for c in range(m, 6):
        fac = np.prod(np.arange(c - m + 1, c + 1, dtype=float)) if m else 1.0
        powers[:, c] = fac * s ** (c - m)
    return powers @ _COEF.T


class LagrangeGridEvaluator(Evaluator):
    """Evaluator over a :class:`GridData` by 6-point tensor interpolation."""

    def __init__(self, grid):
        self.grid_data = grid
        self.values = grid.values
        self.origin = np.array([a[0] for a in grid.axes])
        self.h = float(grid.spacing)
        self.shape = np.array(grid.values.shape)

    def derivatives(self, points, alphas):
        alphas = [tuple(a) for a in alphas]
        p = np.atleast_2d(np.asarray(points, dtype=float))
        t = (p - self.origin) / self.h
        i0 = np.floor(t).astype(int)
        i0 = np.clip(i0, 2, self.shape - 4)
        s = t - i0
        off = np.arange(-2, 4)
        ix = i0[:, 0:1] + off
        iy = i0[:, 1:2] + off
        patch = self.values[ix[:, :, None], iy[:, None, :]]
        wx = {m: _weights(s[:, 0], m) for m in {a[0] for a in alphas}}
        wy = {m: _weights(s[:, 1], m) for m in {a[1] for a in alphas}}
        out = {}
        for a in alphas:
            scale = self.h ** -(a[0] + a[1])
            out[a] = scale * np.einsum("pa,pab,pb->p", wx[a[0]], patch, wy[a[1]])
        return out


def node_gradient(values, h):
    """Fourth-order central differences at the nodes (second order at edges)."""
    g = []
    for axis in range(2):
        d = np.gradient(values, h, axis=axis, edge_order=2)
        v = np.moveaxis(values, axis, 0)
        inner = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
        dm = np.moveaxis(d, axis, 0).copy()
        dm[2:-2] = inner
        g.append(np.moveaxis(dm, 0, axis))
    return g
