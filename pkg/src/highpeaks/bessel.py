"""Bessel functions of the first kind.

Values come from ``scipy.special.jv`` (the Cephes/AMOS implementation: power
series for small arguments, Hankel asymptotics for large ones, backward
recurrence in between), whose absolute error is below 1e-12 in the range used
here.  :func:`jn_quadrature` is an independent evaluation through Bessel's
integral, used by the tests to certify that bound.
"""

import numpy as np
from scipy import special

__all__ = ["jn", "jn_scaled", "jn_quadrature"]


def jn(n, x):
    """J_n(x) for real order ``n`` (integer orders may be negative)."""
    return special.jv(n, x)


def jn_scaled(nu, rho, small=0.5, terms=14):
    """Return rho**(-nu) * J_nu(rho), finite at rho = 0.

    Uses the power series below ``small`` to avoid the 0/0 at the origin.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    near = rho < small
    if np.any(~near):
        r = rho[~near]
        out[~near] = special.jv(nu, r) / r**nu
    if np.any(near):
        q = -(rho[near] / 2.0) ** 2
        term = np.full(q.shape, 1.0 / (2.0**nu * special.gamma(nu + 1.0)))
        acc = term.copy()
        for k in range(1, terms):
            term = term * q / (k * (k + nu))
            acc += term
        out[near] = acc
    return out


def jn_quadrature(n, x, nodes=None):
    """J_n(x) for integer n from Bessel's integral.

    J_n(x) = (1/2pi) int_0^{2pi} cos(n t - x sin t) dt; the integrand is
    periodic and entire, so the trapezoid rule converges geometrically once
    the node count exceeds |x| + |n| by a margin.
    """
    x = np.asarray(x, dtype=float)
    n = int(n)
    if nodes is None:
        nodes = int(2 * (np.max(np.abs(x), initial=0.0) + abs(n)) + 64)
    t = 2.0 * np.pi * np.arange(nodes) / nodes
    vals = np.cos(n * t[:, None] - np.ravel(x)[None, :] * np.sin(t)[:, None])
    return vals.mean(axis=0).reshape(x.shape)
