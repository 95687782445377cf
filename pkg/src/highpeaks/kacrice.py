"""
Closed-form and semi-analytic quantities for high maxima.

mu(u) is the dilation under which maxima above u have asymptotically unit
intensity; the maxima intensity carries det(Lambda)^{1/2} explicitly so that
no domain rescaling of the kernel is needed.
"""

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import integrate, optimize

from .kernels import jet_indices, two_point_covariance
from .rng import stream

__all__ = [
    "IntensityReport",
    "mu_scaling",
    "log_mu_scaling",
    "expected_maxima_density",
    "expected_count",
    "cluster_integrand_mc",
    "single_point_integrand_mc",
    "cluster_radius",
    "berman_bound",
    "bivariate_normal_density",
    "expected_max_level",
]

SCHEMA_VERSION = 1


def log_mu_scaling(u, d=2):
    """log mu(u) = u^2/(2d) + ((1-d)/d) log u + ((d+1)/(2d)) log 2pi."""
    if u <= 0:
        raise ValueError("u must be positive")
    if d < 2:
        raise ValueError("d must be at least 2")
    return u * u / (2.0 * d) + (1.0 - d) / d * math.log(u) + (d + 1.0) / (2.0 * d) * math.log(2 * math.pi)


def mu_scaling(u, d=2):
    """mu(u) = (2pi)^{(d+1)/(2d)} u^{(1-d)/d} exp(u^2/(2d))."""
    if u <= 0:
        raise ValueError("u must be positive")
    if d < 2:
        raise ValueError("d must be at least 2")
    return (2 * math.pi) ** ((d + 1.0) / (2.0 * d)) * u ** ((1.0 - d) / d) * math.exp(u * u / (2.0 * d))


@dataclass(frozen=True)
class IntensityReport:
    """Leading-order density of maxima above ``u`` per unit physical volume.

    ``relative_correction`` records that the neglected factor is
    1 + O(1/u) with an unknown constant.
    """

    u: float
    d: int
    density: float
    det_lambda: float
    relative_correction: str = "1 + O(1/u), constant unknown"

    def to_dict(self):
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        return out


def expected_maxima_density(kernel, u):
    """det(Lambda)^{1/2} u^{d-1} e^{-u^2/2} / (2pi)^{(d+1)/2}."""
    if u <= 0:
        raise ValueError("u must be positive")
    d = kernel.dimension
    det = float(np.linalg.det(kernel.lambda_mat))
    if not det > 1e-14:
        raise ValueError("Lambda is singular: the gradient law is degenerate")
    dens = math.sqrt(det) * u ** (d - 1) * math.exp(-0.5 * u * u) / (2 * math.pi) ** ((d + 1) / 2.0)
    return IntensityReport(float(u), d, dens, det)


def expected_count(kernel, u, volume):
    return expected_maxima_density(kernel, u).density * float(volume)


def cluster_radius(u):
    """tau(u) = u^{3/2} e^{-u^2/4}."""
    if u <= 0:
        raise ValueError("u must be positive")
    return u**1.5 * math.exp(-0.25 * u * u)


# ---------------------------------------------------------------------------
# Kac-Rice integrands
# ---------------------------------------------------------------------------

def _det_sym(v, d):
    """Determinant of symmetric matrices given in vech order (d = 2 fast path)."""
    if d == 2:
        return v[:, 0] * v[:, 1] - v[:, 2] ** 2
    from .kernels import unvech
    return np.linalg.det(unvech(v, d))


def _conditioned_draws(C, pin, free, n, rng):
    """Draws of the ``free`` coordinates of N(0, C) given the ``pin`` ones = 0.

    Returns (samples (n, len(free)), log density of the pinned block at 0).
    """
    Cpp = C[np.ix_(pin, pin)]
    Cfp = C[np.ix_(free, pin)]
    Cff = C[np.ix_(free, free)]
    cond = np.linalg.cond(Cpp)
    if cond > 1e8:
        raise ValueError(
            f"gradient-pin covariance has condition number {cond:.3g} > 1e8; the "
            "points are too close for the plain two-point integrand (divided "
            "differences would be needed)"
        )
    K = np.linalg.solve(Cpp, Cfp.T).T
    Cc = Cff - K @ Cfp.T
    Cc = 0.5 * (Cc + Cc.T)
    w, V = np.linalg.eigh(Cc)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    z = rng.standard_normal((n, len(free)))
    sign, logdet = np.linalg.slogdet(Cpp)
    logpsi = -0.5 * len(pin) * math.log(2 * math.pi) - 0.5 * logdet
    return z @ root.T, logpsi


def single_point_integrand_mc(kernel, u, n_samples, seed):
    """E[|det Hess f| 1[f >= u] | grad f = 0] psi(0), i.e. the Kac-Rice
    density of critical points above u (all indices).

    Returns (estimate, standard error).
    """
    d = kernel.dimension
    C = kernel.sigma_joint
    pin = list(range(1, d + 1))
    free = [0] + list(range(d + 1, C.shape[0]))
    X, logpsi = _conditioned_draws(C, pin, free, n_samples, stream(seed))
    vals = np.abs(_det_sym(X[:, 1:], d)) * (X[:, 0] >= u)
    psi = math.exp(logpsi)
    return float(vals.mean() * psi), float(vals.std(ddof=1) / math.sqrt(n_samples) * psi)


def cluster_integrand_mc(kernel, u, x, n_samples, seed):
    """Monte Carlo estimate of the two-point Kac-Rice integrand

        E[|det H(0)| |det H(x)| 1[f(0) >= u, f(x) >= u] | grad f(0) = grad f(x) = 0]
        * psi_x(0, 0)

    where psi_x is the density of (grad f(0), grad f(x)).  Returns
    (estimate, standard error).
    """
    d = kernel.dimension
    x = np.asarray(x, dtype=float).reshape(d)
    if not np.linalg.norm(x) > 0:
        raise ValueError("the two-point integrand is degenerate at x = 0")
    C = two_point_covariance(kernel, np.stack([np.zeros(d), x]))
    n = len(jet_indices(d))
    pin = [k for k in range(1, d + 1)] + [n + k for k in range(1, d + 1)]
    free = [0] + list(range(d + 1, n)) + [n] + list(range(n + d + 1, 2 * n))
    X, logpsi = _conditioned_draws(C, pin, free, n_samples, stream(seed))
    m = n - d  # free coordinates per point
    f0, H0 = X[:, 0], X[:, 1:m]
    f1, H1 = X[:, m], X[:, m + 1 :]
    vals = np.abs(_det_sym(H0, d) * _det_sym(H1, d)) * (f0 >= u) * (f1 >= u)
    psi = math.exp(logpsi)
    return float(vals.mean() * psi), float(vals.std(ddof=1) / math.sqrt(n_samples) * psi)


# ---------------------------------------------------------------------------
# comparison inequality
# ---------------------------------------------------------------------------

def bivariate_normal_density(x, y, r):
    """Standard bivariate normal density with correlation r."""
    s = 1.0 - r * r
    return math.exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)) / (2.0 * math.pi * math.sqrt(s))


def berman_bound(cov0, cov1, levels, tol=1e-10):
    """Comparison bound for Gaussian vectors with equal variances.

    For B generated by threshold events at the per-coordinate ``levels``,

        |P0(B) - P1(B)| <= 2 sum_{k>l} |r0(k,l) - r1(k,l)|
                           sum_{i,j} int_0^1 phi(u_i(k), u_j(l); r_h(k,l)) dh,

    with r_h = h r1 + (1 - h) r0 and phi the standard bivariate normal
    density.  Non-unit (equal) variances are handled by standardising both
    the covariances and the levels.  The h-integral uses adaptive
    Gauss-Kronrod quadrature (QUADPACK) with absolute tolerance ``tol``.

    Parameters
    ----------
    cov0, cov1 : array (n, n)
    levels : sequence of length n
        ``levels[k]`` is a scalar or a sequence of thresholds for coordinate k.
    """
    C0 = np.asarray(cov0, dtype=float)
    C1 = np.asarray(cov1, dtype=float)
    if C0.shape != C1.shape or C0.ndim != 2 or C0.shape[0] != C0.shape[1]:
        raise ValueError("cov0 and cov1 must be square matrices of the same size")
    n = C0.shape[0]
    if len(levels) != n:
        raise ValueError("need one level set per coordinate")
    d0, d1 = np.diag(C0), np.diag(C1)
    if not np.allclose(d0, d1, rtol=1e-12, atol=1e-14):
        raise ValueError("diagonals differ: the comparison theorem needs equal variances")
    if np.any(d0 <= 0):
        raise ValueError("variances must be positive")
    s = np.sqrt(d0)
    R0 = C0 / np.outer(s, s)
    R1 = C1 / np.outer(s, s)
    lev = [np.atleast_1d(np.asarray(levels[k], dtype=float)) / s[k] for k in range(n)]
    total = 0.0
    for k in range(n):
        for l in range(k):
            r0, r1 = R0[k, l], R1[k, l]
            if r0 == r1:
                continue
            if abs(r0) >= 1 or abs(r1) >= 1:
                raise ValueError("off-diagonal correlations must lie strictly inside (-1, 1)")
            acc = 0.0
            for a in lev[k]:
                for b in lev[l]:
                    val, _ = integrate.quad(
                        lambda h: bivariate_normal_density(a, b, h * r1 + (1 - h) * r0),
                        0.0, 1.0, epsabs=tol, epsrel=tol, limit=200,
                    )
                    acc += val
            total += abs(r0 - r1) * acc
    return 2.0 * total


# ---------------------------------------------------------------------------
# expected maximum
# ---------------------------------------------------------------------------

def expected_max_level(kernel, R, tol=1e-10):
    """Largest l with R^d det(Lambda)^{1/2} / (2pi)^{d-1} l^{d-1} e^{-l^2/2} = 1.

    Solved in the log domain by Brent's method on
    [sqrt(d log R), 4 sqrt(d log R)].
    """
    d = kernel.dimension
    if R <= 1:
        raise ValueError("R must exceed 1")
    det = float(np.linalg.det(kernel.lambda_mat))
    logc = d * math.log(R) + 0.5 * math.log(det) - (d - 1) * math.log(2 * math.pi)

    def g(l):
        return logc + (d - 1) * math.log(l) - 0.5 * l * l

    lo = math.sqrt(d * math.log(R))
    hi = 4.0 * lo
    if not (g(lo) > 0 > g(hi)):
        raise ValueError(f"no root of the expected-maximum equation in [{lo:.4g}, {hi:.4g}]")
    return optimize.brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
