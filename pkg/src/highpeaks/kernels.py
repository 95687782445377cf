"""
Stationary covariance kernels and the Gaussian moment structure of the 2-jet.

A kernel is a function r with r(x - y) = E[f(x) f(y)].  Every family here
carries its partial derivatives up to order 4 as exact closed forms, because
the Kac-Rice and Palm formulas downstream are assembled from them.

Multi-indices are exponent tuples: ``(4, 0)`` means d^4/dx1^4 and ``(1, 1)``
means d^2/dx1 dx2.  The 2-jet (f, grad f, vech Hess f) is ordered as

    f, d_1 f, ..., d_d f, d_11 f, ..., d_dd f, d_ij f (i < j, row major)
"""

from enum import Enum
from functools import cached_property, lru_cache
from itertools import combinations

import numpy as np
from scipy import special

from .bessel import jn_scaled

__all__ = [
    "KernelError",
    "KernelFamily",
    "KernelModel",
    "bargmann_fock",
    "random_plane_wave",
    "monochromatic_sphere",
    "custom_spectral",
    "kernel_from_id",
    "kernel_eval",
    "joint_moment_matrix",
    "jet_indices",
    "hessian_indices",
    "vech",
    "unvech",
    "MAX_ORDER",
]

MAX_ORDER = 4


class KernelError(ValueError):
    """Raised for unsupported derivative requests or malformed kernels."""


class KernelFamily(str, Enum):
    BARGMANN_FOCK = "bargmann-fock"
    RANDOM_PLANE_WAVE = "random-plane-wave"
    MONOCHROMATIC_SPHERE = "monochromatic-sphere"
    CUSTOM_SPECTRAL = "custom-spectral"


# ---------------------------------------------------------------------------
# multi-index helpers
# ---------------------------------------------------------------------------

def normalize_alpha(alpha, d):
    """Return ``alpha`` as a length-``d`` exponent tuple."""
    if isinstance(alpha, (int, np.integer)) and int(alpha) == 0:
        return (0,) * d
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d:
        raise KernelError(f"multi-index {alpha} has length {len(alpha)}, expected {d}")
    if any(a < 0 for a in alpha):
        raise KernelError(f"multi-index {alpha} has a negative entry")
    if sum(alpha) > MAX_ORDER:
        raise KernelError(
            f"derivative order {sum(alpha)} exceeds the supported maximum {MAX_ORDER}"
        )
    return alpha


def hessian_indices(d):
    """Coordinate pairs in vech order: diagonal first, then i < j."""
    return [(i, i) for i in range(d)] + list(combinations(range(d), 2))


def jet_indices(d):
    """Exponent multi-indices of (f, grad f, vech Hess f)."""
    out = [(0,) * d]
    for i in range(d):
        e = [0] * d
        e[i] = 1
        out.append(tuple(e))
    for i, j in hessian_indices(d):
        e = [0] * d
        e[i] += 1
        e[j] += 1
        out.append(tuple(e))
    return out


def vech(H):
    """Stack a symmetric matrix (..., d, d) in jet order."""
    H = np.asarray(H)
    d = H.shape[-1]
    return np.stack([H[..., i, j] for i, j in hessian_indices(d)], axis=-1)


def unvech(v, d):
    """Inverse of :func:`vech`."""
    v = np.asarray(v)
    H = np.empty(v.shape[:-1] + (d, d), dtype=v.dtype)
    for k, (i, j) in enumerate(hessian_indices(d)):
        H[..., i, j] = v[..., k]
        H[..., j, i] = v[..., k]
    return H


# ---------------------------------------------------------------------------
# radial kernels r(x) = h(|x|^2)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _radial_terms(alpha):
    """Symbolic expansion of d^alpha h(|x|^2).

    Returns a tuple of ``(k, exponents, coeff)`` meaning
    coeff * h^(k)(|x|^2) * prod_i x_i^exponents[i].  Built by repeated use of
    d_i [h^(k) x^e] = 2 h^(k+1) x^(e + 1_i) + e_i h^(k) x^(e - 1_i).
    """
    d = len(alpha)
    terms = {(0, (0,) * d): 1}
    for i, a in enumerate(alpha):
        for _ in range(a):
            new = {}
            for (k, e), c in terms.items():
                up = list(e)
                up[i] += 1
                key = (k + 1, tuple(up))
                new[key] = new.get(key, 0) + 2 * c
                if e[i] > 0:
                    dn = list(e)
                    dn[i] -= 1
                    key = (k, tuple(dn))
                    new[key] = new.get(key, 0) + c * e[i]
            terms = new
    return tuple((k, e, c) for (k, e), c in sorted(terms.items()) if c != 0)


def _radial_derivative(hder, alpha):
    terms = _radial_terms(alpha)
    kmax = max(k for k, _, _ in terms)

    def f(x):
        x = np.asarray(x, dtype=float)
        q = np.sum(x * x, axis=-1)
        hk = [hder(k, q) for k in range(kmax + 1)]
        out = np.zeros(q.shape)
        for k, e, c in terms:
            mono = c * hk[k]
            for i, p in enumerate(e):
                if p:
                    mono = mono * x[..., i] ** p
            out = out + mono
        return out

    return f


def _bf_hder(k, q):
    return (-0.5) ** k * np.exp(-0.5 * q)


def _sphere_hder(d):
    nu = 0.5 * d - 1.0
    pref = special.gamma(nu + 1.0) * 2.0**nu

    def hder(k, q):
        return pref * (-0.5) ** k * jn_scaled(nu + k, np.sqrt(q))

    return hder


# ---------------------------------------------------------------------------
# kernel model
# ---------------------------------------------------------------------------

class DerivTable:
    """Mapping alpha -> callable x -> d^alpha r(x), with |alpha| <= 4."""

    def __init__(self, d, radial=None, closures=None):
        self._d = d
        self._radial = radial
        self._closures = {}
        for a, fn in (closures or {}).items():
            self._closures[normalize_alpha(a, d)] = fn
        self._cache = {}

    def __getitem__(self, alpha):
        alpha = normalize_alpha(alpha, self._d)
        if alpha in self._cache:
            return self._cache[alpha]
        if self._radial is not None:
            fn = _radial_derivative(self._radial, alpha)
        elif alpha in self._closures:
            fn = self._closures[alpha]
        else:
            raise KernelError(f"no derivative closure registered for multi-index {alpha}")
        self._cache[alpha] = fn
        return fn

    def __contains__(self, alpha):
        try:
            self[alpha]
        except KernelError:
            return False
        return True


class KernelModel:
    """Stationary covariance kernel with derivatives up to order 4.

    Instances are immutable; the moment matrices are computed on first use
    and cached.

    Attributes
    ----------
    family : KernelFamily
    dimension : int
    deriv : DerivTable
        ``deriv[alpha](x)`` evaluates d^alpha r at points ``x`` of shape (..., d).
    params : dict
        Parameters used to rebuild the kernel from its id.
    """

    def __init__(self, family, dimension, deriv, params=None):
        if dimension < 2:
            raise KernelError("dimension must be at least 2")
        self.family = KernelFamily(family)
        self.dimension = int(dimension)
        self.deriv = deriv
        self.params = dict(params or {})

    def __setattr__(self, name, value):
        if name in self.__dict__:
            raise AttributeError("KernelModel is immutable")
        super().__setattr__(name, value)

    def __repr__(self):
        return f"KernelModel({self.family.value!r}, dimension={self.dimension})"

    @property
    def id(self):
        return self.family.value

    def __call__(self, x, alpha=0):
        return self.deriv[alpha](x)

    @cached_property
    def sigma_joint(self):
        S = joint_moment_matrix(self)
        S.setflags(write=False)
        return S

    @cached_property
    def lambda_mat(self):
        d = self.dimension
        L = np.array(self.sigma_joint[1 : d + 1, 1 : d + 1])
        L.setflags(write=False)
        return L

    @property
    def is_monochromatic(self):
        return self.family in (KernelFamily.RANDOM_PLANE_WAVE, KernelFamily.MONOCHROMATIC_SPHERE)

    def mean_gradient_norm(self):
        """Upper estimate sqrt(tr Lambda) of E||grad f||."""
        return float(np.sqrt(np.trace(self.lambda_mat)))


def bargmann_fock(dimension=2):
    """r(x) = exp(-|x|^2 / 2)."""
    d = int(dimension)
    return KernelModel(
        KernelFamily.BARGMANN_FOCK, d, DerivTable(d, radial=_bf_hder), {"dimension": d}
    )


def random_plane_wave():
    """r(x) = J_0(|x|) in the plane."""
    return KernelModel(
        KernelFamily.RANDOM_PLANE_WAVE, 2, DerivTable(2, radial=_sphere_hder(2)), {"dimension": 2}
    )


def monochromatic_sphere(dimension):
    """Spectral measure uniform on the unit sphere S^{d-1}.

    r(x) = Gamma(d/2) (2/|x|)^{d/2-1} J_{d/2-1}(|x|); for d = 2 this is the
    random plane wave and for d = 3 it is sin|x| / |x|.
    """
    d = int(dimension)
    return KernelModel(
        KernelFamily.MONOCHROMATIC_SPHERE, d, DerivTable(d, radial=_sphere_hder(d)), {"dimension": d}
    )


def custom_spectral(dimension, closures, name=None):
    """Kernel defined by explicitly registered derivative closures.

    Parameters
    ----------
    dimension : int
    closures : dict
        Maps exponent multi-indices to vectorised callables.  At least the
        zero index must be present; missing entries raise on use.
    """
    d = int(dimension)
    table = DerivTable(d, closures=closures)
    if (0,) * d not in table:
        raise KernelError("a custom kernel must register the zero multi-index")
    return KernelModel(KernelFamily.CUSTOM_SPECTRAL, d, table, {"dimension": d, "name": name})


def kernel_from_id(kernel_id, **params):
    """Build a kernel from its config id, e.g. ``("bargmann-fock", dimension=2)``."""
    key = str(kernel_id).lower().replace("_", "-")
    if key in ("bargmann-fock", "bf"):
        return bargmann_fock(params.get("dimension", 2))
    if key in ("random-plane-wave", "rpw"):
        if params.get("dimension", 2) != 2:
            raise KernelError("random-plane-wave is planar; use monochromatic-sphere")
        return random_plane_wave()
    if key == "monochromatic-sphere":
        if "dimension" not in params:
            raise KernelError("monochromatic-sphere needs a dimension parameter")
        return monochromatic_sphere(params["dimension"])
    raise KernelError(f"unknown kernel id {kernel_id!r}")


def kernel_eval(kernel, x, alpha=0):
    """d^alpha r(x) for a single point or an array of points (..., d)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if x.shape[-1:] != (kernel.dimension,):
        raise ValueError(f"x must have trailing dimension {kernel.dimension}")
    out = kernel.deriv[alpha](x)
    return float(out) if np.ndim(out) == 0 else out


def joint_moment_matrix(kernel):
    """Covariance of (f(0), grad f(0), vech Hess f(0)).

    Cov(d^a f(0), d^b f(0)) = (-1)^{|b|} d^{a+b} r(0).
    """
    d = kernel.dimension
    idx = jet_indices(d)
    zero = np.zeros(d)
    n = len(idx)
    S = np.empty((n, n))
    for p, a in enumerate(idx):
        for q, b in enumerate(idx):
            ab = tuple(x + y for x, y in zip(a, b))
            S[p, q] = (-1) ** sum(b) * float(kernel.deriv[ab](zero))
    return 0.5 * (S + S.T)


def two_point_covariance(kernel, points):
    """Covariance of the stacked jets at several points.

    Parameters
    ----------
    points : array (m, d)

    Returns
    -------
    array (m*n, m*n) where n is the jet length, blocks ordered by point.
    """
    d = kernel.dimension
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = jet_indices(d)
    n = len(idx)
    m = len(points)
    C = np.empty((m * n, m * n))
    for s in range(m):
        for t in range(m):
            lag = points[s] - points[t]
            for p, a in enumerate(idx):
                for q, b in enumerate(idx):
                    ab = tuple(x + y for x, y in zip(a, b))
                    C[s * n + p, t * n + q] = (-1) ** sum(b) * float(kernel.deriv[ab](lag))
    return 0.5 * (C + C.T)

