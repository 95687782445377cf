"""
Palm version of a field at a high local maximum, coupled to the field itself.

Given f with jet J = (f(0), grad f(0), vech Hess f(0)) at the origin, the
residual f_bar = f - E[f | J] is independent of J.  The Palm field

    f_tilde(x) = xi A(x) + Z . b(x) + f_bar(x)

has a local maximum of height xi at 0 with Hessian Z, where (xi, Z) is drawn
from q_u(t, Z) ~ det Z p(Z, t | grad = 0) on {Z < 0, t >= u}.  Sharing f_bar
makes f_tilde - f a finite combination of kernel derivatives, so the two
fields agree away from the origin at the kernel's decay rate.

Monochromatic kernels satisfy f = -tr Hess f, so (f, Hess f) is degenerate;
their branch regresses on (grad f(0), Hess f(0)) only and the height is
-tr Z.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .kernels import hessian_indices, jet_indices, unvech, vech
from .rng import derive_seed, stream
from .samplers import Evaluator, FieldRealization

__all__ = [
    "RegressionWeights",
    "QuDraw",
    "PalmPair",
    "FlowResult",
    "regression_weights",
    "conditional_cov",
    "sample_qu",
    "residualize",
    "palm_couple",
    "palm_couple_monochromatic",
    "flow_critical_points",
    "KernelShiftEvaluator",
]


def _block(kernel, monochromatic):
    """Indices into the jet of the variables regressed on."""
    d = kernel.dimension
    n = len(jet_indices(d))
    if monochromatic:
        return list(range(1, n))
    return list(range(n))


def _cross(kernel, points, alphas, beta_list):
    """Cov(d^alpha f(x), d^beta f(0)) = (-1)^{|beta|} d^{alpha+beta} r(x).

    Returns dict alpha -> array (P, len(beta_list)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = {}
    for a in alphas:
        cols = []
        for b in beta_list:
            ab = tuple(p + q for p, q in zip(a, b))
            cols.append((-1) ** sum(b) * kernel.deriv[ab](pts))
        out[tuple(a)] = np.stack(cols, axis=-1)
    return out


class KernelShiftEvaluator(Evaluator):
    """base(x) + sum_p w_p Cov(f(x), d^{beta_p} f(0)).

    ``base`` may be ``None`` (pure kernel combination).  Derivatives up to
    order 2 are available (the kernel table stops at order 4).
    """

    max_order = 2

    def __init__(self, base, kernel, betas, weights):
        self.base = base
        self.kernel = kernel
        self.betas = [tuple(b) for b in betas]
        self.weights = np.asarray(weights, dtype=float)

    def derivatives(self, points, alphas):
        alphas = [tuple(a) for a in alphas]
        if any(sum(a) > self.max_order for a in alphas):
            raise ValueError("derivatives above order 2 are not available here")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        X = _cross(self.kernel, pts, alphas, self.betas)
        out = {a: X[a] @ self.weights for a in alphas}
        if self.base is not None:
            B = self.base.derivatives(pts, alphas)
            for a in alphas:
                out[a] = out[a] + B[a]
        return out

    def grid(self, axes, alphas=((0, 0),)):
        alphas = [tuple(a) for a in alphas]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        out = {}
        for a in alphas:
            acc = np.zeros(X.shape)
            for w, b in zip(self.weights, self.betas):
                if w != 0.0:
                    ab = tuple(p + q for p, q in zip(a, b))
                    acc += w * (-1) ** sum(b) * self.kernel.deriv[ab](pts)
            out[a] = acc
        if self.base is not None:
            B = self.base.grid(axes, alphas)
            for a in alphas:
                out[a] = out[a] + B[a]
        return out


# ---------------------------------------------------------------------------
# regression weights and residual covariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionWeights:
    """(A(x), b(x)) = (r(x), S2(x)) M^{-1} with M the covariance of
    (f(0), vech Hess f(0)); for the monochromatic branch A = 0 and
    b(x) = S2(x) S22^{-1}."""

    kernel: object
    matrix: np.ndarray
    betas: tuple
    monochromatic: bool

    @property
    def n_basis(self):
        d = self.kernel.dimension
        return len(jet_indices(d)) - (1 if self.monochromatic else 0)

    def evaluate(self, x, alpha=(0, 0)):
        """Return (d^alpha A(x), d^alpha b(x)) for points (P, d)."""
        alpha = tuple(alpha)
        V = _cross(self.kernel, x, [alpha], self.betas)[alpha]
        W = V @ self.matrix
        if self.monochromatic:
            return np.zeros(W.shape[:-1]), W
        return W[..., 0], W[..., 1:]

    def A(self, x):
        return self.evaluate(np.atleast_2d(x))[0]

    def b(self, x):
        return self.evaluate(np.atleast_2d(x))[1]

    def shift_weights(self, xi, Z):
        """Weights on ``betas`` representing xi A + Z . b."""
        z = vech(np.asarray(Z, dtype=float))
        theta = z if self.monochromatic else np.concatenate([[xi], z])
        return self.matrix @ theta


def regression_weights(kernel, monochromatic=None):
    """Weights reproducing (f(0), Hess f(0)) from the kernel.

    Raises ``ValueError`` if the (f, Hess f) block is singular, which is the
    case for monochromatic kernels; pass ``monochromatic=True`` (or use
    :func:`palm_couple_monochromatic`) for those.
    """
    d = kernel.dimension
    if monochromatic is None:
        monochromatic = False
    idx = jet_indices(d)
    keep = list(range(d + 1, len(idx))) if monochromatic else [0] + list(range(d + 1, len(idx)))
    S = kernel.sigma_joint
    M = S[np.ix_(keep, keep)]
    w = np.linalg.eigvalsh(M)
    if w[0] <= 1e-12 * max(w[-1], 1.0):
        raise ValueError(
            "the (f, Hess f) covariance block is singular for this kernel; use the "
            "monochromatic branch (palm_couple_monochromatic)"
        )
    Minv = np.linalg.inv(M)
    return RegressionWeights(kernel, Minv, tuple(idx[k] for k in keep), bool(monochromatic))


def conditional_cov(kernel, x, y, monochromatic=None):
    """Covariance of the residual field f_bar at x and y.

    C(x, y) = r(x - y) - c(x)' Sigma_J^{-1} c(y), where c(x) = Cov(f(x), J)
    and J is the jet at 0 (without f(0) for monochromatic kernels).  For the
    non-degenerate case this splits into the (r, S2) and S1 terms because the
    gradient block is independent of (f, Hess f).
    """
    if monochromatic is None:
        monochromatic = kernel.is_monochromatic
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = kernel.dimension
    idx = jet_indices(d)
    keep = _block(kernel, monochromatic)
    betas = [idx[k] for k in keep]
    S = kernel.sigma_joint[np.ix_(keep, keep)]
    cx = _cross(kernel, x, [(0,) * d], betas)[(0,) * d]
    cy = _cross(kernel, y, [(0,) * d], betas)[(0,) * d]
    proj = np.einsum("pi,pi->p", cx, np.linalg.solve(S, cy.T).T)
    out = kernel.deriv[(0,) * d](x - y) - proj
    return out if out.size > 1 else float(out[0])


# ---------------------------------------------------------------------------
# q_u sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuDraw:
    xi: float
    Z: np.ndarray
    importance_weight_ess: float


def _truncated_tail(rng, u, scale, n):
    """N(0, scale^2) conditioned on >= u, by inverse CDF in the log domain."""
    logu = np.log(rng.random(n))
    logtail = special.log_ndtr(-u / scale)
    return -scale * special.ndtri_exp(logu + logtail)


def _neg_def_weight(Zv, d):
    if d == 2:
        det = Zv[:, 0] * Zv[:, 1] - Zv[:, 2] ** 2
        return np.where((Zv[:, 0] < 0) & (det > 0), det, 0.0)
    Z = unvech(Zv, d)
    eig = np.linalg.eigvalsh(Z)
    return np.where(np.all(eig < 0, axis=1), np.abs(np.prod(eig, axis=1)), 0.0)


def sample_qu(kernel, u, batch_size, seed, n_draws=None, return_stats=False):
    """Draws from q_u by self-normalised importance resampling.

    Proposal: t from the law of f(0) conditioned on t >= u, then Z given t
    by Gaussian regression (for monochromatic kernels t = -tr Z is the
    conditioned variable).  Weight det(Z) 1[Z < 0].  ``n_draws`` draws
    (default ``batch_size``) are resampled multinomially from the batch.

    Raises ``ValueError`` when the effective sample size is below 5 % of the
    batch.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    batch_size = int(batch_size)
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    n_draws = batch_size if n_draws is None else int(n_draws)
    d = kernel.dimension
    rng = stream(seed)
    S = kernel.sigma_joint
    hidx = list(range(d + 1, S.shape[0]))
    if kernel.is_monochromatic:
        S22 = S[np.ix_(hidx, hidx)]
        a = np.array([1.0] * d + [0.0] * (len(hidx) - d))
        s2 = float(a @ S22 @ a)
        t = _truncated_tail(rng, u, math.sqrt(s2), batch_size)
        root = np.linalg.cholesky(S22 + 1e-15 * np.eye(len(hidx)))
        Zp = rng.standard_normal((batch_size, len(hidx))) @ root.T
        tp = -(Zp @ a)
        k = -(S22 @ a) / s2
        Zv = Zp + np.outer(t - tp, k)
        xi = -(Zv @ a)
    else:
        keep = [0] + hidx
        M = S[np.ix_(keep, keep)]
        t = _truncated_tail(rng, u, math.sqrt(M[0, 0]), batch_size)
        root = np.linalg.cholesky(M)
        Wp = rng.standard_normal((batch_size, len(keep))) @ root.T
        k = M[1:, 0] / M[0, 0]
        Zv = Wp[:, 1:] + np.outer(t - Wp[:, 0], k)
        xi = t
    w = _neg_def_weight(Zv, d)
    total = w.sum()
    if not total > 0:
        raise ValueError("no proposal has a negative definite Hessian; enlarge the batch")
    ess = float(total**2 / np.sum(w * w))
    if ess < 0.05 * batch_size:
        raise ValueError(
            f"effective sample size {ess:.1f} is below 5% of the batch ({batch_size}); "
            "use a larger batch"
        )
    pick = rng.choice(batch_size, size=n_draws, replace=True, p=w / total)
    Z = unvech(Zv[pick], d)
    draws = [QuDraw(float(xi[i]), Z[j], ess) for j, i in enumerate(pick)]
    if return_stats:
        stats = {"ess": ess, "acceptance": float(np.mean(w > 0)), "batch_size": batch_size}
        return draws, stats
    return draws


# ---------------------------------------------------------------------------
# residual field and Palm coupling
# ---------------------------------------------------------------------------

def _require_evaluator(field):
    if getattr(field, "evaluator", None) is None:
        raise ValueError("an analytic evaluator is required (grid-only fields cannot be residualised)")
    if not field.domain.contains(np.zeros(field.dimension))[0]:
        raise ValueError("the field domain must contain the origin")


def _jet_at_origin(field):
    d = field.dimension
    idx = jet_indices(d)
    D = field.evaluator.derivatives(np.zeros((1, d)), idx)
    return np.array([D[a][0] for a in idx])


def residualize(field, monochromatic=None):
    """f_bar = f - Cov(f(.), J) Sigma_J^{-1} J as an evaluator.

    The returned evaluator has attribute ``jet`` holding J.
    """
    _require_evaluator(field)
    kernel = field.kernel
    if monochromatic is None:
        monochromatic = kernel.is_monochromatic
    d = kernel.dimension
    idx = jet_indices(d)
    keep = _block(kernel, monochromatic)
    J = _jet_at_origin(field)
    S = kernel.sigma_joint[np.ix_(keep, keep)]
    w = -np.linalg.solve(S, J[keep])
    ev = KernelShiftEvaluator(field.evaluator, kernel, [idx[k] for k in keep], w)
    ev.jet0 = J
    return ev


@dataclass(frozen=True)
class PalmPair:
    """Coupled pair (f, f_tilde) sharing the residual f_bar."""

    f: FieldRealization
    f_tilde: Evaluator
    draw: QuDraw
    shared_residual: Evaluator

    def tilde_field(self):
        """f_tilde wrapped as a FieldRealization on the domain of f."""
        return FieldRealization(
            kernel=self.f.kernel, seed=self.f.seed, domain=self.f.domain,
            evaluator=self.f_tilde, truncation=self.f.truncation,
            truncation_error_bound=self.f.truncation_error_bound,
            tolerance=self.f.tolerance, sampler=self.f.sampler + "+palm",
        )

    def difference(self, points):
        """f_tilde - f at ``points``."""
        return self.f_tilde.value(points) - self.f.evaluator.value(points)


def _couple(field, u, seed, draw, batch_size, monochromatic):
    _require_evaluator(field)
    kernel = field.kernel
    W = regression_weights(kernel, monochromatic=monochromatic)
    if draw is None:
        draw = sample_qu(kernel, u, batch_size, derive_seed(seed, 1), n_draws=1)[0]
    resid = residualize(field, monochromatic=monochromatic)
    d = kernel.dimension
    idx = jet_indices(d)
    keep = _block(kernel, monochromatic)
    # f_tilde = f + (resid shift) + (xi A + Z.b); both shifts live on the jet betas
    w = resid.weights.copy()
    shift = W.shift_weights(draw.xi, draw.Z)
    pos = {b: k for k, b in enumerate(idx[k] for k in keep)}
    for b, v in zip(W.betas, shift):
        w[pos[b]] += v
    ft = KernelShiftEvaluator(field.evaluator, kernel, resid.betas, w)
    return PalmPair(field, ft, draw, resid)


def palm_couple(field, u, seed, draw=None, batch_size=4096):
    """Palm field at a maximum of height >= u at 0, coupled to ``field``.

    Parameters
    ----------
    field : FieldRealization
        Series-backed field whose domain contains the origin.
    u : float
    seed : int
        Seeds the q_u draw when ``draw`` is not given.
    draw : QuDraw, optional
        Use a pre-drawn (xi, Z).
    """
    if field.kernel.is_monochromatic:
        raise ValueError("monochromatic kernel: use palm_couple_monochromatic")
    return _couple(field, u, seed, draw, batch_size, False)


def palm_couple_monochromatic(field, u, seed, draw=None, batch_size=4096):
    """Palm coupling for monochromatic kernels: f_tilde = Z S22^{-1} S2(x)' + f_bar,
    with height -tr Z >= u."""
    if not field.kernel.is_monochromatic:
        raise ValueError("palm_couple_monochromatic needs a monochromatic kernel")
    return _couple(field, u, seed, draw, batch_size, True)


# ---------------------------------------------------------------------------
# interpolation flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowResult:
    """Trajectory of a critical point of F_t = f + t (f_tilde - f).

    ``status`` is one of "completed", "degenerate", "exited" or
    "step-underflow".
    """

    times: np.ndarray
    points: np.ndarray
    grad_residuals: np.ndarray
    morse_indices: np.ndarray
    status: str

    @property
    def completed(self):
        return self.status == "completed"


def flow_critical_points(field_pair, point, domain=None, dt=0.05, dt_min=1e-7,
                         rtol=1e-8, det_tol=1e-8, grad_tol=1e-7, max_steps=100000):
    """Follow a critical point of f along dx/dt = -Hess(F_t)^{-1} grad h.

    Parameters
    ----------
    field_pair : PalmPair or (Evaluator, Evaluator)
        (f, f_tilde).
    point : CriticalPoint or array
        Non-degenerate critical point of f.
    domain : Box, optional
        Exiting it ends the flow with status "exited".

    Each accepted step (RK4 with step doubling for error control) is
    projected back onto grad F_t = 0 by Newton steps.
    """
    if isinstance(field_pair, PalmPair):
        f_ev, g_ev = field_pair.f.evaluator, field_pair.f_tilde
        if domain is None:
            domain = field_pair.f.domain
    else:
        f_ev, g_ev = field_pair
    x = np.asarray(getattr(point, "location", point), dtype=float).copy()

    def parts(x):
        _, gf, Hf = f_ev.jet(x[None])
        _, gg, Hg = g_ev.jet(x[None])
        return gf[0], Hf[0], gg[0] - gf[0], Hg[0] - Hf[0]

    def rhs(x, t):
        gf, Hf, gh, Hh = parts(x)
        return -np.linalg.solve(Hf + t * Hh, gh)

    def rk4(x, t, s):
        k1 = rhs(x, t)
        k2 = rhs(x + 0.5 * s * k1, t + 0.5 * s)
        k3 = rhs(x + 0.5 * s * k2, t + 0.5 * s)
        k4 = rhs(x + s * k3, t + s)
        return x + s / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def state(x, t):
        gf, Hf, gh, Hh = parts(x)
        return gf + t * gh, Hf + t * Hh

    g0, H0 = state(x, 0.0)
    times, pts = [0.0], [x.copy()]
    res = [float(np.linalg.norm(g0))]
    idx = [int(np.sum(np.linalg.eigvalsh(H0) < 0))]

    def finish(status):
        return FlowResult(np.array(times), np.array(pts), np.array(res), np.array(idx), status)

    if abs(np.linalg.det(H0)) < det_tol:
        return finish("degenerate")
    t = 0.0
    step = dt
    for _ in range(max_steps):
        if t >= 1.0:
            break
        step = min(step, 1.0 - t)
        try:
            full = rk4(x, t, step)
            half = rk4(rk4(x, t, 0.5 * step), t + 0.5 * step, 0.5 * step)
        except np.linalg.LinAlgError:
            return finish("degenerate")
        err = float(np.max(np.abs(full - half)))
        if err > rtol:
            step *= 0.5
            if step < dt_min:
                return finish("step-underflow")
            continue
        tn = t + step
        xn = half
        for _ in range(3):
            g, H = state(xn, tn)
            if np.linalg.norm(g) <= grad_tol * 1e-2:
                break
            xn = xn - np.linalg.solve(H, g)
        g, H = state(xn, tn)
        if np.linalg.norm(g) > grad_tol:
            step *= 0.5
            if step < dt_min:
                return finish("step-underflow")
            continue
        x, t = xn, tn
        times.append(t)
        pts.append(x.copy())
        res.append(float(np.linalg.norm(g)))
        idx.append(int(np.sum(np.linalg.eigvalsh(H) < 0)))
        if abs(np.linalg.det(H)) < det_tol:
            return finish("degenerate")
        if domain is not None and not domain.contains(x)[0]:
            return finish("exited")
        if err < 0.1 * rtol:
            step *= 1.5
    return finish("completed" if t >= 1.0 else "step-underflow")
