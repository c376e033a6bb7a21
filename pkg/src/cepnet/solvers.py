"""Constant-envelope precoders.

Three solvers share one iteration skeleton:

* ``rmo_cg``  -- Riemannian conjugate gradient with Polak-Ribiere mixing
  and Armijo backtracking line search.
* ``rmo_gd``  -- the same loop with the mixing weight forced to zero
  (projected Riemannian steepest descent baseline).
* ``cepnet_forward`` -- the unfolded variant: K fixed units, a learned
  step size w_alpha[k] replacing the line search and a learned scalar
  w_beta[k] multiplying the Polak-Ribiere weight.

Inner products are the real part of the Hermitian form, Re{a^H b}, so
the mixing weight beta is always real. When ||grad at the previous
iterate||^2 falls below BETA_DENOM_GUARD, beta is forced to 0 (a
steepest-descent restart); the Polak-Ribiere quotient is undefined at
stationary points.
"""

from dataclasses import dataclass, field

import numpy as np

from . import manifold
from .manifold import MuiObjective, project_to_tangent, retract

BETA_DENOM_GUARD = 1e-20

X0_POLICIES = ("matched_filter", "random_phase")


@dataclass
class ArmijoConfig:
    c1: float = 1e-4
    alpha_init: float = 0.1
    tau: float = 0.5
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError(f"c1 must be in (0, 1), got {self.c1}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.alpha_init <= 0.0:
            raise ValueError("alpha_init must be positive")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")


@dataclass
class CepnetParams:
    """The 2K trainable scalars of the unfolded network."""

    w_alpha: np.ndarray  # (K,) step sizes
    w_beta: np.ndarray  # (K,) direction weights

    def __post_init__(self):
        self.w_alpha = np.asarray(self.w_alpha, dtype=np.float64)
        self.w_beta = np.asarray(self.w_beta, dtype=np.float64)
        if self.w_alpha.shape != self.w_beta.shape or self.w_alpha.ndim != 1:
            raise ValueError("w_alpha and w_beta must be 1-d arrays of equal length")

    @property
    def K(self):
        return self.w_alpha.shape[0]

    def as_vector(self):
        """Flat [w_alpha..., w_beta...] view used by the trainer."""
        return np.concatenate([self.w_alpha, self.w_beta])

    @classmethod
    def from_vector(cls, vec):
        k = len(vec) // 2
        return cls(w_alpha=np.array(vec[:k]), w_beta=np.array(vec[k:]))

    def copy(self):
        return CepnetParams(self.w_alpha.copy(), self.w_beta.copy())


@dataclass
class SolverTrace:
    """Per-iteration bookkeeping; the basis of the complexity comparison."""

    mui_value: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_size: np.ndarray = field(default_factory=lambda: np.empty(0))
    beta: np.ndarray = field(default_factory=lambda: np.empty(0))
    objective_evals: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    truncated: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    grad_evals: int = 0
    points: list | None = None
    directions: list | None = None

    @property
    def total_objective_evals(self):
        return int(np.sum(self.objective_evals))


@dataclass
class ArmijoResult:
    alpha: float
    evals: int
    truncated: bool
    x_new: np.ndarray
    f_new: float


def initial_point(obj, rng=None, policy="matched_filter"):
    """Starting point on the manifold.

    matched_filter: per-antenna phase of H^H s (entries that are exactly
    zero fall back to phase 0). random_phase: uniform phases from `rng`.
    Broadcasts over leading batch dimensions of obj.H / obj.s.
    """
    if policy == "matched_filter":
        p = np.einsum("...un,...u->...n", np.conj(obj.H), obj.s)
        mag = np.abs(p)
        zero = mag == 0.0
        unit = np.where(zero, 1.0 + 0j, p / np.where(zero, 1.0, mag))
        return unit * manifold.circle_radius(obj.nt)
    if policy == "random_phase":
        if rng is None:
            raise ValueError("random_phase policy needs an rng")
        batch_shape = np.broadcast_shapes(obj.H.shape[:-2], obj.s.shape[:-1])
        return manifold.random_point(obj.nt, rng, batch_shape)
    raise ValueError(f"unknown x0 policy {policy!r}")


def armijo_step(obj, x, d, g, cfg):
    """Backtracking line search along d from x.

    Tries alpha in {alpha_init * tau^m, m = 0..max_backtracks} and
    accepts the first satisfying the sufficient-decrease condition

        f(Retr_x(alpha d)) - f(x) <= c1 * alpha * Re{g^H d}.

    If none satisfies, returns the smallest alpha tried with
    ``truncated=True``. `evals` counts candidate objective evaluations
    (the baseline f(x) is not counted).
    """
    f_x = float(obj.value(x))
    slope = float(np.real(np.vdot(g, d)))
    alpha = cfg.alpha_init
    evals = 0
    last = None
    for _ in range(cfg.max_backtracks + 1):
        x_new = retract(x, alpha * d)
        f_new = float(obj.value(x_new))
        evals += 1
        if f_new - f_x <= cfg.c1 * alpha * slope:
            return ArmijoResult(alpha, evals, False, x_new, f_new)
        last = (alpha, x_new, f_new)
        alpha *= cfg.tau
    alpha, x_new, f_new = last
    return ArmijoResult(alpha, evals, True, x_new, f_new)


def _real_inner(a, b):
    return float(np.real(np.vdot(a, b)))


def _rmo_descent(obj, x0, K, cfg, conjugate, record_points=False):
    """Shared loop for rmo_cg (conjugate=True) and rmo_gd."""
    if K < 1:
        raise ValueError("K must be >= 1")
    x = np.asarray(x0, dtype=np.complex128)
    g = obj.riemannian_grad(x)
    d = -g
    grad_evals = 1
    trace = SolverTrace(
        mui_value=np.empty(K),
        step_size=np.empty(K),
        beta=np.empty(K),
        objective_evals=np.empty(K, dtype=int),
        truncated=np.empty(K, dtype=bool),
        points=[] if record_points else None,
        directions=[] if record_points else None,
    )
    for k in range(K):
        if record_points:
            trace.directions.append(d.copy())
        res = armijo_step(obj, x, d, g, cfg)
        x_new = res.x_new
        g_new = obj.riemannian_grad(x_new)
        grad_evals += 1
        if conjugate:
            denom = _real_inner(g, g)
            if denom < BETA_DENOM_GUARD:
                beta = 0.0
            else:
                g_transported = project_to_tangent(x_new, g)
                beta = _real_inner(g_new, g_new - g_transported) / denom
            d = -g_new + beta * project_to_tangent(x_new, d)
        else:
            beta = 0.0
            d = -g_new
        trace.mui_value[k] = res.f_new
        trace.step_size[k] = res.alpha
        trace.beta[k] = beta
        trace.objective_evals[k] = res.evals
        trace.truncated[k] = res.truncated
        if record_points:
            trace.points.append(x_new.copy())
        x, g = x_new, g_new
    trace.grad_evals = grad_evals
    return x, trace


def rmo_cg(obj, x0, K, cfg=None, record_points=False):
    """K iterations of Riemannian conjugate gradient with Armijo search."""
    return _rmo_descent(obj, x0, K, cfg or ArmijoConfig(), True, record_points)


def rmo_gd(obj, x0, K, cfg=None, record_points=False):
    """Projected Riemannian steepest descent (the beta == 0 ablation)."""
    return _rmo_descent(obj, x0, K, cfg or ArmijoConfig(), False, record_points)


def cepnet_forward(obj, x0, params, record_trace=True, record_points=False):
    """Run the K unfolded units. No line search is performed.

    Unit k computes the Riemannian gradient at x_k, the transported
    previous direction, the (guarded) Polak-Ribiere weight beta_k, the
    direction -grad + w_beta[k] * beta_k * Proj d_{k-1}, and retracts a
    step of size w_alpha[k] along it. Fully batched: obj and x0 may carry
    leading batch dimensions.
    """
    K = params.K
    x = np.asarray(x0, dtype=np.complex128)
    batch_shape = x.shape[:-1]
    trace = None
    if record_trace:
        trace = SolverTrace(
            mui_value=np.empty((K,) + batch_shape),
            step_size=np.empty(K),
            beta=np.empty((K,) + batch_shape),
            objective_evals=np.zeros(K, dtype=int),
            truncated=np.zeros(K, dtype=bool),
            points=[] if record_points else None,
            directions=[] if record_points else None,
        )
    d = None
    g_prev = None
    for k in range(K):
        g = obj.riemannian_grad(x)
        if k == 0:
            beta = np.zeros(batch_shape) if batch_shape else 0.0
            d_star = -g
        else:
            denom = np.sum(np.real(np.conj(g_prev) * g_prev), axis=-1)
            g_transported = project_to_tangent(x, g_prev)
            num = np.sum(np.real(np.conj(g) * (g - g_transported)), axis=-1)
            denom_safe = np.where(denom < BETA_DENOM_GUARD, 1.0, denom)
            beta = np.where(denom < BETA_DENOM_GUARD, 0.0, num / denom_safe)
            weighted = (params.w_beta[k] * beta)[..., None]
            d_star = -g + weighted * project_to_tangent(x, d)
        if record_trace and record_points:
            trace.directions.append(d_star.copy())
        x = retract(x, params.w_alpha[k] * d_star)
        d = d_star
        g_prev = g
        if record_trace:
            trace.mui_value[k] = obj.value(x)
            trace.step_size[k] = params.w_alpha[k]
            trace.beta[k] = beta
            if record_points:
                trace.points.append(x.copy())
    if record_trace:
        trace.grad_evals = K
        return x, trace
    return x, None
