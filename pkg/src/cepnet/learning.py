"""Unsupervised training of the 2K unfolded-network scalars.

The loss is the dataset-average MUI on a dB scale,

    L = 10 * log10( (1 / (Ns * Nu)) * sum_i ||H_i x_i - s_i||^2 ),

with x_i the network output for sample i. Two gradient paths exist:

* ``grad_params_fd`` -- central finite differences over the 2K scalars,
  the slow reference path (numpy forward only);
* ``grad_params_autograd`` -- reverse-mode through a torch mirror of the
  forward pass, used by default in ``train``. A test gates the two
  against each other.

Trained parameters persist as a small CSV: header key,value lines
(format_version, K, x0_policy, seed) followed by K rows of
k,w_alpha,w_beta in %.17e notation.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import manifold, solvers
from .manifold import MuiObjective
from .solvers import CepnetParams, cepnet_forward, initial_point

logger = logging.getLogger(__name__)

PARAMS_FORMAT_VERSION = 1
W_ALPHA_INIT_RANGE = (3e-3, 2e-2)


class TrainingDivergedError(RuntimeError):
    """Training loss blew up past the divergence guard."""


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 2e-4
    batch_size: int = 400
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    fd_step: float = 1e-5
    seed: int = 0
    grad_method: str = "autograd"  # or "fd"
    x0_policy: str = "matched_filter"
    divergence_margin_db: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.adam_beta1 < 1.0 or not 0.0 < self.adam_beta2 < 1.0:
            raise ValueError("adam betas must be in (0, 1)")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.grad_method not in ("autograd", "fd"):
            raise ValueError(f"unknown grad_method {self.grad_method!r}")
        if self.x0_policy not in solvers.X0_POLICIES:
            raise ValueError(f"unknown x0 policy {self.x0_policy!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(m=np.zeros(n), v=np.zeros(n))


def _batch_x0(s, H, x0_policy, rng=None):
    obj = MuiObjective(H=H, s=s)
    return obj, initial_point(obj, rng=rng, policy=x0_policy)


def residual_energy_sum(params, s, H, x0):
    """sum_i ||H_i x_i - s_i||^2 over a batch."""
    obj = MuiObjective(H=H, s=s)
    x, _ = cepnet_forward(obj, x0, params, record_trace=False)
    return float(np.sum(obj.value(x)))


def loss_db(params, dataset, x0_policy="matched_filter", rng=None, x0=None):
    """Eq.-style dB loss of the unfolded network on a dataset or batch.

    A zero total residual returns -inf (documented sentinel), never NaN.
    `x0` overrides the policy with precomputed starting points (used for
    common-random-number gradient checks).
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty batch")
    if x0 is None:
        obj, x0 = _batch_x0(dataset.s, dataset.H, x0_policy, rng)
    total = residual_energy_sum(params, dataset.s, dataset.H, x0)
    mean = total / (n * dataset.nu)
    if mean == 0.0:
        return float("-inf")
    return 10.0 * np.log10(mean)


def grad_params_fd(params, dataset, cfg, x0=None):
    """Central finite differences of loss_db over the 2K scalars.

    The starting points x0 are computed once and reused for every
    perturbed evaluation (common random numbers), so the result is
    deterministic for fixed inputs.
    """
    if x0 is None:
        _, x0 = _batch_x0(dataset.s, dataset.H, cfg.x0_policy)
    theta = params.as_vector()
    h = cfg.fd_step
    grad = np.empty_like(theta)
    for j in range(len(theta)):
        tp = theta.copy()
        tp[j] += h
        lp = loss_db(CepnetParams.from_vector(tp), dataset, x0=x0)
        tp[j] -= 2 * h
        lm = loss_db(CepnetParams.from_vector(tp), dataset, x0=x0)
        grad[j] = (lp - lm) / (2 * h)
    return grad


# ---------------------------------------------------------------------------
# Torch mirror of the forward pass (reverse-mode gradient path)


def _torch():
    import torch

    return torch


def _cepnet_loss_torch(torch, H, s, x0, w_alpha, w_beta, nu):
    """Same recurrence as solvers.cepnet_forward, in torch complex128."""
    nt = x0.shape[-1]
    radius = 1.0 / np.sqrt(nt)
    x = x0
    d = None
    g_prev = None
    K = w_alpha.shape[0]
    for k in range(K):
        r = torch.einsum("bun,bn->bu", H, x) - s
        g_e = 2.0 * torch.einsum("bun,bu->bn", H.conj(), r)
        g = g_e - nt * torch.real(g_e * x.conj()) * x
        if k == 0:
            d_star = -g
        else:
            denom = torch.sum(torch.real(g_prev.conj() * g_prev), dim=-1)
            g_tr = g_prev - nt * torch.real(g_prev * x.conj()) * x
            num = torch.sum(torch.real(g.conj() * (g - g_tr)), dim=-1)
            guard = denom < solvers.BETA_DENOM_GUARD
            beta = torch.where(guard, torch.zeros_like(num), num / torch.where(guard, torch.ones_like(denom), denom))
            d_tr = d - nt * torch.real(d * x.conj()) * x
            d_star = -g + (w_beta[k] * beta).unsqueeze(-1) * d_tr
        y = x + w_alpha[k] * d_star
        mag = torch.abs(y)
        tiny = mag < manifold.PHASE_KEEP_THRESHOLD
        unit = torch.where(tiny, x * np.sqrt(nt), y / torch.where(tiny, torch.ones_like(mag), mag).to(y.dtype))
        x = unit * radius
        d = d_star
        g_prev = g
    r = torch.einsum("bun,bn->bu", H, x) - s
    total = torch.sum(torch.abs(r) ** 2)
    n = H.shape[0]
    return 10.0 * torch.log10(total / (n * nu))


def grad_params_autograd(params, dataset, x0=None, x0_policy="matched_filter"):
    """Reverse-mode gradient of loss_db w.r.t. [w_alpha, w_beta].

    Returns (grad, loss_db_value). Runs on CPU in double precision.
    """
    torch = _torch()
    if x0 is None:
        _, x0 = _batch_x0(dataset.s, dataset.H, x0_policy)
    H = torch.from_numpy(np.ascontiguousarray(dataset.H))
    s = torch.from_numpy(np.ascontiguousarray(dataset.s))
    x0_t = torch.from_numpy(np.ascontiguousarray(x0))
    w_alpha = torch.tensor(params.w_alpha, dtype=torch.float64, requires_grad=True)
    w_beta = torch.tensor(params.w_beta, dtype=torch.float64, requires_grad=True)
    loss = _cepnet_loss_torch(torch, H, s, x0_t, w_alpha, w_beta, dataset.nu)
    loss.backward()
    grad = np.concatenate([w_alpha.grad.numpy(), w_beta.grad.numpy()])
    return grad, float(loss.item())


# ---------------------------------------------------------------------------
# Adam and the training loop


def init_params(K, rng):
    """Paper-style initialization: w_alpha ~ U[3e-3, 2e-2], w_beta = 1."""
    lo, hi = W_ALPHA_INIT_RANGE
    return CepnetParams(
        w_alpha=rng.uniform(lo, hi, (K,)),
        w_beta=np.ones(K),
    )


def adam_update(state, params, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step; returns (new_state, new_params).

    A non-finite gradient rejects the update: the step counter does not
    advance and the incident is logged.
    """
    grad = np.asarray(grad, dtype=np.float64)
    theta = params.as_vector()
    if grad.shape != theta.shape:
        raise ValueError(f"gradient length {grad.shape} != parameter count {theta.shape}")
    if not np.all(np.isfinite(grad)):
        logger.warning("adam_update: non-finite gradient, update rejected")
        return state, params
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, t=t), CepnetParams.from_vector(theta)


def _subset(dataset, idx):
    from .channel import Dataset

    return Dataset(s=dataset.s[idx], H=dataset.H[idx], role=dataset.role)


def train(train_set, val_set, K, cfg, initial=None):
    """Minibatch Adam training with best-validation-loss selection.

    Returns (params, history); history is a list of per-epoch dicts with
    the mean minibatch loss, the end-of-epoch full-train loss, the
    validation loss, and the best validation loss so far. Aborts with
    TrainingDivergedError if the train loss rises more than
    ``divergence_margin_db`` above its initial value. Pass `initial` to
    resume from previously saved parameters instead of reinitializing.
    """
    from .numerics import SeededRng

    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("datasets must be nonempty")
    if cfg.batch_size > len(train_set):
        raise ValueError("batch_size exceeds training-set size")
    rng = SeededRng(cfg.seed)
    if initial is not None and initial.K != K:
        raise ValueError(f"resume parameters have K={initial.K}, expected {K}")
    params = initial.copy() if initial is not None else init_params(K, rng)
    state = AdamState.zeros(2 * K)
    # fixed per-sample starting points for the whole run (for the random
    # policy this is a deterministic draw from a spawned child stream, so
    # resuming reproduces the same points regardless of other rng use)
    x0_rng = SeededRng(cfg.seed).spawn(1)[0] if cfg.x0_policy == "random_phase" else None
    _, x0_train = _batch_x0(train_set.s, train_set.H, cfg.x0_policy, x0_rng)
    _, x0_val = _batch_x0(val_set.s, val_set.H, cfg.x0_policy, x0_rng)
    initial_train = loss_db(params, train_set, x0=x0_train)
    best_val = loss_db(params, val_set, x0=x0_val)
    best_params = params.copy()
    history = []
    n = len(train_set)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            batch = _subset(train_set, idx)
            batch_x0 = x0_train[idx]
            if cfg.grad_method == "autograd":
                grad, batch_loss = grad_params_autograd(params, batch, x0=batch_x0)
            else:
                batch_loss = loss_db(params, batch, x0=batch_x0)
                grad = grad_params_fd(params, batch, cfg, x0=batch_x0)
            state, params = adam_update(
                state, params, grad, cfg.learning_rate,
                cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
            )
            batch_losses.append(batch_loss)
        train_loss = loss_db(params, train_set, x0=x0_train)
        val_loss = loss_db(params, val_set, x0=x0_val)
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
        history.append(
            {
                "epoch": epoch,
                "batch_loss_mean": float(np.mean(batch_losses)),
                "train_loss": train_loss,
                "val_loss": val_loss,
                "best_val_loss": best_val,
            }
        )
        if train_loss > initial_train + cfg.divergence_margin_db:
            raise TrainingDivergedError(
                f"train loss {train_loss:.2f} dB exceeded initial "
                f"{initial_train:.2f} dB by more than {cfg.divergence_margin_db} dB "
                f"at epoch {epoch}"
            )
    return best_params, history


# ---------------------------------------------------------------------------
# Parameter persistence


def save_params(path, params, x0_policy="matched_filter", seed=0):
    with open(path, "w") as f:
        f.write("key,value\n")
        f.write(f"format_version,{PARAMS_FORMAT_VERSION}\n")
        f.write(f"K,{params.K}\n")
        f.write(f"x0_policy,{x0_policy}\n")
        f.write(f"seed,{seed}\n")
        f.write("k,w_alpha,w_beta\n")
        for k in range(params.K):
            f.write(f"{k},{params.w_alpha[k]:.17e},{params.w_beta[k]:.17e}\n")


def load_params(path):
    """Returns (CepnetParams, meta dict with K/x0_policy/seed)."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if lines[0] != "key,value":
        raise ValueError(f"{path}: not a parameter file")
    meta = {}
    i = 1
    while i < len(lines) and lines[i] != "k,w_alpha,w_beta":
        key, value = lines[i].split(",", 1)
        meta[key] = value
        i += 1
    if int(meta.get("format_version", -1)) != PARAMS_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version")
    K = int(meta["K"])
    rows = [ln.split(",") for ln in lines[i + 1 :]]
    if len(rows) != K:
        raise ValueError(f"{path}: expected {K} parameter rows, found {len(rows)}")
    w_alpha = np.array([float(r[1]) for r in rows])
    w_beta = np.array([float(r[2]) for r in rows])
    meta["K"] = K
    meta["seed"] = int(meta.get("seed", 0))
    return CepnetParams(w_alpha=w_alpha, w_beta=w_beta), meta


def save_history(path, history):
    with open(path, "w") as f:
        f.write("epoch,batch_loss_mean,train_loss,val_loss,best_val_loss\n")
        for row in history:
            f.write(
                f"{row['epoch']},{row['batch_loss_mean']:.10e},"
                f"{row['train_loss']:.10e},{row['val_loss']:.10e},"
                f"{row['best_val_loss']:.10e}\n"
            )
