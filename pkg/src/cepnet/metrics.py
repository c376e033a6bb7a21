"""Desk-scale experiment metrics: average MUI, rate, BER, robustness,
and operation-count complexity.

SNR convention (stamped into every report): unit-average-energy symbols,
total transmit power 1, per-user noise variance sigma^2 = 10^(-SNR/10).
The rate metric is the SINR-surrogate

    rate_u = log2(1 + E|s_u|^2 / (E|(Hx)_u - s_u|^2 + sigma^2)),

treating the residual interference as Gaussian; it stands in for the
exact achievable-rate expression, which is out of scope here.

The 16-QAM receiver detects each user's observation by the nearest
constellation point (no equalization; the precoder already targets
Hx ~ s). Ties go to the lowest constellation index. Bits follow the
Gray mapping defined in `channel`.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from .manifold import MuiObjective
from .numerics import SeededRng
from .solvers import ArmijoConfig, cepnet_forward, initial_point, rmo_cg, rmo_gd

SNR_CONVENTION = "unit-energy symbols, Pt=1, sigma^2 = 10^(-SNR_dB/10)"
SOLVER_NAMES = ("rmo_cg", "rmo_gd", "cepnet")


def noise_variance(snr_db):
    return 10.0 ** (-snr_db / 10.0)


@dataclass
class Precoder:
    """A named solver bound to its configuration.

    solve(H, s) maps batched channel/symbol arrays to transmit vectors
    of shape (N, Nt) plus per-sample traces (a list for the iterative
    solvers, a single batched trace for cepnet).
    """

    name: str
    K: int = 20
    armijo: ArmijoConfig = field(default_factory=ArmijoConfig)
    params: object = None  # CepnetParams, cepnet only
    x0_policy: str = "matched_filter"
    x0_seed: int = 0

    def __post_init__(self):
        if self.name not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {self.name!r}")
        if self.name == "cepnet" and self.params is None:
            raise ValueError("cepnet precoder needs trained parameters")
        if self.name == "cepnet" and self.params.K != self.K:
            raise ValueError(
                f"parameter file has K={self.params.K} but configuration asks K={self.K}"
            )

    def _x0(self, obj, rng):
        return initial_point(obj, rng=rng, policy=self.x0_policy)

    def solve(self, H, s, record_points=False):
        rng = SeededRng(self.x0_seed)
        if self.name == "cepnet":
            obj = MuiObjective(H=H, s=s)
            x0 = self._x0(obj, rng)
            x, trace = cepnet_forward(
                obj, x0, self.params, record_points=record_points
            )
            return x, trace
        run = rmo_cg if self.name == "rmo_cg" else rmo_gd
        n = H.shape[0]
        X = np.empty((n, H.shape[-1]), dtype=np.complex128)
        traces = []
        streams = rng.spawn(n) if self.x0_policy == "random_phase" else [None] * n
        for i in range(n):
            obj = MuiObjective(H=H[i], s=s[i])
            x0 = initial_point(obj, rng=streams[i], policy=self.x0_policy)
            X[i], tr = run(obj, x0, self.K, self.armijo, record_points=record_points)
            traces.append(tr)
        return X, traces


@dataclass
class MetricReport:
    """Plot-ready result cells: one row per (solver, snr/eps, metric)."""

    rows: list = field(default_factory=list)
    header_note: str = SNR_CONVENTION

    COLUMNS = ("solver", "snr_db", "eps", "metric", "value", "ci", "n")

    def add(self, solver, metric, value, ci, n, snr_db="", eps=""):
        self.rows.append(
            {
                "solver": solver,
                "snr_db": snr_db,
                "eps": eps,
                "metric": metric,
                "value": value,
                "ci": ci,
                "n": n,
            }
        )

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(f"# {self.header_note}\n")
            f.write(",".join(self.COLUMNS) + "\n")
            for row in self.rows:
                cells = []
                for c in self.COLUMNS:
                    v = row[c]
                    cells.append(f"{v:.10e}" if isinstance(v, float) else str(v))
                f.write(",".join(cells) + "\n")

    def summary(self):
        lines = [" | ".join(f"{c:>10s}" for c in self.COLUMNS)]
        for row in self.rows:
            cells = []
            for c in self.COLUMNS:
                v = row[c]
                cells.append(f"{v:10.4g}" if isinstance(v, float) else f"{str(v):>10s}")
            lines.append(" | ".join(cells))
        return "\n".join(lines)

    def select(self, **keys):
        out = []
        for row in self.rows:
            if all(row[k] == v for k, v in keys.items()):
                out.append(row)
        return out

    def value(self, **keys):
        rows = self.select(**keys)
        if len(rows) != 1:
            raise KeyError(f"expected exactly one cell for {keys}, found {len(rows)}")
        return rows[0]["value"], rows[0]["ci"]


def residual_matrix(X, dataset):
    """Hx - s per sample and user, shape (N, Nu)."""
    return np.einsum("nut,nt->nu", dataset.H, X) - dataset.s


def avg_mui_db(precoder, dataset):
    """Mean MUI over samples and users, in dB; -inf for a perfect fit."""
    X, _ = precoder.solve(dataset.H, dataset.s)
    return mui_db_from_residuals(residual_matrix(X, dataset))


def mui_db_from_residuals(R):
    mean = float(np.mean(np.abs(R) ** 2))
    if mean == 0.0:
        return float("-inf")
    return 10.0 * np.log10(mean)


def rate_from_residuals(R, snr_db):
    """SINR-surrogate rate in bits/s/Hz averaged over users.

    Returns (rate, ci) where ci propagates the per-user residual-power
    confidence interval through the rate formula (interval endpoints).
    """
    sigma2 = noise_variance(snr_db)
    P = np.abs(R) ** 2  # (N, Nu)
    n = P.shape[0]
    mean_p = np.mean(P, axis=0)
    hw = 1.96 * np.std(P, axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean_p)
    rate = np.mean(np.log2(1.0 + 1.0 / (mean_p + sigma2)))
    lo = np.mean(np.log2(1.0 + 1.0 / (mean_p + hw + sigma2)))
    hi = np.mean(np.log2(1.0 + 1.0 / (np.maximum(mean_p - hw, 0.0) + sigma2)))
    return float(rate), float((hi - lo) / 2.0)


def achievable_rate(precoder, dataset, snr_db):
    X, _ = precoder.solve(dataset.H, dataset.s)
    rate, _ = rate_from_residuals(residual_matrix(X, dataset), snr_db)
    return rate


def detect_qam16(y):
    """Nearest-neighbor detection; ties break to the lowest index."""
    d2 = np.abs(y[..., None] - chan.QAM16) ** 2
    return np.argmin(d2, axis=-1)


_POPCOUNT = np.array([bin(i).count("1") for i in range(16)])


@dataclass
class BerResult:
    ber: float
    errors: int
    bits: int
    reliable: bool

    @property
    def ci(self):
        if self.bits == 0:
            return 0.0
        p = self.ber
        return 1.96 * np.sqrt(max(p * (1.0 - p), 0.0) / self.bits)


def ber_from_received(Y, s_indices, snr_db, rng, min_errors=100, max_noise_reps=20):
    """Monte-Carlo BER given noiseless receive points Y (N, Nu).

    Adds fresh complex Gaussian noise of variance 10^(-SNR/10) per rep
    until `min_errors` bit errors accumulate or the rep budget runs out;
    short cells come back flagged unreliable.
    """
    sigma = np.sqrt(noise_variance(snr_db))
    errors = 0
    bits = 0
    for _ in range(max_noise_reps):
        noise = sigma * (
            rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape)
        ) / np.sqrt(2.0)
        detected = detect_qam16(Y + noise)
        errors += int(np.sum(_POPCOUNT[np.bitwise_xor(detected, s_indices)]))
        bits += Y.size * chan.QAM16_BITS_PER_SYMBOL
        if errors >= min_errors:
            break
    return BerResult(
        ber=errors / bits, errors=errors, bits=bits, reliable=errors >= min_errors
    )


def ber(precoder, dataset, snr_db, rng, min_errors=100, max_noise_reps=20):
    """BER of a precoder on a dataset; precoder=None bypasses precoding
    (y = s + n), which is the AWGN-only harness-validation mode."""
    s_idx = chan.symbols_to_indices(dataset.s)
    if precoder is None:
        Y = dataset.s
    else:
        X, _ = precoder.solve(dataset.H, dataset.s)
        Y = np.einsum("nut,nt->nu", dataset.H, X)
    return ber_from_received(Y, s_idx, snr_db, rng, min_errors, max_noise_reps)


# ---------------------------------------------------------------------------
# Sweeps


def _mui_ci(R):
    P = np.abs(R) ** 2
    n = P.size
    return float(1.96 * np.std(P, ddof=1) / np.sqrt(n))


def rate_vs_snr(precoders, dataset, snr_grid, rng=None, with_ber=True, min_errors=100,
                max_noise_reps=20):
    """Rate (and optionally BER) against SNR; one precode per solver,
    reused across the whole grid since precoding is SNR-independent."""
    rng = rng or SeededRng(0)
    report = MetricReport()
    for p in precoders:
        X, _ = p.solve(dataset.H, dataset.s)
        R = residual_matrix(X, dataset)
        Y = R + dataset.s
        s_idx = chan.symbols_to_indices(dataset.s)
        report.add(p.name, "mui_db", mui_db_from_residuals(R), _mui_ci(R), len(dataset))
        for snr in snr_grid:
            rate, ci = rate_from_residuals(R, snr)
            report.add(p.name, "rate", rate, ci, len(dataset), snr_db=snr)
            if with_ber:
                res = ber_from_received(Y, s_idx, snr, rng, min_errors, max_noise_reps)
                metric = "ber" if res.reliable else "ber_UNRELIABLE"
                report.add(p.name, metric, res.ber, res.ci, res.bits, snr_db=snr)
    return report


def robustness_sweep(precoders, dataset, eps_grid, snr_db, rng=None, min_errors=100,
                     max_noise_reps=20):
    """Precode on corrupted channels, evaluate on the true ones.

    For each eps the solver sees H_hat = sqrt(1-eps) H + sqrt(eps) E but
    the physical channel stays H.
    """
    rng = rng or SeededRng(0)
    if any(e < 0 or e > 1 for e in eps_grid):
        raise ValueError("eps grid must lie in [0, 1]")
    report = MetricReport()
    s_idx = chan.symbols_to_indices(dataset.s)
    for eps in eps_grid:
        H_hat = chan.corrupt_channel(dataset.H, eps, rng)
        for p in precoders:
            X, _ = p.solve(H_hat, dataset.s)
            R = residual_matrix(X, dataset)
            report.add(p.name, "mui_db", mui_db_from_residuals(R), _mui_ci(R), len(dataset), snr_db=snr_db, eps=eps)
            rate, ci = rate_from_residuals(R, snr_db)
            report.add(p.name, "rate", rate, ci, len(dataset), snr_db=snr_db, eps=eps)
            res = ber_from_received(R + dataset.s, s_idx, snr_db, rng, min_errors,
                                    max_noise_reps)
            metric = "ber" if res.reliable else "ber_UNRELIABLE"
            report.add(p.name, metric, res.ber, res.ci, res.bits, snr_db=snr_db, eps=eps)
    return report


def complexity_report(precoders, dataset):
    """Objective/gradient evaluation counts per solve, from the traces,
    plus non-normative local wall-clock medians."""
    report = MetricReport()
    n = len(dataset)
    for p in precoders:
        t0 = time.perf_counter()
        _, traces = p.solve(dataset.H, dataset.s)
        elapsed = time.perf_counter() - t0
        if isinstance(traces, list):
            obj_evals = np.array([t.total_objective_evals for t in traces], dtype=float)
            grad_evals = np.array([t.grad_evals for t in traces], dtype=float)
        else:
            obj_evals = np.full(n, float(traces.total_objective_evals))
            grad_evals = np.full(n, float(traces.grad_evals))
        report.add(p.name, "objective_evals_per_solve", float(np.mean(obj_evals)), 0.0, n)
        report.add(p.name, "grad_evals_per_solve", float(np.mean(grad_evals)), 0.0, n)
        report.add(p.name, "seconds_per_solve_nonnormative", elapsed / n, 0.0, n)
    return report
