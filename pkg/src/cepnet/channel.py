"""Channel and symbol generation plus dataset materialization.

Channels follow the multipath steering-vector model (L gain-weighted
plane waves per user, 1/sqrt(L) normalized) or i.i.d. Rayleigh fading.
Symbols come from a unit-average-energy Gray-coded 16-QAM alphabet.

Dataset container on disk: ``meta.csv`` (key,value pairs) plus one CSV
per split. Split row layout, fixed order:

    index, s_0_re, s_0_im, ..., s_{Nu-1}_im,
           h_00_re, h_00_im, h_01_re, ..., h_{Nu-1,Nt-1}_im

i.e. symbols first (interleaved re/im), then the channel matrix
row-major with interleaved re/im. Floats use %.17e so values round-trip
exactly.
"""

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .numerics import SeededRng, standard_complex_gaussian

DATASET_FORMAT_VERSION = 1

# Gray-coded square 16-QAM, unit average energy. Index i carries bits
# (b3 b2 b1 b0); (b3 b2) select the I level, (b1 b0) the Q level, each
# pair Gray-mapped as 00->-3, 01->-1, 11->+1, 10->+3, scaled by 1/sqrt(10).
_GRAY_PAIR_TO_LEVEL = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}


def _build_qam16():
    points = np.empty(16, dtype=np.complex128)
    for i in range(16):
        b3, b2, b1, b0 = (i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1
        re = _GRAY_PAIR_TO_LEVEL[(b3, b2)]
        im = _GRAY_PAIR_TO_LEVEL[(b1, b0)]
        points[i] = (re + 1j * im) / np.sqrt(10.0)
    return points


QAM16 = _build_qam16()
QAM16_BITS_PER_SYMBOL = 4


@dataclass
class MultipathConfig:
    nt: int
    nu: int
    paths: int = 8
    spacing_ratio: float = 0.5  # antenna spacing over wavelength

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.spacing_ratio <= 0:
            raise ValueError("spacing_ratio must be positive")
        if not self.nu < self.nt:
            raise ValueError(
                f"need fewer users than antennas, got nu={self.nu} >= nt={self.nt}"
            )


@dataclass
class Dataset:
    """(s_i, H_i) sample pairs for one split."""

    s: np.ndarray  # (N, Nu) complex
    H: np.ndarray  # (N, Nu, Nt) complex
    role: str = "train"

    def __len__(self):
        return self.s.shape[0]

    @property
    def nu(self):
        return self.s.shape[-1]

    @property
    def nt(self):
        return self.H.shape[-1]

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.s).tobytes())
        h.update(np.ascontiguousarray(self.H).tobytes())
        return h.hexdigest()


def steering_vector(theta, nt, spacing_ratio=0.5):
    """ULA array response [1, e^{j2*pi*(d/l)*sin(theta)}, ...] of length nt.

    `theta` may be a scalar or an array; the antenna axis is appended last.
    """
    theta = np.asarray(theta, dtype=np.float64)
    n = np.arange(nt)
    phase = 2.0 * np.pi * spacing_ratio * np.sin(theta)[..., None] * n
    return np.exp(1j * phase)


def multipath_channel(cfg, rng, batch=None):
    """Draw channel matrices from the L-path steering-vector model.

    Gains are standard complex Gaussian, departure angles uniform on
    [0, pi), fresh per user and per path. Returns (Nu, Nt) or
    (batch, Nu, Nt) when `batch` is given.
    """
    squeeze = batch is None
    b = 1 if squeeze else int(batch)
    shape = (b, cfg.nu, cfg.paths)
    gains = standard_complex_gaussian(rng, shape)
    thetas = rng.uniform(0.0, np.pi, shape)
    H = np.empty((b, cfg.nu, cfg.nt), dtype=np.complex128)
    # chunk to keep the (chunk, Nu, L, Nt) steering tensor small
    chunk = max(1, int(2**24 // (cfg.nu * cfg.paths * cfg.nt)))
    for lo in range(0, b, chunk):
        hi = min(b, lo + chunk)
        A = steering_vector(thetas[lo:hi], cfg.nt, cfg.spacing_ratio)
        H[lo:hi] = np.einsum("bul,buln->bun", gains[lo:hi], A) / np.sqrt(cfg.paths)
    return H[0] if squeeze else H


def rayleigh_channel(nu, nt, rng, batch=None):
    """i.i.d. channel, each entry standard complex Gaussian."""
    shape = (nu, nt) if batch is None else (int(batch), nu, nt)
    return standard_complex_gaussian(rng, shape)


def qam_symbols(rng, shape):
    """Uniform i.i.d. draws from the 16-QAM alphabet."""
    idx = rng.integers(0, 16, shape if not np.isscalar(shape) else (shape,))
    return QAM16[idx]


def symbols_to_indices(s):
    """Map exact constellation values back to their 4-bit indices."""
    idx = np.argmin(np.abs(s[..., None] - QAM16), axis=-1)
    return idx


def corrupt_channel(H, eps, rng):
    """Estimation-error model: sqrt(1-eps) H + sqrt(eps) E, E ~ CN(0,1).

    eps = 0 returns H unchanged (bitwise); eps = 1 is pure noise.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must be in [0, 1], got {eps}")
    if eps == 0.0:
        return H
    E = standard_complex_gaussian(rng, H.shape)
    return np.sqrt(1.0 - eps) * H + np.sqrt(eps) * E


@dataclass
class DatasetMeta:
    kind: str
    nt: int
    nu: int
    paths: int
    spacing_ratio: float
    seed: int
    sizes: tuple
    format_version: int = DATASET_FORMAT_VERSION


def build_dataset(kind, sizes, cfg, seed):
    """Generate disjoint train/val/test splits of independent (s, H) pairs.

    kind: 'multipath' or 'rayleigh'. `cfg` is a MultipathConfig (for
    rayleigh only nt/nu are used). Each split draws from its own spawned
    RNG stream, so the whole thing is reproducible from `seed` alone.
    """
    if kind not in ("multipath", "rayleigh"):
        raise ValueError(f"unknown channel kind {kind!r}")
    if len(sizes) != 3 or any(n <= 0 for n in sizes):
        raise ValueError("sizes must be three positive split cardinalities")
    root = SeededRng(seed)
    streams = root.spawn(3)
    splits = []
    for role, n, rng in zip(("train", "val", "test"), sizes, streams):
        s = qam_symbols(rng, (n, cfg.nu))
        if kind == "multipath":
            H = multipath_channel(cfg, rng, batch=n)
        else:
            H = rayleigh_channel(cfg.nu, cfg.nt, rng, batch=n)
        splits.append(Dataset(s=s, H=H, role=role))
    return tuple(splits)


# ---------------------------------------------------------------------------
# CSV container


def _split_to_table(ds):
    n = len(ds)
    s2 = np.empty((n, 2 * ds.nu))
    s2[:, 0::2] = ds.s.real
    s2[:, 1::2] = ds.s.imag
    Hf = ds.H.reshape(n, ds.nu * ds.nt)
    h2 = np.empty((n, 2 * ds.nu * ds.nt))
    h2[:, 0::2] = Hf.real
    h2[:, 1::2] = Hf.imag
    return np.hstack([np.arange(n)[:, None], s2, h2])


def _table_to_split(table, nu, nt, role):
    s2 = table[:, 1 : 1 + 2 * nu]
    h2 = table[:, 1 + 2 * nu :]
    s = s2[:, 0::2] + 1j * s2[:, 1::2]
    H = (h2[:, 0::2] + 1j * h2[:, 1::2]).reshape(-1, nu, nt)
    return Dataset(s=s, H=H, role=role)


def save_dataset_container(out_dir, splits, meta):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "meta.csv"), "w") as f:
        f.write("key,value\n")
        f.write(f"format_version,{meta.format_version}\n")
        f.write(f"kind,{meta.kind}\n")
        f.write(f"nt,{meta.nt}\n")
        f.write(f"nu,{meta.nu}\n")
        f.write(f"paths,{meta.paths}\n")
        f.write(f"spacing_ratio,{meta.spacing_ratio!r}\n")
        f.write(f"seed,{meta.seed}\n")
        for role, n in zip(("train", "val", "test"), meta.sizes):
            f.write(f"n_{role},{n}\n")
    for ds in splits:
        table = _split_to_table(ds)
        fmt = ["%d"] + ["%.17e"] * (table.shape[1] - 1)
        np.savetxt(os.path.join(out_dir, f"{ds.role}.csv"), table, fmt=fmt, delimiter=",")


def load_dataset_container(out_dir):
    meta_df = pd.read_csv(os.path.join(out_dir, "meta.csv"))
    kv = dict(zip(meta_df["key"], meta_df["value"]))
    version = int(kv["format_version"])
    if version != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {version}")
    nt, nu = int(kv["nt"]), int(kv["nu"])
    sizes = tuple(int(kv[f"n_{r}"]) for r in ("train", "val", "test"))
    meta = DatasetMeta(
        kind=str(kv["kind"]),
        nt=nt,
        nu=nu,
        paths=int(kv["paths"]),
        spacing_ratio=float(kv["spacing_ratio"]),
        seed=int(kv["seed"]),
        sizes=sizes,
    )
    splits = []
    for role in ("train", "val", "test"):
        table = pd.read_csv(
            os.path.join(out_dir, f"{role}.csv"), header=None,
            float_precision="round_trip",
        ).to_numpy(dtype=np.float64)
        splits.append(_table_to_split(table, nu, nt, role))
    return tuple(splits), meta
