"""Declarative experiment configuration (YAML) and run manifests.

One config file pins everything needed to rerun an experiment end to
end. Parsing is strict: unknown keys anywhere in the tree fail fast.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from .channel import MultipathConfig
from .learning import TrainConfig
from .solvers import ArmijoConfig, X0_POLICIES


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ChannelSection:
    kind: str = "multipath"
    nt: int = 64
    nu: int = 16
    paths: int = 8
    spacing_ratio: float = 0.5

    def to_multipath(self):
        return MultipathConfig(
            nt=self.nt, nu=self.nu, paths=self.paths, spacing_ratio=self.spacing_ratio
        )


@dataclass
class DatasetSection:
    n_train: int = 4000
    n_val: int = 2000
    n_test: int = 6000
    seed: int = 1

    @property
    def sizes(self):
        return (self.n_train, self.n_val, self.n_test)


@dataclass
class SolverSection:
    iterations: int = 20
    x0_policy: str = "matched_filter"
    solvers: list = field(default_factory=lambda: ["rmo_cg", "rmo_gd", "cepnet"])
    armijo: ArmijoConfig = field(default_factory=ArmijoConfig)


@dataclass
class EvalSection:
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0])
    eps_grid: list = field(default_factory=lambda: [0.0, 0.1, 0.3, 0.5, 1.0])
    sweep_snr_db: float = 20.0
    min_errors: int = 100
    max_noise_reps: int = 20
    noise_seed: int = 3


@dataclass
class ExperimentConfig:
    channel: ChannelSection = field(default_factory=ChannelSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    solver: SolverSection = field(default_factory=SolverSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    output_dir: str = "runs/out"

    def validate(self):
        if self.channel.kind not in ("multipath", "rayleigh"):
            raise ConfigError(f"unknown channel kind {self.channel.kind!r}")
        if self.channel.nu >= self.channel.nt:
            raise ConfigError(
                f"need nu < nt (got nu={self.channel.nu}, nt={self.channel.nt})"
            )
        if self.solver.x0_policy not in X0_POLICIES:
            raise ConfigError(f"unknown x0 policy {self.solver.x0_policy!r}")
        for name in self.solver.solvers:
            if name not in ("rmo_cg", "rmo_gd", "cepnet"):
                raise ConfigError(f"unknown solver {name!r}")
        if any(n <= 0 for n in self.dataset.sizes):
            raise ConfigError("dataset sizes must be positive")
        if self.train.batch_size > self.dataset.n_train:
            raise ConfigError("train.batch_size exceeds dataset.n_train")
        return self


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        target = _NESTED.get((cls, name))
        if target is not None:
            kwargs[name] = _from_dict(target, value, f"{path}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_NESTED = {
    (ExperimentConfig, "channel"): ChannelSection,
    (ExperimentConfig, "dataset"): DatasetSection,
    (ExperimentConfig, "solver"): SolverSection,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "eval"): EvalSection,
    (SolverSection, "armijo"): ArmijoConfig,
}


def load_config(path):
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        data = {}
    cfg = _from_dict(ExperimentConfig, data, "config")
    return cfg.validate()


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_hash(cfg):
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(path, cfg, dataset_hashes, outputs, started, finished):
    """Atomic write of the run manifest (the one file holding timestamps)."""
    manifest = {
        "config_hash": config_hash(cfg),
        "code_version": _code_version(),
        "dataset_hashes": dataset_hashes,
        "started": started,
        "finished": finished,
        "outputs": sorted(outputs),
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return manifest


def _code_version():
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("cepnet")
    except PackageNotFoundError:
        return "unknown"
