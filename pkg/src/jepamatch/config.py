"""Run configuration: one JSON file fully determines a training run.

The file has five blocks (dataset, augment, model, sigreg, train) plus a
top-level seed and output directory. Validation is strict: unknown keys
and out-of-range values are rejected with the offending field path so the
CLI can exit with a precise message.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, gen_gaussian_mixture, gen_rings
from .errors import ConfigError
from .nets import ModelParams, NetDims, init_params
from .sigreg import AnnealSchedule, SigregConfig
from .trainer import TrainConfig, stream_seed
from .views import AugmentConfig

GENERATORS = ("gaussian_mixture", "rings")


@dataclass
class DatasetBlock:
    generator: str = "gaussian_mixture"
    class_count: int = 4
    input_dim: int = 32
    labels_per_class: int = 4
    unlabeled_total: int = 4000
    gamma: float = 1.0
    separation: float = 3.0
    radius_base: float = 1.0
    radius_step: float = 2.0
    noise: float = 0.1
    test_per_class: int = 250
    seed: "int | None" = None


@dataclass
class ModelBlock:
    encoder_widths: list = field(default_factory=lambda: [256, 256, 128])
    proj_hidden: int = 512
    proj_out: int = 128


@dataclass
class SigregBlock:
    num_slices: int = 1024
    num_knots: int = 17
    t_max: float = 5.0
    sigma_start: float = 1.0
    sigma_end: float = 0.1
    anneal_shape: str = "linear"


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: "str | None" = None
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelBlock = field(default_factory=ModelBlock)
    sigreg: SigregBlock = field(default_factory=SigregBlock)
    train: TrainConfig = field(default_factory=TrainConfig)

    def resolved(self) -> dict:
        out = {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "dataset": asdict(self.dataset),
            "augment": asdict(self.augment),
            "model": asdict(self.model),
            "sigreg": asdict(self.sigreg),
            "train": asdict(self.train),
        }
        out["train"].pop("seed", None)  # the top-level seed is authoritative
        return out


_INT = (int,)
_NUM = (int, float)


def _take(block: dict, path: str, fields: dict, optional: frozenset = frozenset()) -> dict:
    """Pull known keys out of a config block with type checks."""
    out = {}
    for key, value in block.items():
        if key not in fields:
            raise ConfigError(f"unknown key {path}.{key}")
        if value is None and key in optional:
            continue
        kinds = fields[key]
        bad_bool = isinstance(value, bool) and kinds != (bool,)
        if not isinstance(value, kinds) or bad_bool:
            raise ConfigError(f"{path}.{key} has the wrong type ({type(value).__name__})")
        out[key] = value
    return out


def parse_config(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    known_top = {"seed", "output_dir", "dataset", "augment", "model", "sigreg", "train"}
    for key in obj:
        if key not in known_top:
            raise ConfigError(f"unknown key {key}")

    ds = _take(obj.get("dataset", {}), "dataset", {
        "generator": (str,), "class_count": _INT, "input_dim": _INT,
        "labels_per_class": _INT, "unlabeled_total": _INT, "gamma": _NUM,
        "separation": _NUM, "radius_base": _NUM, "radius_step": _NUM,
        "noise": _NUM, "test_per_class": _INT, "seed": _INT,
    }, optional=frozenset({"seed"}))
    if ds.get("generator", "gaussian_mixture") not in GENERATORS:
        raise ConfigError(f"dataset.generator must be one of {GENERATORS}")
    if ds.get("gamma", 1.0) < 1.0:
        raise ConfigError(f"dataset.gamma must be >= 1, got {ds['gamma']}")
    if ds.get("class_count", 4) < 2:
        raise ConfigError("dataset.class_count must be >= 2")

    aug = _take(obj.get("augment", {}), "augment", {
        "weak_noise_sigma": _NUM, "strong_noise_sigma": _NUM,
        "strong_dropout_frac": _NUM, "local_window_frac_min": _NUM,
        "local_window_frac_max": _NUM, "local_crops": _INT, "seed": _INT,
    })
    model = _take(obj.get("model", {}), "model", {
        "encoder_widths": (list,), "proj_hidden": _INT, "proj_out": _INT,
    })
    if "encoder_widths" in model and not all(
        isinstance(w, int) and w > 0 for w in model["encoder_widths"]
    ):
        raise ConfigError("model.encoder_widths must be positive integers")
    sig = _take(obj.get("sigreg", {}), "sigreg", {
        "num_slices": _INT, "num_knots": _INT, "t_max": _NUM,
        "sigma_start": _NUM, "sigma_end": _NUM, "anneal_shape": (str,),
    })
    train = _take(obj.get("train", {}), "train", {
        "t_total": _INT, "warmup_fraction": _NUM, "lambda_unsup": _NUM,
        "lambda_rep": _NUM, "beta": _NUM, "batch_labeled": _INT,
        "batch_unlabeled": _INT, "learning_rate": _NUM, "momentum": _NUM,
        "weight_decay": _NUM, "distance": (str,), "base_tau": _NUM,
        "threshold_mapping": (str,), "stop_gradient_target": (bool,),
        "weight_decay_projector": (bool,), "metrics_interval": _INT,
    })
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    output_dir = obj.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a string")

    try:
        cfg = RunConfig(
            seed=seed,
            output_dir=output_dir,
            dataset=DatasetBlock(**ds),
            augment=AugmentConfig(**aug),
            model=ModelBlock(**model),
            sigreg=SigregBlock(**sig),
            train=TrainConfig(**train, seed=seed),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    # surfaces range errors from the block validators (ConfigError already)
    SigregConfig(cfg.sigreg.num_slices, cfg.sigreg.num_knots, cfg.sigreg.t_max)
    if cfg.sigreg.anneal_shape not in ("linear", "cosine"):
        raise ConfigError(f"sigreg.anneal_shape must be linear or cosine")
    if not cfg.sigreg.sigma_start >= cfg.sigreg.sigma_end > 0:
        raise ConfigError("sigreg.sigma_start must be >= sigreg.sigma_end > 0")
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(obj)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Copy of the config with the top-level seed replaced."""
    return parse_config({**cfg.resolved(), "seed": seed})


def build_dataset(cfg: RunConfig) -> Dataset:
    ds = cfg.dataset
    seed = ds.seed if ds.seed is not None else stream_seed(cfg.seed, "dataset")
    if ds.generator == "gaussian_mixture":
        return gen_gaussian_mixture(
            ds.class_count, ds.input_dim, ds.labels_per_class, ds.unlabeled_total,
            separation=ds.separation, gamma=ds.gamma, seed=seed,
        )
    return gen_rings(
        ds.class_count, ds.input_dim, ds.labels_per_class, ds.unlabeled_total,
        gamma=ds.gamma, seed=seed, radius_base=ds.radius_base,
        radius_step=ds.radius_step, noise=ds.noise,
    )


def build_test_split(cfg: RunConfig) -> Dataset:
    """Balanced held-out split from the same generator family."""
    ds = cfg.dataset
    seed = stream_seed(cfg.seed, "test_split")
    if ds.generator == "gaussian_mixture":
        return gen_gaussian_mixture(
            ds.class_count, ds.input_dim, ds.test_per_class, 0,
            separation=ds.separation, gamma=1.0, seed=seed,
        )
    return gen_rings(
        ds.class_count, ds.input_dim, ds.test_per_class, 0,
        gamma=1.0, seed=seed, radius_base=ds.radius_base,
        radius_step=ds.radius_step, noise=ds.noise,
    )


def build_model(cfg: RunConfig) -> ModelParams:
    dims = NetDims(
        input_dim=cfg.dataset.input_dim,
        encoder_widths=tuple(cfg.model.encoder_widths),
        class_count=cfg.dataset.class_count,
        proj_hidden=cfg.model.proj_hidden,
        proj_out=cfg.model.proj_out,
    )
    return init_params(stream_seed(cfg.seed, "init"), dims)


def build_anneal(cfg: RunConfig) -> AnnealSchedule:
    return AnnealSchedule(
        t_warm=cfg.train.t_warm,
        t_total=cfg.train.t_total,
        sigma_start=cfg.sigreg.sigma_start,
        sigma_end=cfg.sigreg.sigma_end,
        shape=cfg.sigreg.anneal_shape,
    )


def build_sigreg(cfg: RunConfig) -> SigregConfig:
    return SigregConfig(cfg.sigreg.num_slices, cfg.sigreg.num_knots, cfg.sigreg.t_max)


def execute_run(cfg: RunConfig, out_dir) -> list:
    """Materialize every component from the config and train."""
    from .trainer import train_run

    return train_run(
        dataset=build_dataset(cfg),
        test_split=build_test_split(cfg),
        params=build_model(cfg),
        cfg=cfg.train,
        augment=cfg.augment,
        sigreg_cfg=build_sigreg(cfg),
        anneal=build_anneal(cfg),
        out_dir=out_dir,
        resolved_config=cfg.resolved(),
    )
