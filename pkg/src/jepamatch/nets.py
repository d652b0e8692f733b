"""Encoder, classifier head, and projection head as plain MLPs.

The encoder is a ReLU MLP, the classifier a single affine map on encoder
features, and the projection head the 3-layer stack
Linear(no bias) -> BatchNorm -> GELU, twice, then Linear(with bias).
Parameters live in a name-keyed dict of float64 arrays; ``bind`` turns
them into tape leaves for training or constants for evaluation, so the
same forward code serves both modes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError, FormatError

CKPT_MAGIC = b"JMCK"
CKPT_VERSION = 1

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass
class NetDims:
    input_dim: int
    encoder_widths: tuple = (256, 256, 128)
    class_count: int = 4
    proj_hidden: int = 512
    proj_out: int = 128

    @property
    def feature_dim(self) -> int:
        return self.encoder_widths[-1]


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (affine params live
    with the other trainables)."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    def update(self, batch_mean: np.ndarray, batch_var_unbiased: np.ndarray) -> None:
        m = self.momentum
        self.running_mean = (1.0 - m) * self.running_mean + m * batch_mean
        self.running_var = (1.0 - m) * self.running_var + m * batch_var_unbiased


@dataclass
class ModelParams:
    dims: NetDims
    arrays: dict = field(default_factory=dict)  # name -> np.ndarray, trainable
    bn1: BatchNormState = None
    bn2: BatchNormState = None

    def bind(self, tape: "ad.Tape | None") -> "BoundModel":
        return BoundModel(self, tape)

    def copy(self) -> "ModelParams":
        return ModelParams(
            dims=self.dims,
            arrays={k: v.copy() for k, v in self.arrays.items()},
            bn1=BatchNormState(self.bn1.running_mean.copy(), self.bn1.running_var.copy()),
            bn2=BatchNormState(self.bn2.running_mean.copy(), self.bn2.running_var.copy()),
        )


def init_params(seed: int, dims: NetDims) -> ModelParams:
    """Kaiming-uniform fan-in init, deterministic in ``seed``.

    Weights are U(-b, b) with b = sqrt(6/fan_in); biases U(-1/sqrt(fan_in),
    1/sqrt(fan_in)). Batch-norm scales start at 1, shifts at 0.
    """
    rng = np.random.default_rng(seed)
    arrays: dict = {}

    def linear(name, fan_in, fan_out, bias=True):
        bound = np.sqrt(6.0 / fan_in)
        arrays[f"{name}.weight"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if bias:
            b = 1.0 / np.sqrt(fan_in)
            arrays[f"{name}.bias"] = rng.uniform(-b, b, size=fan_out)

    w_in = dims.input_dim
    for i, w_out in enumerate(dims.encoder_widths):
        linear(f"encoder.{i}", w_in, w_out)
        w_in = w_out
    linear("classifier", dims.feature_dim, dims.class_count)
    linear("projector.lin1", dims.feature_dim, dims.proj_hidden, bias=False)
    arrays["projector.bn1.gamma"] = np.ones(dims.proj_hidden)
    arrays["projector.bn1.beta"] = np.zeros(dims.proj_hidden)
    linear("projector.lin2", dims.proj_hidden, dims.proj_hidden, bias=False)
    arrays["projector.bn2.gamma"] = np.ones(dims.proj_hidden)
    arrays["projector.bn2.beta"] = np.zeros(dims.proj_hidden)
    linear("projector.lin3", dims.proj_hidden, dims.proj_out)

    bn = lambda: BatchNormState(np.zeros(dims.proj_hidden), np.ones(dims.proj_hidden))
    return ModelParams(dims=dims, arrays=arrays, bn1=bn(), bn2=bn())


class BoundModel:
    """Parameters bound to one tape (or to constants when ``tape`` is None)."""

    def __init__(self, params: ModelParams, tape: "ad.Tape | None"):
        self.params = params
        self.dims = params.dims
        if tape is None:
            self.t = {k: ad.constant(v) for k, v in params.arrays.items()}
        else:
            self.t = {k: tape.leaf(v) for k, v in params.arrays.items()}

    def encode(self, x: ad.Tensor) -> ad.Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.dims.input_dim:
            raise DimensionError(
                f"encoder expects (B, {self.dims.input_dim}), got {x.shape}"
            )
        h = x
        for i in range(len(self.dims.encoder_widths)):
            h = ad.relu(ad.matmul(h, self.t[f"encoder.{i}.weight"]) + self.t[f"encoder.{i}.bias"])
        return h

    def classify(self, h: ad.Tensor) -> ad.Tensor:
        if h.data.ndim != 2 or h.shape[1] != self.dims.feature_dim:
            raise DimensionError(
                f"classifier expects (B, {self.dims.feature_dim}), got {h.shape}"
            )
        return ad.matmul(h, self.t["classifier.weight"]) + self.t["classifier.bias"]

    def _batch_norm(self, x: ad.Tensor, which: str, train: bool, update_stats: bool) -> ad.Tensor:
        state = self.params.bn1 if which == "bn1" else self.params.bn2
        gamma = self.t[f"projector.{which}.gamma"]
        beta = self.t[f"projector.{which}.beta"]
        if train:
            batch = x.shape[0]
            mu = ad.tmean(x, axis=0, keepdims=True)
            centered = x - mu
            var = ad.tmean(ad.square(centered), axis=0, keepdims=True)
            xhat = centered / ad.sqrt(var + state.eps)
            if update_stats:
                # running variance tracks the unbiased estimate
                state.update(mu.data.reshape(-1), var.data.reshape(-1) * batch / (batch - 1))
        else:
            xhat = (x - ad.constant(state.running_mean)) / ad.constant(
                np.sqrt(state.running_var + state.eps)
            )
        return xhat * gamma + beta

    def project(self, h: ad.Tensor, train: bool = True, update_stats: bool = False) -> ad.Tensor:
        if h.data.ndim != 2 or h.shape[1] != self.dims.feature_dim:
            raise DimensionError(
                f"projector expects (B, {self.dims.feature_dim}), got {h.shape}"
            )
        if train and h.shape[0] < 2:
            raise ContractError("train-mode projection needs a batch of at least 2")
        z = ad.matmul(h, self.t["projector.lin1.weight"])
        z = ad.gelu(self._batch_norm(z, "bn1", train, update_stats))
        z = ad.matmul(z, self.t["projector.lin2.weight"])
        z = ad.gelu(self._batch_norm(z, "bn2", train, update_stats))
        return ad.matmul(z, self.t["projector.lin3.weight"]) + self.t["projector.lin3.bias"]


# eval-mode conveniences on raw arrays


def encode(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return params.bind(None).encode(ad.constant(x)).data


def classify(params: ModelParams, h: np.ndarray) -> np.ndarray:
    return params.bind(None).classify(ad.constant(h)).data


def project(params: ModelParams, h: np.ndarray, mode: str = "eval") -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    return params.bind(None).project(ad.constant(h), train=train, update_stats=train).data


# ---------------------------------------------------------------------------
# checkpoints: "JMCK" | version u32 | repeated
#   name_len u32 | name utf-8 | rank u32 | dims u64 each | payload f64 LE


def _all_arrays(params: ModelParams) -> dict:
    out = dict(params.arrays)
    out["projector.bn1.running_mean"] = params.bn1.running_mean
    out["projector.bn1.running_var"] = params.bn1.running_var
    out["projector.bn2.running_mean"] = params.bn2.running_mean
    out["projector.bn2.running_var"] = params.bn2.running_var
    return out


def save_checkpoint(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        for name, arr in _all_arrays(params).items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, count, what):
    blob = fh.read(count)
    if len(blob) != count:
        raise FormatError(f"checkpoint truncated while reading {what} "
                          f"(wanted {count} bytes, got {len(blob)})")
    return blob


def load_checkpoint(path) -> ModelParams:
    entries: dict = {}
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise FormatError("bad checkpoint magic at offset 0")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError("checkpoint truncated in entry header")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "entry name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, "shape"))
            count = int(np.prod(shape)) if rank else 1
            payload = _read_exact(fh, 8 * count, f"payload of {name}")
            entries[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()

    widths = []
    i = 0
    while f"encoder.{i}.weight" in entries:
        widths.append(entries[f"encoder.{i}.weight"].shape[1])
        i += 1
    if not widths or "classifier.weight" not in entries:
        raise FormatError("checkpoint is missing encoder/classifier entries")
    dims = NetDims(
        input_dim=entries["encoder.0.weight"].shape[0],
        encoder_widths=tuple(widths),
        class_count=entries["classifier.weight"].shape[1],
        proj_hidden=entries["projector.lin1.weight"].shape[1],
        proj_out=entries["projector.lin3.weight"].shape[1],
    )
    bn_names = {
        "projector.bn1.running_mean", "projector.bn1.running_var",
        "projector.bn2.running_mean", "projector.bn2.running_var",
    }
    arrays = {k: v for k, v in entries.items() if k not in bn_names}
    return ModelParams(
        dims=dims,
        arrays=arrays,
        bn1=BatchNormState(entries["projector.bn1.running_mean"],
                           entries["projector.bn1.running_var"]),
        bn2=BatchNormState(entries["projector.bn2.running_mean"],
                           entries["projector.bn2.running_var"]),
    )
