"""Two-phase training loop joining the curriculum and representation levels.

Each iteration: sample labeled/unlabeled batches, build views, compute the
supervised loss, pseudo-label the weak views under the dynamic thresholds,
compute the masked consistency loss, project all views, compute the
embedding prediction loss, then either the global N(0, I) shaping term
(warmup) or the class-centered annealed term plus mean repulsion (main
phase). The weighted total is backpropagated and parameters take an
SGD-with-momentum step.

All randomness is drawn from named substreams of one top-level seed, keyed
by (seed, stream id, iteration), so any subset of the pipeline can be
replayed independently and runs are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import curriculum as cur
from . import sigreg as sr
from .data import Dataset, TrainView, save_raw
from .errors import ConfigError, ContractError
from .nets import BoundModel, ModelParams
from .views import AugmentConfig, make_views, make_weak_only

METRICS_COLUMNS = (
    "iter", "loss_sup", "loss_unsup", "loss_pred", "loss_sigreg",
    "loss_repulsion", "loss_total", "test_acc", "pl_acc",
    "util_masked", "util_correct", "max_class_count", "sigma_t",
)

# named substream ids; every random draw in a run flows from
# (top seed, stream id, iteration)
STREAMS = {
    "dataset": 0,
    "test_split": 1,
    "init": 2,
    "batch_labeled": 3,
    "batch_unlabeled": 4,
    "augment_labeled": 5,
    "augment_unlabeled": 6,
    "slices": 7,
}


def substream(seed: int, name: str, t: int = 0) -> np.random.Generator:
    """Deterministic per-purpose, per-iteration random stream."""
    return np.random.default_rng(np.random.SeedSequence([seed, STREAMS[name], t]))


def stream_seed(seed: int, name: str) -> int:
    """Integer seed derived from a named substream (for APIs that take ints)."""
    return int(np.random.SeedSequence([seed, STREAMS[name], 0]).generate_state(1)[0])


@dataclass
class TrainConfig:
    t_total: int = 3000
    warmup_fraction: float = 1.0 / 3.0
    lambda_unsup: float = 1.0
    lambda_rep: float = 0.5
    beta: float = 0.2
    batch_labeled: int = 16
    batch_unlabeled: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    distance: str = "squared_euclidean"
    base_tau: float = 0.95
    threshold_mapping: str = "linear"
    stop_gradient_target: bool = False
    # decaying the projection head drives it into the all-zero output, a
    # stable critical point of the CF loss, so by default decay covers only
    # the encoder and classifier
    weight_decay_projector: bool = False
    metrics_interval: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError(f"warmup_fraction must be in (0,1), got {self.warmup_fraction}")
        if self.lambda_unsup < 0 or self.lambda_rep < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0,1], got {self.beta}")
        if self.distance not in ("squared_euclidean", "cosine"):
            raise ConfigError(f"unknown distance {self.distance!r}")
        if self.t_total < 1 or self.batch_labeled < 1 or self.batch_unlabeled < 2:
            raise ConfigError("need t_total >= 1, batch_labeled >= 1, batch_unlabeled >= 2")

    @property
    def t_warm(self) -> int:
        return int(round(self.t_total * self.warmup_fraction))


@dataclass
class MetricsRecord:
    iteration: int
    loss_sup: float
    loss_unsup: float
    loss_pred: float
    loss_sigreg: float
    loss_repulsion: float
    loss_total: float
    test_acc: float
    pl_acc: float
    util_masked: int
    util_correct: int
    max_class_count: int
    sigma_t: float
    tau_snapshot: np.ndarray = field(default=None, repr=False)

    def csv_row(self) -> str:
        vals = [
            str(self.iteration),
            *(repr(float(v)) for v in (
                self.loss_sup, self.loss_unsup, self.loss_pred, self.loss_sigreg,
                self.loss_repulsion, self.loss_total, self.test_acc, self.pl_acc,
            )),
            str(self.util_masked), str(self.util_correct), str(self.max_class_count),
            repr(float(self.sigma_t)),
        ]
        return ",".join(vals)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _cosine_distance_sum(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    dot = ad.tsum(ad.mul(a, b), axis=1, keepdims=True)
    na = ad.sqrt(ad.tsum(ad.square(a), axis=1, keepdims=True) + 1e-24)
    nb = ad.sqrt(ad.tsum(ad.square(b), axis=1, keepdims=True) + 1e-24)
    return ad.tsum(ad.sub(1.0, dot / (na * nb)))


def prediction_loss(z_weak: ad.Tensor, z_strong: ad.Tensor, z_locals: list,
                    distance: str = "squared_euclidean") -> ad.Tensor:
    """Distance from the strong and local projections to the weak target,
    summed per sample and averaged over the batch."""
    batch = z_weak.shape[0]
    if z_strong.shape != z_weak.shape or any(z.shape != z_weak.shape for z in z_locals):
        raise ContractError("all projection batches must share the weak view's shape")
    if distance == "squared_euclidean":
        total = ad.tsum(ad.square(z_strong - z_weak))
        for zk in z_locals:
            total = total + ad.tsum(ad.square(zk - z_weak))
    elif distance == "cosine":
        total = _cosine_distance_sum(z_strong, z_weak)
        for zk in z_locals:
            total = total + _cosine_distance_sum(zk, z_weak)
    else:
        raise ConfigError(f"unknown distance {distance!r}")
    return ad.mul(total, 1.0 / batch)


@dataclass
class StepLosses:
    sup: ad.Tensor
    unsup: "ad.Tensor | None"
    pred: "ad.Tensor | None"
    sigreg: "ad.Tensor | None"
    repulsion: "ad.Tensor | None"
    total: ad.Tensor

    def value(self, name: str) -> float:
        t = getattr(self, name)
        return 0.0 if t is None else t.item()


def assemble_losses(
    net: BoundModel,
    xl_weak: np.ndarray,
    labels: np.ndarray,
    xu_weak: np.ndarray,
    xu_strong: np.ndarray,
    xu_locals: list,
    result: cur.PseudoBatchResult,
    phase: str,
    sigma_t: float,
    slices: "np.ndarray | None",
    cfg: TrainConfig,
    sigreg_cfg: sr.SigregConfig,
    update_stats: bool = False,
) -> StepLosses:
    """Build every loss for one iteration on the caller's tape.

    ``result`` is precomputed from detached weak-view probabilities, so no
    gradient can flow through pseudo-labels or masks. Zero-weighted terms
    are skipped entirely: with both lambdas zero the graph reduces to the
    supervised loss alone.
    """
    batch_u = xu_weak.shape[0]
    h_l = net.encode(ad.constant(xl_weak))
    loss_sup = cur.supervised_loss(net.classify(h_l), labels)
    total = loss_sup

    loss_unsup = None
    loss_pred = None
    loss_sig = None
    loss_rep = None

    needs_strong_logits = cfg.lambda_unsup != 0.0
    needs_projection = cfg.lambda_rep != 0.0

    if needs_strong_logits or needs_projection:
        stack = np.concatenate([xu_weak, xu_strong] + list(xu_locals), axis=0)
        h_u = net.encode(ad.constant(stack))
        h_us = ad.rows(h_u, batch_u, 2 * batch_u)
        if needs_strong_logits:
            loss_unsup = cur.unsupervised_loss(net.classify(h_us), result)
            total = total + ad.mul(loss_unsup, cfg.lambda_unsup)

    if needs_projection:
        z_all = net.project(ad.concat_rows([h_l, h_u]), train=True, update_stats=update_stats)
        n_l = xl_weak.shape[0]
        z_l = ad.rows(z_all, 0, n_l)
        z_w = ad.rows(z_all, n_l, n_l + batch_u)
        z_s = ad.rows(z_all, n_l + batch_u, n_l + 2 * batch_u)
        z_locals = [
            ad.rows(z_all, n_l + (2 + k) * batch_u, n_l + (3 + k) * batch_u)
            for k in range(len(xu_locals))
        ]
        target = ad.detach(z_w) if cfg.stop_gradient_target else z_w
        loss_pred = prediction_loss(target, z_s, z_locals, cfg.distance)

        if phase == "warmup":
            loss_sig = sr.global_warmup_term(z_locals, sigreg_cfg, slices=slices)
            rep_combined = ad.mul(loss_pred, 1.0 - cfg.beta) + ad.mul(loss_sig, cfg.beta)
        else:
            mean_source = ad.concat_rows([z_l, z_w])
            mean_labels = np.concatenate([labels, result.pseudo])
            mean_mask = np.concatenate([np.ones(n_l), result.mask])
            means = sr.class_means(mean_source, mean_labels, mean_mask)
            zero = np.zeros(z_w.shape[1])
            acc = None
            for zk in z_locals:
                centered = sr.center(zk, result.pseudo, result.mask, means)
                term = sr.sigreg_loss(centered, zero, sigma_t, sigreg_cfg, slices=slices)
                acc = term if acc is None else acc + term
            loss_sig = ad.mul(acc, 1.0 / len(z_locals))
            loss_rep = sr.repulsion_loss(means)
            rep_combined = (
                ad.mul(loss_pred, 1.0 - cfg.beta)
                + ad.mul(loss_sig, cfg.beta)
                + loss_rep
            )
        total = total + ad.mul(rep_combined, cfg.lambda_rep)

    return StepLosses(sup=loss_sup, unsup=loss_unsup, pred=loss_pred,
                      sigreg=loss_sig, repulsion=loss_rep, total=total)


@dataclass
class StepInfo:
    losses: StepLosses
    u_idx: np.ndarray
    result: cur.PseudoBatchResult
    sigma_t: float
    tau_snapshot: np.ndarray


class Trainer:
    """Owns the parameters, optimizer state, and threshold state of one run.

    Training only ever sees a ``TrainView``: unlabeled ground truth stays
    with the caller, which may use it for metrics.
    """

    def __init__(
        self,
        view: TrainView,
        params: ModelParams,
        cfg: TrainConfig,
        augment: AugmentConfig,
        sigreg_cfg: sr.SigregConfig,
        anneal: sr.AnnealSchedule,
    ):
        if view.labeled_features.shape[1] != params.dims.input_dim:
            raise ConfigError("dataset dimensionality does not match the model")
        self.view = view
        self.params = params
        self.cfg = cfg
        self.augment = augment
        self.sigreg_cfg = sigreg_cfg
        self.anneal = anneal
        self.thresholds = cur.ThresholdState(
            class_count=view.class_count,
            num_unlabeled=view.unlabeled_features.shape[0],
            base_tau=cfg.base_tau,
            mapping=cfg.threshold_mapping,
        )
        self.velocity = {k: np.zeros_like(v) for k, v in params.arrays.items()}

    def phase(self, t: int) -> str:
        return "warmup" if t < self.cfg.t_warm else "main"

    def _sample_batches(self, t: int):
        cfg = self.cfg
        n = self.view.labeled_features.shape[0]
        u = self.view.unlabeled_features.shape[0]
        l_idx = substream(cfg.seed, "batch_labeled", t).integers(0, n, size=cfg.batch_labeled)
        u_idx = substream(cfg.seed, "batch_unlabeled", t).integers(0, u, size=cfg.batch_unlabeled)
        return l_idx, u_idx

    def _make_view_batches(self, t: int, l_idx: np.ndarray, u_idx: np.ndarray):
        rng_l = substream(self.cfg.seed, "augment_labeled", t)
        rng_u = substream(self.cfg.seed, "augment_unlabeled", t)
        xl = np.stack([
            make_weak_only(x, self.augment, rng_l)
            for x in self.view.labeled_features[l_idx]
        ])
        sets = [make_views(x, self.augment, rng_u)
                for x in self.view.unlabeled_features[u_idx]]
        xu_w = np.stack([v.weak for v in sets])
        xu_s = np.stack([v.strong for v in sets])
        locs = [np.stack([v.locals[k] for v in sets]) for k in range(self.augment.local_crops)]
        return xl, xu_w, xu_s, locs

    def step(self, t: int) -> StepInfo:
        cfg = self.cfg
        l_idx, u_idx = self._sample_batches(t)
        xl, xu_w, xu_s, locs = self._make_view_batches(t, l_idx, u_idx)
        labels = self.view.labeled_labels[l_idx]

        tape = ad.Tape()
        net = self.params.bind(tape)

        # curriculum bookkeeping runs on detached weak-view probabilities
        p_weak = _softmax(net.classify(net.encode(ad.constant(xu_w))).data)
        self.thresholds.update(p_weak.argmax(axis=1), p_weak.max(axis=1), u_idx)
        result = cur.pseudo_label(p_weak, self.thresholds)

        phase = self.phase(t)
        sigma_t = sr.anneal_sigma(t, self.anneal)
        slices = None
        if cfg.lambda_rep != 0.0:
            slices = sr.sample_slices(
                self.params.dims.proj_out, self.sigreg_cfg, substream(cfg.seed, "slices", t)
            )
        losses = assemble_losses(
            net, xl, labels, xu_w, xu_s, locs, result, phase, sigma_t,
            slices, cfg, self.sigreg_cfg, update_stats=cfg.lambda_rep != 0.0,
        )

        grads = ad.backward(losses.total)
        for name, leaf in net.t.items():
            g = grads[leaf]
            decay = cfg.weight_decay and (
                cfg.weight_decay_projector or not name.startswith("projector")
            )
            if decay:
                g = g + cfg.weight_decay * self.params.arrays[name]
            v = cfg.momentum * self.velocity[name] + g
            self.velocity[name] = v
            self.params.arrays[name] = self.params.arrays[name] - cfg.learning_rate * v

        return StepInfo(
            losses=losses,
            u_idx=u_idx,
            result=result,
            sigma_t=sigma_t,
            tau_snapshot=self.thresholds.thresholds(),
        )


def evaluate(params: ModelParams, features: np.ndarray, labels: np.ndarray):
    """Eval-mode accuracy plus per-class accuracies on a labeled split."""
    net = params.bind(None)
    logits = net.classify(net.encode(ad.constant(features))).data
    predicted = logits.argmax(axis=1)
    correct = predicted == labels
    accuracy = float(correct.mean())
    per_class = np.zeros(params.dims.class_count)
    for c in range(params.dims.class_count):
        members = labels == c
        per_class[c] = float(correct[members].mean()) if members.any() else 0.0
    return accuracy, per_class


def batch_metrics(info: StepInfo, truth_unlabeled: np.ndarray, iteration: int,
                  test_acc: float) -> MetricsRecord:
    """Fold a step's outcome plus ground truth into one metrics record.

    ``truth_unlabeled`` holds the hidden labels of the whole unlabeled
    pool; it is consulted here and nowhere on the training path.
    """
    mask = info.result.mask.astype(bool)
    pseudo = info.result.pseudo
    truth = truth_unlabeled[info.u_idx]
    masked = int(mask.sum())
    correct = int((pseudo[mask] == truth[mask]).sum())
    pl_acc = correct / masked if masked else 0.0
    max_count = int(np.bincount(pseudo[mask]).max()) if masked else 0
    return MetricsRecord(
        iteration=iteration,
        loss_sup=info.losses.value("sup"),
        loss_unsup=info.losses.value("unsup"),
        loss_pred=info.losses.value("pred"),
        loss_sigreg=info.losses.value("sigreg"),
        loss_repulsion=info.losses.value("repulsion"),
        loss_total=info.losses.value("total"),
        test_acc=test_acc,
        pl_acc=pl_acc,
        util_masked=masked,
        util_correct=correct,
        max_class_count=max_count,
        sigma_t=info.sigma_t,
        tau_snapshot=info.tau_snapshot,
    )


def train_run(
    dataset: Dataset,
    test_split: Dataset,
    params: ModelParams,
    cfg: TrainConfig,
    augment: AugmentConfig,
    sigreg_cfg: sr.SigregConfig,
    anneal: sr.AnnealSchedule,
    out_dir: "Path | None" = None,
    resolved_config: "dict | None" = None,
) -> list:
    """Run the full loop; returns the metrics records and optionally writes
    metrics.csv, the final checkpoint, the test split, and the resolved
    config under ``out_dir``."""
    from .nets import save_checkpoint

    view = dataset.train_view()
    trainer = Trainer(view, params, cfg, augment, sigreg_cfg, anneal)
    truth_unlabeled = dataset.labels[dataset.labeled_count:]

    records = []
    rows = []
    for t in range(cfg.t_total):
        info = trainer.step(t)
        iteration = t + 1
        emit = (
            iteration % cfg.metrics_interval == 0
            or iteration == cfg.t_warm
            or iteration == cfg.t_total
        )
        if emit:
            test_acc, _ = evaluate(params, test_split.features, test_split.labels)
            record = batch_metrics(info, truth_unlabeled, iteration, test_acc)
            records.append(record)
            rows.append(record.csv_row())

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.csv").write_text(
            ",".join(METRICS_COLUMNS) + "\n" + "\n".join(rows) + "\n"
        )
        save_checkpoint(params, out_dir / "checkpoint.jmck")
        save_raw(test_split, out_dir / "test_split.jmds")
        if resolved_config is not None:
            (out_dir / "config.json").write_text(
                json.dumps(resolved_config, indent=2, sort_keys=True) + "\n"
            )
    return records
