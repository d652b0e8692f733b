"""Pseudo-labeling with class-wise dynamic confidence thresholds.

Each unlabeled sample keeps a persistent record of the class it was last
confidently predicted as (confidence >= the base threshold); per-class
counts of those records, together with the never-confident remainder,
scale the base threshold down for classes the model has learned less.
Cold start therefore admits everything, and head classes face the full
base threshold first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= class_count):
        raise ContractError(f"labels outside [0, {class_count})")
    out = np.zeros((labels.size, class_count))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class PseudoBatchResult:
    pseudo: np.ndarray       # (B,) argmax class per sample
    confidence: np.ndarray   # (B,) max predicted probability
    mask: np.ndarray         # (B,) float 0/1, 1 iff confidence >= tau_{pseudo}


class ThresholdState:
    """Per-class dynamic thresholds driven by confident-sample counts."""

    MAPPINGS = ("linear", "convex")

    def __init__(self, class_count: int, num_unlabeled: int,
                 base_tau: float = 0.95, mapping: str = "linear"):
        if not 0.0 < base_tau <= 1.0:
            raise ConfigError(f"base_tau must be in (0, 1], got {base_tau}")
        if mapping not in self.MAPPINGS:
            # a concave map would push thresholds above base_tau
            raise ConfigError(f"mapping must be one of {self.MAPPINGS}, got {mapping!r}")
        self.class_count = class_count
        self.base_tau = base_tau
        self.mapping = mapping
        # last confident class per unlabeled sample; -1 = never confident
        self.assigned = np.full(num_unlabeled, -1, dtype=np.int64)

    @property
    def counts(self) -> np.ndarray:
        seen = self.assigned[self.assigned >= 0]
        return np.bincount(seen, minlength=self.class_count)

    @property
    def unused(self) -> int:
        return int((self.assigned < 0).sum())

    def update(self, argmax: np.ndarray, confidence: np.ndarray,
               sample_ids: np.ndarray) -> "ThresholdState":
        """Record the latest confident prediction of each sample. A sample
        drawn more than once in a batch keeps its last confident entry."""
        argmax = np.asarray(argmax, dtype=np.int64)
        confidence = np.asarray(confidence, dtype=np.float64)
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        if np.any(sample_ids < 0) or np.any(sample_ids >= self.assigned.size):
            raise ContractError("sample_ids outside the tracked unlabeled set")
        confident = confidence >= self.base_tau
        self.assigned[sample_ids[confident]] = argmax[confident]
        return self

    def thresholds(self) -> np.ndarray:
        counts = self.counts
        denom = max(int(counts.max()), self.unused, 1)
        beta = counts / denom
        if self.mapping == "convex":
            beta = beta / (2.0 - beta)
        return beta * self.base_tau


def update_thresholds(state: ThresholdState, argmax, confidence, sample_ids) -> ThresholdState:
    return state.update(argmax, confidence, sample_ids)


def pseudo_label(p_weak: np.ndarray, state: ThresholdState) -> PseudoBatchResult:
    """Argmax pseudo-labels gated by the per-class dynamic thresholds.

    Operates on detached probabilities: nothing here joins the gradient
    tape. Argmax ties resolve to the lowest class index.
    """
    p = np.asarray(p_weak, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != state.class_count:
        raise ContractError(f"expected (B, {state.class_count}) probabilities, got {p.shape}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise ContractError("rows of p_weak must be probability vectors")
    pseudo = p.argmax(axis=1)
    confidence = p.max(axis=1)
    tau = state.thresholds()
    mask = (confidence >= tau[pseudo]).astype(np.float64)
    return PseudoBatchResult(pseudo=pseudo, confidence=confidence, mask=mask)


def supervised_loss(logits: ad.Tensor, labels: np.ndarray) -> ad.Tensor:
    """Batch-mean cross-entropy on labeled data."""
    return ad.softmax_cross_entropy(logits, one_hot(labels, logits.shape[1]))


def unsupervised_loss(logits_strong: ad.Tensor, result: PseudoBatchResult) -> ad.Tensor:
    """Consistency cross-entropy on strong views against pseudo-labels,
    masked per sample and normalized by the full batch size."""
    if logits_strong.shape[0] != result.pseudo.size:
        raise ContractError(
            f"{logits_strong.shape[0]} strong logits vs {result.pseudo.size} pseudo-labels"
        )
    targets = one_hot(result.pseudo, logits_strong.shape[1])
    return ad.softmax_cross_entropy(logits_strong, targets, weights=result.mask)
