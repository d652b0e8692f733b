"""Sketched isotropic-Gaussian shaping of projection batches.

The core loss projects a batch of embeddings onto M random unit
directions, evaluates the empirical characteristic function of each 1-D
projection at a grid of frequency knots, and penalizes the squared
distance to the characteristic function of a target Gaussian
N(mu, sigma^2 I). The warmup form targets N(0, I) on the raw local-view
projections; the main-phase form first centers confident samples by their
class mean, targets an annealed sigma, and adds a repulsion penalty that
keeps distinct class means from pointing the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError, NumericError


@dataclass
class SigregConfig:
    num_slices: int = 1024
    num_knots: int = 17
    t_max: float = 5.0

    def __post_init__(self):
        if self.num_slices < 1:
            raise ConfigError(f"num_slices must be >= 1, got {self.num_slices}")
        if self.num_knots < 2 or self.num_knots % 2 == 0:
            # odd count pins t=0 as the middle knot, where the CF is exactly 1
            raise ConfigError(f"num_knots must be odd and >= 3, got {self.num_knots}")
        if self.t_max <= 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")

    def knots(self) -> np.ndarray:
        return np.linspace(-self.t_max, self.t_max, self.num_knots)


@dataclass
class AnnealSchedule:
    """Target standard deviation over training: flat during warmup, then
    shrinking from sigma_start to sigma_end by the final iteration."""

    t_warm: int
    t_total: int
    sigma_start: float = 1.0
    sigma_end: float = 0.1
    shape: str = "linear"

    def __post_init__(self):
        if not 0 <= self.t_warm < self.t_total:
            raise ConfigError(f"need 0 <= t_warm < t_total, got {self.t_warm}, {self.t_total}")
        if not self.sigma_start >= self.sigma_end > 0:
            raise ConfigError("need sigma_start >= sigma_end > 0")
        if self.shape not in ("linear", "cosine"):
            raise ConfigError(f"unknown anneal shape {self.shape!r}")


def anneal_sigma(t: int, sched: AnnealSchedule) -> float:
    progress = (t - sched.t_warm) / (sched.t_total - sched.t_warm)
    progress = min(1.0, max(0.0, progress))
    span = sched.sigma_start - sched.sigma_end
    if sched.shape == "cosine":
        return sched.sigma_end + span * 0.5 * (1.0 + np.cos(np.pi * progress))
    return sched.sigma_start - span * progress


def sample_slices(dim: int, cfg: SigregConfig, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal (dim, M) matrix with L2-normalized columns."""
    u = rng.standard_normal((dim, cfg.num_slices))
    return u / np.linalg.norm(u, axis=0, keepdims=True)


def _resolve_slices(dim, cfg, slices, rng) -> np.ndarray:
    if slices is not None:
        slices = np.asarray(slices, dtype=np.float64)
        if slices.shape != (dim, cfg.num_slices):
            raise ContractError(
                f"slices shape {slices.shape} does not match ({dim}, {cfg.num_slices})"
            )
        return slices
    if rng is None:
        raise ContractError("pass either a slice matrix or an rng to draw one")
    return sample_slices(dim, cfg, rng)


def sigreg_loss(
    z: ad.Tensor,
    target_mu,
    target_sigma: float,
    cfg: SigregConfig,
    slices: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ad.Tensor:
    """Mean squared CF mismatch over M slices and K frequency knots.

    For each slice m the batch is projected to 1-D, the empirical CF
    (batch means of cos and sin) is evaluated at every knot t_k, and the
    target contributes cos/sin(t_k mu_m) * exp(-sigma^2 t_k^2 / 2). The
    result averages squared real+imaginary deviations over all (m, k) and
    is differentiable in both ``z`` and ``target_mu``.
    """
    z = z if isinstance(z, ad.Tensor) else ad.constant(np.atleast_2d(z))
    if z.data.ndim != 2 or z.shape[0] < 1:
        raise ContractError(f"expected a (N, d) batch, got shape {z.shape}")
    if not np.isfinite(z.data).all():
        raise NumericError("non-finite values in the projection batch")
    if target_sigma <= 0:
        raise ConfigError(f"target_sigma must be positive, got {target_sigma}")
    n, dim = z.shape
    mu = target_mu if isinstance(target_mu, ad.Tensor) else ad.constant(target_mu)
    if mu.shape != (dim,):
        raise ContractError(f"target mean shape {mu.shape} does not match d={dim}")
    if not np.isfinite(mu.data).all():
        raise NumericError("non-finite values in the target mean")

    u = ad.constant(_resolve_slices(dim, cfg, slices, rng))
    t = cfg.knots()
    t_col = ad.constant(t.reshape(-1, 1, 1))          # (K,1,1)
    decay = ad.constant(np.exp(-0.5 * target_sigma**2 * t**2).reshape(-1, 1))  # (K,1)

    x = ad.matmul(z, u)                               # (N,M) projections
    angles = ad.mul(ad.reshape(x, (1, n, cfg.num_slices)), t_col)  # (K,N,M)
    ecf_real = ad.tmean(ad.cos(angles), axis=1)       # (K,M)
    ecf_imag = ad.tmean(ad.sin(angles), axis=1)

    mu_proj = ad.matmul(ad.reshape(mu, (1, dim)), u)  # (1,M)
    phase = ad.mul(ad.constant(t.reshape(-1, 1)), mu_proj)  # (K,M)
    target_real = ad.mul(ad.cos(phase), decay)
    target_imag = ad.mul(ad.sin(phase), decay)

    diff_real = ecf_real - target_real
    diff_imag = ecf_imag - target_imag
    total = ad.tsum(ad.square(diff_real)) + ad.tsum(ad.square(diff_imag))
    return ad.mul(total, 1.0 / (cfg.num_slices * cfg.num_knots))


def global_warmup_term(
    local_views_z: list,
    cfg: SigregConfig,
    slices: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ad.Tensor:
    """Average over local-crop indices of the loss against N(0, I).

    One slice matrix is drawn per call and shared by every crop index, so
    the average is exactly invariant to permuting the crops.
    """
    if not local_views_z:
        raise ContractError("need at least one local-view batch")
    dim = local_views_z[0].shape[1]
    u = _resolve_slices(dim, cfg, slices, rng)
    zero = np.zeros(dim)
    terms = [sigreg_loss(zk, zero, 1.0, cfg, slices=u) for zk in local_views_z]
    acc = terms[0]
    for term in terms[1:]:
        acc = acc + term
    return ad.mul(acc, 1.0 / len(terms))


@dataclass
class ClassMeans:
    """Differentiable per-class means of weak-view projections."""

    classes: np.ndarray   # sorted class ids with >= 1 contributor
    stacked: ad.Tensor    # (C_mu, d_z), row i is the mean of class classes[i]
    row_of: dict

    @property
    def active_count(self) -> int:
        return len(self.classes)


def class_means(z_weak: ad.Tensor, labels: np.ndarray, mask: np.ndarray) -> ClassMeans:
    """Means over contributing samples (mask 1); labeled rows are the
    caller's responsibility to force to mask 1. Classes without any
    contributor are simply absent."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask)
    n = z_weak.shape[0]
    if labels.shape != (n,) or mask.shape != (n,):
        raise ContractError(f"labels/mask must have shape ({n},)")
    if np.any(labels < 0):
        raise ContractError("labels must be non-negative")
    contributing = mask != 0
    classes = np.unique(labels[contributing])
    if classes.size == 0:
        return ClassMeans(classes=classes, stacked=ad.constant(np.zeros((0, z_weak.shape[1]))),
                          row_of={})
    avg = np.zeros((classes.size, n))
    for row, c in enumerate(classes):
        members = contributing & (labels == c)
        avg[row, members] = 1.0 / members.sum()
    stacked = ad.matmul(ad.constant(avg), z_weak)
    return ClassMeans(classes=classes, stacked=stacked,
                      row_of={int(c): i for i, c in enumerate(classes)})


def center(z: ad.Tensor, pseudo: np.ndarray, mask: np.ndarray, means: ClassMeans) -> ad.Tensor:
    """Subtract each confident sample's class mean; leave the rest alone."""
    pseudo = np.asarray(pseudo, dtype=np.int64)
    mask = np.asarray(mask)
    n = z.shape[0]
    if pseudo.shape != (n,) or mask.shape != (n,):
        raise ContractError(f"pseudo/mask must have shape ({n},)")
    if not np.any(mask != 0):
        return z
    select = np.zeros((n, means.active_count))
    for i in np.nonzero(mask != 0)[0]:
        c = int(pseudo[i])
        if c not in means.row_of:
            raise ContractError(f"sample {i} is masked in but class {c} has no mean")
        select[i, means.row_of[c]] = 1.0
    return z - ad.matmul(ad.constant(select), means.stacked)


# epsilon**2 inside the sqrt clamps mean norms at 1e-12 without breaking
# the gradient for exactly-zero means
_NORM_EPS_SQ = 1e-24


def repulsion_loss(means: ClassMeans) -> ad.Tensor:
    """Squared hinge on positive cosine similarity between distinct means.

    Sums over ordered pairs i != j and divides by C_mu(C_mu - 1); zero
    when fewer than two class means are active.
    """
    c_mu = means.active_count
    if c_mu < 2:
        return ad.constant(0.0)
    m = means.stacked
    norms = ad.sqrt(ad.tsum(ad.square(m), axis=1, keepdims=True) + _NORM_EPS_SQ)
    unit = m / norms
    sim = ad.matmul(unit, ad.transpose(unit))
    off_diag = ad.mul(sim, ad.constant(1.0 - np.eye(c_mu)))
    penal = ad.tsum(ad.square(ad.relu(off_diag)))
    return ad.mul(penal, 1.0 / (c_mu * (c_mu - 1)))


def main_phase_term(
    local_views_z: list,
    pseudo: np.ndarray,
    mask: np.ndarray,
    means: ClassMeans,
    sigma_t: float,
    cfg: SigregConfig,
    slices: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> ad.Tensor:
    """Class-centered crop-averaged CF loss at the annealed sigma, plus the
    mean-repulsion penalty."""
    if not local_views_z:
        raise ContractError("need at least one local-view batch")
    dim = local_views_z[0].shape[1]
    u = _resolve_slices(dim, cfg, slices, rng)
    zero = np.zeros(dim)
    acc = None
    for zk in local_views_z:
        term = sigreg_loss(center(zk, pseudo, mask, means), zero, sigma_t, cfg, slices=u)
        acc = term if acc is None else acc + term
    avg = ad.mul(acc, 1.0 / len(local_views_z))
    return avg + repulsion_loss(means)
