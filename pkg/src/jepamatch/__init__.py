"""Semi-supervised learning laboratory.

Combines dynamic-threshold pseudo-labeling with geometric shaping of a
projection space: embeddings are pushed toward per-class isotropic
Gaussians via a sketched characteristic-function loss, with annealed
target spread and a repulsion penalty between class means. Everything is
numpy + a small built-in reverse-mode tape, so every loss is checkable
against brute-force references and finite differences.
"""

from . import autodiff, curriculum, data, nets, sigreg, trainer, verify, views
from .autodiff import Tape, Tensor, backward
from .curriculum import PseudoBatchResult, ThresholdState, pseudo_label
from .data import Dataset, gen_gaussian_mixture, gen_rings, load_raw, save_raw
from .nets import ModelParams, NetDims, init_params, load_checkpoint, save_checkpoint
from .sigreg import (
    AnnealSchedule,
    SigregConfig,
    anneal_sigma,
    class_means,
    center,
    global_warmup_term,
    main_phase_term,
    repulsion_loss,
    sigreg_loss,
)
from .trainer import TrainConfig, Trainer, evaluate, prediction_loss, train_run
from .views import AugmentConfig, ViewSet, make_views, make_weak_only

__version__ = "0.1.0"
