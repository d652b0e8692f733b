import numpy as np
import pytest

from jepamatch.data import gen_gaussian_mixture
from jepamatch.nets import NetDims, init_params
from jepamatch.sigreg import AnnealSchedule, SigregConfig
from jepamatch.trainer import TrainConfig, stream_seed
from jepamatch.views import AugmentConfig


def tiny_world(seed=0, t_total=12, **train_overrides):
    """A complete miniature training setup that runs in milliseconds."""
    dataset = gen_gaussian_mixture(3, 6, 4, 120, separation=3.0, gamma=2.0,
                                  seed=stream_seed(seed, "dataset"))
    test_split = gen_gaussian_mixture(3, 6, 20, 0, separation=3.0,
                                      seed=stream_seed(seed, "test_split"))
    dims = NetDims(input_dim=6, encoder_widths=(8, 6), class_count=3,
                   proj_hidden=8, proj_out=4)
    params = init_params(stream_seed(seed, "init"), dims)
    defaults = dict(
        t_total=t_total, warmup_fraction=1.0 / 3.0, batch_labeled=4,
        batch_unlabeled=4, learning_rate=0.05, metrics_interval=2, seed=seed,
    )
    defaults.update(train_overrides)
    cfg = TrainConfig(**defaults)
    augment = AugmentConfig(weak_noise_sigma=0.1, strong_noise_sigma=0.4,
                            strong_dropout_frac=0.25, local_crops=2)
    sigreg_cfg = SigregConfig(num_slices=6, num_knots=5, t_max=4.0)
    anneal = AnnealSchedule(t_warm=cfg.t_warm, t_total=cfg.t_total)
    return dataset, test_split, params, cfg, augment, sigreg_cfg, anneal


@pytest.fixture
def world():
    return tiny_world()
