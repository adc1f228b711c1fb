import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxcodec.codec.model import VideoCodec  # noqa: E402
from ctxcodec.config import ModelConfig, TrainConfig  # noqa: E402

TINY = dict(ctx_channels=4, feat_channels=4, latent_channels=4, motion_channels=4, hidden_channels=8,
            flow_hidden=8)


def tiny_model_config(**changes) -> ModelConfig:
    return ModelConfig(**{**TINY, **changes})


def tiny_train_config(**changes) -> TrainConfig:
    base = dict(TINY, steps=4, frames_per_clip=3, crop_size=32, batch_size=2, warmup_steps=0,
                learning_rate=1e-3)
    base.update(changes)
    return TrainConfig(**base)


def randomise_heads(model: VideoCodec, seed: int, std: float = 0.05) -> VideoCodec:
    """Replace the zero-initialised output convs so every path does something."""
    rng = np.random.default_rng(seed)
    for name, p in model.named_parameters():
        if not p.data.any():
            p.data = rng.normal(0, std, p.shape).astype(p.dtype)
    return model


@pytest.fixture(scope="session")
def toy_model() -> VideoCodec:
    """A briefly trained full model (orientation + full compensation)."""
    from ctxcodec.training import train_cascaded

    config = tiny_train_config(steps=40, warmup_steps=20, flow_pretrain_steps=150, seed=3)
    return train_cascaded(config).model
