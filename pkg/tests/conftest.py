import numpy as np
import pytest

from jessi.tensor import Parameter, RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


def param(rng, *shape, scale=1.0):
    """float64 Parameter with standard-normal entries."""
    return Parameter(rng.normal(0.0, scale, shape).astype(np.float64))


@pytest.fixture
def make_param(rng):
    return lambda *shape, scale=1.0: param(rng, *shape, scale=scale)


def tiny_config(**overrides):
    """Desk-scale-minus architecture for fast structural tests."""
    from jessi.encoders import ModelConfig

    base = dict(vocab_size=12, dim_g=4, dim_c=3, filter_sizes=(3, 5), filter_channels=3,
                attention_width=5, sru_hidden=3, sru_layers=2, d_model=8, n_layers=1, n_heads=2,
                d_ff=8, max_len=16, mlp_hidden=6, dropout=0.0)
    base.update(overrides)
    return ModelConfig(**base)


def pad_batch(rows, extra=0):
    """Left-aligned id matrix plus mask; ``extra`` adds trailing padding columns."""
    T = max(len(r) for r in rows) + extra
    ids = np.zeros((len(rows), T), dtype=np.int64)
    mask = np.zeros((len(rows), T), dtype=np.float64)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1
    return ids, mask
