import numpy as np
import pytest
import torch

from teformer.config import ModelConfig, tiny_model


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    return tiny_model()


@pytest.fixture
def gradcheck_cfg() -> ModelConfig:
    # fp64 finite-difference checks want the smallest model that still owns
    # every parameter family
    return tiny_model()
