import numpy as np
import pytest

from semcom.data import generate_synthetic
from semcom.decoder import train_decoder
from semcom.pipeline import SemanticPipeline
from semcom.vit import VitConfig, train_encoder


@pytest.fixture(scope="session")
def toy_cfg():
    return VitConfig()


@pytest.fixture(scope="session")
def toy_train():
    return generate_synthetic(4, 32, seed=0)


@pytest.fixture(scope="session")
def toy_test():
    return generate_synthetic(4, 16, seed=10_000, split="test")


@pytest.fixture(scope="session")
def trained_encoder(toy_train, toy_cfg):
    model, log = train_encoder(toy_train, toy_cfg, epochs=30, seed=0)
    return model


@pytest.fixture(scope="session")
def short_decoder(toy_train, trained_encoder):
    """A briefly trained r=0.5 decoder; enough for pipeline plumbing tests."""
    decoder, _ = train_decoder(toy_train, trained_encoder, 0.5, 1.0, epochs=3, seed=0)
    return decoder


@pytest.fixture(scope="session")
def pipeline(trained_encoder, short_decoder):
    return SemanticPipeline(trained_encoder, short_decoder)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
