import numpy as np
import pytest

from corrvae import autoencoders, corrdata


@pytest.fixture(scope="session")
def small_panel():
    """61 matrices of dimension 10 from the regime-switching generator."""
    cfg = corrdata.default_market_config(n_assets=10, n_months=180)
    returns = corrdata.generate_synthetic_market(cfg, seed=11)
    return corrdata.rolling_correlations(returns, window=60, stride=2)


@pytest.fixture(scope="session")
def small_vae(small_panel):
    """Quick VAE on the small panel, shared across latent/sensitivity tests."""
    config = autoencoders.TrainConfig(
        epochs=30, learning_rate=1e-3, hidden_sizes=(64, 32), seed=5
    )
    model, report = autoencoders.train_vae(small_panel, config)
    return model, report


def random_correlation(rng, m):
    """Sample correlation of random factor-structured data (valid, generic)."""
    load = rng.uniform(0.3, 0.8, size=m)
    data = np.outer(rng.standard_normal(400), load)
    data += rng.standard_normal((400, m)) * np.sqrt(1 - load**2)
    return corrdata.pearson_correlation(data)
