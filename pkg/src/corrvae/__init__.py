"""Correlation-matrix generative modelling and credit portfolio VaR sensitivity.

The package is organised as a pipeline:

    corrdata         return panels, rolling Pearson correlation matrices,
                     synthetic market generator
    linalg           Jacobi eigensolver, spectral factor roots, repair of
                     arbitrary matrices into valid correlation matrices
    neural           minimal dense-network engine (forward/backward/Adam,
                     weight persistence)
    autoencoders     VAE / AE / linear-AE training over flattened matrices,
                     PCA oracle
    latent_analysis  eigen features of the latent space, sampling grids,
                     synthetic matrix generation
    stylized_facts   validation of correlation matrices against stylized
                     facts (pairwise shift, Marchenko-Pastur, Perron,
                     hierarchy, MST)
    creditrisk       multi-factor Vasicek Monte Carlo engine, closed-form
                     single-factor oracle, stratified sampling
    sensitivity      VaR surface over the latent space, bootstrapped latent
                     dynamics, VaR distribution
    cli              end-to-end pipeline commands
"""

from .errors import ConfigError, CorrVaeError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "CorrVaeError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "__version__",
]
