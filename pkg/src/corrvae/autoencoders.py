"""VAE, deterministic AE, and linear AE over flattened correlation matrices.

The input of every model is the full flattened M x M matrix (including
the redundant lower triangle and unit diagonal). The VAE encoder ends in
4 nodes read as (mu_1, mu_2, logvar_1, logvar_2); its decoder maps a 2-D
latent sample back to M^2 raw outputs, which callers pass through
`linalg.repair_to_correlation` before use.

Per-sample losses:

    mse  = sum of squared reconstruction errors over all M^2 entries
    kl   = 0.5 * sum_k (mu_k^2 + sigma_k^2 - 1 - log sigma_k^2)
    loss = mse + beta * kl

Training is single-threaded and deterministic for a fixed seed: init,
shuffle order, and reparameterization noise all come from named
substreams of the config seed.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import neural
from .corrdata import CorrelationMatrix, MatrixPanel
from .errors import DataError, NumericalError
from .util import substream, write_csv, write_json

LATENT_DIM = 2


@dataclass
class TrainConfig:
    epochs: int = 80
    learning_rate: float = 1e-4
    beta: float = 1.0
    batch_size: int = 16
    seed: int = 0
    hidden_sizes: tuple = (512, 250)
    val_fraction: float = 0.30
    latent_dim: int = 2  # linear AE only; VAE/AE bottleneck is fixed at 2


@dataclass
class VaeModel:
    encoder: neural.MlpParams
    decoder: neural.MlpParams
    beta: float

    @property
    def matrix_dim(self):
        return int(round(math.sqrt(self.decoder.spec.layer_sizes[-1])))


@dataclass
class AeModel:
    encoder: neural.MlpParams
    decoder: neural.MlpParams

    @property
    def matrix_dim(self):
        return int(round(math.sqrt(self.decoder.spec.layer_sizes[-1])))


@dataclass
class LinearModel:
    encoder: neural.MlpParams
    decoder: neural.MlpParams

    @property
    def latent_dim(self):
        return self.encoder.spec.layer_sizes[-1]

    @property
    def matrix_dim(self):
        return int(round(math.sqrt(self.decoder.spec.layer_sizes[-1])))


@dataclass
class LatentEncoding:
    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    train_kl: float
    val_mse: float
    val_kl: float


@dataclass
class TrainReport:
    kind: str
    seed: int
    epochs: list
    train_indices: list
    val_indices: list

    def final(self):
        return self.epochs[-1]


# ---------------------------------------------------------------------------
# dataset handling
# ---------------------------------------------------------------------------

def flatten_dataset(data):
    """MatrixPanel, list of matrices, or array -> (n, M^2) float array."""
    if isinstance(data, MatrixPanel):
        return data.flat()
    if isinstance(data, np.ndarray):
        if data.ndim == 3:
            return data.reshape(data.shape[0], -1)
        if data.ndim == 2:
            return data
        raise DataError(f"cannot interpret dataset of shape {data.shape}")
    rows = []
    for item in data:
        rows.append(item.flat() if isinstance(item, CorrelationMatrix) else np.ravel(item))
    return np.asarray(rows, dtype=float)


def split_dataset(data, val_fraction, seed):
    """Deterministic disjoint exhaustive split into train/validation indices.

    The training side takes floor(n * (1 - val_fraction)) items so that a
    206-matrix panel at 30% validation yields the 144/62 split.
    """
    if not 0.0 < val_fraction < 1.0:
        raise DataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = data if isinstance(data, int) else len(data)
    if n < 2:
        raise DataError(f"need at least 2 matrices to split, got {n}")
    n_train = int(math.floor(n * (1.0 - val_fraction)))
    n_train = min(max(n_train, 1), n - 1)
    perm = substream(seed, "split").permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])
    return train_idx, val_idx


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def kl_divergence(mu, sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)) for one sample; >= 0, zero iff
    mu = 0 and sigma = 1."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if (sigma <= 0).any():
        raise DataError("sigma must be strictly positive")
    return float(0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * np.log(sigma)).sum())


def vae_loss(x, reconstruction, enc, beta):
    """Per-sample (total, mse, kl) with mse summed over all entries."""
    x = np.ravel(np.asarray(x, dtype=float))
    rec = np.ravel(np.asarray(reconstruction, dtype=float))
    if x.shape != rec.shape:
        raise DataError(f"input and reconstruction differ: {x.shape} vs {rec.shape}")
    if not (np.isfinite(x).all() and np.isfinite(rec).all()):
        raise DataError("non-finite values in loss inputs")
    diff = x - rec
    mse = float(diff @ diff)
    kl = kl_divergence(enc.mu, enc.sigma)
    return mse + beta * kl, mse, kl


def _kl_from_logvar(mu, logvar):
    # expm1 keeps the per-term value non-negative near the optimum
    return 0.5 * (mu * mu + np.expm1(logvar) - logvar).sum(axis=1)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def _check_dataset(x):
    if x.shape[0] < 2:
        raise DataError("training needs at least 2 samples")
    if not np.isfinite(x).all():
        raise DataError("training data has non-finite values")


def _eval_vae(model, x):
    enc_out, _ = neural.forward(model.encoder, x)
    mu, logvar = enc_out[:, :LATENT_DIM], enc_out[:, LATENT_DIM:]
    rec, _ = neural.forward(model.decoder, mu)
    mse = ((x - rec) ** 2).sum(axis=1)
    kl = _kl_from_logvar(mu, logvar)
    return float(mse.mean()), float(kl.mean())


def _eval_plain(model, x):
    z, _ = neural.forward(model.encoder, x)
    rec, _ = neural.forward(model.decoder, z)
    return float(((x - rec) ** 2).sum(axis=1).mean()), 0.0


def train_vae(dataset, config=None):
    """Train the VAE; returns (VaeModel, TrainReport).

    Defaults: 80 epochs of Adam at 1e-4, mini-batches of 16, 30%
    validation split, beta = 1.
    """
    config = config or TrainConfig()
    x = flatten_dataset(dataset)
    _check_dataset(x)
    d = x.shape[1]
    train_idx, val_idx = split_dataset(x.shape[0], config.val_fraction, config.seed)
    x_train, x_val = x[train_idx], x[val_idx]

    hidden = tuple(config.hidden_sizes)
    enc_spec = neural.MlpSpec((d,) + hidden + (2 * LATENT_DIM,))
    dec_spec = neural.MlpSpec((LATENT_DIM,) + hidden[::-1] + (d,))
    encoder = neural.init_params(enc_spec, substream(config.seed, "init-encoder"))
    decoder = neural.init_params(dec_spec, substream(config.seed, "init-decoder"))
    opt_enc = neural.init_adam(encoder, config.learning_rate)
    opt_dec = neural.init_adam(decoder, config.learning_rate)
    shuffle_rng = substream(config.seed, "shuffle")
    noise_rng = substream(config.seed, "reparam")
    beta = float(config.beta)
    model = VaeModel(encoder=encoder, decoder=decoder, beta=beta)

    stats = []
    n_train = x_train.shape[0]
    for epoch in range(config.epochs):
        mse_sum = 0.0
        kl_sum = 0.0
        for idx in _batches(n_train, config.batch_size, shuffle_rng):
            xb = x_train[idx]
            nb = xb.shape[0]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    enc_out, enc_tape = neural.forward(encoder, xb)
                    mu, logvar = enc_out[:, :LATENT_DIM], enc_out[:, LATENT_DIM:]
                    sigma = np.exp(0.5 * logvar)
                    eps = noise_rng.standard_normal((nb, LATENT_DIM))
                    z = mu + sigma * eps
                    rec, dec_tape = neural.forward(decoder, z)
                    resid = rec - xb
                    mse_b = (resid * resid).sum(axis=1)
                    kl_b = _kl_from_logvar(mu, logvar)
            except NumericalError as exc:
                raise NumericalError(f"training diverged at epoch {epoch}: {exc}") from None
            if not (np.isfinite(mse_b).all() and np.isfinite(kl_b).all()):
                raise NumericalError(f"training diverged at epoch {epoch}: non-finite loss")
            mse_sum += float(mse_b.sum())
            kl_sum += float(kl_b.sum())

            dec_grads, dz = neural.backward(dec_tape, 2.0 * resid / nb)
            d_mu = dz + beta * mu / nb
            d_logvar = dz * (0.5 * sigma * eps) + beta * 0.5 * np.expm1(logvar) / nb
            enc_grads, _ = neural.backward(enc_tape, np.hstack([d_mu, d_logvar]))
            neural.adam_step(decoder, dec_grads, opt_dec)
            neural.adam_step(encoder, enc_grads, opt_enc)
        val_mse, val_kl = _eval_vae(model, x_val)
        stats.append(
            EpochStats(epoch, mse_sum / n_train, kl_sum / n_train, val_mse, val_kl)
        )
    report = TrainReport(
        kind="vae",
        seed=config.seed,
        epochs=stats,
        train_indices=train_idx.tolist(),
        val_indices=val_idx.tolist(),
    )
    return model, report


def _train_deterministic(kind, dataset, config, enc_spec_fn):
    """Shared loop for the plain and linear autoencoders (MSE-only loss)."""
    x = flatten_dataset(dataset)
    _check_dataset(x)
    d = x.shape[1]
    train_idx, val_idx = split_dataset(x.shape[0], config.val_fraction, config.seed)
    x_train, x_val = x[train_idx], x[val_idx]

    enc_spec, dec_spec = enc_spec_fn(d)
    encoder = neural.init_params(enc_spec, substream(config.seed, "init-encoder"))
    decoder = neural.init_params(dec_spec, substream(config.seed, "init-decoder"))
    opt_enc = neural.init_adam(encoder, config.learning_rate)
    opt_dec = neural.init_adam(decoder, config.learning_rate)
    shuffle_rng = substream(config.seed, "shuffle")
    model_cls = AeModel if kind == "ae" else LinearModel
    model = model_cls(encoder=encoder, decoder=decoder)

    stats = []
    n_train = x_train.shape[0]
    for epoch in range(config.epochs):
        mse_sum = 0.0
        for idx in _batches(n_train, config.batch_size, shuffle_rng):
            xb = x_train[idx]
            nb = xb.shape[0]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    z, enc_tape = neural.forward(encoder, xb)
                    rec, dec_tape = neural.forward(decoder, z)
                    resid = rec - xb
                    mse_b = (resid * resid).sum(axis=1)
            except NumericalError as exc:
                raise NumericalError(f"training diverged at epoch {epoch}: {exc}") from None
            if not np.isfinite(mse_b).all():
                raise NumericalError(f"training diverged at epoch {epoch}: non-finite loss")
            mse_sum += float(mse_b.sum())
            dec_grads, dz = neural.backward(dec_tape, 2.0 * resid / nb)
            enc_grads, _ = neural.backward(enc_tape, dz)
            neural.adam_step(decoder, dec_grads, opt_dec)
            neural.adam_step(encoder, enc_grads, opt_enc)
        val_mse, _ = _eval_plain(model, x_val)
        stats.append(EpochStats(epoch, mse_sum / n_train, 0.0, val_mse, 0.0))
    report = TrainReport(
        kind=kind,
        seed=config.seed,
        epochs=stats,
        train_indices=train_idx.tolist(),
        val_indices=val_idx.tolist(),
    )
    return model, report


def train_ae(dataset, config=None):
    """Deterministic autoencoder: same shapes as the VAE, bottleneck of 2,
    loss MSE only."""
    config = config or TrainConfig()
    hidden = tuple(config.hidden_sizes)

    def specs(d):
        return (
            neural.MlpSpec((d,) + hidden + (LATENT_DIM,)),
            neural.MlpSpec((LATENT_DIM,) + hidden[::-1] + (d,)),
        )

    return _train_deterministic("ae", dataset, config, specs)


def train_linear_ae(dataset, config=None):
    """Single linear layer each way; converges toward the rank-k PCA map."""
    config = config or TrainConfig()
    k = int(config.latent_dim)
    if k not in (2, 3):
        raise DataError(f"linear latent_dim must be 2 or 3, got {k}")

    def specs(d):
        return (
            neural.MlpSpec((d, k), output_activation="linear"),
            neural.MlpSpec((k, d), output_activation="linear"),
        )

    return _train_deterministic("linear", dataset, config, specs)


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------

def _as_flat_input(model, matrix):
    x = matrix.flat() if isinstance(matrix, CorrelationMatrix) else np.ravel(np.asarray(matrix, dtype=float))
    want = model.encoder.spec.layer_sizes[0]
    if x.shape[0] != want:
        raise DataError(f"matrix has {x.shape[0]} entries, encoder expects {want}")
    return x


def encode(model, matrix):
    """Deterministic encoding of one matrix: returns (mu, sigma), no sampling."""
    x = _as_flat_input(model, matrix)
    out, _ = neural.forward(model.encoder, x)
    mu, logvar = out[:LATENT_DIM], out[LATENT_DIM:]
    return LatentEncoding(mu=mu.copy(), sigma=np.exp(0.5 * logvar))


def bottleneck(model, matrix):
    """2-D (or k-D) code of one matrix, for any of the three model kinds."""
    if isinstance(model, VaeModel):
        return encode(model, matrix).mu
    x = _as_flat_input(model, matrix)
    out, _ = neural.forward(model.encoder, x)
    return out


def decode(model, z):
    """Decode a latent point to a raw M x M matrix (repair it downstream)."""
    z = np.asarray(z, dtype=float)
    if not np.isfinite(z).all():
        raise DataError("latent point has non-finite entries")
    want = model.decoder.spec.layer_sizes[0]
    if z.shape != (want,):
        raise DataError(f"latent point shape {z.shape} does not match decoder input {want}")
    out, _ = neural.forward(model.decoder, z)
    m = int(round(math.sqrt(out.shape[0])))
    return out.reshape(m, m)


# ---------------------------------------------------------------------------
# PCA oracle
# ---------------------------------------------------------------------------

def pca_oracle(data, k):
    """Exact optimal rank-k linear reconstruction MSE (same per-sample
    sum-of-squares scale as the training losses).

    k = 0 is the variance of the data about its mean; eigenvalues below
    1e-12 are treated as zero rank.
    """
    x = flatten_dataset(data)
    n, d = x.shape
    if k < 0 or k > d:
        raise DataError(f"k must be in [0, {d}], got {k}")
    xc = x - x.mean(axis=0)
    if k == 0:
        return float((xc * xc).sum(axis=1).mean())
    cov = (xc.T @ xc) / n
    # LAPACK here on purpose: the oracle stays independent of the in-repo
    # Jacobi solver used by the training path's eigen features.
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    rank = min(k, int((eigvals > 1e-12).sum()))
    basis = eigvecs[:, :rank]
    proj = xc @ basis
    resid = xc - proj @ basis.T
    return float((resid * resid).sum(axis=1).mean())


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_MODEL_KIND = {"vae": VaeModel, "ae": AeModel, "linear": LinearModel}


def save_model(model, out_dir, metadata=None):
    """Model bundle: encoder/decoder weight files plus JSON metadata."""
    os.makedirs(out_dir, exist_ok=True)
    kind = next(k for k, cls in _MODEL_KIND.items() if isinstance(model, cls))
    neural.save_weights(model.encoder, os.path.join(out_dir, "encoder.mlpw"))
    neural.save_weights(model.decoder, os.path.join(out_dir, "decoder.mlpw"))
    meta = dict(metadata or {})
    meta["kind"] = kind
    if isinstance(model, VaeModel):
        meta["beta"] = model.beta
    write_json(os.path.join(out_dir, "metadata.json"), meta)
    return out_dir


def load_model(model_dir):
    meta_path = os.path.join(model_dir, "metadata.json")
    if not os.path.exists(meta_path):
        raise DataError(f"model metadata not found: {meta_path}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    encoder = neural.load_weights(os.path.join(model_dir, "encoder.mlpw"))
    decoder = neural.load_weights(os.path.join(model_dir, "decoder.mlpw"))
    kind = meta.get("kind")
    if kind == "vae":
        model = VaeModel(encoder=encoder, decoder=decoder, beta=float(meta.get("beta", 1.0)))
    elif kind == "ae":
        model = AeModel(encoder=encoder, decoder=decoder)
    elif kind == "linear":
        model = LinearModel(encoder=encoder, decoder=decoder)
    else:
        raise DataError(f"unknown model kind in metadata: {kind!r}")
    return model, meta


def write_report_csv(report, path):
    rows = [
        (s.epoch, s.train_mse, s.train_kl, s.val_mse, s.val_kl) for s in report.epochs
    ]
    write_csv(path, ["epoch", "train_mse", "train_kl", "val_mse", "val_kl"], rows)
    return path
