"""Minimal dense-network engine: forward/backward passes, Adam, persistence.

Everything is plain float64 numpy. A forward call records the activation
tape needed to replay exact gradients; `backward` returns parameter
gradients in an `MlpParams`-shaped container plus the gradient w.r.t. the
input (needed to chain decoder gradients through the latent sample into
the encoder).

Weight files are a small self-describing binary container:

    magic b"MLPW" | uint32 LE header length | UTF-8 JSON header |
    float64 LE parameter blocks, in header order

The header carries the layer sizes, activations, and the shape of every
block, so a load can verify consistency before touching the payload.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError
from .util import atomic_write_bytes

_MAGIC = b"MLPW"
_FORMAT_VERSION = 1

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise DataError("network needs at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise DataError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise DataError(f"unknown hidden activation: {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise DataError(f"unknown output activation: {self.output_activation!r}")

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1


@dataclass
class MlpParams:
    """Per-layer weights (n_in, n_out) and biases (n_out,).

    Also the container for gradients, which by construction share these
    shapes.
    """

    spec: MlpSpec
    weights: list
    biases: list

    def validate(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise DataError("parameter count does not match spec depth")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise DataError(f"layer {i} parameter shapes inconsistent with spec")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DataError(f"layer {i} has non-finite parameters")
        return self

    def copy(self):
        return MlpParams(
            spec=self.spec,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class ForwardTape:
    params: MlpParams
    inputs: list      # activation entering each layer; inputs[0] is x
    pre_acts: list    # z_l = a_{l-1} W_l + b_l
    output: np.ndarray
    batched: bool


def init_params(spec, rng):
    """He-style uniform init scaled by fan-in; biases zero."""
    weights, biases = [], []
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(spec=spec, weights=weights, biases=biases)


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(name, z):
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


def _layer_activation(spec, layer):
    return spec.output_activation if layer == spec.n_layers - 1 else spec.hidden_activation


def forward(params, x):
    """Run the network; returns (output, tape) with the tape replayable."""
    spec = params.spec
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    a = x if batched else x.reshape(1, -1)
    if a.shape[1] != spec.layer_sizes[0]:
        raise DataError(
            f"input length {a.shape[1]} does not match first layer size "
            f"{spec.layer_sizes[0]}"
        )
    inputs, pre_acts = [], []
    # overflow surfaces as the explicit non-finite check below
    with np.errstate(over="ignore", invalid="ignore"):
        for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
            inputs.append(a)
            z = a @ w + b
            a = _activate(_layer_activation(spec, layer), z)
            if not np.isfinite(a).all():
                raise NumericalError(f"non-finite activation at layer {layer}")
            pre_acts.append(z)
    out = a if batched else a[0]
    return out, ForwardTape(params=params, inputs=inputs, pre_acts=pre_acts,
                            output=out, batched=batched)


def backward(tape, loss_gradient):
    """Reverse-mode gradients from a forward tape.

    `loss_gradient` is dLoss/dOutput with the output's shape. Returns
    (gradients as MlpParams, dLoss/dInput).
    """
    params = tape.params
    spec = params.spec
    g = np.asarray(loss_gradient, dtype=float)
    want = tape.output.shape
    if g.shape != want:
        raise DataError(
            f"loss gradient shape {g.shape} does not match tape output {want}"
        )
    delta = g if tape.batched else g.reshape(1, -1)
    grad_w = [None] * spec.n_layers
    grad_b = [None] * spec.n_layers
    for layer in range(spec.n_layers - 1, -1, -1):
        delta = delta * _activate_grad(_layer_activation(spec, layer), tape.pre_acts[layer])
        grad_w[layer] = tape.inputs[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer].T
    dx = delta if tape.batched else delta[0]
    grads = MlpParams(spec=spec, weights=grad_w, biases=grad_b)
    return grads, dx


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_weights: list = field(default_factory=list)
    v_weights: list = field(default_factory=list)
    m_biases: list = field(default_factory=list)
    v_biases: list = field(default_factory=list)


def init_adam(params, learning_rate):
    return AdamState(
        learning_rate=float(learning_rate),
        m_weights=[np.zeros_like(w) for w in params.weights],
        v_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_biases=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(params, grads, state):
    """Bias-corrected Adam update, applied in place; returns (params, state)."""
    if len(grads.weights) != len(params.weights):
        raise DataError("gradient layer count does not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    scale = state.learning_rate / corr1
    pairs = (
        (params.weights, grads.weights, state.m_weights, state.v_weights),
        (params.biases, grads.biases, state.m_biases, state.v_biases),
    )
    for values, gs, ms, vs in pairs:
        for value, g, m, v in zip(values, gs, ms, vs):
            if g.shape != value.shape:
                raise DataError("gradient shape does not match parameter shape")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            value -= scale * m / (np.sqrt(v / corr2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_weights(params, path):
    """Write the self-describing binary weight container (bit-exact)."""
    params.validate()
    arrays = []
    blocks = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays.append({"name": f"w{i}", "shape": list(w.shape)})
        blocks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        arrays.append({"name": f"b{i}", "shape": list(b.shape)})
        blocks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    header = {
        "format_version": _FORMAT_VERSION,
        "layer_sizes": list(params.spec.layer_sizes),
        "hidden_activation": params.spec.hidden_activation,
        "output_activation": params.spec.output_activation,
        "arrays": arrays,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = _MAGIC + struct.pack("<I", len(head)) + head + b"".join(blocks)
    atomic_write_bytes(path, payload)
    return path


def load_weights(path):
    """Read a weight container back into MlpParams (round trip bit-exact)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read weight file {path}: {exc}") from None
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise DataError(f"not a weight file: {path}")
    head_len = struct.unpack("<I", raw[4:8])[0]
    if len(raw) < 8 + head_len:
        raise DataError(f"truncated weight file header: {path}")
    try:
        header = json.loads(raw[8 : 8 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt weight file header: {exc}") from None
    if header.get("format_version") != _FORMAT_VERSION:
        raise DataError(f"unsupported weight format version: {header.get('format_version')}")
    spec = MlpSpec(
        layer_sizes=tuple(header["layer_sizes"]),
        hidden_activation=header["hidden_activation"],
        output_activation=header["output_activation"],
    )
    offset = 8 + head_len
    values = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise DataError(f"truncated weight file: block {entry['name']} incomplete")
        values[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise DataError("trailing bytes after weight blocks")
    weights, biases = [], []
    for i in range(spec.n_layers):
        if f"w{i}" not in values or f"b{i}" not in values:
            raise DataError(f"weight file missing layer {i} blocks")
        weights.append(values[f"w{i}"])
        biases.append(values[f"b{i}"])
    params = MlpParams(spec=spec, weights=weights, biases=biases)
    return params.validate()
