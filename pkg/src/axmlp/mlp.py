"""Float MLP training, fixed-point quantization and bit-exact integer inference.

Weight matrices follow the scikit-learn layout ``(n_in, n_out)``; column ``j``
holds the coefficients of neuron ``j``. Hidden layers use ReLU, the output
layer is linear and classification is an argmax with ties going to the
lowest index.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dataset import Dataset, QuantizedDataset, round_half_up

log = logging.getLogger(__name__)

COEFF_MAX = 127
DEFAULT_FRAC_BITS = 7
MAX_HIDDEN = 5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Topology:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2:
            raise ValueError(f"topology needs at least input and output sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")
        if any(s > MAX_HIDDEN for s in sizes[1:-1]):
            warnings.warn(f"hidden layer wider than {MAX_HIDDEN} in {sizes}", stacklevel=2)
        object.__setattr__(self, "sizes", sizes)

    @property
    def layers(self) -> list[tuple[int, int]]:
        return list(zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    def __str__(self):
        return "(" + ",".join(map(str, self.sizes)) + ")"


def mac_count(t: Topology | tuple[int, ...]) -> int:
    sizes = t.sizes if isinstance(t, Topology) else tuple(t)
    return sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))


# ---------------------------------------------------------------------------
# float model


@dataclass
class FloatMLP:
    topology: Topology
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        for (n_in, n_out), w, b in zip(self.topology.layers, self.weights, self.biases):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ValueError(
                    f"layer shapes {w.shape}/{b.shape} do not match topology {self.topology}"
                )

    def logits(self, x: np.ndarray) -> np.ndarray:
        return forward(x, self.weights, self.biases)[-1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def copy(self) -> "FloatMLP":
        return FloatMLP(self.topology, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])


@dataclass
class TrainConfig:
    epochs: int = 300
    lr: float = 0.1
    batch: int = 16
    seed: int = 0


def forward(x, weights, biases) -> list[np.ndarray]:
    """Activations per layer: [x, h1, ..., logits]; ReLU on hidden layers."""
    acts = [x]
    for li, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        if li < len(weights) - 1:
            z = np.maximum(z, 0.0)
        acts.append(z)
    return acts


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), labels] + 1e-300))
    grad = p
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def backward(acts, weights, grad_out) -> tuple[list[np.ndarray], list[np.ndarray]]:
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    g = grad_out
    for li in range(len(weights) - 1, -1, -1):
        gw[li] = acts[li].T @ g
        gb[li] = g.sum(axis=0)
        if li:
            g = (g @ weights[li].T) * (acts[li] > 0)
    return gw, gb


def init_weights(topology: Topology, rng: np.random.Generator):
    weights, biases = [], []
    for n_in, n_out in topology.layers:
        weights.append(rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return weights, biases


def _as_float_inputs(ds) -> np.ndarray:
    if isinstance(ds, QuantizedDataset):
        return ds.dequantized()
    return np.asarray(ds.features, dtype=np.float64)


def train_float(ds: QuantizedDataset | Dataset, topology: Topology,
                cfg: TrainConfig | None = None) -> FloatMLP:
    """Mini-batch SGD on softmax cross-entropy; returns the best-train-accuracy epoch.

    A ``QuantizedDataset`` is trained on its dequantized inputs so that the
    float model sees exactly the values the integer circuit will see.
    """
    cfg = cfg or TrainConfig()
    x = _as_float_inputs(ds)
    y = ds.labels
    if x.shape[1] != topology.n_inputs:
        raise ValueError(f"dataset has {x.shape[1]} features, topology expects {topology.n_inputs}")
    if y.size and y.max() >= topology.n_outputs:
        raise ValueError(f"labels exceed the {topology.n_outputs} outputs of {topology}")
    rng = np.random.default_rng(cfg.seed)
    weights, biases = init_weights(topology, rng)
    best_acc, best = -1.0, None
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            acts = forward(x[idx], weights, biases)
            loss, g = softmax_xent(acts[-1], y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            gw, gb = backward(acts, weights, g)
            for li in range(len(weights)):
                weights[li] -= cfg.lr * gw[li]
                biases[li] -= cfg.lr * gb[li]
        acc = float(np.mean(np.argmax(forward(x, weights, biases)[-1], axis=1) == y))
        if acc > best_acc:
            best_acc = acc
            best = ([w.copy() for w in weights], [b.copy() for b in biases])
    log.debug("float training %s: best train accuracy %.4f", topology, best_acc)
    return FloatMLP(topology, *best)


# ---------------------------------------------------------------------------
# fixed point


def frac_bits_for(max_abs: float) -> int:
    """Largest f with round_half_up(max_abs * 2**f) <= 127."""
    if max_abs == 0.0:
        return DEFAULT_FRAC_BITS
    if not math.isfinite(max_abs):
        raise ValueError("non-finite weight")
    # round_half_up(v) <= 127  <=>  v < 127.5
    f = math.floor(math.log2((COEFF_MAX + 0.5) / max_abs))
    while max_abs * 2.0 ** (f + 1) < COEFF_MAX + 0.5:
        f += 1
    while max_abs * 2.0 ** f >= COEFF_MAX + 0.5:
        f -= 1
    return f


def quantize_weights(w: np.ndarray, frac_bits: int) -> np.ndarray:
    return np.clip(round_half_up(np.asarray(w) * 2.0 ** frac_bits), -COEFF_MAX, COEFF_MAX)


def bitsize(v: int) -> int:
    """Bare-minimum unsigned width of ``v`` (``0`` still needs one wire)."""
    return max(int(v).bit_length(), 1)


@dataclass(frozen=True)
class QuantizedMLP:
    """Integer MLP: coefficients in [-127, 127] with one binary point per layer.

    ``biases[l]`` live at the product scale of layer ``l`` so that every
    neuron sum is a plain integer; hidden activations keep their full
    post-ReLU accumulator width.
    """

    topology: Topology
    coeffs: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    frac_bits: tuple[int, ...]
    input_bits: int = 4

    def __post_init__(self):
        coeffs = tuple(np.asarray(c, dtype=np.int64) for c in self.coeffs)
        biases = tuple(np.asarray(b, dtype=np.int64) for b in self.biases)
        layers = self.topology.layers
        if len(coeffs) != len(layers) or len(biases) != len(layers) or len(self.frac_bits) != len(layers):
            raise ValueError("per-layer arrays do not match topology depth")
        for (n_in, n_out), c, b in zip(layers, coeffs, biases):
            if c.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ValueError(f"layer shapes {c.shape}/{b.shape} do not match {self.topology}")
            if c.size and np.abs(c).max() > COEFF_MAX:
                raise ValueError("coefficient magnitude exceeds 127")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "frac_bits", tuple(int(f) for f in self.frac_bits))

    @cached_property
    def input_maxima(self) -> tuple[np.ndarray, ...]:
        """Largest value each layer input can take over all legal circuit inputs."""
        amax = np.full(self.topology.n_inputs, (1 << self.input_bits) - 1, dtype=np.int64)
        out = [amax]
        for c, b in zip(self.coeffs[:-1], self.biases[:-1]):
            hi = np.clip(c, 0, None).T @ amax + b
            amax = np.maximum(hi, 0)
            out.append(amax)
        return tuple(out)

    @property
    def input_widths(self) -> tuple[int, ...]:
        """Declared bit width of the inputs of each layer."""
        return tuple(bitsize(int(a.max())) for a in self.input_maxima)

    def scales(self) -> list[float]:
        """Real value of one LSB of each layer's neuron sum."""
        s = 1.0 / ((1 << self.input_bits) - 1)
        out = []
        for f in self.frac_bits:
            s = s * 2.0 ** -f
            out.append(s)
        return out

    def dequantized(self) -> FloatMLP:
        """Float model whose logits equal the integer sums times the output scale."""
        weights = [c * 2.0 ** -f for c, f in zip(self.coeffs, self.frac_bits)]
        biases = [b * s for b, s in zip(self.biases, self.scales())]
        return FloatMLP(self.topology, weights, biases)

    def with_coeffs(self, coeffs, float_biases) -> "QuantizedMLP":
        return assemble(self.topology, coeffs, float_biases, self.frac_bits, self.input_bits)


def assemble(topology: Topology, coeffs, float_biases, frac_bits, input_bits: int = 4) -> QuantizedMLP:
    """Build a QuantizedMLP from integer coefficients and real-valued biases.

    Each bias is rounded at its layer's product scale and clamped to the
    layer accumulator range (the largest possible |sum of products|).
    """
    in_scale = 1.0 / ((1 << input_bits) - 1)
    amax = np.full(topology.n_inputs, (1 << input_bits) - 1, dtype=np.int64)
    qbiases = []
    for li, (c, b, f) in enumerate(zip(coeffs, float_biases, frac_bits)):
        c = np.asarray(c, dtype=np.int64)
        scale = in_scale * 2.0 ** -f
        bound = max(int((np.abs(c).T @ amax).max()), 1)
        qb = np.clip(round_half_up(np.asarray(b) / scale), -bound, bound)
        qbiases.append(qb)
        amax = np.maximum(np.clip(c, 0, None).T @ amax + qb, 0)
        in_scale = scale
    return QuantizedMLP(topology, tuple(coeffs), tuple(qbiases), tuple(frac_bits), input_bits)


def quantize(m: FloatMLP, input_bits: int = 4) -> QuantizedMLP:
    """Per-layer binary point from max|W|, 8-bit signed coefficients, biases at product scale."""
    frac_bits, coeffs = [], []
    for w in m.weights:
        if not np.all(np.isfinite(w)):
            raise ValueError("cannot quantize non-finite weights")
        f = frac_bits_for(float(np.abs(w).max()) if w.size else 0.0)
        frac_bits.append(f)
        coeffs.append(quantize_weights(w, f))
    return assemble(m.topology, coeffs, m.biases, frac_bits, input_bits)


# ---------------------------------------------------------------------------
# exact integer inference


@dataclass
class InferenceTrace:
    """Inputs seen by every layer; ``layer_inputs[l]`` has shape (n_samples, n_in_l)."""

    layer_inputs: list[np.ndarray] = field(default_factory=list)
    outputs: np.ndarray | None = None  # output-layer sums


def argmax_lowest(sums: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(sums, axis=-1)


def forward_exact(m: QuantizedMLP, x: np.ndarray) -> InferenceTrace:
    """Batched exact integer forward pass (arbitrary precision guarded by width checks)."""
    a = np.atleast_2d(np.asarray(x, dtype=np.int64))
    if a.shape[1] != m.topology.n_inputs:
        raise ValueError(f"input has {a.shape[1]} features, model expects {m.topology.n_inputs}")
    if a.size and (a.min() < 0 or a.max() >= 1 << m.input_bits):
        raise ValueError(f"inputs must be unsigned {m.input_bits}-bit values")
    for w, (n_in, _) in zip(m.input_widths, m.topology.layers):
        if w + 8 + n_in.bit_length() > 62:
            raise OverflowError("accumulator would exceed int64")
    trace = InferenceTrace()
    for li, (c, b) in enumerate(zip(m.coeffs, m.biases)):
        trace.layer_inputs.append(a)
        s = a @ c + b
        if li < len(m.coeffs) - 1:
            s = np.maximum(s, 0)
        a = s
    trace.outputs = a
    return trace


def infer_exact(m: QuantizedMLP, x) -> tuple[int, InferenceTrace]:
    """Classify one quantized input vector; the trace holds every layer's inputs."""
    trace = forward_exact(m, np.asarray(x, dtype=np.int64)[None, :])
    return int(argmax_lowest(trace.outputs)[0]), trace


def predict_exact(m: QuantizedMLP, x: np.ndarray) -> np.ndarray:
    return argmax_lowest(forward_exact(m, x).outputs)


def accuracy(m: QuantizedMLP, ds: QuantizedDataset) -> float:
    if len(ds) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict_exact(m, ds.features) == ds.labels))
