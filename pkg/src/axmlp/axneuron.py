"""Approximate bespoke neuron: sign-split product trees, 1's-complement negation
and significance-driven MSB truncation of summands.

A neuron computes ``S' = S_p + ~S_n``. Positive-coefficient products (and a
positive bias) accumulate into ``S_p``; magnitudes of negative-coefficient
products (and of a negative bias) into ``S_n``. ``~`` is bitwise NOT of the
zero-extended ``S_n``, i.e. ``-S_n - 1``. Products whose significance does not
exceed the layer threshold keep only their ``k`` most significant bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mlp import QuantizedMLP, argmax_lowest, bitsize, forward_exact

SIG_EPS = 1e-9


@dataclass(frozen=True)
class AxConfig:
    """Global kept-MSB count ``k`` and one significance threshold per layer.

    ``None`` for a layer means no product of that layer is truncated.
    """

    k: int
    g_per_layer: tuple[float | None, ...]

    def __post_init__(self):
        if not 1 <= int(self.k) <= 3:
            raise ValueError(f"k must be in [1, 3], got {self.k}")
        g = tuple(None if v is None else float(v) for v in self.g_per_layer)
        if any(v is not None and not v >= 0.0 for v in g):
            raise ValueError(f"thresholds must be >= 0 or None, got {g}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "g_per_layer", g)

    @classmethod
    def exact(cls, n_layers: int, k: int = 3) -> "AxConfig":
        return cls(k, (None,) * n_layers)

    @property
    def is_exact(self) -> bool:
        return all(g is None for g in self.g_per_layer)

    def to_dict(self) -> dict:
        return {"k": self.k, "g_per_layer": list(self.g_per_layer)}

    @classmethod
    def from_dict(cls, d: dict) -> "AxConfig":
        return cls(d["k"], tuple(d["g_per_layer"]))


@dataclass(frozen=True)
class SignificanceMap:
    """Per-layer input means ``E[a_i]`` and per-product significance ``G``.

    ``g[l]`` has the coefficient layout ``(n_in, n_out)``; entries for zero
    coefficients are 0 and never used.
    """

    means: tuple[np.ndarray, ...]
    g: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {"means": [m.tolist() for m in self.means], "g": [g.tolist() for g in self.g]}

    @classmethod
    def from_dict(cls, d: dict) -> "SignificanceMap":
        return cls(tuple(np.asarray(m, dtype=np.float64) for m in d["means"]),
                   tuple(np.asarray(g, dtype=np.float64) for g in d["g"]))

    def covers(self, m: QuantizedMLP) -> bool:
        return len(self.g) == len(m.coeffs) and all(
            g.shape == c.shape for g, c in zip(self.g, m.coeffs))


def capture_means(m: QuantizedMLP, ds) -> tuple[np.ndarray, ...]:
    """Mean of every layer input over ``ds`` (exact post-ReLU values for hidden layers)."""
    if len(ds) == 0:
        raise ValueError("cannot capture input statistics from an empty dataset")
    trace = forward_exact(m, ds.features)
    return tuple(a.mean(axis=0) for a in trace.layer_inputs)


def significance(w, means) -> np.ndarray:
    """G_i = |w_i E[a_i] / sum_j(E[a_j] w_j)| for one neuron.

    When the signed denominator cancels to (nearly) zero the sum of absolute
    contributions is used instead; if that is zero too every G_i is 0.
    """
    w = np.asarray(w, dtype=np.float64)
    contrib = w * np.asarray(means, dtype=np.float64)
    denom = contrib.sum()
    if abs(denom) < SIG_EPS:
        denom = np.abs(contrib).sum()
        if denom == 0.0:
            return np.zeros_like(contrib)
    return np.abs(contrib / denom)


def build_significance(m: QuantizedMLP, ds) -> SignificanceMap:
    means = capture_means(m, ds)
    gs = []
    for c, mu in zip(m.coeffs, means):
        g = np.zeros(c.shape)
        for j in range(c.shape[1]):
            g[:, j] = significance(c[:, j], mu)
        g[c == 0] = 0.0
        gs.append(g)
    return SignificanceMap(means, tuple(gs))


def truncate_product(p: int, n: int, k: int) -> int:
    """Keep bits [n-1 : n-k] of the n-bit product ``p``, scaled back into place."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if p < 0 or p >= 1 << n:
        raise ValueError(f"product {p} does not fit in {n} bits")
    if k >= n:
        return p
    s = n - k
    return (p >> s) << s


def product_widths(coeffs: np.ndarray, input_width: int) -> np.ndarray:
    """n_i = bitsize(|w_i|) + bitsize(a_i); the input width is the declared layer width."""
    mags = np.abs(coeffs)
    return np.where(mags > 0, _bit_length(mags), 0) + input_width


def _bit_length(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    nz = x > 0
    out[nz] = np.floor(np.log2(x[nz])).astype(np.int64) + 1
    return out


def truncation_masks(m: QuantizedMLP, sig: SignificanceMap | None,
                     ax: AxConfig | None) -> list[np.ndarray]:
    """Boolean (n_in, n_out) per layer: which products are approximated."""
    masks = []
    for li, c in enumerate(m.coeffs):
        g_thr = None if ax is None else ax.g_per_layer[li]
        if g_thr is None:
            masks.append(np.zeros(c.shape, dtype=bool))
            continue
        if sig is None:
            raise ValueError("a truncating configuration needs a significance map")
        masks.append((c != 0) & (sig.g[li] <= g_thr))
    return masks


def _check_ax(m: QuantizedMLP, sig, ax):
    if ax is not None and len(ax.g_per_layer) != len(m.coeffs):
        raise ValueError(
            f"config has {len(ax.g_per_layer)} thresholds, model has {len(m.coeffs)} layers")
    if sig is not None and not sig.covers(m):
        raise ValueError("significance map does not cover the model")


def ax_neuron_sum(w, a, bias: int, g_values, threshold: float | None, k: int,
                  input_width: int) -> int:
    """Approximate sum of one neuron for one input vector (scalar reference path)."""
    s_p = max(int(bias), 0)
    s_n = max(-int(bias), 0)
    has_neg = bias < 0
    for wi, ai, gi in zip(w, a, g_values):
        wi, ai = int(wi), int(ai)
        if wi == 0:
            continue
        if ai < 0:
            raise ValueError("neuron inputs must be nonnegative")
        p = ai * abs(wi)
        if threshold is not None and gi <= threshold:
            p = truncate_product(p, bitsize(abs(wi)) + input_width, k)
        if wi > 0:
            s_p += p
        else:
            s_n += p
            has_neg = True
    return s_p + ~s_n if has_neg else s_p


def approx_layer(a: np.ndarray, c: np.ndarray, b: np.ndarray, mask: np.ndarray,
                 k: int, input_width: int) -> np.ndarray:
    """Vectorised approximate sums for a whole layer: a (N, n_in) -> (N, n_out)."""
    mags = np.abs(c)
    p = a[:, :, None] * mags[None, :, :]
    n = product_widths(c, input_width)
    shift = np.where(mask & (n > k), n - k, 0)
    p = (p >> shift) << shift
    pos = (c > 0)[None]
    neg = (c < 0)[None]
    s_p = np.where(pos, p, 0).sum(axis=1) + np.maximum(b, 0)
    s_n = np.where(neg, p, 0).sum(axis=1) + np.maximum(-b, 0)
    has_neg = (c < 0).any(axis=0) | (b < 0)
    return s_p - np.where(has_neg, s_n + 1, 0)


def forward_approx(m: QuantizedMLP, sig: SignificanceMap | None, ax: AxConfig | None,
                   x: np.ndarray) -> list[np.ndarray]:
    """Batched approximate forward pass; returns [layer inputs..., output sums]."""
    _check_ax(m, sig, ax)
    a = np.atleast_2d(np.asarray(x, dtype=np.int64))
    if a.shape[1] != m.topology.n_inputs:
        raise ValueError(f"input has {a.shape[1]} features, model expects {m.topology.n_inputs}")
    masks = truncation_masks(m, sig, ax)
    k = ax.k if ax is not None else 3
    widths = m.input_widths
    acts = [a]
    for li, (c, b) in enumerate(zip(m.coeffs, m.biases)):
        s = approx_layer(a, c, b, masks[li], k, widths[li])
        if li < len(m.coeffs) - 1:
            s = np.maximum(s, 0)
        acts.append(s)
        a = s
    return acts


def predict_approx(m, sig, ax, x) -> np.ndarray:
    return argmax_lowest(forward_approx(m, sig, ax, x)[-1])


def infer_approx(m: QuantizedMLP, sig: SignificanceMap | None, ax: AxConfig | None, x) -> int:
    return int(predict_approx(m, sig, ax, np.asarray(x)[None, :])[0])


def accuracy_approx(m, sig, ax, ds) -> float:
    if len(ds) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict_approx(m, sig, ax, ds.features) == ds.labels))


# ---------------------------------------------------------------------------
# circuit structure shared by the cost model and RTL lowering


@dataclass(frozen=True)
class Summand:
    """One adder-tree leaf: a (possibly truncated) product or a hardwired bias."""

    kind: str  # "product" | "bias"
    index: int  # input index, -1 for the bias
    magnitude: int  # |coefficient| or |bias|
    width: int  # declared wire width
    truncated: bool
    lsb: int
    msb: int
    max_value: int


@dataclass(frozen=True)
class Span:
    lsb: int
    msb: int


def add_span(u: Span, v: Span) -> tuple[Span, int]:
    """Sum span and full-adder cost of adding two operands."""
    cost = max(u.msb, v.msb) + 1 - max(u.lsb, v.lsb)
    return Span(min(u.lsb, v.lsb), max(u.msb, v.msb) + 1), cost


def reduce_balanced(leaves: Sequence, combine: Callable):
    """Pairwise reduction level by level: (0,1), (2,3), ...; an odd tail passes through."""
    if not leaves:
        raise ValueError("nothing to reduce")
    level = list(leaves)
    while len(level) > 1:
        nxt = [combine(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def _trailing_zeros(v: int) -> int:
    return (v & -v).bit_length() - 1 if v else 0


@dataclass(frozen=True)
class NeuronPlan:
    positive: tuple[Summand, ...]
    negative: tuple[Summand, ...]

    @property
    def has_negation(self) -> bool:
        return bool(self.negative)

    @property
    def pos_width(self) -> int:
        return bitsize(sum(s.max_value for s in self.positive)) if self.positive else 0

    @property
    def neg_width(self) -> int:
        return bitsize(sum(s.max_value for s in self.negative)) if self.negative else 0

    @property
    def out_width(self) -> int:
        """Signed width of S'."""
        return max(self.pos_width, self.neg_width, 1) + 1

    @property
    def n_truncated(self) -> int:
        return sum(s.truncated for s in self.positive + self.negative)


def plan_neuron(coeffs, bias: int, input_width: int, input_max, mask, k: int) -> NeuronPlan:
    pos, neg = [], []
    for i, (c, amax, trunc) in enumerate(zip(coeffs, input_max, mask)):
        c = int(c)
        if c == 0:
            continue
        mag = abs(c)
        n = bitsize(mag) + input_width
        lsb = _trailing_zeros(mag)
        vmax = int(amax) * mag
        trunc = bool(trunc) and k < n
        if trunc:
            lsb = max(lsb, n - k)
            vmax = truncate_product(vmax, n, k)
        (pos if c > 0 else neg).append(Summand("product", i, mag, n, trunc, lsb, n - 1, vmax))
    bias = int(bias)
    if bias:
        mag = abs(bias)
        s = Summand("bias", -1, mag, bitsize(mag), False, _trailing_zeros(mag),
                    bitsize(mag) - 1, mag)
        (pos if bias > 0 else neg).append(s)
    return NeuronPlan(tuple(pos), tuple(neg))


def plan_network(m: QuantizedMLP, sig: SignificanceMap | None = None,
                 ax: AxConfig | None = None) -> list[list[NeuronPlan]]:
    _check_ax(m, sig, ax)
    masks = truncation_masks(m, sig, ax)
    k = ax.k if ax is not None else 3
    plans = []
    for li, (c, b) in enumerate(zip(m.coeffs, m.biases)):
        width = m.input_widths[li]
        amax = m.input_maxima[li]
        plans.append([plan_neuron(c[:, j], b[j], width, amax, masks[li][:, j], k)
                      for j in range(c.shape[1])])
    return plans
