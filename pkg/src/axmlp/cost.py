"""Analytical hardware cost model standing in for synthesis.

All areas are in abstract gate units (one full adder = 1.0). Only ratios and
orderings are meaningful. A bespoke constant multiplier is the canonical
signed-digit (CSD) shift-add network of its coefficient: ``D`` nonzero digits
need ``D - 1`` adders as wide as the product, so powers of two (and zero) cost
nothing.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .axneuron import AxConfig, NeuronPlan, SignificanceMap, Span, add_span, plan_network, reduce_balanced
from .mlp import COEFF_MAX, QuantizedMLP, bitsize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostConstants:
    fa: float = 1.0  # per full-adder bit
    inverter: float = 0.1  # per inverted bit
    relu: float = 0.2  # per ReLU output bit
    comparator: float = 1.0  # per comparator bit
    kappa: float = 1.0  # power per area unit


DEFAULT_COSTS = CostConstants()


@dataclass(frozen=True)
class CsdForm:
    """Signed digits in {-1, 0, 1}, least significant first."""

    digits: tuple[int, ...]

    @property
    def value(self) -> int:
        return sum(d << i for i, d in enumerate(self.digits))

    @property
    def nonzero(self) -> int:
        return sum(d != 0 for d in self.digits)

    def terms(self) -> list[tuple[int, int]]:
        """(shift, sign) of each nonzero digit, most significant first."""
        return [(i, d) for i, d in reversed(list(enumerate(self.digits))) if d]


def csd(mag: int) -> CsdForm:
    """Non-adjacent form of ``mag``; it has the fewest nonzero digits of any signed-digit form."""
    if not 0 <= mag <= COEFF_MAX:
        raise ValueError(f"magnitude must be in [0, {COEFF_MAX}], got {mag}")
    digits = []
    v = mag
    while v:
        if v & 1:
            d = 2 - (v & 3)  # +1 if v = 1 mod 4, -1 if v = 3 mod 4
            v -= d
        else:
            d = 0
        digits.append(d)
        v >>= 1
    return CsdForm(tuple(digits))


def mult_area(mag: int, input_width: int, fa: float = DEFAULT_COSTS.fa) -> float:
    d = csd(mag).nonzero
    if d <= 1:
        return 0.0
    return (d - 1) * (input_width + bitsize(mag)) * fa


class MultiplierAreaLut:
    """Area of every bespoke multiplier |w| (table index) per input width.

    Widths that were not prebuilt are filled in on first use.
    """

    def __init__(self, tables: Mapping[int, Iterable[float]] | None = None, fa: float = 1.0):
        self.fa = fa
        self.tables: dict[int, np.ndarray] = {
            int(w): np.asarray(t, dtype=np.float64) for w, t in (tables or {}).items()}

    def table(self, width: int) -> np.ndarray:
        if width not in self.tables:
            self.tables[width] = np.array(
                [mult_area(m, width, self.fa) for m in range(COEFF_MAX + 1)])
        return self.tables[width]

    def area(self, mag: int, width: int) -> float:
        return float(self.table(width)[mag])

    @property
    def widths(self) -> list[int]:
        return sorted(self.tables)

    def to_dict(self) -> dict:
        return {"fa": self.fa, "tables": {str(w): t.tolist() for w, t in sorted(self.tables.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "MultiplierAreaLut":
        return cls({int(w): t for w, t in d["tables"].items()}, d.get("fa", 1.0))


def build_lut(input_widths: Iterable[int] = (4,), fa: float = 1.0) -> MultiplierAreaLut:
    lut = MultiplierAreaLut(fa=fa)
    for w in sorted(set(input_widths)):
        lut.table(int(w))
    return lut


# ---------------------------------------------------------------------------
# clustering


@dataclass(frozen=True)
class Clustering:
    """Cluster index per magnitude; cluster 0 is the cheapest."""

    assignment: tuple[int, ...]
    centroids: tuple[float, ...]

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)

    def members(self, i: int) -> list[int]:
        return [m for m, c in enumerate(self.assignment) if c == i]

    def to_dict(self) -> dict:
        return {"assignment": list(self.assignment), "centroids": list(self.centroids),
                "clusters": [self.members(i) for i in range(self.n_clusters)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Clustering":
        return cls(tuple(d["assignment"]), tuple(d["centroids"]))


def kmeans_1d(values: np.ndarray, k: int, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations on scalars, seeded at the quantiles i/(k-1) (min ... max)."""
    values = np.asarray(values, dtype=np.float64)
    centroids = np.quantile(values, np.linspace(0.0, 1.0, k)) if k > 1 else np.array([values.mean()])
    labels = np.zeros(len(values), dtype=np.int64)
    for _ in range(max_iter):
        dist = np.abs(values[:, None] - centroids[None, :])
        labels = np.argmin(dist, axis=1)  # ties go to the cheaper cluster
        new = np.array([values[labels == i].mean() if np.any(labels == i) else centroids[i]
                        for i in range(k)])
        if np.array_equal(new, centroids):
            break
        centroids = new
    return labels, centroids


def cluster_areas(areas: Iterable[float], k: int = 4) -> Clustering:
    areas = np.asarray(list(areas), dtype=np.float64)
    distinct = np.unique(areas)
    if len(distinct) < k:
        log.warning("only %d distinct areas for %d clusters; merging", len(distinct), k)
        k = len(distinct)
    labels, centroids = kmeans_1d(areas, k)
    used = [i for i in range(k) if np.any(labels == i)]
    means = {i: areas[labels == i].mean() for i in used}
    order = sorted(used, key=lambda i: means[i])
    remap = {old: new for new, old in enumerate(order)}
    return Clustering(tuple(remap[int(l)] for l in labels), tuple(float(means[i]) for i in order))


def cluster_coefficients(lut: MultiplierAreaLut, k: int = 4, width: int | None = None) -> Clustering:
    """K-means over the positive-magnitude multiplier areas at one input width."""
    width = width if width is not None else (lut.widths[0] if lut.widths else 4)
    return cluster_areas(lut.table(width), k)


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# whole-network cost


@dataclass
class AreaReport:
    multiplier_area: float = 0.0
    adder_area: float = 0.0
    negation_area: float = 0.0
    relu_area: float = 0.0
    argmax_area: float = 0.0
    total_area: float = 0.0
    power_proxy: float = 0.0
    logic_depth: int | None = None
    adder_count: int = 0
    comparator_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def tree_cost(summands) -> tuple[Span, float, int]:
    """Balanced adder tree over summand spans: (root span, FA units, adder count)."""
    total = [0.0, 0]

    def combine(u, v):
        s, c = add_span(u, v)
        total[0] += c
        total[1] += 1
        return s

    root = reduce_balanced([Span(s.lsb, s.msb) for s in summands], combine)
    return root, total[0], total[1]


def neuron_cost(plan: NeuronPlan, costs: CostConstants = DEFAULT_COSTS) -> tuple[float, float, int]:
    """(adder area, negation area, adder count) for one neuron, multipliers excluded."""
    area, count = 0.0, 0
    roots = {}
    for side, summands in (("p", plan.positive), ("n", plan.negative)):
        if summands:
            roots[side], a, c = tree_cost(summands)
            area += a
            count += c
    neg_area = 0.0
    if plan.has_negation:
        neg_area = costs.inverter * plan.neg_width
        if plan.positive:
            merge = max(plan.pos_width, plan.neg_width) + 1 - max(roots["p"].lsb, roots["n"].lsb)
            area += merge
            count += 1
    return area * costs.fa, neg_area, count


def network_area(m: QuantizedMLP, ax: AxConfig | None = None, sig: SignificanceMap | None = None,
                 lut: MultiplierAreaLut | None = None,
                 costs: CostConstants = DEFAULT_COSTS) -> AreaReport:
    plans = plan_network(m, sig, ax)
    lut = lut or MultiplierAreaLut(fa=costs.fa)
    rep = AreaReport()
    widths = m.input_widths
    n_layers = len(plans)
    for li, (layer, c) in enumerate(zip(plans, m.coeffs)):
        for mag in np.abs(c[c != 0]).ravel():
            rep.multiplier_area += lut.area(int(mag), widths[li])
            rep.adder_count += max(csd(int(mag)).nonzero - 1, 0)
        for plan in layer:
            a, neg, cnt = neuron_cost(plan, costs)
            rep.adder_area += a
            rep.negation_area += neg
            rep.adder_count += cnt
            if li < n_layers - 1:
                rep.relu_area += costs.relu * widths[li + 1]
    out_width = max(p.out_width for p in plans[-1])
    rep.comparator_count = len(plans[-1]) - 1
    rep.argmax_area = costs.comparator * out_width * rep.comparator_count
    rep.total_area = (rep.multiplier_area + rep.adder_area + rep.negation_area
                      + rep.relu_area + rep.argmax_area)
    rep.power_proxy = power_proxy(rep, costs.kappa)
    return rep


def multiplier_area(m: QuantizedMLP, lut: MultiplierAreaLut | None = None) -> float:
    """Sum of bespoke multiplier areas, the AR term of the retraining score."""
    lut = lut or MultiplierAreaLut()
    widths = m.input_widths
    return float(sum(lut.table(widths[li])[np.abs(c)].sum() for li, c in enumerate(m.coeffs)))


def power_proxy(r: AreaReport, kappa: float = 1.0) -> float:
    return kappa * r.total_area


# ---------------------------------------------------------------------------
# delay


DEPTH_OPS = frozenset({"add", "sub", "gt"})


def logic_depth(ir) -> int:
    """Longest input-to-output path counted in adder/subtractor/comparator nodes.

    ``ir`` needs ``nodes`` where each node has ``id``, ``op`` and ``args``.
    """
    nodes = {n.id: n for n in ir.nodes}
    indeg = {nid: 0 for nid in nodes}
    users: dict[int, list[int]] = {nid: [] for nid in nodes}
    for n in nodes.values():
        for a in n.args:
            indeg[n.id] += 1
            users[a].append(n.id)
    depth = {}
    queue = deque(nid for nid, d in indeg.items() if d == 0)
    seen = 0
    while queue:
        nid = queue.popleft()
        seen += 1
        n = nodes[nid]
        base = max((depth[a] for a in n.args), default=0)
        depth[nid] = base + (n.op in DEPTH_OPS)
        for u in users[nid]:
            indeg[u] -= 1
            if indeg[u] == 0:
                queue.append(u)
    if seen != len(nodes):
        raise ValueError("netlist contains a cycle")
    return max(depth.values(), default=0)
