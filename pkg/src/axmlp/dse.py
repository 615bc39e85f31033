"""Exhaustive design-space exploration over (k, per-layer significance threshold)."""

from __future__ import annotations

import csv
import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .axneuron import AxConfig, SignificanceMap, accuracy_approx, plan_network
from .cost import DEFAULT_COSTS, AreaReport, CostConstants, MultiplierAreaLut, logic_depth, network_area
from .dataset import QuantizedDataset
from .mlp import QuantizedMLP
from .rtl import lower

log = logging.getLogger(__name__)

K_VALUES = (1, 2, 3)
DEFAULT_CAP = 8
JOBS_ENV = "AXMLP_JOBS"


@dataclass
class DesignPoint:
    config: AxConfig
    train_accuracy: float
    test_accuracy: float | None
    area: AreaReport
    power: float
    depth: int
    n_truncated: int
    index: int = -1  # position in the enumeration

    @property
    def total_area(self) -> float:
        return self.area.total_area

    def row(self) -> dict:
        return {
            "k": self.config.k,
            "g_per_layer": ";".join("none" if g is None else repr(g) for g in self.config.g_per_layer),
            "train_acc": self.train_accuracy,
            "test_acc": "" if self.test_accuracy is None else self.test_accuracy,
            "mult_area": self.area.multiplier_area,
            "total_area": self.area.total_area,
            "power": self.power,
            "depth": self.depth,
        }


PARETO_COLUMNS = ["k", "g_per_layer", "train_acc", "test_acc", "mult_area", "total_area", "power", "depth"]


def layer_candidates(g: np.ndarray, coeffs: np.ndarray, cap: int | None = DEFAULT_CAP) -> list:
    """[None] + sorted distinct significances of the layer's nonzero products.

    Thresholds strictly between consecutive values give the same truncation set,
    so this is lossless. Above ``cap`` values, ``cap`` evenly spaced order
    statistics (first and last included) are kept.
    """
    vals = sorted({float(v) for v in np.asarray(g)[np.asarray(coeffs) != 0]})
    if cap is not None and len(vals) > cap:
        if cap < 1:
            raise ValueError("cap must be >= 1")
        n = len(vals)
        idx = [0] if cap == 1 else [int(np.floor(j * (n - 1) / (cap - 1) + 0.5)) for j in range(cap)]
        vals = [vals[i] for i in idx]
    return [None] + vals


def enumerate_configs(m: QuantizedMLP, sig: SignificanceMap, cap: int | None = DEFAULT_CAP) -> list[AxConfig]:
    per_layer = [layer_candidates(g, c, cap) for g, c in zip(sig.g, m.coeffs)]
    return [AxConfig(k, list(gs)) for k in K_VALUES for gs in itertools.product(*per_layer)]


def evaluate(m: QuantizedMLP, sig: SignificanceMap, cfg: AxConfig, train: QuantizedDataset,
             test: QuantizedDataset | None = None, lut: MultiplierAreaLut | None = None,
             costs: CostConstants = DEFAULT_COSTS) -> DesignPoint:
    rep = network_area(m, cfg, sig, lut, costs)
    rep.logic_depth = logic_depth(lower(m, sig, cfg))
    n_trunc = sum(p.n_truncated for layer in plan_network(m, sig, cfg) for p in layer)
    return DesignPoint(
        cfg,
        accuracy_approx(m, sig, cfg, train),
        accuracy_approx(m, sig, cfg, test) if test is not None else None,
        rep, rep.power_proxy, rep.logic_depth, n_trunc)


# worker-side state for process pools; the model is shipped once per worker
_CTX: dict = {}


def _init_worker(m, sig, train, test, lut, costs):
    _CTX.update(m=m, sig=sig, train=train, test=test, lut=lut, costs=costs)


def _eval_one(cfg: AxConfig) -> DesignPoint:
    c = _CTX
    return evaluate(c["m"], c["sig"], cfg, c["train"], c["test"], c["lut"], c["costs"])


def default_jobs() -> int:
    env = os.environ.get(JOBS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(os.cpu_count() or 1, 8))


def explore(m: QuantizedMLP, sig: SignificanceMap, train: QuantizedDataset,
            test: QuantizedDataset | None = None, cap: int | None = DEFAULT_CAP,
            jobs: int | None = None, lut: MultiplierAreaLut | None = None,
            costs: CostConstants = DEFAULT_COSTS) -> list[DesignPoint]:
    """Evaluate every enumerated configuration; results follow enumeration order."""
    configs = enumerate_configs(m, sig, cap)
    jobs = default_jobs() if jobs is None else max(1, jobs)
    log.info("DSE: %d configurations on %d worker(s)", len(configs), jobs)
    if jobs == 1 or len(configs) < 2 * jobs:
        _init_worker(m, sig, train, test, lut, costs)
        points = [_eval_one(c) for c in configs]
        _CTX.clear()
    else:
        chunk = max(1, len(configs) // (4 * jobs))
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(m, sig, train, test, lut, costs)) as pool:
            points = list(pool.map(_eval_one, configs, chunksize=chunk))
    for i, p in enumerate(points):
        p.index = i
    return points


def _key(p: DesignPoint) -> tuple[float, float]:
    return p.train_accuracy, p.total_area


def pareto(points: list[DesignPoint]) -> list[DesignPoint]:
    """Non-dominated points (max train accuracy, min total area), area ascending.

    Points with identical (accuracy, area) collapse to the first one seen.
    """
    if not points:
        raise ValueError("no design points")
    order = sorted(range(len(points)), key=lambda i: (points[i].total_area, -points[i].train_accuracy, i))
    front, best = [], -np.inf
    for i in order:
        p = points[i]
        if p.train_accuracy > best:
            front.append(p)
            best = p.train_accuracy
    return front


def dominated(p: tuple[float, float], q: tuple[float, float]) -> bool:
    """Is p = (acc, area) dominated by q?"""
    return q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1])


def check_front(points: list[DesignPoint], front: list[DesignPoint]) -> None:
    """Quadratic cross-check of a front against all evaluated points."""
    keys = [_key(p) for p in points]
    expected = []
    for i, p in enumerate(keys):
        if not any(dominated(p, q) for q in keys) and p not in expected:
            expected.append(p)
    got = [_key(p) for p in front]
    if sorted(got) != sorted(expected) or len(got) != len(set(got)):
        raise AssertionError(f"Pareto front mismatch: {len(got)} points vs {len(expected)} expected")
    if [a for _, a in got] != sorted(a for _, a in got):
        raise AssertionError("Pareto front not sorted by area")


def select(front: list[DesignPoint], budget: float, baseline: float) -> tuple[DesignPoint, bool]:
    """Cheapest member within ``budget`` of ``baseline``; ties go to fewer truncations.

    Falls back to the most accurate member, reported as unsatisfied.
    """
    if not front:
        raise ValueError("empty Pareto front")
    ok = [p for p in front if p.train_accuracy >= baseline - budget - 1e-12]
    if ok:
        return min(ok, key=lambda p: (p.total_area, p.n_truncated, p.index)), True
    return max(front, key=lambda p: (p.train_accuracy, -p.total_area)), False


def write_pareto_csv(front: list[DesignPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PARETO_COLUMNS)
        w.writeheader()
        for p in front:
            w.writerow(p.row())


def write_scatter(points: list[DesignPoint], front: list[DesignPoint], path) -> None:
    """Accuracy vs area for every evaluated point, flagging front members."""
    on_front = {id(p) for p in front}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "k", "g_per_layer", "train_acc", "test_acc", "total_area", "pareto"])
        for p in points:
            r = p.row()
            w.writerow([p.index, r["k"], r["g_per_layer"], r["train_acc"], r["test_acc"],
                        r["total_area"], int(id(p) in on_front)])
