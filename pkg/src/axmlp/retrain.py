"""Printing-friendly retraining.

Coefficients are restricted to a value set that grows one area cluster at a
time. Each stage restarts from the original model and trains shadow float
weights whose forward pass goes through the projected integer coefficients
(straight-through gradients). Epoch checkpoints are ranked by an area-aware
score and the first stage meeting the accuracy-loss threshold wins.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .cost import Clustering, MultiplierAreaLut, multiplier_area
from .dataset import QuantizedDataset, round_half_up
from .mlp import (COEFF_MAX, FloatMLP, QuantizedMLP, accuracy, backward, forward,
                  softmax_xent)

log = logging.getLogger(__name__)


@dataclass
class RetrainConfig:
    threshold: float = 0.01
    alpha: float = 0.8
    epochs_per_stage: int = 10
    lr: float = 0.05
    lr_growth: float = 2.0
    batch: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be >= 1")
        if not self.lr_growth > 1.0:
            raise ValueError("lr_growth must be > 1")


@dataclass
class EpochRecord:
    stage: int
    epoch: int  # 0 is the untrained projection of the stage
    lr: float
    train_accuracy: float
    multiplier_area: float
    score: float
    changed: bool


@dataclass
class RetrainResult:
    model: QuantizedMLP
    shadow: FloatMLP
    max_cluster: int
    history: list[EpochRecord] = field(default_factory=list)
    epochs: int = 0
    satisfied: bool = False
    train_accuracy: float = 0.0
    baseline_accuracy: float = 0.0

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(asdict(self.history[0])) if self.history else [])
            w.writeheader()
            for rec in self.history:
                w.writerow(asdict(rec))


def build_vc(clustering: Clustering, max_cluster: int) -> np.ndarray:
    """Sorted signed values allowed once clusters 0..max_cluster are unlocked."""
    if not 0 <= max_cluster < clustering.n_clusters:
        raise ValueError(f"cluster index {max_cluster} out of range")
    mags = [m for m, c in enumerate(clustering.assignment) if c <= max_cluster]
    return np.array(sorted({s * m for m in mags for s in (1, -1)}), dtype=np.int64)


def nearest_in(q: np.ndarray, vc: np.ndarray) -> np.ndarray:
    """Closest member of ``vc`` for each entry; ties go to the smaller magnitude."""
    q = np.asarray(q, dtype=np.int64)
    dist = np.abs(q[..., None] - vc)
    key = dist * (4 * COEFF_MAX) + np.abs(vc)
    return vc[np.argmin(key, axis=-1)]


def project(weights: np.ndarray, frac_bits: int, vc: np.ndarray) -> np.ndarray:
    if len(vc) == 0:
        raise ValueError("empty value set")
    q = np.clip(round_half_up(np.asarray(weights) * 2.0 ** frac_bits), -COEFF_MAX, COEFF_MAX)
    return nearest_in(q, vc)


def score_value(acc_prime: float, acc0: float, ar_prime: float, ar0: float, alpha: float = 0.8) -> float:
    """alpha * accuracy ratio + (1 - alpha) * relative multiplier-area saving."""
    if acc0 <= 0.0:
        raise ValueError("baseline accuracy must be positive")
    area_term = (ar0 - ar_prime) / ar0 if ar0 > 0 else 0.0
    return alpha * acc_prime / acc0 + (1.0 - alpha) * area_term


def score(mlp_prime: QuantizedMLP, mlp0: QuantizedMLP, lut: MultiplierAreaLut,
          train: QuantizedDataset, alpha: float = 0.8) -> float:
    return score_value(accuracy(mlp_prime, train), accuracy(mlp0, train),
                       multiplier_area(mlp_prime, lut), multiplier_area(mlp0, lut), alpha)


def _projected(shadow_w, frac_bits, vc):
    coeffs = [project(w, f, vc) for w, f in zip(shadow_w, frac_bits)]
    deq = [c * 2.0 ** -f for c, f in zip(coeffs, frac_bits)]
    return coeffs, deq


def retrain(mlp0: QuantizedMLP, float0: FloatMLP, train: QuantizedDataset,
            clustering: Clustering, lut: MultiplierAreaLut,
            cfg: RetrainConfig | None = None) -> RetrainResult:
    cfg = cfg or RetrainConfig()
    x = train.dequantized()
    y = train.labels
    frac = mlp0.frac_bits
    acc0 = accuracy(mlp0, train)
    ar0 = multiplier_area(mlp0, lut)
    target = acc0 - cfg.threshold
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochRecord] = []
    epochs_used = 0
    stage_best = None

    for stage in range(clustering.n_clusters):
        vc = build_vc(clustering, stage)
        weights = [w.copy() for w in float0.weights]
        biases = [b.copy() for b in float0.biases]
        lr = cfg.lr
        best_feasible = best_any = None

        def checkpoint(epoch, changed):
            nonlocal best_feasible, best_any
            coeffs, _ = _projected(weights, frac, vc)
            q = mlp0.with_coeffs(coeffs, biases)
            acc = accuracy(q, train)
            ar = multiplier_area(q, lut)
            s = score_value(acc, acc0, ar, ar0, cfg.alpha)
            history.append(EpochRecord(stage, epoch, lr, acc, ar, s, changed))
            cand = (s, acc, q, FloatMLP(float0.topology, [w.copy() for w in weights],
                                        [b.copy() for b in biases]))
            if best_any is None or s > best_any[0]:
                best_any = cand
            if acc >= target and (best_feasible is None or s > best_feasible[0]):
                best_feasible = cand
            return coeffs, acc

        prev, _ = checkpoint(0, False)
        for epoch in range(1, cfg.epochs_per_stage + 1):
            order = rng.permutation(len(y))
            for start in range(0, len(y), cfg.batch):
                idx = order[start:start + cfg.batch]
                _, deq = _projected(weights, frac, vc)
                acts = forward(x[idx], deq, biases)
                _, g = softmax_xent(acts[-1], y[idx])
                gw, gb = backward(acts, deq, g)
                for li in range(len(weights)):
                    weights[li] -= lr * gw[li]
                    biases[li] -= lr * gb[li]
            epochs_used += 1
            coeffs = [project(w, f, vc) for w, f in zip(weights, frac)]
            changed = any(not np.array_equal(a, b) for a, b in zip(coeffs, prev))
            _, acc = checkpoint(epoch, changed)
            prev = coeffs
            if changed:
                lr = cfg.lr
            elif acc < target:
                lr *= cfg.lr_growth
        stage_best = best_feasible or best_any
        log.info("stage C%d: best score %.4f, train acc %.4f (target %.4f)",
                 stage, stage_best[0], stage_best[1], target)
        if best_feasible is not None:
            return RetrainResult(best_feasible[2], best_feasible[3], stage, history,
                                 epochs_used, True, best_feasible[1], acc0)

    return RetrainResult(stage_best[2], stage_best[3], clustering.n_clusters - 1, history,
                         epochs_used, False, stage_best[1], acc0)
