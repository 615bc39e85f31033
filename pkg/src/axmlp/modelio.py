"""Model interchange file shared by all CLI stages (JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .axneuron import AxConfig, SignificanceMap
from .dataset import Dataset, QuantizedDataset, builtin_path, load_builtin, load_csv, prepare
from .mlp import FloatMLP, QuantizedMLP, Topology

FORMAT = "axmlp-model/1"
BUILTIN_PREFIX = "builtin:"


@dataclass
class DataSpec:
    """How to rebuild the train/test split a model was made from."""

    path: str
    label_column: int | str = -1
    split: float = 0.7
    seed: int = 0
    input_bits: int = 4

    def load_raw(self) -> Dataset:
        if self.path.startswith(BUILTIN_PREFIX):
            return load_builtin(self.path[len(BUILTIN_PREFIX):])
        return load_csv(self.path, self.label_column)

    def load(self) -> tuple[QuantizedDataset, QuantizedDataset]:
        return prepare(self.load_raw(), self.split, self.seed, self.input_bits)

    def exists(self) -> bool:
        if self.path.startswith(BUILTIN_PREFIX):
            try:
                return builtin_path(self.path[len(BUILTIN_PREFIX):]).exists()
            except ValueError:
                return False
        return Path(self.path).is_file()


@dataclass
class ModelBundle:
    model: QuantizedMLP
    shadow: FloatMLP | None = None
    data: DataSpec | None = None
    ax: AxConfig | None = None
    significance: SignificanceMap | None = None
    meta: dict = field(default_factory=dict)


def model_to_dict(b: ModelBundle) -> dict:
    m = b.model
    d = {
        "format": FORMAT,
        "topology": list(m.topology.sizes),
        "input_bits": m.input_bits,
        "frac_bits": list(m.frac_bits),
        "coeffs": [c.tolist() for c in m.coeffs],
        "biases": [v.tolist() for v in m.biases],
    }
    if b.shadow is not None:
        d["shadow"] = {"weights": [w.tolist() for w in b.shadow.weights],
                       "biases": [v.tolist() for v in b.shadow.biases]}
    if b.data is not None:
        d["data"] = asdict(b.data)
    if b.ax is not None:
        d["ax"] = b.ax.to_dict()
    if b.significance is not None:
        d["significance"] = b.significance.to_dict()
    if b.meta:
        d["meta"] = b.meta
    return d


def model_from_dict(d: dict) -> ModelBundle:
    if d.get("format", FORMAT) != FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    try:
        topo = Topology(tuple(d["topology"]))
        m = QuantizedMLP(topo, tuple(np.asarray(c, dtype=np.int64) for c in d["coeffs"]),
                         tuple(np.asarray(b, dtype=np.int64) for b in d["biases"]),
                         tuple(d["frac_bits"]), int(d.get("input_bits", 4)))
    except KeyError as e:
        raise ValueError(f"model file lacks field {e.args[0]!r}") from None
    shadow = None
    if "shadow" in d:
        shadow = FloatMLP(topo, [np.asarray(w, dtype=np.float64) for w in d["shadow"]["weights"]],
                          [np.asarray(v, dtype=np.float64) for v in d["shadow"]["biases"]])
    data = DataSpec(**d["data"]) if "data" in d else None
    ax = AxConfig.from_dict(d["ax"]) if d.get("ax") is not None else None
    sig = SignificanceMap.from_dict(d["significance"]) if d.get("significance") is not None else None
    if sig is not None and not sig.covers(m):
        raise ValueError("significance map does not match the model shape")
    return ModelBundle(m, shadow, data, ax, sig, d.get("meta", {}))


def save_model(b: ModelBundle, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(b), indent=1) + "\n")


def load_model(path) -> ModelBundle:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from None
    return model_from_dict(d)
