"""End-to-end flow: train -> quantize -> cluster -> retrain -> DSE -> RTL -> report."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .axneuron import AxConfig, build_significance, predict_approx
from .cost import build_lut, cluster_coefficients, logic_depth, network_area, save_json
from .dataset import QuantizedDataset
from .dse import check_front, explore, pareto, select, write_pareto_csv, write_scatter
from .mlp import QuantizedMLP, Topology, TrainConfig, accuracy, mac_count, quantize, train_float
from .modelio import DataSpec, ModelBundle, save_model
from .retrain import RetrainConfig, retrain
from .rtl import emit_testbench, emit_verilog, lower

log = logging.getLogger(__name__)

PARTIAL = ".partial"


class InputError(ValueError):
    """Bad manifest, data file or model file (exit code 2)."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunManifest:
    dataset: str  # CSV path or builtin:<name>
    topology: list[int]
    out_dir: str
    label_column: int | str = -1
    seed: int = 0
    split: float = 0.7
    budget: float = 0.01
    alpha: float = 0.8
    epochs_per_stage: int = 10
    input_bits: int = 4
    cap: int | None = 8
    jobs: int | None = None
    clusters: int = 4
    train_epochs: int = 100
    train_lr: float = 0.05
    batch: int = 16
    retrain_lr: float = 0.05

    def validate(self) -> None:
        if not 0.0 <= self.budget <= 1.0:
            raise InputError(f"budget must be in [0, 1], got {self.budget}")
        if len(self.topology) < 2:
            raise InputError("topology needs at least an input and an output layer")
        if not self.data_spec().exists():
            raise InputError(f"dataset not found: {self.dataset}")
        if self.cap is not None and self.cap < 1:
            raise InputError("cap must be >= 1")

    def data_spec(self) -> DataSpec:
        return DataSpec(self.dataset, self.label_column, self.split, self.seed, self.input_bits)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RunManifest":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InputError(f"unknown manifest keys: {sorted(extra)}")
        try:
            m = cls(**d)
        except TypeError as e:
            raise InputError(f"bad manifest: {e}") from None
        if base is not None and not m.dataset.startswith("builtin:") and not Path(m.dataset).is_absolute():
            m.dataset = str(base / m.dataset)
        return m

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read manifest {path}: {e}") from None
        return cls.from_dict(d, path.parent)


def _fmt(v):
    return float(v) if isinstance(v, (np.floating, float)) else v


def metrics(m: QuantizedMLP, train: QuantizedDataset, test: QuantizedDataset,
            sig=None, ax: AxConfig | None = None, lut=None) -> dict:
    if ax is None:
        ax = AxConfig.exact(len(m.coeffs))
    rep = network_area(m, ax, sig, lut)
    ir = lower(m, sig, ax)
    return {
        "train_accuracy": float(np.mean(predict_approx(m, sig, ax, train.features) == train.labels)),
        "test_accuracy": float(np.mean(predict_approx(m, sig, ax, test.features) == test.labels)),
        "multiplier_area": rep.multiplier_area,
        "total_area": rep.total_area,
        "power": rep.power_proxy,
        "depth": logic_depth(ir),
        "macs": mac_count(m.topology),
        "area_breakdown": rep.to_dict(),
    }


RATIO_KEYS = ("total_area", "power", "multiplier_area", "depth")


def ratio(base: float, sel: float):
    if sel == 0:
        return "inf"
    return base / sel


def report_compare(baseline: dict, selected: dict) -> dict:
    """baseline/selected per metric; a zero selected value gives "inf"."""
    return {k: ratio(baseline[k], selected[k]) for k in RATIO_KEYS if k in baseline and k in selected}


def render_compare(baseline: dict, selected: dict) -> tuple[str, str]:
    """(CSV, aligned text table) of the reduction ratios."""
    ratios = report_compare(baseline, selected)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "baseline", "selected", "reduction"])
    rows = []
    for k, r in ratios.items():
        rs = r if isinstance(r, str) else f"{r:.2f}x"
        w.writerow([k, baseline[k], selected[k], r])
        rows.append((k, f"{baseline[k]:.2f}", f"{selected[k]:.2f}", rs))
    widths = [max(len(x) for x in col) for col in zip(("metric", "baseline", "selected", "reduction"), *rows)]
    lines = ["  ".join(h.ljust(n) for h, n in zip(("metric", "baseline", "selected", "reduction"), widths))]
    lines += ["  ".join(c.ljust(n) for c, n in zip(r, widths)) for r in rows]
    return buf.getvalue(), "\n".join(lines) + "\n"


class _Stages:
    def __init__(self):
        self.name = "setup"

    def __call__(self, name):
        self.name = name
        log.info("stage: %s", name)
        return self


def run_pipeline(man: RunManifest) -> dict:
    """Run every stage and write artifacts into ``man.out_dir``; returns the report dict."""
    man.validate()
    out = Path(man.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / PARTIAL
    marker.write_text("incomplete run\n")
    stage = _Stages()
    try:
        report = _run(man, out, stage)
    except InputError:
        raise
    except Exception as e:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(stage.name, e) from e
    marker.unlink()
    return report


def _run(man: RunManifest, out: Path, stage: _Stages) -> dict:
    stage("load")
    spec = man.data_spec()
    train, test = spec.load()
    topo = Topology(tuple(man.topology))
    if topo.n_inputs != train.n_features:
        raise InputError(f"topology expects {topo.n_inputs} inputs, data has {train.n_features}")
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1
    if topo.n_outputs < n_classes:
        raise InputError(f"topology has {topo.n_outputs} outputs, data has {n_classes} classes")

    stage("train")
    float0 = train_float(train, topo, TrainConfig(man.train_epochs, man.train_lr, man.batch, man.seed))
    mlp0 = quantize(float0, man.input_bits)
    save_model(ModelBundle(mlp0, float0, spec), out / "baseline.json")

    stage("cluster")
    lut = build_lut(sorted({man.input_bits, *mlp0.input_widths}))
    clustering = cluster_coefficients(lut, man.clusters, width=man.input_bits)
    save_json({"lut": lut.to_dict(), "clustering": clustering.to_dict()}, out / "lut.json")

    stage("retrain")
    rcfg = RetrainConfig(man.budget, man.alpha, man.epochs_per_stage, man.retrain_lr,
                         batch=man.batch, seed=man.seed)
    rr = retrain(mlp0, float0, train, clustering, lut, rcfg)
    mlp1 = rr.model
    rr.write_history(out / "score_history.csv")
    save_model(ModelBundle(mlp1, rr.shadow, spec, meta={"max_cluster": rr.max_cluster}),
               out / "retrained.json")

    stage("axdse")
    sig = build_significance(mlp1, train)
    points = explore(mlp1, sig, train, test, man.cap, man.jobs, lut)
    front = pareto(points)
    check_front(points, front)
    loss_retrain = rr.baseline_accuracy - rr.train_accuracy
    remaining = man.budget - loss_retrain
    chosen, sel_ok = select(front, remaining, rr.train_accuracy)
    write_pareto_csv(front, out / "pareto.csv")
    write_scatter(points, front, out / "scatter.csv")
    save_model(ModelBundle(mlp1, None, spec, chosen.config, sig), out / "selected.json")

    stage("emit-rtl")
    ir = lower(mlp1, sig, chosen.config)
    (out / "selected.v").write_text(emit_verilog(ir, "bespoke_mlp"))
    expected = predict_approx(mlp1, sig, chosen.config, test.features)
    (out / "selected_tb.v").write_text(emit_testbench(ir, zip(test.features, expected), "bespoke_mlp"))
    ir.dump(out / "selected_ir.json")

    stage("report")
    base = metrics(mlp0, train, test, lut=lut)
    retr = metrics(mlp1, train, test, lut=lut)
    sel = metrics(mlp1, train, test, sig, chosen.config, lut)
    loss_total = base["train_accuracy"] - sel["train_accuracy"]
    satisfied = bool(rr.satisfied and sel_ok and loss_total <= man.budget + 1e-12)
    report = {
        "manifest": asdict(man) | {"out_dir": None},
        "seed": man.seed,
        "baseline": base,
        "retrained": retr | {"max_cluster": rr.max_cluster, "epochs": rr.epochs,
                             "satisfied": rr.satisfied},
        "selected": sel | {"config": chosen.config.to_dict(), "n_truncated": chosen.n_truncated},
        "budget": {"total": man.budget, "retrain_loss": loss_retrain,
                   "remaining_for_dse": remaining, "total_loss": loss_total},
        "dse": {"evaluated": len(points), "pareto_size": len(front)},
        "ratios": report_compare(base, sel),
        "satisfied": satisfied,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True, default=_fmt) + "\n")
    csv_text, table = render_compare(base, sel)
    (out / "compare.csv").write_text(csv_text)
    (out / "compare.txt").write_text(table)
    return report


def run_seeds(man: RunManifest, n: int) -> dict:
    """Repeat the pipeline over seeds seed..seed+n-1 and summarize by the median."""
    if n < 1:
        raise InputError("--seeds must be >= 1")
    reports = []
    for s in range(man.seed, man.seed + n):
        sub = replace(man, seed=s, out_dir=str(Path(man.out_dir) / f"seed_{s}"))
        reports.append(run_pipeline(sub))

    def med(path):
        vals = []
        for r in reports:
            v = r
            for k in path:
                v = v[k]
            vals.append(v)
        return statistics.median(vals)

    summary = {
        "seeds": list(range(man.seed, man.seed + n)),
        "median": {
            f"{a}.{b}": med((a, b))
            for a in ("baseline", "retrained", "selected")
            for b in ("train_accuracy", "test_accuracy", "total_area", "multiplier_area", "power")
        },
        "satisfied": [r["satisfied"] for r in reports],
    }
    Path(man.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(man.out_dir) / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary
