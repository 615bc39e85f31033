"""Command-line entry point: ``axmlp <stage> ...``.

Exit codes: 0 success, 1 accuracy budget not met, 2 input error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .axneuron import AxConfig, build_significance, predict_approx
from .cost import build_lut, cluster_coefficients, save_json, MultiplierAreaLut, Clustering
from .dataset import DatasetError
from .dse import DEFAULT_CAP, check_front, explore, pareto, select, write_pareto_csv, write_scatter
from .mlp import Topology, TrainConfig, accuracy, quantize, train_float
from .modelio import DataSpec, ModelBundle, load_model, save_model
from .pipeline import InputError, RunManifest, StageError, run_pipeline, run_seeds
from .retrain import RetrainConfig, retrain
from .rtl import emit_testbench, emit_verilog, interpret, lower

log = logging.getLogger("axmlp")

EXIT_OK, EXIT_UNSATISFIED, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


def _add_data_flags(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--data", required=required,
                   help="CSV file, or builtin:<name> for a bundled dataset")
    p.add_argument("--label-col", default=None, help="label column index or header name (default: last)")
    p.add_argument("--split", type=float, default=None, help="train fraction (default 0.7)")
    p.add_argument("--data-seed", type=int, default=None, help="split seed (default: the model's)")
    p.add_argument("--input-bits", type=int, default=None, help="input quantization bits (default 4)")


def _label(v):
    if v is None:
        return None
    try:
        return int(v)
    except ValueError:
        return v


def _data_spec(args, stored: DataSpec | None) -> DataSpec:
    """Data flags override whatever the model file recorded."""
    if args.data is None and stored is None:
        raise InputError("no dataset: pass --data (the model file does not record one)")
    spec = stored or DataSpec(args.data)
    fields = {
        "path": args.data, "label_column": _label(args.label_col), "split": args.split,
        "seed": args.data_seed, "input_bits": args.input_bits,
    }
    for k, v in fields.items():
        if v is not None:
            setattr(spec, k, v)
    if not spec.exists():
        raise InputError(f"dataset not found: {spec.path}")
    return spec


def _load_bundle(path) -> ModelBundle:
    if not Path(path).is_file():
        raise InputError(f"model file not found: {path}")
    return load_model(path)


def _load_lut(path) -> tuple[MultiplierAreaLut | None, Clustering | None]:
    if path is None:
        return None, None
    d = json.loads(Path(path).read_text())
    return MultiplierAreaLut.from_dict(d["lut"]), Clustering.from_dict(d["clustering"])


# ---------------------------------------------------------------------------
# stages


def cmd_train(args) -> int:
    spec = _data_spec(args, DataSpec(args.data or "", -1, 0.7, args.seed, 4))
    train, test = spec.load()
    topo = Topology(tuple(int(s) for s in args.topology.split(",")))
    if topo.n_inputs != train.n_features:
        raise InputError(f"topology expects {topo.n_inputs} inputs, data has {train.n_features}")
    f = train_float(train, topo, TrainConfig(args.epochs, args.lr, args.batch, args.seed))
    m = quantize(f, spec.input_bits)
    save_model(ModelBundle(m, f, spec), args.out)
    print(f"quantized {topo}: train acc {accuracy(m, train):.4f}, test acc {accuracy(m, test):.4f}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    widths = sorted({args.input_bits, *args.widths})
    lut = build_lut(widths)
    cl = cluster_coefficients(lut, args.clusters, width=args.input_bits)
    save_json({"lut": lut.to_dict(), "clustering": cl.to_dict()}, args.emit)
    for i in range(cl.n_clusters):
        mem = cl.members(i)
        print(f"C{i}: {len(mem)} magnitudes, mean area {cl.centroids[i]:.2f}")
    return EXIT_OK


def cmd_retrain(args) -> int:
    b = _load_bundle(args.model)
    spec = _data_spec(args, b.data)
    train, _ = spec.load()
    lut, cl = _load_lut(args.lut)
    if lut is None:
        lut = build_lut(sorted({b.model.input_bits, *b.model.input_widths}))
        cl = cluster_coefficients(lut, 4, width=b.model.input_bits)
    shadow = b.shadow
    if shadow is None:
        log.warning("model file has no float shadow weights; starting from its dequantized values")
        shadow = b.model.dequantized()
    cfg = RetrainConfig(args.threshold, args.alpha, args.epochs_per_stage, args.lr, seed=args.seed)
    rr = retrain(b.model, shadow, train, cl, lut, cfg)
    save_model(ModelBundle(rr.model, rr.shadow, spec, meta={
        "max_cluster": rr.max_cluster, "baseline_train_accuracy": rr.baseline_accuracy}), args.out)
    hist = args.history or str(Path(args.out).with_suffix("")) + "_history.csv"
    rr.write_history(hist)
    print(f"C{rr.max_cluster} after {rr.epochs} epochs: train acc {rr.train_accuracy:.4f} "
          f"(baseline {rr.baseline_accuracy:.4f}), {'satisfied' if rr.satisfied else 'NOT satisfied'}")
    return EXIT_OK if rr.satisfied else EXIT_UNSATISFIED


def cmd_axdse(args) -> int:
    if not 0.0 <= args.budget <= 1.0:
        raise InputError(f"--budget must be in [0, 1], got {args.budget}")
    b = _load_bundle(args.model)
    spec = _data_spec(args, b.data)
    train, test = spec.load()
    m = b.model
    sig = build_significance(m, train)
    points = explore(m, sig, train, test, None if args.cap <= 0 else args.cap, args.jobs)
    front = pareto(points)
    check_front(points, front)
    base = accuracy(m, train)
    chosen, ok = select(front, args.budget, base)
    write_pareto_csv(front, args.out)
    scatter = args.scatter or str(Path(args.out).with_suffix("")) + "_scatter.csv"
    write_scatter(points, front, scatter)
    if args.select_out:
        save_model(ModelBundle(m, b.shadow, spec, chosen.config, sig, b.meta), args.select_out)
    print(f"{len(points)} configurations, {len(front)} on the Pareto front")
    print(f"selected k={chosen.config.k} g={list(chosen.config.g_per_layer)}: train acc "
          f"{chosen.train_accuracy:.4f} (exact {base:.4f}), area {chosen.total_area:.1f}"
          f"{'' if ok else ' [budget NOT met]'}")
    return EXIT_OK if ok else EXIT_UNSATISFIED


def _ax_from_arg(arg: str | None, b: ModelBundle) -> AxConfig:
    if arg is None:
        return b.ax or AxConfig.exact(len(b.model.coeffs))
    text = Path(arg).read_text() if Path(arg).is_file() else arg
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        raise InputError(f"--ax-config is neither a file nor JSON: {arg}") from None
    return AxConfig.from_dict(d.get("ax", d))


def cmd_emit_rtl(args) -> int:
    b = _load_bundle(args.model)
    ax = _ax_from_arg(args.ax_config, b)
    sig = b.significance
    if sig is None and not ax.is_exact:
        spec = _data_spec(args, b.data)
        sig = build_significance(b.model, spec.load()[0])
    ir = lower(b.model, sig, ax)
    Path(args.out).write_text(emit_verilog(ir, args.module))
    if args.ir:
        ir.dump(args.ir)
    if args.tb:
        if args.data is not None or b.data is not None:
            x = _data_spec(args, b.data).load()[1].features
        else:
            rng = np.random.default_rng(0)
            x = rng.integers(0, 1 << b.model.input_bits, (args.vectors, b.model.topology.n_inputs))
        x = x[:args.vectors]
        expected = predict_approx(b.model, sig, ax, x)
        got = interpret(ir, x)[1]
        if not np.array_equal(expected, got):
            raise RuntimeError("netlist disagrees with the behavioral model")
        Path(args.tb).write_text(emit_testbench(ir, zip(x, expected), args.module))
    print(f"wrote {args.out}: {len(ir.nodes)} nodes, {ir.count('add', 'sub')} adders")
    return EXIT_OK


def cmd_run(args) -> int:
    man = RunManifest.load(args.manifest)
    if args.out_dir:
        man.out_dir = args.out_dir
    if args.jobs is not None:
        man.jobs = args.jobs
    if args.seeds > 1:
        summary = run_seeds(man, args.seeds)
        print(json.dumps(summary["median"], indent=1))
        return EXIT_OK if all(summary["satisfied"]) else EXIT_UNSATISFIED
    rep = run_pipeline(man)
    print((Path(man.out_dir) / "compare.txt").read_text(), end="")
    print("budget", "met" if rep["satisfied"] else "NOT met")
    return EXIT_OK if rep["satisfied"] else EXIT_UNSATISFIED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="axmlp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and quantize a baseline MLP")
    _add_data_flags(p, required=True)
    p.add_argument("--topology", required=True, help="layer sizes, e.g. 9,3,2")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cluster", help="multiplier-area LUT and coefficient clusters")
    p.add_argument("--input-bits", type=int, default=4)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--widths", type=int, nargs="*", default=[], help="extra LUT input widths")
    p.add_argument("--emit", required=True, help="output JSON")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("retrain", help="cluster-constrained retraining")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--epochs-per-stage", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lut", help="JSON from the cluster stage (default: rebuilt)")
    p.add_argument("--history", help="score-history CSV (default: next to --out)")
    p.add_argument("--out", required=True)
    _add_data_flags(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("axdse", help="approximate-summation design-space exploration")
    p.add_argument("--model", required=True)
    p.add_argument("--budget", type=float, default=0.01)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="threshold candidates per layer; 0 = no cap")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $AXMLP_JOBS or CPUs)")
    p.add_argument("--out", required=True, help="Pareto CSV")
    p.add_argument("--scatter", help="all-points CSV (default: next to --out)")
    p.add_argument("--select-out", help="write the selected design as a model JSON")
    _add_data_flags(p)
    p.set_defaults(func=cmd_axdse)

    p = sub.add_parser("emit-rtl", help="Verilog for a (possibly approximate) model")
    p.add_argument("--model", required=True)
    p.add_argument("--ax-config", help='JSON like {"k": 2, "g_per_layer": [0.1, null]} or a file')
    p.add_argument("--out", required=True)
    p.add_argument("--tb", help="self-checking testbench output")
    p.add_argument("--ir", help="IR JSON dump")
    p.add_argument("--module", default="bespoke_mlp")
    p.add_argument("--vectors", type=int, default=200, help="testbench vector count")
    _add_data_flags(p)
    p.set_defaults(func=cmd_emit_rtl)

    p = sub.add_parser("run", help="full pipeline from a JSON manifest")
    p.add_argument("manifest")
    p.add_argument("--seeds", type=int, default=1, help="median over this many seeds")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out-dir", help="override the manifest's output directory")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DatasetError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT if isinstance(e.cause, (InputError, DatasetError)) else EXIT_INTERNAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
