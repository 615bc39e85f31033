"""Netlist IR for approximate bespoke MLPs: lowering, bit-exact interpretation
and Verilog-2001 emission.

Every coefficient becomes hardwired shift/add structure taken from its CSD
recoding, so the IR contains no general multiplier. Node ids are assigned in
creation order and every argument refers to an earlier node, which makes the
node list a topological order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .axneuron import AxConfig, NeuronPlan, SignificanceMap, Span, add_span, plan_network, reduce_balanced
from .cost import csd
from .mlp import QuantizedMLP, bitsize

MAX_WIDTH = 62

# op -> signature notes
#   input   param = port name
#   const   param = value (nonnegative)
#   shl     args (a,)      param = shift
#   add/sub args (a, b)
#   trunc   args (a,)      param = lsb kept (lower bits forced to 0)
#   resize  args (a,)      zero/sign extension or truncation to width
#   not     args (a,)
#   relu    args (a,)      signed in, unsigned out
#   gt      args (a, b)    1 if a > b
#   mux     args (sel, a, b)  sel ? b : a
#   output  args (a,)      param = port name
OPS = {"input", "const", "shl", "add", "sub", "trunc", "resize", "not", "relu", "gt", "mux", "output"}


@dataclass
class Node:
    id: int
    op: str
    width: int
    signed: bool = False
    args: tuple[int, ...] = ()
    param: int | str | None = None


@dataclass
class NetlistIR:
    input_bits: int
    nodes: list[Node] = field(default_factory=list)
    inputs: list[int] = field(default_factory=list)
    neuron_outputs: list[int] = field(default_factory=list)
    output: int = -1

    def add(self, op: str, width: int, signed: bool = False, args=(), param=None) -> int:
        if op not in OPS:
            raise ValueError(f"unknown op {op}")
        node = Node(len(self.nodes), op, int(width), signed, tuple(args), param)
        self.nodes.append(node)
        return node.id

    def count(self, *ops: str) -> int:
        return sum(n.op in ops for n in self.nodes)

    def to_dict(self) -> dict:
        return {"input_bits": self.input_bits, "inputs": self.inputs,
                "neuron_outputs": self.neuron_outputs, "output": self.output,
                "nodes": [asdict(n) for n in self.nodes]}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def validate(ir: NetlistIR) -> None:
    """Structural checks: acyclic (args precede users) and width-consistent."""
    for n in ir.nodes:
        if not 1 <= n.width <= MAX_WIDTH:
            raise ValueError(f"node {n.id}: width {n.width} out of range")
        for a in n.args:
            if not 0 <= a < n.id:
                raise ValueError(f"node {n.id}: argument {a} does not precede it")
        w = [ir.nodes[a].width for a in n.args]
        if n.op == "shl" and n.width < w[0] + n.param:
            raise ValueError(f"node {n.id}: shift result too narrow")
        if n.op in ("add", "sub") and n.width < max(w):
            raise ValueError(f"node {n.id}: adder narrower than its operands")
        if n.op == "trunc" and not 0 <= n.param < n.width == w[0]:
            raise ValueError(f"node {n.id}: bad truncation")
        if n.op == "not" and n.width != w[0]:
            raise ValueError(f"node {n.id}: inverter width mismatch")
        if n.op == "gt" and (n.width != 1 or w[0] != w[1]):
            raise ValueError(f"node {n.id}: comparator width mismatch")
        if n.op == "mux" and (w[0] != 1 or w[1] != w[2] or n.width != w[1]):
            raise ValueError(f"node {n.id}: mux width mismatch")
        if n.op == "output" and n.width != w[0]:
            raise ValueError(f"node {n.id}: output width mismatch")
    if ir.output < 0:
        raise ValueError("netlist has no output")


# ---------------------------------------------------------------------------
# lowering


def _lower_product(ir: NetlistIR, a: int, a_width: int, s) -> int:
    terms = csd(s.magnitude).terms()
    n = s.width
    acc = ir.add("shl", n, args=(a,), param=terms[0][0])
    for shift, sign in terms[1:]:
        t = ir.add("shl", n, args=(a,), param=shift)
        acc = ir.add("add" if sign > 0 else "sub", n, args=(acc, t))
    if s.truncated:
        acc = ir.add("trunc", n, args=(acc,), param=s.lsb)
    return acc


def _lower_tree(ir: NetlistIR, leaves: list[tuple[int, Span]]) -> int:
    def combine(u, v):
        span, _ = add_span(u[1], v[1])
        return ir.add("add", span.msb + 1, args=(u[0], v[0])), span

    return reduce_balanced(leaves, combine)[0]


def _lower_neuron(ir: NetlistIR, plan: NeuronPlan, inputs: list[int], in_width: int) -> int:
    roots = {}
    for side, summands in (("p", plan.positive), ("n", plan.negative)):
        leaves = []
        for s in summands:
            if s.kind == "bias":
                nid = ir.add("const", s.width, param=s.magnitude)
            else:
                nid = _lower_product(ir, inputs[s.index], in_width, s)
            leaves.append((nid, Span(s.lsb, s.msb)))
        if leaves:
            roots[side] = _lower_tree(ir, leaves)
    f = plan.out_width
    if "n" in roots:
        inv = ir.add("not", f, True, (ir.add("resize", f, False, (roots["n"],)),))
        if "p" not in roots:
            return inv
        sp = ir.add("resize", f, True, (roots["p"],))
        return ir.add("add", f, True, (sp, inv))
    if "p" in roots:
        return ir.add("resize", f, True, (roots["p"],))
    return ir.add("const", f, True, param=0)


def lower(m: QuantizedMLP, sig: SignificanceMap | None = None, ax: AxConfig | None = None) -> NetlistIR:
    """Fully combinational netlist of the (approximate) MLP, one inference per evaluation."""
    plans = plan_network(m, sig, ax)
    ir = NetlistIR(m.input_bits)
    layer_in = [ir.add("input", m.input_bits, param=f"x{i}") for i in range(m.topology.n_inputs)]
    ir.inputs = list(layer_in)
    widths = m.input_widths
    outs = []
    for li, layer in enumerate(plans):
        outs = [_lower_neuron(ir, plan, layer_in, widths[li]) for plan in layer]
        if li < len(plans) - 1:
            layer_in = [ir.add("relu", widths[li + 1], False, (v,)) for v in outs]
    ir.neuron_outputs = outs

    n_out = len(outs)
    iw = bitsize(n_out - 1)
    if n_out == 1:
        cls = ir.add("const", iw, param=0)
    else:
        fo = max(ir.nodes[v].width for v in outs)
        entries = [(ir.add("resize", fo, True, (v,)), ir.add("const", iw, param=j))
                   for j, v in enumerate(outs)]

        def pick(u, v):
            g = ir.add("gt", 1, False, (v[0], u[0]))
            return (ir.add("mux", fo, True, (g, u[0], v[0])),
                    ir.add("mux", iw, False, (g, u[1], v[1])))

        cls = reduce_balanced(entries, pick)[1]
    ir.output = ir.add("output", iw, args=(cls,), param="class_idx")
    validate(ir)
    return ir


# ---------------------------------------------------------------------------
# interpretation


def _wrap(v: np.ndarray, width: int, signed: bool) -> np.ndarray:
    mask = (1 << width) - 1
    v = v & mask
    if signed:
        half = 1 << (width - 1)
        v = ((v + half) & mask) - half
    return v


def evaluate(ir: NetlistIR, x: np.ndarray) -> list[np.ndarray]:
    """Value of every node for a batch of input vectors ``x`` (N, n_inputs)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    if x.shape[1] != len(ir.inputs):
        raise ValueError(f"expected {len(ir.inputs)} inputs, got {x.shape[1]}")
    if x.size and (x.min() < 0 or x.max() >= 1 << ir.input_bits):
        raise ValueError(f"inputs must be unsigned {ir.input_bits}-bit values")
    port = {nid: i for i, nid in enumerate(ir.inputs)}
    vals: list[np.ndarray] = []
    zeros = np.zeros(x.shape[0], dtype=np.int64)
    for n in ir.nodes:
        a = [vals[i] for i in n.args]
        op = n.op
        if op == "input":
            v = x[:, port[n.id]]
        elif op == "const":
            v = zeros + n.param
        elif op == "shl":
            v = a[0] << n.param
        elif op == "add":
            v = a[0] + a[1]
        elif op == "sub":
            v = a[0] - a[1]
        elif op == "trunc":
            v = (a[0] >> n.param) << n.param
        elif op in ("resize", "output"):
            v = a[0]
        elif op == "not":
            v = ~a[0]
        elif op == "relu":
            v = np.maximum(a[0], 0)
        elif op == "gt":
            v = (a[0] > a[1]).astype(np.int64)
        elif op == "mux":
            v = np.where(a[0] != 0, a[2], a[1])
        else:  # pragma: no cover - guarded by NetlistIR.add
            raise ValueError(op)
        vals.append(_wrap(v, n.width, n.signed))
    return vals


def interpret(ir: NetlistIR, x) -> tuple[np.ndarray, np.ndarray]:
    """(output-neuron values, class) per input row; a single vector gives 1-row arrays."""
    vals = evaluate(ir, x)
    return np.stack([vals[i] for i in ir.neuron_outputs], axis=1), vals[ir.output]


# ---------------------------------------------------------------------------
# Verilog


def _name(ir: NetlistIR, nid: int) -> str:
    n = ir.nodes[nid]
    return n.param if n.op == "input" else f"n{nid}"


def _zeros(count: int) -> list[str]:
    return [f"{{{count}{{1'b0}}}}"] if count > 0 else []


def _cat(parts: list[str]) -> str:
    return parts[0] if len(parts) == 1 else "{" + ", ".join(parts) + "}"


def _expr(ir: NetlistIR, n: Node) -> str:
    a = [_name(ir, i) for i in n.args]
    aw = [ir.nodes[i].width for i in n.args]
    if n.op == "const":
        return f"{n.width}'{'s' if n.signed else ''}d{n.param}"
    if n.op == "shl":
        pad = n.width - aw[0] - n.param
        return _cat(_zeros(pad) + [a[0]] + _zeros(n.param))
    if n.op == "add":
        return f"{a[0]} + {a[1]}"
    if n.op == "sub":
        return f"{a[0]} - {a[1]}"
    if n.op == "trunc":
        return _cat([f"{a[0]}[{n.width - 1}:{n.param}]"] + _zeros(n.param))
    if n.op == "resize":
        src = ir.nodes[n.args[0]]
        if n.width <= aw[0]:
            return f"{a[0]}[{n.width - 1}:0]"
        fill = f"{a[0]}[{aw[0] - 1}]" if src.signed else "1'b0"
        return f"{{{{{n.width - aw[0]}{{{fill}}}}}, {a[0]}}}"
    if n.op == "not":
        return f"~{a[0]}"
    if n.op == "relu":
        src_w = aw[0]
        if n.width <= src_w - 1:
            pos = f"{a[0]}[{n.width - 1}:0]"
        else:
            pos = _cat(_zeros(n.width - (src_w - 1)) + [f"{a[0]}[{src_w - 2}:0]"]) if src_w > 1 \
                else f"{n.width}'d0"
        return f"{a[0]}[{src_w - 1}] ? {n.width}'d0 : {pos}"
    if n.op == "gt":
        return f"({a[0]} > {a[1]})"
    if n.op == "mux":
        return f"{a[0]} ? {a[2]} : {a[1]}"
    raise ValueError(n.op)


def _decl(n: Node, name: str) -> str:
    rng = f"[{n.width - 1}:0] " if n.width > 1 else ""
    return f"wire {'signed ' if n.signed else ''}{rng}{name}"


def emit_verilog(ir: NetlistIR, module_name: str = "bespoke_mlp") -> str:
    """Self-contained combinational Verilog-2001 module; deterministic for a given IR."""
    out_node = ir.nodes[ir.output]
    ports = [f"    input  wire [{ir.input_bits - 1}:0] {_name(ir, i)}" for i in ir.inputs]
    ow = out_node.width
    ports.append(f"    output wire {f'[{ow - 1}:0] ' if ow > 1 else ''}{out_node.param}")
    lines = [
        f"// Bespoke MLP classifier: {len(ir.inputs)} inputs, {len(ir.neuron_outputs)} classes.",
        "// Fully combinational; coefficients are hardwired as shift/add networks.",
        f"module {module_name} (",
        ",\n".join(ports),
        ");",
    ]
    body = []
    for n in ir.nodes:
        if n.op in ("input", "output"):
            continue
        body.append(f"    {_decl(n, _name(ir, n.id))};")
    for n in ir.nodes:
        if n.op == "input":
            continue
        if n.op == "output":
            body.append(f"    assign {n.param} = {_name(ir, n.args[0])};")
        else:
            body.append(f"    assign {_name(ir, n.id)} = {_expr(ir, n)};")
    lines += body
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_testbench(ir: NetlistIR, vectors, module_name: str = "bespoke_mlp") -> str:
    """Self-checking testbench: one assertion per (input vector, expected class)."""
    vectors = [(list(map(int, x)), int(c)) for x, c in vectors]
    if not vectors:
        raise ValueError("testbench needs at least one vector")
    out_node = ir.nodes[ir.output]
    ow = out_node.width
    names = [_name(ir, i) for i in ir.inputs]
    ib = ir.input_bits
    lines = [
        "`timescale 1ns/1ps",
        f"module {module_name}_tb;",
    ]
    lines += [f"    reg [{ib - 1}:0] {nm};" for nm in names]
    lines.append(f"    wire {f'[{ow - 1}:0] ' if ow > 1 else ''}{out_node.param};")
    lines.append("    integer errors;")
    conns = ", ".join(f".{nm}({nm})" for nm in names + [out_node.param])
    lines.append(f"    {module_name} dut ({conns});")
    lines.append("    initial begin")
    lines.append("        errors = 0;")
    for vi, (x, c) in enumerate(vectors):
        assigns = " ".join(f"{nm} = {ib}'d{v};" for nm, v in zip(names, x))
        lines.append(f"        {assigns} #1;")
        lines.append(
            f"        if ({out_node.param} !== {ow}'d{c}) begin errors = errors + 1; "
            f"$display(\"FAIL vector {vi}: got %0d expected {c}\", {out_node.param}); end")
    n = len(vectors)
    lines.append(f"        $display(\"%0d of {n} vectors passed, %0d failed\", {n} - errors, errors);")
    lines.append("        $finish;")
    lines.append("    end")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"
