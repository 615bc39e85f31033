import json
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axmlp.axneuron import AxConfig, build_significance, forward_approx, predict_approx
from axmlp.dataset import QuantizedDataset
from axmlp.mlp import QuantizedMLP, Topology, forward_exact, predict_exact
from axmlp.rtl import Node, NetlistIR, emit_testbench, emit_verilog, interpret, lower, validate

from conftest import random_qmlp


# --- a small evaluator for the Verilog subset the emitter produces -------------

TOKEN = re.compile(r"\d+'s?[db][0-9]+|\d+|[A-Za-z_]\w*|[{}\[\]():?,~+\->]")


class VerilogSim:
    """Evaluates the emitted continuous assignments in order (they are topologically sorted)."""

    def __init__(self, text):
        self.decl = {}
        self.assigns = []
        for m in re.finditer(r"(input|output)?\s*(wire|reg)\s+(signed\s+)?(\[(\d+):0\]\s+)?(\w+)[;,\n]", text):
            width = int(m.group(5)) + 1 if m.group(5) else 1
            self.decl[m.group(6)] = (width, bool(m.group(3)))
        for m in re.finditer(r"assign (\w+) = (.*);", text):
            self.assigns.append((m.group(1), TOKEN.findall(m.group(2))))

    def run(self, inputs):
        env = {k: v for k, v in inputs.items()}
        for lhs, toks in self.assigns:
            w, _ = self.decl[lhs]
            self.toks, self.pos, self.env, self.ctx = toks, 0, env, w
            v, _, _ = self.ternary()
            assert self.pos == len(toks)
            env[lhs] = v & ((1 << w) - 1)
        return env

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, t=None):
        tok = self.toks[self.pos]
        assert t is None or tok == t, (tok, t)
        self.pos += 1
        return tok

    def ternary(self):
        c = self.compare()
        if self.peek() == "?":
            self.take("?")
            a = self.ternary()
            self.take(":")
            b = self.ternary()
            return a if c[0] else b
        return c

    def compare(self):
        a = self.additive()
        if self.peek() == ">":
            self.take(">")
            b = self.additive()
            w = max(a[1], b[1])
            signed = a[2] and b[2]
            return int(self.ext(a, w, signed) > self.ext(b, w, signed)), 1, False
        return a

    def ext(self, v, w, signed):
        val, vw, vs = v
        if signed and vs and val >> (vw - 1):
            return val - (1 << vw)
        return val

    def additive(self):
        a = self.unary()
        while self.peek() in ("+", "-"):
            op = self.take()
            b = self.unary()
            w = max(a[1], b[1], self.ctx)
            signed = a[2] and b[2]
            x, y = self.ext(a, w, signed), self.ext(b, w, signed)
            r = (x + y if op == "+" else x - y) & ((1 << w) - 1)
            a = (r, w, signed)
        return a

    def unary(self):
        if self.peek() == "~":
            self.take()
            v, w, s = self.unary()
            w2 = max(w, self.ctx)
            x = self.ext((v, w, s), w2, s) & ((1 << w2) - 1)
            return (~x) & ((1 << w2) - 1), w2, s
        return self.primary()

    def primary(self):
        t = self.take()
        if t == "(":
            v = self.ternary()
            self.take(")")
            return v
        if t == "{":
            first = self.take()
            if self.peek() == "{":  # replication
                n = int(first)
                self.take("{")
                v, w, _ = self.ternary()
                self.take("}")
                self.take("}")
                out = 0
                for _ in range(n):
                    out = (out << w) | v
                return out, n * w, False
            self.pos -= 1
            parts = [self.ternary()]
            while self.peek() == ",":
                self.take(",")
                parts.append(self.ternary())
            self.take("}")
            out, width = 0, 0
            for v, w, _ in parts:
                out = (out << w) | (v & ((1 << w) - 1))
                width += w
            return out, width, False
        m = re.fullmatch(r"(\d+)'(s?)[db]([0-9]+)", t)
        if m:
            base = 2 if "b" in t else 10
            return int(m.group(3), base), int(m.group(1)), bool(m.group(2))
        if t.isdigit():
            return int(t), 32, True
        v = self.env[t]
        w, s = self.decl[t]
        if self.peek() == "[":
            self.take("[")
            hi = int(self.take())
            lo = hi
            if self.peek() == ":":
                self.take(":")
                lo = int(self.take())
            self.take("]")
            return (v >> lo) & ((1 << (hi - lo + 1)) - 1), hi - lo + 1, False
        return v, w, s


def sim_classes(text, x):
    sim = VerilogSim(text)
    return np.array([sim.run({f"x{i}": int(v) for i, v in enumerate(row)})["class_idx"] for row in x])


# --- tests ---------------------------------------------------------------------


def _single(coeffs, bias=0, n_out=None):
    c = np.asarray(coeffs)[:, None]
    return QuantizedMLP(Topology((len(coeffs), 1)), (c,), (np.array([bias]),), (0,), 4)


def test_power_of_two_multiplier_is_wiring():
    ir = lower(_single([4]))
    assert ir.count("add", "sub") == 0
    assert "*" not in emit_verilog(ir)


def test_no_inverter_without_negatives():
    assert lower(_single([3, 5, 1], 2)).count("not") == 0
    assert lower(_single([3, -5, 1], 2)).count("not") == 1
    assert lower(_single([3, 5, 1], -2)).count("not") == 1


def test_exact_positive_model_sums():
    rng = np.random.default_rng(0)
    q = random_qmlp(rng, (5, 3, 4), signed=False)
    x = rng.integers(0, 16, (500, 5))
    outs, cls = interpret(lower(q), x)
    assert np.array_equal(outs, forward_exact(q, x).outputs)
    assert np.array_equal(cls, predict_exact(q, x))


def test_negation_without_truncation_is_exact_minus_one():
    rng = np.random.default_rng(1)
    q = random_qmlp(rng, (5, 4))
    x = rng.integers(0, 16, (500, 5))
    has_neg = (q.coeffs[0] < 0).any(axis=0) | (q.biases[0] < 0)
    outs, _ = interpret(lower(q), x)
    assert np.array_equal(outs, forward_exact(q, x).outputs - has_neg)


def _random_ax(rng, sig):
    g = [float(rng.choice(np.append(s.ravel(), [0.0, 1.0]))) if rng.random() < 0.8 else None
         for s in sig.g]
    return AxConfig(int(rng.integers(1, 4)), tuple(g))


def _model_and_sig(rng):
    q = random_qmlp(rng)
    x = rng.integers(0, 16, (64, q.topology.n_inputs))
    return q, build_significance(q, QuantizedDataset(x, np.zeros(64, int), 4))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_netlist_matches_behavioral_model(seed):
    rng = np.random.default_rng(seed)
    q, sig = _model_and_sig(rng)
    ax = _random_ax(rng, sig)
    x = rng.integers(0, 16, (300, q.topology.n_inputs))
    outs, cls = interpret(lower(q, sig, ax), x)
    assert np.array_equal(outs, forward_approx(q, sig, ax, x)[-1])
    assert np.array_equal(cls, predict_approx(q, sig, ax, x))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_verilog_text_matches_netlist(seed):
    rng = np.random.default_rng(seed)
    q, sig = _model_and_sig(rng)
    ax = _random_ax(rng, sig)
    ir = lower(q, sig, ax)
    x = rng.integers(0, 16, (40, q.topology.n_inputs))
    assert np.array_equal(sim_classes(emit_verilog(ir), x), interpret(ir, x)[1])


def test_verilog_on_trained_model(bc):
    ax = AxConfig(2, (0.1, 0.2))
    ir = lower(bc.q, bc.sig, ax)
    x = bc.test.features
    assert np.array_equal(sim_classes(emit_verilog(ir), x), predict_approx(bc.q, bc.sig, ax, x))


def test_emission_deterministic_and_ports(bc):
    v1 = emit_verilog(lower(bc.q, bc.sig, AxConfig(1, (0.2, None))))
    v2 = emit_verilog(lower(bc.q, bc.sig, AxConfig(1, (0.2, None))))
    assert v1 == v2
    assert "*" not in v1
    ports = re.findall(r"^\s+(input|output) ", v1, re.M)
    assert len(ports) == 9 + 1


def test_testbench(bc):
    ir = lower(bc.q)
    x = bc.test.features[:10]
    vec = list(zip(x, predict_exact(bc.q, x)))
    tb = emit_testbench(ir, vec)
    assert tb.count("!==") == 10
    assert tb == emit_testbench(ir, vec)
    with pytest.raises(ValueError):
        emit_testbench(ir, [])


def test_validate_rejects_bad_netlists():
    ir = NetlistIR(4)
    a = ir.add("input", 4, param="x0")
    ir.add("add", 2, args=(a, a))
    ir.output = ir.add("output", 2, args=(1,), param="class_idx")
    with pytest.raises(ValueError, match="narrower"):
        validate(ir)
    ir2 = NetlistIR(4)
    ir2.nodes = [Node(0, "add", 4, False, (1, 1)), Node(1, "input", 4, False, (), "x0")]
    ir2.output = 0
    with pytest.raises(ValueError, match="precede"):
        validate(ir2)
    with pytest.raises(ValueError):
        ir2.add("mul", 4)


def test_ir_dump(tmp_path, bc):
    ir = lower(bc.q)
    ir.dump(tmp_path / "ir.json")
    d = json.loads((tmp_path / "ir.json").read_text())
    assert len(d["nodes"]) == len(ir.nodes)
    assert all("width" in n for n in d["nodes"])


def test_interpreter_rejects_bad_inputs(bc):
    ir = lower(bc.q)
    with pytest.raises(ValueError):
        interpret(ir, np.full((1, 9), 16))
    with pytest.raises(ValueError):
        interpret(ir, np.zeros((1, 8), int))
