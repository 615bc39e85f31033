import numpy as np
import pytest

from axmlp.axneuron import build_significance
from axmlp.dataset import load_builtin, prepare
from axmlp.mlp import QuantizedMLP, Topology, TrainConfig, assemble, quantize, train_float

TOPOLOGIES = {"breast_cancer": (9, 3, 2), "mammographic": (5, 3, 2), "pendigits": (16, 5, 10)}


class Trained:
    def __init__(self, name, epochs=40, seed=0):
        self.name = name
        self.train, self.test = prepare(load_builtin(name), 0.7, seed, 4)
        self.float = train_float(self.train, Topology(TOPOLOGIES[name]),
                                 TrainConfig(epochs=epochs, lr=0.05, seed=seed))
        self.q = quantize(self.float, 4)
        self.sig = build_significance(self.q, self.train)


_cache = {}


def trained(name, epochs=40, seed=0):
    key = (name, epochs, seed)
    if key not in _cache:
        _cache[key] = Trained(name, epochs, seed)
    return _cache[key]


@pytest.fixture(scope="session")
def bc():
    return trained("breast_cancer")


@pytest.fixture(scope="session")
def mammo():
    return trained("mammographic")


@pytest.fixture(scope="session")
def pd_model():
    return trained("pendigits", epochs=20)


def random_qmlp(rng, sizes=None, input_bits=4, signed=True, density=0.8):
    """Random integer MLP with coefficients in [-127, 127]."""
    if sizes is None:
        n_in = int(rng.integers(1, 9))
        hidden = int(rng.integers(1, 6))
        sizes = (n_in, hidden, int(rng.integers(2, 5)))
    topo = Topology(tuple(sizes))
    coeffs, biases, frac = [], [], []
    for n_in, n_out in topo.layers:
        lo = -127 if signed else 0
        c = rng.integers(lo, 128, (n_in, n_out))
        c[rng.random(c.shape) > density] = 0
        coeffs.append(c)
        frac.append(int(rng.integers(3, 8)))
        biases.append(rng.normal(0, 0.5, n_out) if signed else np.abs(rng.normal(0, 0.5, n_out)))
    return assemble(topo, coeffs, biases, frac, input_bits)


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion, repeated in the summary

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def report(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[num] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])
