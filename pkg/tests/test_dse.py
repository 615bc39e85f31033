import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axmlp.axneuron import AxConfig, SignificanceMap, accuracy_approx
from axmlp.cost import AreaReport
from axmlp.dse import (DesignPoint, check_front, enumerate_configs, evaluate, explore,
                       layer_candidates, pareto, select, write_pareto_csv, PARETO_COLUMNS)
from axmlp.mlp import QuantizedMLP, Topology, accuracy

from conftest import random_qmlp


def _pt(acc, area, i=0, ntr=0):
    return DesignPoint(AxConfig(3, (None,)), acc, None, AreaReport(total_area=area), area, 0, ntr, i)


def _model_with_g(gs):
    """One-neuron-per-layer chain whose layer l has len(gs[l]) inputs."""
    sizes = [len(gs[0])] + [len(g) for g in gs[1:]] + [1]
    coeffs = tuple(np.ones((a, b), int) for a, b in zip(sizes[:-1], sizes[1:]))
    biases = tuple(np.zeros(b, int) for b in sizes[1:])
    q = QuantizedMLP(Topology(tuple(sizes)), coeffs, biases, (7,) * len(coeffs), 4)
    g = tuple(np.resize(np.asarray(v, float), c.shape) for v, c in zip(gs, coeffs))
    return q, SignificanceMap(tuple(np.zeros(c.shape[0]) for c in coeffs), g)


def test_enumeration_counts():
    q, sig = _model_with_g([[0.1, 0.4]])
    assert len(enumerate_configs(q, sig, None)) == 9
    q, sig = _model_with_g([[0.1, 0.2, 0.7], [0.3, 0.6]])
    assert len(enumerate_configs(q, sig, None)) == 36


def test_cap_picks_spread_representatives():
    g = np.linspace(0.01, 0.2, 20)
    cand = layer_candidates(g, np.ones(20), 8)
    assert len(cand) == 9 and cand[0] is None
    assert cand[1] == g[0] and cand[-1] == g[-1]
    assert cand[1:] == sorted(cand[1:])
    assert layer_candidates(g, np.ones(20), None)[1:] == sorted(g.tolist())


def test_candidates_ignore_zero_coefficients():
    assert layer_candidates(np.array([0.0, 0.5, 0.5]), np.array([0, 3, 1])) == [None, 0.5]


def test_pareto_examples():
    pts = [_pt(0.9, 10, 0), _pt(0.8, 5, 1), _pt(0.85, 12, 2)]
    assert [(p.train_accuracy, p.total_area) for p in pareto(pts)] == [(0.8, 5), (0.9, 10)]
    assert pareto([pts[0]]) == [pts[0]]
    dup = [_pt(0.9, 10, 0), _pt(0.9, 10, 1)]
    assert [p.index for p in pareto(dup)] == [0]
    with pytest.raises(ValueError):
        pareto([])


def _brute_front(keys):
    out = set()
    for p in keys:
        if not any(q[0] >= p[0] and q[1] <= p[1] and q != p for q in keys):
            out.add(p)
    return out


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), min_size=1, max_size=40))
def test_pareto_matches_bruteforce(raw):
    pts = [_pt(a / 10, float(c), i) for i, (a, c) in enumerate(raw)]
    front = pareto(pts)
    got = [(p.train_accuracy, p.total_area) for p in front]
    assert set(got) == _brute_front([(p.train_accuracy, p.total_area) for p in pts])
    assert len(got) == len(set(got))
    assert [a for _, a in got] == sorted(a for _, a in got)
    check_front(pts, front)


def test_check_front_rejects_wrong_front():
    pts = [_pt(0.9, 10, 0), _pt(0.8, 5, 1), _pt(0.85, 12, 2)]
    with pytest.raises(AssertionError):
        check_front(pts, pts)


def test_select_examples():
    front = [_pt(0.96, 4, 1), _pt(0.98, 8, 0)]
    p, ok = select(front, 0.01, 0.98)
    assert (p.train_accuracy, ok) == (0.98, True)
    p, ok = select(front, 0.05, 0.98)
    assert (p.train_accuracy, ok) == (0.96, True)
    p, ok = select(front, 0.0, 0.99)
    assert (p.train_accuracy, ok) == (0.98, False)


def test_select_tie_prefers_fewer_truncations():
    front = [_pt(0.9, 4, 0, ntr=5), _pt(0.9, 4, 1, ntr=2)]
    assert select(front, 0.0, 0.9)[0].n_truncated == 2


def test_explore_exhaustive_and_anchor(mammo):
    pts = explore(mammo.q, mammo.sig, mammo.train, mammo.test, cap=3, jobs=1)
    per_layer = [len(layer_candidates(g, c, 3)) for g, c in zip(mammo.sig.g, mammo.q.coeffs)]
    assert len(pts) == 3 * int(np.prod(per_layer))
    assert any(p.config.is_exact for p in pts)
    for p in pts:
        assert 0 <= p.train_accuracy <= 1 and 0 <= p.test_accuracy <= 1
    check_front(pts, pareto(pts))


def test_parallel_equals_serial(mammo):
    a = explore(mammo.q, mammo.sig, mammo.train, mammo.test, cap=2, jobs=1)
    b = explore(mammo.q, mammo.sig, mammo.train, mammo.test, cap=2, jobs=2)
    assert a == b


def test_evaluate_properties(mammo):
    cfg = AxConfig(2, (0.1, 0.1))
    assert evaluate(mammo.q, mammo.sig, cfg, mammo.train) == evaluate(mammo.q, mammo.sig, cfg, mammo.train)
    small = evaluate(mammo.q, mammo.sig, AxConfig(2, (0.05, None)), mammo.train)
    large = evaluate(mammo.q, mammo.sig, AxConfig(2, (0.3, 0.3)), mammo.train)
    assert large.total_area <= small.total_area


def test_exact_point_on_positive_model():
    rng = np.random.default_rng(2)
    q = random_qmlp(rng, (5, 3, 2), signed=False)
    from axmlp.dataset import QuantizedDataset
    x = rng.integers(0, 16, (100, 5))
    ds = QuantizedDataset(x, rng.integers(0, 2, 100), 4)
    p = evaluate(q, None, AxConfig.exact(2), ds)
    assert p.train_accuracy == accuracy(q, ds)


def test_csv_columns(tmp_path):
    write_pareto_csv([_pt(0.9, 10)], tmp_path / "p.csv")
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header.split(",") == PARETO_COLUMNS
