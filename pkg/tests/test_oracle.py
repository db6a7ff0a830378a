import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transport_lifting import oracle
from transport_lifting.model import (BoundaryMeasure, ConfigurationError, Scenario,
                                     divergence_residual, make_model,
                                     wasserstein1)
from transport_lifting.scenarios import four_to_four, single_pipe, top_to_bottom


def test_enumeration_counts():
    assert len(oracle.enumerate_topologies(1, 1, 0)) == 1
    assert len(oracle.enumerate_topologies(2, 2, 2)) == 2
    assert len(oracle.enumerate_topologies(4, 4, 6)) == 180


def test_enumeration_contains_the_named_families():
    ids = {t.ident for t in oracle.enumerate_topologies(4, 4, 6)}
    assert "0>0|1>1|2>2|3>3" in ids
    assert "(0,1,2,3)>(0,1,2,3)" in ids
    assert "((0,1),(2,3))>((0,1),(2,3))" in ids


def test_enumeration_is_sorted_by_steiner_count():
    topos = oracle.enumerate_topologies(3, 3, 4)
    counts = [t.steiner_count for t in topos]
    assert counts == sorted(counts)
    assert max(counts) == 4


@pytest.mark.parametrize("args", [(7, 1, 0), (1, 0, 0), (2, 2, 7), (2, 2, -1)])
def test_enumeration_limits(args):
    with pytest.raises(ConfigurationError):
        oracle.enumerate_topologies(*args)


def test_single_pipe_costs_one_and_a_half():
    res = oracle.oracle_min_energy(single_pipe())
    assert res.energy == pytest.approx(1.5, abs=1e-9)
    assert res.topology_id == "0>0"


def _two_two(eps=0.2, gap=0.1):
    return top_to_bottom([0.5 - gap, 0.5 + gap], 0.5, make_model("urban", eps, 5.0))


def test_symmetric_two_two_steiner_points_sit_on_the_axis():
    res = oracle.oracle_min_energy(_two_two())
    assert res.topology.steiner_count == 2
    v = res.graph.vertices
    steiner = v[(v[:, 1] > 1e-9) & (v[:, 1] < 1 - 1e-9)]
    assert len(steiner) == 2
    np.testing.assert_allclose(steiner[:, 0], 0.5, atol=1e-4)
    # legs of cost 0.7 meet a trunk of cost 1.2: sin of the leg angle is 6/7
    y = 0.1 * 6 / math.sqrt(13)
    np.testing.assert_allclose(sorted(steiner[:, 1]), [y, 1 - y], atol=1e-4)


def test_symmetric_two_two_agrees_with_grid_search():
    d = 0.1
    ys = np.linspace(0, 0.5, 50001)
    legs = 4 * 0.7 * np.sqrt(d * d + ys * ys)
    brute = min((legs + 1.2 * (1 - 2 * ys)).min(), 2 * 0.7)
    assert oracle.oracle_min_energy(_two_two()).energy == pytest.approx(brute, rel=1e-3)


def test_oracle_graph_matches_the_boundary_measure():
    sc = four_to_four(make_model("urban", 0.3, 5.0))
    g, e, _ = oracle.oracle_min_energy(sc)
    assert divergence_residual(g, sc.signed_measure()) <= 1e-9


@settings(max_examples=15)
@given(st.lists(st.floats(0.05, 0.95), min_size=3, max_size=3, unique=True),
       st.lists(st.floats(0.05, 0.95), min_size=3, max_size=3, unique=True),
       st.floats(0.05, 1.0))
def test_energy_between_w1_and_a_w1(xs, ys, eps):
    xs, ys = sorted(xs), sorted(ys)
    if min(np.diff(xs)) < 0.02 or min(np.diff(ys)) < 0.02:
        return
    a = 4.0
    model = make_model("urban", eps, a)
    sc = Scenario(1, 1, BoundaryMeasure.from_atoms([(x, 1 / 3) for x in xs]),
                  BoundaryMeasure.from_atoms([(3 - y, 1 / 3) for y in ys]), model)
    w1 = wasserstein1(sc.source_measure(), sc.sink_measure())
    e = oracle.oracle_min_energy(sc, max_steiner=4).energy
    assert w1 - 1e-7 <= e <= a * w1 + 1e-7


def test_energy_monotone_in_eps():
    energies = [oracle.oracle_min_energy(four_to_four(make_model("urban", eps, 5.0)),
                                         max_steiner=4).energy
                for eps in (0.05, 0.2, 0.6, 1.5)]
    assert all(b >= a - 1e-9 for a, b in zip(energies, energies[1:]))


def test_small_branched_exponent_approaches_w1():
    sc = four_to_four(make_model("branched", 1e-3))
    w1 = wasserstein1(sc.source_measure(), sc.sink_measure())
    assert oracle.oracle_min_energy(sc, max_steiner=4).energy == pytest.approx(w1, rel=0.01)


def test_unbalanced_topologies_are_skipped():
    sc = Scenario(1, 1, BoundaryMeasure.from_atoms([(0.3, 0.2), (0.7, 0.8)]),
                  BoundaryMeasure.from_atoms([(2.3, 0.5), (2.7, 0.5)]),
                  make_model("urban", 0.5, 2.0))
    res = oracle.oracle_min_energy(sc)
    # pairing each source with one sink cannot balance 0.2 against 0.5
    assert "|" not in res.topology_id
    assert np.isfinite(res.energy)
