import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dense_projection, single_constraint_qp
from transport_lifting.constraints import (DualField, PairConstraint, jump_bound,
                                           max_violation, pair_constraints, project_K,
                                           project_pair, project_pointwise_k1)
from transport_lifting.model import make_model

URBAN = make_model("urban", 0.3, 2.0)
BRANCHED = make_model("branched", 0.3)


def test_pair_feasible_block_is_untouched():
    col = np.array([[0.1, 0.0], [0.0, 0.1], [0.2, 0.2]])
    out = project_pair(col, PairConstraint(0, 2, 1.0), 1.0)
    np.testing.assert_array_equal(out, col)


def test_pair_closed_form_example():
    out = project_pair([[1, 0], [1, 0]], PairConstraint(0, 1, 1.0), 1.0)
    np.testing.assert_allclose(out, [[0.5, 0], [0.5, 0]])
    assert np.linalg.norm(out.sum(axis=0)) == pytest.approx(1.0, abs=1e-15)


def test_pair_rejects_bad_constraints():
    with pytest.raises(ValueError):
        PairConstraint(3, 1, 1.0)
    with pytest.raises(ValueError):
        PairConstraint(0, 1, -1.0)


def test_pair_matches_single_constraint_qp():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        L = rng.integers(1, 9)
        l1 = rng.integers(0, L)
        l2 = rng.integers(l1, L)
        hs = rng.uniform(0.05, 1)
        c = rng.uniform(0, 2)
        col = rng.normal(scale=3, size=(L, 2))
        got = project_pair(col, PairConstraint(l1, l2, c), hs)
        ref = single_constraint_qp(col, l1, l2, c, hs)
        worst = max(worst, np.abs(got - ref).max())
    assert worst <= 1e-10


@given(arrays(float, (6, 2), elements=st.floats(-10, 10)),
       arrays(float, (6, 2), elements=st.floats(-10, 10)),
       st.integers(0, 5), st.integers(0, 5), st.floats(0, 3), st.floats(0.05, 1))
def test_pair_projection_properties(x, y, i, j, c, hs):
    pc = PairConstraint(min(i, j), max(i, j), c)
    px, py = project_pair(x, pc, hs), project_pair(y, pc, hs)
    S = hs * px[pc.l1:pc.l2 + 1].sum(axis=0)
    assert np.linalg.norm(S) <= c + 1e-12 * max(1, c)
    np.testing.assert_allclose(project_pair(px, pc, hs), px, atol=1e-12)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-9


def test_pointwise_k1_examples():
    a = 2.0
    phi = DualField(np.array([[2 * a, 0.0], [0.3, 0.4]]), np.array([-3.0, 1.0]))
    out = project_pointwise_k1(phi, a)
    np.testing.assert_allclose(out.x, [[a, 0], [0.3, 0.4]])
    np.testing.assert_array_equal(out.s, [0.0, 1.0])


def test_pair_bounds_follow_lengths():
    pcs = pair_constraints(URBAN, 4, 0.25)
    assert [(p.l1, p.l2) for p in pcs][:4] == [(0, 0), (0, 1), (0, 2), (0, 3)]
    assert len(pcs) == 10
    for p in pcs:
        L = (p.l2 - p.l1 + 1) * 0.25
        assert p.c == pytest.approx(min(L + 0.3, 2 * L))
    dy = pair_constraints(BRANCHED, 8, 0.25, dyadic=True)
    assert {p.l2 - p.l1 + 1 for p in dy} == {1, 2, 4, 8}


def test_project_K_keeps_feasible_fields():
    rng = np.random.default_rng(0)
    x = rng.normal(scale=0.05, size=(3, 2, 6, 2))
    phi = DualField(x, np.abs(rng.normal(size=(3, 2, 6))))
    res = project_K(phi, URBAN, hs=0.2)
    np.testing.assert_array_equal(res.phi.x, x)
    np.testing.assert_array_equal(res.phi.s, phi.s)
    assert res.violation == 0 and res.cycles == 1 and res.converged


def test_project_K_with_one_active_pair_equals_pair_projection():
    hs = 0.2
    x = np.zeros((1, 1, 6, 2))
    x[0, 0, 2:4, 0] = 2.0           # pair (2, 3) has sum 0.8 > min(0.4 + 0.3, 0.8)
    phi = DualField(x, np.zeros((1, 1, 6)))
    res = project_K(phi, URBAN, hs=hs, tol=1e-12, max_cycles=100)
    c = float(jump_bound(URBAN, 2 * hs))
    ref = project_pair(x[0, 0], PairConstraint(2, 3, c), hs)
    np.testing.assert_allclose(res.phi.x[0, 0], ref, atol=1e-12)


def test_project_K_clamps_phi_s():
    phi = DualField(np.zeros((2, 2, 3, 2)), np.full((2, 2, 3), -1.0))
    assert np.all(project_K(phi, URBAN, hs=0.5).phi.s == 0)


@pytest.mark.parametrize("model", [URBAN, BRANCHED], ids=["urban", "branched"])
def test_dykstra_matches_dense_projection(model):
    rng = np.random.default_rng(11)
    hs = 1 / 6
    worst = 0.0
    for _ in range(25):
        z = rng.normal(scale=2.0, size=(1, 1, 8, 2))
        res = project_K(DualField(z, np.zeros((1, 1, 8))), model, hs=hs,
                        tol=1e-13, max_cycles=20000)
        ref = dense_projection(z[0, 0], model, hs)
        worst = max(worst, np.linalg.norm(res.phi.x[0, 0] - ref))
    assert worst <= 1e-6


def test_dykstra_approaches_projection_monotonically():
    rng = np.random.default_rng(3)
    hs = 1 / 6
    for _ in range(5):
        z = rng.normal(scale=2.0, size=(1, 1, 8, 2))
        ref = dense_projection(z[0, 0], URBAN, hs)
        dist = []
        for cycles in (1, 2, 4, 8, 16, 32, 64, 128):
            r = project_K(DualField(z, np.zeros((1, 1, 8))), URBAN, hs=hs, tol=1e-14,
                          max_cycles=cycles)
            dist.append(np.linalg.norm(r.phi.x[0, 0] - ref))
        assert all(b <= a + 1e-9 for a, b in zip(dist, dist[1:]))


@pytest.mark.parametrize("model", [URBAN, BRANCHED], ids=["urban", "branched"])
def test_validator_agrees_with_reported_violation(model):
    rng = np.random.default_rng(5)
    phi = DualField(rng.normal(scale=3, size=(4, 3, 10, 2)), rng.normal(size=(4, 3, 10)))
    res = project_K(phi, model, hs=0.1, tol=1e-8, max_cycles=500)
    assert res.converged
    assert max_violation(res.phi, model, 0.1) <= 1e-8 + 1e-12
    assert max_violation(phi, model, 0.1) > 1


def test_branched_single_layer_bound():
    rng = np.random.default_rng(9)
    hs = 0.1
    phi = DualField(rng.normal(scale=5, size=(3, 3, 12, 2)), np.zeros((3, 3, 12)))
    res = project_K(phi, BRANCHED, hs=hs, tol=1e-10, max_cycles=2000)
    nrm = np.linalg.norm(res.phi.x, axis=-1)
    assert nrm.max() <= hs ** (-BRANCHED.eps) + 1e-8


def test_dyadic_family_is_a_relaxation():
    rng = np.random.default_rng(2)
    phi = DualField(rng.normal(scale=3, size=(2, 2, 9, 2)), np.zeros((2, 2, 9)))
    res = project_K(phi, BRANCHED, hs=0.125, tol=1e-10, max_cycles=2000, dyadic=True)
    assert max_violation(res.phi, BRANCHED, 0.125, dyadic=True) <= 1e-9
    full = project_K(phi, BRANCHED, hs=0.125, tol=1e-10, max_cycles=2000)
    # projecting onto a larger set moves the point less
    assert (np.linalg.norm(res.phi.x - phi.x)
            <= np.linalg.norm(full.phi.x - phi.x) + 1e-9)


def test_warm_start_reproduces_the_projection():
    from transport_lifting.constraints import DykstraState, PairTable
    rng = np.random.default_rng(4)
    z = DualField(rng.normal(scale=3, size=(2, 2, 7, 2)), np.zeros((2, 2, 7)))
    table = PairTable(URBAN, 7, 0.2)
    state = DykstraState.zeros(4, 7, table.n_pairs)
    first = project_K(z, URBAN, hs=0.2, tol=1e-12, max_cycles=5000, state=state, table=table)
    again = project_K(z, URBAN, hs=0.2, tol=1e-12, max_cycles=5000, state=state, table=table)
    np.testing.assert_allclose(again.phi.x, first.phi.x, atol=1e-9)
