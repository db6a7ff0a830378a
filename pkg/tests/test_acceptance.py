"""Acceptance suite: one PASS/FAIL line per criterion, collected in the terminal summary.

Criteria 1-7 are blocking.  Criterion 8 is the slow tier (``RUN_NIGHTLY=1``)
and only warns when the fitted slope leaves its band.
"""
import json
import math
import time
import warnings

import numpy as np
import pytest

from oracles import dense_projection, single_constraint_qp
from test_extract import _axis_graphs, _graph_image, _graph_scenario
from transport_lifting import certificate as cert
from transport_lifting import cli, extract, lift, oracle, solver
from transport_lifting.config import load_config
from transport_lifting.constraints import DualField, PairConstraint, project_K, project_pair
from transport_lifting.model import (BoundaryMeasure, Scenario, TransportGraph, graph_cost,
                                     make_model, wasserstein1)
from transport_lifting.scenarios import line_to_line

RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def _cli(tmp_path, name, *sets):
    argv = ["--config", name, "--out", str(tmp_path), "--quiet"]
    for s in sets:
        argv += ["--set", s]
    code = cli.run(argv)
    return code, json.loads((tmp_path / "energy.json").read_text()) \
        if (tmp_path / "energy.json").exists() else None


@pytest.fixture(scope="module")
def line_runs():
    """Solver on the line-to-line preset grid for each certificate epsilon."""
    cfg = load_config("line_to_line")
    out = {}
    for eps in (1e-3, 1e-2, 1e-1):
        sc = line_to_line(2.0, model=make_model("urban", eps, 5.0))
        t0 = time.perf_counter()
        res = solver.solve(sc, cfg["grid.n"], cfg["grid.m"], cfg["grid.p"], cfg["grid.band"],
                           cli.solver_options(cfg))
        out[eps] = (res, time.perf_counter() - t0)
    return out


def test_criterion_1_wasserstein_limit(tmp_path):
    t0 = time.perf_counter()
    code, energy = _cli(tmp_path, "line_to_line")
    secs = time.perf_counter() - t0
    cfg = load_config(str(tmp_path / "config.cfg"))
    assert (cfg["grid.n"], cfg["grid.m"], cfg["grid.p"]) == (66, 34, 34)
    assert cfg["model.eps"] == 1e-3 and cfg["scenario.ell"] == 2.0
    pv = energy["primal_value"]
    ok = 1.96 <= pv <= 2.04 and secs <= 600
    report(1, ok, f"primal_value {pv:.5f} in [1.96, 2.04], {energy['iterations']} iterations, "
                  f"{secs:.0f} s, exit {code}")
    assert ok


def test_criterion_2_single_pipe(tmp_path):
    code, energy = _cli(tmp_path, "single_pipe")
    pv, ge = energy["primal_value"], energy["grid_energy"]
    ok = abs(pv - 1.5) <= 0.045 and abs(ge - 1.5) <= 0.045
    report(2, ok, f"primal_value {pv:.5f}, grid_energy {ge:.5f}, target 1.5 +- 3%")
    assert ok


def _sweep(tmp_path, name):
    code = cli.run(["--config", name, "--out", str(tmp_path), "--quiet"])
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    head = lines[0].split(",")
    rows = [dict(zip(head, ln.split(","))) for ln in lines[1:]]
    return code, rows


def _collapse(seq):
    out = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(s)
    return out


def _fig_protocol(rows):
    rel = [abs(float(r["primal_value"]) - float(r["oracle_energy"])) / float(r["oracle_energy"])
           for r in rows]
    match = sum(r["image_family"] == r["oracle_family"] for r in rows)
    return rel, match


def test_criterion_3_urban_four_to_four(tmp_path):
    code, rows = _sweep(tmp_path, "four_to_four")
    eps = [float(r["value"]) for r in rows]
    assert eps == pytest.approx([0.02 + 0.3 * k for k in range(10)])
    seq = _collapse(r["oracle_family"] for r in rows)
    rel, match = _fig_protocol(rows)
    ok = (seq == ["pipes", "pairwise", "double_tree", "single_trunk"]
          and max(rel) <= 0.05 and match >= 9)
    mism = [i + 1 for i, r in enumerate(rows) if r["image_family"] != r["oracle_family"]]
    report(3, ok, f"oracle families {' > '.join(seq)}; max energy gap {100 * max(rel):.2f}%; "
                  f"family matches {match}/10 (mismatch at {mism or 'none'})")
    assert ok


def test_criterion_4_branched_four_to_four(tmp_path):
    code, rows = _sweep(tmp_path, "four_to_four_branched")
    eps = [float(r["value"]) for r in rows]
    assert eps == pytest.approx([0.02 + 0.05 * k for k in range(10)])
    rel, match = _fig_protocol(rows)
    ok = max(rel) <= 0.05 and match >= 9
    mism = [i + 1 for i, r in enumerate(rows) if r["image_family"] != r["oracle_family"]]
    seq = _collapse(r["oracle_family"] for r in rows)
    report(4, ok, f"oracle families {' > '.join(seq)}; max energy gap {100 * max(rel):.2f}%; "
                  f"family matches {match}/10 (mismatch at {mism or 'none'})")
    assert ok


def test_criterion_5_certificate_sandwich(line_runs):
    parts, ok = [], True
    for eps, (res, _) in sorted(line_runs.items()):
        p = cert.make_params("urban", eps, 2.0, 5.0)
        rep = cert.verify_admissibility(p)
        total = cert.certificate_bound(p)["total"]
        g = res.grid
        slack = 3 * (g.h1 + g.hs) * res.scenario.sources.total
        ok &= rep.max_violation <= 1e-6 and total <= res.primal_value + slack
        parts.append(f"eps={eps:g}: viol {rep.max_violation:.1e}, bound {total:.4f} <= "
                     f"{res.primal_value:.4f}+{slack:.3f}")
    # closed forms
    c = 0.25 * 1.5 ** (2 / 3)
    grid = np.logspace(-6, 0, 25)
    ex = np.array([cert.certificate_bound(cert.make_params("urban", e, 2.0, 5.0))["excess"]
                   for e in grid])
    ref = 2.0 * np.minimum(c * grid ** (2 / 3), 4.0)
    closed = np.abs(ex - ref).max() <= 4 * np.finfo(float).eps
    slopes = np.diff(np.log(ex)) / np.diff(np.log(grid))
    slope_ok = np.abs(slopes - 2 / 3).max() <= 1e-12
    br = [(e, cert.certificate_bound(cert.make_params("branched", e, 2.0))["excess"])
          for e in (1e-4, 1e-3, 1e-2, 0.1, 0.5)]
    br_ok = all(abs(x - 2.0 * e * abs(math.log(e)) / 2) <= 2 * np.spacing(x) for e, x in br)
    ok &= closed and slope_ok and br_ok
    parts.append(f"urban excess closed form {closed}, slope 2/3 within "
                 f"{np.abs(slopes - 2 / 3).max():.1e}, branched excess exact {br_ok}")
    report(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_non_binary_witness(tmp_path):
    _, nb = _cli(tmp_path / "nb", "nonbinary")
    _, pipe = _cli(tmp_path / "pipe", "single_pipe")
    b4, bp = nb["binarity_score"], pipe["binarity_score"]
    u = np.loadtxt(tmp_path / "nb" / "u.csv", delimiter=",", skiprows=1)[:, 4]
    ok = b4 > 0.02 and bp < 0.005
    report(6, ok, f"4+4 a=2.13 eps=0.5 binarity {b4:.4f} > 0.02; single pipe {bp:.5f} < 0.005; "
                  f"distinct image levels {np.unique(np.round(u, 6)).size}")
    assert ok


def test_criterion_7_property_suites():
    rng = np.random.default_rng(2024)
    timings, checks = {}, {}

    t0 = time.perf_counter()
    g = lift.Grid3(5, 4, 2, 0.3, 0.7, 0.2, (0.0, 0.0), 0.0, 1)
    worst = 0.0
    for _ in range(100):
        v = rng.normal(size=(5, 4, 3))
        phi = DualField(rng.normal(size=(5, 4, 3, 2)), rng.normal(size=(5, 4, 3)))
        d = solver.grad(v, g)
        lhs = np.sum(d.x * phi.x) + np.sum(d.s * phi.s)
        worst = max(worst, abs(lhs - np.sum(v * solver.grad_adjoint(phi, g))))
    checks["adjoint"] = worst <= 1e-12
    timings["adjoint"] = (time.perf_counter() - t0, worst)

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        L = rng.integers(1, 9)
        l1 = rng.integers(0, L)
        l2 = rng.integers(l1, L)
        hs, c = rng.uniform(0.05, 1), rng.uniform(0, 2)
        col = rng.normal(scale=3, size=(L, 2))
        got = project_pair(col, PairConstraint(l1, l2, c), hs)
        worst = max(worst, np.abs(got - single_constraint_qp(col, l1, l2, c, hs)).max())
    checks["pair"] = worst <= 1e-10
    timings["pair"] = (time.perf_counter() - t0, worst)

    t0 = time.perf_counter()
    worst = 0.0
    for k in range(50):
        model = make_model("urban", 0.3, 2.0) if k % 2 == 0 else make_model("branched", 0.3)
        z = rng.normal(scale=2.0, size=(1, 1, 8, 2))
        res = project_K(DualField(z, np.zeros((1, 1, 8))), model, hs=1 / 6, tol=1e-13,
                        max_cycles=20000)
        worst = max(worst, np.linalg.norm(res.phi.x[0, 0] - dense_projection(z[0, 0], model,
                                                                              1 / 6)))
    checks["dykstra"] = worst <= 1e-6
    timings["dykstra"] = (time.perf_counter() - t0, worst)

    t0 = time.perf_counter()
    g = lift.Grid3(10, 9, 4, 0.1, 0.125, 0.5, (0.0, 0.0), 0.0, 1)
    worst = 0.0
    for _ in range(100):
        img = extract.GridImage(rng.normal(size=(10, 9)) * rng.integers(1, 10), g)
        worst = max(worst, np.abs(extract.dual_cell_outflow(extract.flux(img))).max())
    checks["divergence"] = worst <= 1e-12
    timings["divergence"] = (time.perf_counter() - t0, worst)

    t0 = time.perf_counter()
    ok_w1, n = True, 0
    while n < 50:
        xs, ys = np.sort(rng.uniform(0.05, 0.95, 3)), np.sort(rng.uniform(0.05, 0.95, 3))
        if min(np.diff(xs)) < 0.02 or min(np.diff(ys)) < 0.02:
            continue
        eps, a = rng.uniform(0.05, 1.0), rng.uniform(1.5, 6)
        sc = Scenario(1, 1, BoundaryMeasure.from_atoms([(x, 1 / 3) for x in xs]),
                      BoundaryMeasure.from_atoms([(3 - y, 1 / 3) for y in ys]),
                      make_model("urban", eps, a))
        w1 = wasserstein1(sc.source_measure(), sc.sink_measure())
        e = oracle.oracle_min_energy(sc, max_steiner=4).energy
        ok_w1 &= w1 - 1e-7 <= e <= a * w1 + 1e-7
        n += 1
    checks["w1"] = ok_w1
    timings["w1"] = (time.perf_counter() - t0, 0.0)

    t0 = time.perf_counter()
    worst = 0.0
    for model in (make_model("urban", 0.5, 2.0), make_model("branched", 0.4)):
        k, graphs = _axis_graphs()
        for verts, edges in graphs:
            graph = TransportGraph.from_edges(verts, edges)
            sc = _graph_scenario(graph, model)
            grid = lift.build_grid(sc, k + 2, k + 2, 6)
            img = _graph_image(graph, grid, sc)
            worst = max(worst, abs(extract.grid_energy(img, model) - graph_cost(graph, model)))
    checks["graph"] = worst <= 1e-10
    timings["graph"] = (time.perf_counter() - t0, worst)

    fast = all(t < 60 for t, _ in timings.values())
    ok = all(checks.values()) and fast
    detail = ", ".join(f"{k} {'ok' if checks[k] else 'BAD'} ({w:.1e}, {t:.1f} s)"
                       for k, (t, w) in timings.items())
    report(7, ok, detail)
    assert ok


@pytest.mark.nightly
def test_criterion_8_scaling_slope(tmp_path):
    cfg = load_config("line_to_line")
    eps = np.array([0.002, 0.005, 0.01, 0.02, 0.05])
    excess = []
    for e in eps:
        sc = line_to_line(2.0, model=make_model("urban", float(e), 5.0))
        res = solver.solve(sc, cfg["grid.n"], cfg["grid.m"], cfg["grid.p"], cfg["grid.band"],
                           cli.solver_options(cfg))
        excess.append(res.primal_value - 2.0)
    excess = np.array(excess)
    if np.any(excess <= 0):
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(eps), np.log(excess), 1)[0])
    ok = 0.5 <= slope <= 0.85
    report(8, ok, f"fitted slope {slope:.3f} (band [0.5, 0.85]); excess "
                  + ", ".join(f"{x:.4f}" for x in excess) + ("" if ok else "; non-blocking"))
    if not ok:
        warnings.warn(f"scaling slope {slope:.3f} outside [0.5, 0.85]")
