"""Brute-force reference networks for small boundary transport problems.

A candidate network is an order-respecting forest: sources and sinks are
sorted left to right and split into consecutive blocks, block ``r`` of
sources feeding block ``r`` of sinks.  Inside a block the sources merge
along an ordered tree, a trunk carries the block mass, and an ordered
tree splits it onto the sinks.  Internal tree nodes are Steiner points.

With the topology fixed every edge flow is fixed, so the energy is a
positively weighted sum of edge lengths and hence convex in the Steiner
positions.  It is minimized exactly as a second-order cone program.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import cvxpy as cp
import numpy as np

from .model import (ConfigurationError, Scenario, TransportGraph, graph_cost)

MAX_TERMINALS = 6
MAX_STEINER = 6
TIE_RTOL = 1e-7
MERGE_TOL = 1e-7


# --------------------------------------------------------------------------
# topologies
# --------------------------------------------------------------------------

def _tree_str(tree) -> str:
    if isinstance(tree, int):
        return str(tree)
    return "(" + ",".join(_tree_str(c) for c in tree) + ")"


def _internal_count(tree) -> int:
    if isinstance(tree, int):
        return 0
    return 1 + sum(_internal_count(c) for c in tree)


@dataclass(frozen=True)
class Block:
    """Consecutive sources merging along ``source_tree`` and feeding sinks."""

    source_tree: object
    sink_tree: object

    def leaves(self, side: str) -> list[int]:
        tree = self.source_tree if side == "source" else self.sink_tree
        out: list[int] = []

        def walk(t):
            if isinstance(t, int):
                out.append(t)
            else:
                for c in t:
                    walk(c)
        walk(tree)
        return out


@dataclass(frozen=True)
class Topology:
    blocks: tuple

    @property
    def steiner_count(self) -> int:
        return sum(_internal_count(b.source_tree) + _internal_count(b.sink_tree)
                   for b in self.blocks)

    @property
    def ident(self) -> str:
        return "|".join(f"{_tree_str(b.source_tree)}>{_tree_str(b.sink_tree)}"
                        for b in self.blocks)

    def __str__(self):
        return self.ident


def _compositions(n: int, parts: int) -> Iterator[tuple]:
    """Ordered splits of ``n`` into ``parts`` positive integers."""
    for cuts in itertools.combinations(range(1, n), parts - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


@lru_cache(maxsize=None)
def ordered_trees(lo: int, hi: int) -> tuple:
    """All plane trees on leaves ``lo..hi-1`` whose internal nodes have >= 2 children."""
    if hi - lo == 1:
        return (lo,)
    out = []
    n = hi - lo
    for parts in range(2, n + 1):
        for comp in _compositions(n, parts):
            starts = np.cumsum((0,) + comp)[:-1] + lo
            groups = [ordered_trees(int(s), int(s + c)) for s, c in zip(starts, comp)]
            out.extend(tuple(choice) for choice in itertools.product(*groups))
    return tuple(out)


def enumerate_topologies(k: int, k_sinks: int, max_steiner: int) -> list[Topology]:
    """All order-respecting block forests with at most ``max_steiner`` Steiner points."""
    if not (1 <= k <= MAX_TERMINALS and 1 <= k_sinks <= MAX_TERMINALS):
        raise ConfigurationError(
            f"terminal counts must lie in 1..{MAX_TERMINALS}, got {k} and {k_sinks}")
    if not (0 <= max_steiner <= MAX_STEINER):
        raise ConfigurationError(f"max_steiner must lie in 0..{MAX_STEINER}, got {max_steiner}")
    out: list[Topology] = []
    for r in range(1, min(k, k_sinks) + 1):
        for cs in _compositions(k, r):
            for ct in _compositions(k_sinks, r):
                s0 = np.cumsum((0,) + cs)
                t0 = np.cumsum((0,) + ct)
                per_block = []
                for b in range(r):
                    pairs = [Block(st, tt)
                             for st in ordered_trees(int(s0[b]), int(s0[b + 1]))
                             for tt in ordered_trees(int(t0[b]), int(t0[b + 1]))]
                    per_block.append(pairs)
                for blocks in itertools.product(*per_block):
                    topo = Topology(tuple(blocks))
                    if topo.steiner_count <= max_steiner:
                        out.append(topo)
    out.sort(key=lambda t: (t.steiner_count, t.ident))
    return out


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

def _sorted_terminals(sc: Scenario):
    src, snk = sc.source_measure(), sc.sink_measure()
    so = np.lexsort((src.points[:, 1], src.points[:, 0]))
    to = np.lexsort((snk.points[:, 1], snk.points[:, 0]))
    return (np.asarray(src.points)[so], np.asarray(src.values)[so],
            np.asarray(snk.points)[to], np.asarray(snk.values)[to])


def _edge_list(topo: Topology, src_mass, snk_mass, k: int):
    """Edges as ``(tail, head, weight)`` over nodes: sources, sinks, then Steiner points.

    Returns ``None`` when some block does not balance its mass.
    """
    n_snk = len(snk_mass)
    edges = []
    next_id = [k + n_snk]

    def build(tree, side):
        # returns (node id, subtree mass)
        if isinstance(tree, int):
            if side == "source":
                return tree, src_mass[tree]
            return k + tree, snk_mass[tree]
        node = next_id[0]
        next_id[0] += 1
        total = 0.0
        for child in tree:
            cid, m = build(child, side)
            total += m
            if side == "source":
                edges.append((cid, node, m))
            else:
                edges.append((node, cid, m))
        return node, total

    for blk in topo.blocks:
        rs, ms = build(blk.source_tree, "source")
        rt, mt = build(blk.sink_tree, "sink")
        if abs(ms - mt) > 1e-12 * max(ms, mt):
            return None
        edges.append((rs, rt, ms))
    return edges, next_id[0] - (k + n_snk)


class _VertexProblem:
    """Parametrized cone program for one topology and terminal layout."""

    def __init__(self, edges, fixed: np.ndarray, n_steiner: int):
        self.edges = edges
        self.fixed = fixed
        self.n_steiner = n_steiner
        nf = len(fixed)
        E = len(edges)
        A = np.zeros((E, max(n_steiner, 1)))
        B = np.zeros((E, 2))
        for e, (t, h, _) in enumerate(edges):
            for node, sign in ((h, 1.0), (t, -1.0)):
                if node < nf:
                    B[e] += sign * fixed[node]
                else:
                    A[e, node - nf] += sign
        self.coef = cp.Parameter(E, nonneg=True)
        if n_steiner:
            self.X = cp.Variable((n_steiner, 2))
            lengths = cp.norm(A[:, :n_steiner] @ self.X + B, 2, axis=1)
            self.problem = cp.Problem(cp.Minimize(self.coef @ lengths))
        else:
            self.X = None
            self.lengths = np.linalg.norm(B, axis=1)

    def solve(self, coef: np.ndarray) -> np.ndarray:
        if self.X is None:
            return np.zeros((0, 2))
        self.coef.value = coef
        try:
            self.problem.solve(solver=cp.CLARABEL)
        except cp.error.SolverError:
            self.problem.solve(solver=cp.SCS, eps=1e-10, max_iters=200000)
        return np.asarray(self.X.value, dtype=float)


_problem_cache: dict = {}


def _vertex_problem(topo: Topology, src_pts, src_mass, snk_pts, snk_mass):
    key = (topo.ident, src_pts.tobytes(), src_mass.tobytes(),
           snk_pts.tobytes(), snk_mass.tobytes())
    if key not in _problem_cache:
        built = _edge_list(topo, src_mass, snk_mass, len(src_mass))
        if built is None:
            _problem_cache[key] = None
        else:
            edges, ns = built
            fixed = np.vstack([src_pts, snk_pts])
            _problem_cache[key] = _VertexProblem(edges, fixed, ns)
    return _problem_cache[key]


def _assemble_graph(fixed: np.ndarray, steiner: np.ndarray, edges) -> TransportGraph:
    """Merge coincident points (Steiner into terminals first) and drop null edges."""
    pts = np.vstack([fixed, steiner]) if len(steiner) else fixed.copy()
    nf = len(fixed)
    rep = list(range(len(pts)))

    def find(i):
        while rep[i] != i:
            rep[i] = rep[rep[i]]
            i = rep[i]
        return i

    for i in range(nf, len(pts)):
        for j in range(i):
            if np.linalg.norm(pts[i] - pts[j]) <= MERGE_TOL:
                rep[find(i)] = find(j)
                break
    roots = sorted({find(i) for i in range(len(pts))})
    index = {r: n for n, r in enumerate(roots)}
    verts = pts[roots]
    out = []
    for t, h, w in edges:
        a, b = index[find(t)], index[find(h)]
        if a != b and w > 0:
            out.append((a, b, w))
    return TransportGraph.from_edges(verts, out)


def optimize_vertices(topo: Topology, sc: Scenario):
    """Optimal Steiner positions for ``topo``; returns ``(graph, energy)``.

    Returns ``(None, inf)`` if the topology cannot balance the block masses.
    """
    src_pts, src_mass, snk_pts, snk_mass = _sorted_terminals(sc)
    prob = _vertex_problem(topo, src_pts, src_mass, snk_pts, snk_mass)
    if prob is None:
        return None, np.inf
    weights = np.array([w for _, _, w in prob.edges])
    coef = np.asarray(sc.model.edge_cost(weights), dtype=float)
    steiner = prob.solve(coef)
    g = _assemble_graph(prob.fixed, steiner, prob.edges)
    return g, graph_cost(g, sc.model)


@dataclass(frozen=True)
class OracleResult:
    graph: TransportGraph
    energy: float
    topology: Topology

    @property
    def topology_id(self) -> str:
        return self.topology.ident

    def __iter__(self):
        return iter((self.graph, self.energy, self.topology.ident))


def oracle_min_energy(sc: Scenario, max_steiner: int = MAX_STEINER) -> OracleResult:
    """Minimum energy over all enumerated topologies.

    Near-ties (relative ``TIE_RTOL``) go to fewer Steiner points, then to
    the lexicographically smaller topology id.
    """
    k, ks = len(sc.sources), len(sc.sinks)
    cands = []
    for topo in enumerate_topologies(k, ks, max_steiner):
        g, e = optimize_vertices(topo, sc)
        if g is not None:
            cands.append((e, topo, g))
    if not cands:
        raise ConfigurationError("no enumerated topology balances the block masses")
    best = min(e for e, _, _ in cands)
    near = [c for c in cands if c[0] <= best * (1 + TIE_RTOL) + 1e-15]
    e, topo, g = min(near, key=lambda c: (c[1].steiner_count, c[1].ident))
    return OracleResult(g, float(e), topo)
