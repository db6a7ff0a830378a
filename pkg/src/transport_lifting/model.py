"""Measures, transport graphs and the two network cost functionals.

Everything here is a small immutable value type or a pure function of
such values.  Positions are 2D numpy arrays; masses are floats.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

ATOM_TOL = 1e-9
MASS_RTOL = 1e-12


class ParameterError(ValueError):
    """A model parameter lies outside its admissible range."""


class InfeasibleError(ValueError):
    """Source and sink masses do not balance."""


class ConfigurationError(ValueError):
    """Inconsistent grid, enumeration or run configuration."""


# --------------------------------------------------------------------------
# cost models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UrbanPlanning:
    """Urban planning cost: ``min(a*w, w + eps)`` per unit length."""

    a: float
    eps: float
    kind: str = field(default="urban", init=False)

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 1):
            raise ParameterError(f"urban planning needs a > 1, got a={self.a}")
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ParameterError(f"urban planning needs eps > 0, got eps={self.eps}")

    def edge_cost(self, w):
        """Cost per unit length of an edge carrying mass ``w >= 0``."""
        w = np.asarray(w, dtype=float)
        return np.where(w > 0, np.minimum(self.a * w, w + self.eps), 0.0)

    # the jump penalty of the image functional has the same profile
    jump_cost = edge_cost


@dataclass(frozen=True)
class BranchedTransport:
    """Branched transport cost: ``w**(1 - eps)`` per unit length."""

    eps: float
    kind: str = field(default="branched", init=False)

    def __post_init__(self):
        if not (np.isfinite(self.eps) and 0 < self.eps < 1):
            raise ParameterError(f"branched transport needs 0 < eps < 1, got eps={self.eps}")

    def edge_cost(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w > 0, np.abs(w) ** (1.0 - self.eps), 0.0)

    jump_cost = edge_cost


CostModel = Union[UrbanPlanning, BranchedTransport]


def make_model(kind: str, eps: float, a: float | None = None) -> CostModel:
    if kind == "urban":
        if a is None:
            raise ParameterError("urban planning model requires parameter a")
        return UrbanPlanning(a=float(a), eps=float(eps))
    if kind == "branched":
        return BranchedTransport(eps=float(eps))
    raise ParameterError(f"unknown model kind {kind!r} (expected 'urban' or 'branched')")


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryMeasure:
    """Positive atoms on the domain boundary, addressed by arclength.

    ``atoms`` holds ``(t, w)`` pairs with strictly increasing ``t`` and
    ``w > 0``.  Use :meth:`from_atoms` to canonicalize arbitrary input.
    """

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        ts = [t for t, _ in atoms]
        if any(w <= 0 or not np.isfinite(w) for _, w in atoms):
            raise ParameterError("boundary atoms must have strictly positive finite mass")
        if any(t < 0 or not np.isfinite(t) for t in ts):
            raise ParameterError("boundary atom positions must be finite and >= 0")
        if any(t1 >= t2 for t1, t2 in zip(ts, ts[1:])):
            raise ParameterError("boundary atom positions must be strictly increasing")

    @classmethod
    def from_atoms(cls, atoms: Iterable[Sequence[float]]) -> "BoundaryMeasure":
        """Sort atoms and merge those closer than ``ATOM_TOL``."""
        items = sorted((float(t), float(w)) for t, w in atoms)
        merged: list[list[float]] = []
        for t, w in items:
            if merged and t - merged[-1][0] <= ATOM_TOL:
                merged[-1][1] += w
            else:
                merged.append([t, w])
        return cls(tuple((t, w) for t, w in merged if w > 0))

    @property
    def positions(self) -> np.ndarray:
        return np.array([t for t, _ in self.atoms], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def total(self) -> float:
        return float(sum(w for _, w in self.atoms))

    def __len__(self):
        return len(self.atoms)


@dataclass(frozen=True)
class SignedAtomMeasure:
    """Finitely many signed atoms at distinct points of the plane."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(pts) != len(vals):
            raise ValueError("points and values differ in length")
        pts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def merged(cls, points, values, tol: float = ATOM_TOL) -> "SignedAtomMeasure":
        """Canonical form: atoms within ``tol`` of each other are summed."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        vals = np.asarray(values, dtype=float).reshape(-1)
        out_p: list[np.ndarray] = []
        out_v: list[float] = []
        for p, v in zip(pts, vals):
            for k, q in enumerate(out_p):
                if np.max(np.abs(p - q)) <= tol:
                    out_v[k] += v
                    break
            else:
                out_p.append(p)
                out_v.append(float(v))
        return cls(np.array(out_p).reshape(-1, 2), np.array(out_v))

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __len__(self):
        return len(self.values)


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Rectangle ``[0, width] x [0, height]`` with boundary sources and sinks."""

    width: float
    height: float
    sources: BoundaryMeasure
    sinks: BoundaryMeasure
    model: CostModel

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ParameterError("domain width and height must be positive")
        per = self.perimeter
        for meas in (self.sources, self.sinks):
            if len(meas) and meas.positions.max() >= per:
                raise ParameterError("boundary atom position beyond the perimeter")
        total = max(self.sources.total, self.sinks.total)
        if abs(self.sources.total - self.sinks.total) > MASS_RTOL * max(total, 1e-300):
            raise InfeasibleError(
                f"source mass {self.sources.total!r} != sink mass {self.sinks.total!r}")

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.width + self.height)

    def point_at(self, t) -> np.ndarray:
        """Counterclockwise arclength parameterization starting at the origin."""
        t = np.mod(np.asarray(t, dtype=float), self.perimeter)
        W, H = self.width, self.height
        x = np.select([t < W, t < W + H, t < 2 * W + H],
                      [t, W, W - (t - W - H)], 0.0)
        y = np.select([t < W, t < W + H, t < 2 * W + H],
                      [0.0, t - W, H], H - (t - 2 * W - H))
        return np.stack([x, y], axis=-1)

    def source_measure(self) -> SignedAtomMeasure:
        return SignedAtomMeasure(self.point_at(self.sources.positions), self.sources.masses)

    def sink_measure(self) -> SignedAtomMeasure:
        return SignedAtomMeasure(self.point_at(self.sinks.positions), self.sinks.masses)

    def signed_measure(self) -> SignedAtomMeasure:
        """``mu_plus - mu_minus`` as a merged signed atom measure."""
        pts = np.concatenate([self.point_at(self.sources.positions).reshape(-1, 2),
                              self.point_at(self.sinks.positions).reshape(-1, 2)])
        vals = np.concatenate([self.sources.masses, -self.sinks.masses])
        return SignedAtomMeasure.merged(pts, vals)

    def with_model(self, model: CostModel) -> "Scenario":
        return Scenario(self.width, self.height, self.sources, self.sinks, model)


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransportGraph:
    """Weighted directed straight-line graph in the plane."""

    vertices: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        t = np.asarray(self.tails, dtype=int).reshape(-1)
        h = np.asarray(self.heads, dtype=int).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(t) == len(h) == len(w)):
            raise ValueError("edge arrays differ in length")
        if len(t) and (t.min() < 0 or h.min() < 0 or max(t.max(), h.max()) >= len(V)):
            raise ValueError("edge endpoint index out of range")
        if np.any(t == h):
            raise ValueError("edges must join two distinct vertices")
        if np.any(w < 0):
            raise ValueError("edge weights must be non-negative")
        for arr in (V, t, h, w):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "tails", t)
        object.__setattr__(self, "heads", h)
        object.__setattr__(self, "weights", w)
        if np.any(self.lengths <= 0):
            raise ValueError("edges must have strictly positive length")

    @classmethod
    def from_edges(cls, vertices, edges) -> "TransportGraph":
        """Build from ``[(tail, head, weight), ...]``."""
        edges = list(edges)
        if not edges:
            return cls(vertices, [], [], [])
        t, h, w = zip(*edges)
        return cls(vertices, t, h, w)

    @classmethod
    def empty(cls) -> "TransportGraph":
        return cls(np.zeros((0, 2)), [], [], [])

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.heads] - self.vertices[self.tails], axis=1)

    @property
    def segments(self) -> np.ndarray:
        """Array of shape ``(E, 2, 2)`` holding tail and head coordinates."""
        return np.stack([self.vertices[self.tails], self.vertices[self.heads]], axis=1)

    def canonical(self) -> "TransportGraph":
        """Drop zero-weight edges."""
        keep = self.weights > 0
        return TransportGraph(self.vertices, self.tails[keep], self.heads[keep],
                              self.weights[keep])

    def net_outflow(self) -> np.ndarray:
        out = np.zeros(len(self.vertices))
        np.add.at(out, self.tails, self.weights)
        np.add.at(out, self.heads, -self.weights)
        return out


def graph_cost_urban(g: TransportGraph, eps: float, a: float) -> float:
    """Sum over edges of ``min(a w, w + eps) * length``."""
    model = UrbanPlanning(a=a, eps=eps)
    return float(np.sum(model.edge_cost(g.weights) * g.lengths))


def graph_cost_branched(g: TransportGraph, eps: float) -> float:
    """Sum over edges of ``w**(1 - eps) * length``."""
    model = BranchedTransport(eps=eps)
    return float(np.sum(model.edge_cost(g.weights) * g.lengths))


def graph_cost(g: TransportGraph, model: CostModel) -> float:
    return float(np.sum(model.edge_cost(g.weights) * g.lengths))


def divergence_residual(g: TransportGraph, target: SignedAtomMeasure,
                        tol: float = ATOM_TOL) -> float:
    """Largest mismatch between vertex net outflow and the target atoms.

    Target atoms are matched to vertices by position (max-norm ``tol``);
    an atom without a matching vertex counts with its full value.
    """
    outflow = g.net_outflow()
    matched = np.zeros(len(target), dtype=bool)
    worst = 0.0
    for v, p in enumerate(g.vertices):
        want = 0.0
        if len(target):
            hit = np.max(np.abs(target.points - p), axis=1) <= tol
            want = float(target.values[hit].sum())
            matched |= hit
        worst = max(worst, abs(outflow[v] - want))
    if len(target) and np.any(~matched):
        worst = max(worst, float(np.max(np.abs(target.values[~matched]))))
    return worst


# --------------------------------------------------------------------------
# Wasserstein-1
# --------------------------------------------------------------------------

def wasserstein1(mu_plus: SignedAtomMeasure, mu_minus: SignedAtomMeasure,
                 rtol: float = 1e-10) -> float:
    """Exact discrete W1 via successive shortest paths on the bipartite graph.

    Both arguments must carry non-negative values of equal total mass.
    """
    X, a = mu_plus.points, np.array(mu_plus.values, dtype=float)
    Y, b = mu_minus.points, np.array(mu_minus.values, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("wasserstein1 expects non-negative measures")
    ta, tb = a.sum(), b.sum()
    scale = max(ta, tb, 1e-300)
    if abs(ta - tb) > rtol * scale:
        raise InfeasibleError(f"mass mismatch: {ta!r} vs {tb!r}")
    if len(a) == 0 or ta == 0:
        return 0.0
    C = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    flow = _successive_shortest_paths(C, a, b, 1e-14 * scale)
    return float(np.sum(flow * C))


def _successive_shortest_paths(C, supply, demand, mtol):
    k, kk = C.shape
    F = np.zeros_like(C)
    ra, rb = supply.copy(), demand.copy()
    for _ in range(4 * (k + kk) * (k + kk) + 10):
        live = ra > mtol
        if not live.any() or not (rb > mtol).any():
            break
        ds = np.where(live, 0.0, np.inf)
        dt = np.full(kk, np.inf)
        pred_t = np.full(kk, -1)
        pred_s = np.full(k, -1)
        # vectorized Bellman-Ford: forward arcs s->t, backward arcs t->s where F > 0
        for _ in range(k + kk + 1):
            cand = ds[:, None] + C
            best_s = np.argmin(cand, axis=0)
            best = cand[best_s, np.arange(kk)]
            upd_t = best < dt - 1e-15
            dt[upd_t] = best[upd_t]
            pred_t[upd_t] = best_s[upd_t]
            back = np.where(F > mtol, dt[None, :] - C, np.inf)
            best_t = np.argmin(back, axis=1)
            bval = back[np.arange(k), best_t]
            upd_s = bval < ds - 1e-15
            ds[upd_s] = bval[upd_s]
            pred_s[upd_s] = best_t[upd_s]
            if not upd_t.any() and not upd_s.any():
                break
        open_t = np.where(rb > mtol, dt, np.inf)
        t = int(np.argmin(open_t))
        if not np.isfinite(open_t[t]):
            raise RuntimeError("no augmenting path; inconsistent masses")
        # walk back to a root source, collecting arcs
        fwd, bwd = [], []
        node_t = t
        while True:
            s = int(pred_t[node_t])
            fwd.append((s, node_t))
            if pred_s[s] < 0:
                break
            node_t = int(pred_s[s])
            bwd.append((s, node_t))
        root = fwd[-1][0]
        delta = min(ra[root], rb[t], *(F[s, tt] for s, tt in bwd)) if bwd else min(ra[root], rb[t])
        for s, tt in fwd:
            F[s, tt] += delta
        for s, tt in bwd:
            F[s, tt] -= delta
        ra[root] -= delta
        rb[t] -= delta
    F[F < mtol] = 0.0
    return F
