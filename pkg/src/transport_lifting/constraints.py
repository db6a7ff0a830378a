"""Projection onto the dual constraint sets by Dykstra's method.

The dual field has components ``(phi_x1, phi_x2, phi_s)``.  Besides
``phi_s >= 0`` all constraints act on the planar part of single columns
``(i, j)``: for every layer pair ``l1 <= l2`` the block sum obeys

    | hs * sum_{l=l1..l2} phi_x[l] | <= psi((l2 - l1 + 1) * hs)

with ``psi(L) = min(L + eps, a L)`` (urban, plus the pointwise ball
``|phi_x| <= a``) or ``psi(L) = L**(1 - eps)`` (branched).

``phi_s >= 0`` decouples from everything else and is applied exactly.
The planar constraints are cycled in the fixed order: pointwise ball,
then pairs sorted by ``(l1, l2)``.  A pair projection shifts all block
entries by one common vector, so its Dykstra correction is stored as a
single 2-vector and a full cycle over all pairs costs ``O(p^2)`` per
column using running block sums and lazily applied prefix offsets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .model import BranchedTransport, CostModel, UrbanPlanning

DEFAULT_TOL = 1e-6
DEFAULT_MAX_CYCLES = 50


@dataclass
class DualField:
    """Dual variable; ``x`` holds the planar part with shape ``(n, m, L, 2)``."""

    x: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "DualField":
        return cls(np.zeros(tuple(shape) + (2,)), np.zeros(tuple(shape)))

    @property
    def x1(self) -> np.ndarray:
        return self.x[..., 0]

    @property
    def x2(self) -> np.ndarray:
        return self.x[..., 1]

    def copy(self) -> "DualField":
        return DualField(self.x.copy(), self.s.copy())


@dataclass(frozen=True)
class PairConstraint:
    l1: int
    l2: int
    c: float

    def __post_init__(self):
        if self.l2 < self.l1:
            raise ValueError("need l1 <= l2")
        if self.c < 0:
            raise ValueError("bound must be non-negative")


def jump_bound(model: CostModel, length):
    """Admissible block-sum norm for an interval of the given length."""
    length = np.asarray(length, dtype=float)
    if isinstance(model, UrbanPlanning):
        return np.minimum(length + model.eps, model.a * length)
    return length ** (1.0 - model.eps)


def pair_constraints(model: CostModel, n_layers: int, hs: float,
                     dyadic: bool = False) -> list[PairConstraint]:
    """All layer pairs in cycle order; ``dyadic`` keeps lengths 1, 2, 4, ... only."""
    out = []
    for l1 in range(n_layers):
        for l2 in range(l1, n_layers):
            k = l2 - l1 + 1
            if dyadic and (k & (k - 1)):
                continue
            out.append(PairConstraint(l1, l2, float(jump_bound(model, k * hs))))
    return out


def project_pair(column, pc: PairConstraint, hs: float) -> np.ndarray:
    """Exact projection of a column of 2-vectors onto one block-sum constraint."""
    col = np.array(column, dtype=float).reshape(-1, 2)
    k = pc.l2 - pc.l1 + 1
    S = hs * col[pc.l1:pc.l2 + 1].sum(axis=0)
    nS = float(np.hypot(S[0], S[1]))
    if nS <= pc.c:
        return col
    col[pc.l1:pc.l2 + 1] -= (S - pc.c * S / nS) / (hs * k)
    return col


def project_pointwise_k1(phi: DualField, a: float) -> DualField:
    """Clamp ``phi_s`` at zero and radially shrink ``phi_x`` into the ball of radius ``a``."""
    nrm = np.hypot(phi.x[..., 0], phi.x[..., 1])
    scale = np.minimum(1.0, a / np.maximum(nrm, 1e-300))
    return DualField(phi.x * scale[..., None], np.maximum(phi.s, 0.0))


# --------------------------------------------------------------------------
# Dykstra
# --------------------------------------------------------------------------

@dataclass
class DykstraState:
    """Persisted Dykstra corrections, one 2-vector per pair and per ball node."""

    pair_corr: np.ndarray
    ball_corr: np.ndarray
    cycles: int = 0
    violation: float = np.inf

    @classmethod
    def zeros(cls, n_columns: int, n_layers: int, n_pairs: int) -> "DykstraState":
        return cls(np.zeros((n_columns, n_pairs, 2)), np.zeros((n_columns, n_layers, 2)))


@dataclass
class ProjectionResult:
    phi: DualField
    violation: float
    cycles: int
    converged: bool
    state: DykstraState = field(repr=False, default=None)


class PairTable:
    """Precomputed pair index and bound tables for one model and layer count."""

    def __init__(self, model: CostModel, n_layers: int, hs: float, dyadic: bool = False):
        self.model = model
        self.n_layers = n_layers
        self.hs = float(hs)
        self.dyadic = dyadic
        pairs = pair_constraints(model, n_layers, hs, dyadic)
        self.index = np.full((n_layers, n_layers), -1, dtype=np.int64)
        for k, pc in enumerate(pairs):
            self.index[pc.l1, pc.l2] = k
        self.n_pairs = len(pairs)
        self.bound = np.zeros(n_layers + 1)
        self.bound[1:] = jump_bound(model, np.arange(1, n_layers + 1) * hs)
        if isinstance(model, UrbanPlanning):
            self.ball = float(model.a)
        else:
            self.ball = np.inf


def project_K(phi: DualField, model: CostModel, g=None, tol: float = DEFAULT_TOL,
              max_cycles: int = DEFAULT_MAX_CYCLES, *, hs: float | None = None,
              dyadic: bool = False, state: DykstraState | None = None,
              table: PairTable | None = None) -> ProjectionResult:
    """Project onto the dual set by Dykstra's method.

    ``state`` carries corrections from a previous call (warm start); the
    iterate then starts from ``phi - sum(corrections)``.  The returned
    ``state`` is updated in place when given.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if hs is None:
        hs = g.hs
    shape = phi.s.shape
    L = shape[-1]
    if table is None:
        table = PairTable(model, L, hs, dyadic)
    ncol = int(np.prod(shape[:-1]))
    if state is None:
        state = DykstraState.zeros(ncol, L, table.n_pairs)
    x = np.ascontiguousarray(phi.x.reshape(ncol, L, 2), dtype=float).copy()
    viol, cyc = _dykstra_columns(x, state.pair_corr, state.ball_corr, table.index,
                                 table.bound, table.hs, table.ball,
                                 np.isfinite(table.ball), float(tol), int(max_cycles))
    state.cycles = int(cyc.max()) if ncol else 0
    state.violation = float(viol.max()) if ncol else 0.0
    out = DualField(x.reshape(phi.x.shape), np.maximum(phi.s, 0.0))
    return ProjectionResult(out, state.violation, state.cycles,
                            state.violation <= tol, state)


@numba.njit(cache=True)
def _column_violation(x, index, bound, hs, ball, use_ball, prefix):
    L = x.shape[0]
    prefix[0, 0] = 0.0
    prefix[0, 1] = 0.0
    for l in range(L):
        prefix[l + 1, 0] = prefix[l, 0] + x[l, 0]
        prefix[l + 1, 1] = prefix[l, 1] + x[l, 1]
    worst = 0.0
    for l1 in range(L):
        for l2 in range(l1, L):
            if index[l1, l2] < 0:
                continue
            s0 = hs * (prefix[l2 + 1, 0] - prefix[l1, 0])
            s1 = hs * (prefix[l2 + 1, 1] - prefix[l1, 1])
            e = np.sqrt(s0 * s0 + s1 * s1) - bound[l2 - l1 + 1]
            if e > worst:
                worst = e
    if use_ball:
        for l in range(L):
            e = np.sqrt(x[l, 0] ** 2 + x[l, 1] ** 2) - ball
            if e > worst:
                worst = e
    return worst


@numba.njit(cache=True)
def _dykstra_columns(X, pair_corr, ball_corr, index, bound, hs, ball, use_ball,
                     tol, max_cycles):
    ncol, L, _ = X.shape
    viol = np.zeros(ncol)
    cycles = np.zeros(ncol, dtype=np.int64)
    acc = np.zeros((L + 1, 2))
    off = np.zeros((L, 2))
    prefix = np.zeros((L + 1, 2))
    snap = np.zeros((L, 2))
    for c in range(ncol):
        x = X[c]
        pc = pair_corr[c]
        bc = ball_corr[c]
        # iterate = input minus all stored corrections
        acc[:, :] = 0.0
        for l1 in range(L):
            for l2 in range(l1, L):
                k = index[l1, l2]
                if k >= 0:
                    acc[l1, 0] += pc[k, 0]
                    acc[l1, 1] += pc[k, 1]
                    acc[l2 + 1, 0] -= pc[k, 0]
                    acc[l2 + 1, 1] -= pc[k, 1]
        r0 = 0.0
        r1 = 0.0
        for l in range(L):
            r0 += acc[l, 0]
            r1 += acc[l, 1]
            x[l, 0] -= r0
            x[l, 1] -= r1
            if use_ball:
                x[l, 0] -= bc[l, 0]
                x[l, 1] -= bc[l, 1]
        v = _column_violation(x, index, bound, hs, ball, use_ball, prefix)
        done = 0
        moved = np.inf
        # feasibility alone does not certify the projection, so the
        # iterate must also have settled (and at least one cycle runs)
        while done < max_cycles and (v > tol or moved > tol):
            snap[:, :] = x
            if use_ball:
                for l in range(L):
                    w0 = x[l, 0] + bc[l, 0]
                    w1 = x[l, 1] + bc[l, 1]
                    nw = np.sqrt(w0 * w0 + w1 * w1)
                    f = 1.0
                    if nw > ball:
                        f = ball / nw
                    x[l, 0] = w0 * f
                    x[l, 1] = w1 * f
                    bc[l, 0] = w0 - x[l, 0]
                    bc[l, 1] = w1 - x[l, 1]
            for l1 in range(L):
                t0 = 0.0
                t1 = 0.0
                for l2 in range(l1, L):
                    off[l2, 0] = 0.0
                    off[l2, 1] = 0.0
                for l2 in range(l1, L):
                    t0 += x[l2, 0]
                    t1 += x[l2, 1]
                    k = index[l1, l2]
                    if k < 0:
                        continue
                    K = l2 - l1 + 1
                    c0 = pc[k, 0]
                    c1 = pc[k, 1]
                    w0 = t0 + K * c0
                    w1 = t1 + K * c1
                    ns = hs * np.sqrt(w0 * w0 + w1 * w1)
                    d0 = 0.0
                    d1 = 0.0
                    b = bound[K]
                    if ns > b:
                        f = (1.0 - b / ns) / K
                        d0 = w0 * f
                        d1 = w1 * f
                    e0 = c0 - d0
                    e1 = c1 - d1
                    t0 += K * e0
                    t1 += K * e1
                    off[l2, 0] += e0
                    off[l2, 1] += e1
                    pc[k, 0] = d0
                    pc[k, 1] = d1
                r0 = 0.0
                r1 = 0.0
                for l in range(L - 1, l1 - 1, -1):
                    r0 += off[l, 0]
                    r1 += off[l, 1]
                    x[l, 0] += r0
                    x[l, 1] += r1
            done += 1
            moved = 0.0
            for l in range(L):
                dd = max(abs(x[l, 0] - snap[l, 0]), abs(x[l, 1] - snap[l, 1]))
                if dd > moved:
                    moved = dd
            # the full constraint scan only pays off once the iterate settles
            if moved <= tol or done == max_cycles:
                v = _column_violation(x, index, bound, hs, ball, use_ball, prefix)
        viol[c] = v
        cycles[c] = done
    return viol, cycles


def max_violation(phi: DualField, model: CostModel, hs: float, dyadic: bool = False) -> float:
    """Independent re-scan of every constraint (plain numpy)."""
    worst = max(0.0, float(-phi.s.min())) if phi.s.size else 0.0
    x = phi.x
    L = x.shape[-2]
    csum = np.concatenate([np.zeros(x.shape[:-2] + (1, 2)), np.cumsum(x, axis=-2)], axis=-2)
    for l1 in range(L):
        for l2 in range(l1, L):
            k = l2 - l1 + 1
            if dyadic and (k & (k - 1)):
                continue
            S = hs * (csum[..., l2 + 1, :] - csum[..., l1, :])
            e = np.hypot(S[..., 0], S[..., 1]) - float(jump_bound(model, k * hs))
            worst = max(worst, float(e.max()))
    if isinstance(model, UrbanPlanning):
        worst = max(worst, float((np.hypot(x[..., 0], x[..., 1]) - model.a).max()))
    return worst


__all__ = ["DualField", "PairConstraint", "DykstraState", "ProjectionResult", "PairTable",
           "jump_bound", "pair_constraints", "project_pair", "project_pointwise_k1",
           "project_K", "max_violation", "BranchedTransport"]
