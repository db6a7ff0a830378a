"""Primal-dual iteration for the lifted saddle-point problem.

    min_{v in C}  max_{phi in K}  sum phi . (M D v)

``D`` is the forward-difference gradient on the lifted grid and ``M``
masks out differences between two frozen nodes; those only contribute a
constant and do not belong to the network inside the closed domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lift
from .constraints import (DEFAULT_MAX_CYCLES, DEFAULT_TOL, DualField, DykstraState,
                          PairTable, project_K)
from .model import ConfigurationError, Scenario


@dataclass(frozen=True)
class SolverOptions:
    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    max_iters: int = 20000
    stop_tol: float = 1e-5
    dykstra_tol: float = DEFAULT_TOL
    dykstra_cycles: int = DEFAULT_MAX_CYCLES
    dyadic: bool = False
    log_every: int = 10

    def steps(self, g: lift.Grid3) -> tuple[float, float]:
        """Step sizes, defaulting to ``0.99 / L`` each; checks ``tau sigma L^2 <= 1``."""
        L = step_bound(g)
        tau = self.tau if self.tau is not None else 0.99 / L
        sigma = self.sigma if self.sigma is not None else 0.99 / L
        if tau <= 0 or sigma <= 0:
            raise ConfigurationError("solver.tau and solver.sigma must be positive")
        if tau * sigma * L * L > 1 + 1e-12:
            raise ConfigurationError(
                f"tau*sigma*L^2 = {tau * sigma * L * L:.6g} exceeds 1 (L^2 = {L * L:.6g})")
        if not 0 <= self.theta <= 1:
            raise ConfigurationError("solver.theta must lie in [0, 1]")
        return tau, sigma


def step_bound(g: lift.Grid3) -> float:
    """Upper bound ``L`` on the norm of the forward-difference gradient."""
    return math.sqrt(4.0 * (1 / g.h1 ** 2 + 1 / g.h2 ** 2 + 1 / g.hs ** 2))


# --------------------------------------------------------------------------
# difference operators
# --------------------------------------------------------------------------

def _fwd(v, h, axis):
    d = np.zeros_like(v)
    sl_hi = [slice(None)] * v.ndim
    sl_lo = [slice(None)] * v.ndim
    sl_hi[axis] = slice(1, None)
    sl_lo[axis] = slice(None, -1)
    d[tuple(sl_lo)] = (v[tuple(sl_hi)] - v[tuple(sl_lo)]) / h
    return d


def _fwd_adj(p, h, axis):
    """Transpose of ``_fwd``: ``(p[i-1] - p[i]) / h`` with the truncated ends."""
    out = np.zeros_like(p)
    n = p.shape[axis]
    sl = [slice(None)] * p.ndim

    def at(s):
        sl2 = list(sl)
        sl2[axis] = s
        return tuple(sl2)
    out[at(slice(None, n - 1))] -= p[at(slice(None, n - 1))]
    out[at(slice(1, None))] += p[at(slice(None, n - 1))]
    return out / h


def grad(v, g: lift.Grid3) -> DualField:
    """Forward differences along ``x1``, ``x2`` and ``s``; zero at each last index."""
    v = np.asarray(getattr(v, "values", v), dtype=float)
    x = np.stack([_fwd(v, g.h1, 0), _fwd(v, g.h2, 1)], axis=-1)
    return DualField(x, _fwd(v, g.hs, 2))


def grad_adjoint(phi: DualField, g: lift.Grid3) -> np.ndarray:
    """Exact adjoint of ``grad`` for the plain Euclidean inner product."""
    return (_fwd_adj(phi.x[..., 0], g.h1, 0) + _fwd_adj(phi.x[..., 1], g.h2, 1)
            + _fwd_adj(phi.s, g.hs, 2))


def active_masks(fixed: np.ndarray):
    """Differences with at least one free endpoint, per direction."""
    free = ~fixed
    out = []
    for axis in range(3):
        m = np.zeros_like(free)
        n = free.shape[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, n - 1)
        hi[axis] = slice(1, None)
        m[tuple(lo)] = free[tuple(lo)] | free[tuple(hi)]
        out.append(m)
    return out


# --------------------------------------------------------------------------
# iteration
# --------------------------------------------------------------------------

@dataclass
class SolverState:
    grid: lift.Grid3
    model: object
    v: lift.LiftedField
    phi: DualField
    masks: tuple
    table: PairTable
    dykstra: DykstraState
    iteration: int = 0
    residual: float = np.inf
    violation: float = 0.0

    def K(self, v) -> DualField:
        d = grad(v, self.grid)
        m1, m2, ms = self.masks
        d.x[..., 0] *= m1
        d.x[..., 1] *= m2
        d.s *= ms
        return d

    def K_adj(self, phi: DualField) -> np.ndarray:
        m1, m2, ms = self.masks
        masked = DualField(np.stack([phi.x[..., 0] * m1, phi.x[..., 1] * m2], axis=-1),
                           phi.s * ms)
        return grad_adjoint(masked, self.grid)

    def primal_value(self) -> float:
        g = self.grid
        d = self.K(self.v.values)
        return float(g.h1 * g.h2 * g.hs * (np.sum(self.phi.x * d.x) + np.sum(self.phi.s * d.s)))


def init_state(sc: Scenario, g: lift.Grid3, opts: SolverOptions) -> SolverState:
    trace = lift.boundary_trace(sc)
    v = lift.indicator_boundary_data(trace, g)
    phi = DualField.zeros(g.shape)
    table = PairTable(sc.model, g.p + 1, g.hs, opts.dyadic)
    dyk = DykstraState.zeros(g.n * g.m, g.p + 1, table.n_pairs)
    return SolverState(g, sc.model, v, phi, tuple(active_masks(v.fixed)), table, dyk)


def pd_step(state: SolverState, opts: SolverOptions) -> SolverState:
    """One primal descent, overrelaxation and dual ascent step (in place)."""
    tau, sigma = opts.steps(state.grid)
    v_old = state.v.values
    v_new = lift.project_C_values(v_old - tau * state.K_adj(state.phi),
                                  state.v.fixed, state.v.data)
    v_bar = v_new + opts.theta * (v_new - v_old)
    kv = state.K(v_bar)
    z = DualField(state.phi.x + sigma * kv.x, state.phi.s + sigma * kv.s)
    res = project_K(z, state.model, tol=opts.dykstra_tol, max_cycles=opts.dykstra_cycles,
                    hs=state.grid.hs, state=state.dykstra, table=state.table)
    dv = float(np.max(np.abs(v_new - v_old))) if v_new.size else 0.0
    dphi = max(float(np.max(np.abs(res.phi.x - state.phi.x))),
               float(np.max(np.abs(res.phi.s - state.phi.s))))
    state.v = state.v.with_values(v_new)
    state.phi = res.phi
    state.iteration += 1
    state.residual = max(dv / tau, dphi / sigma)
    state.violation = res.violation
    return state


@dataclass
class SolveResult:
    v: lift.LiftedField
    phi: DualField
    primal_value: float
    iterations: int
    converged: bool
    log: list = field(default_factory=list)
    grid: lift.Grid3 | None = None
    scenario: Scenario | None = None
    snap_displacement: float = 0.0
    residual: float = np.inf
    violation: float = 0.0


def prepare(sc: Scenario, n: int, m: int, p: int, band: int = 1):
    """Snap atoms to cell corners and build the matching grid."""
    snapped, moved = lift.snap_to_grid(sc, n, m, band)
    return snapped, lift.build_grid(snapped, n, m, p, band), moved


def solve(sc: Scenario, n: int, m: int, p: int, band: int = 1,
          opts: SolverOptions | None = None, callback=None) -> SolveResult:
    """Run the primal-dual iteration until the step residual drops below ``stop_tol``."""
    opts = opts or SolverOptions()
    snapped, g, moved = prepare(sc, n, m, p, band)
    opts.steps(g)
    state = init_state(snapped, g, opts)
    log = []
    converged = False
    while state.iteration < opts.max_iters:
        pd_step(state, opts)
        k = state.iteration
        stop = state.residual <= opts.stop_tol
        if k % opts.log_every == 0 or stop or k == opts.max_iters:
            log.append((k, state.residual, state.violation))
            if callback is not None:
                callback(state)
        if stop:
            converged = True
            break
    return SolveResult(state.v, state.phi, state.primal_value(), state.iteration, converged,
                       log, g, snapped, moved, state.residual, state.violation)


def with_options(opts: SolverOptions, **kw) -> SolverOptions:
    return replace(opts, **kw)
