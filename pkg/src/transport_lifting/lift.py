"""Boundary trace, the lifted grid and the primal constraint set.

The planar grid is cell centred: node ``(i, j)`` sits at the centre of
cell ``[(i - band) h1, (i - band + 1) h1] x [...]`` so that the domain
rectangle is covered exactly by the free cells and ``band`` rings of
frozen cells surround it.  Along ``s`` the grid is node based with
layers ``s_l = s0 + l * hs`` for ``l = 0..p``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BoundaryMeasure, ConfigurationError, Scenario

# layer comparisons u > s_l get a tiny guard so that u landing on a layer
# (the normal case for snapped atoms) is not decided by rounding noise
LAYER_GUARD = 1e-9


@dataclass(frozen=True)
class BoundaryTrace:
    """Right-continuous step function of boundary arclength."""

    breakpoints: np.ndarray
    values: np.ndarray
    perimeter: float

    def __call__(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.perimeter)
        k = np.searchsorted(self.breakpoints, t, side="right") - 1
        vals = np.concatenate([[0.0], self.values])
        return vals[k + 1]

    @property
    def final(self) -> float:
        """Value after one full loop; zero exactly when masses balance."""
        return float(self.values[-1]) if len(self.values) else 0.0

    @property
    def range(self) -> tuple[float, float]:
        vals = np.concatenate([[0.0], self.values])
        return float(vals.min()), float(vals.max())


def trace_from_atoms(perimeter: float, positions, signed_masses) -> BoundaryTrace:
    """Cumulative signed mass along the boundary, atoms at equal positions summed."""
    pos = np.asarray(positions, dtype=float)
    val = np.asarray(signed_masses, dtype=float)
    order = np.argsort(pos, kind="stable")
    pos, val = pos[order], val[order]
    bps, jumps = [], []
    for t, w in zip(pos, val):
        if bps and t == bps[-1]:
            jumps[-1] += w
        else:
            bps.append(t)
            jumps.append(w)
    return BoundaryTrace(np.array(bps), np.cumsum(jumps), float(perimeter))


def boundary_trace(sc: Scenario) -> BoundaryTrace:
    """``t -> (mu_plus - mu_minus)`` of the boundary arc from the origin corner to ``t``."""
    pos = np.concatenate([sc.sources.positions, sc.sinks.positions])
    val = np.concatenate([sc.sources.masses, -sc.sinks.masses])
    return trace_from_atoms(sc.perimeter, pos, val)


def boundary_arclength(width: float, height: float, x) -> np.ndarray:
    """Arclength of the closest boundary point; ties go to the smallest arclength."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    W, H = width, height
    per = 2.0 * (W + H)
    cx = np.clip(x[:, 0], 0.0, W)
    cy = np.clip(x[:, 1], 0.0, H)
    outside = (x[:, 0] != cx) | (x[:, 1] != cy)
    # candidate projections onto the four edges with their arclengths
    dist = np.stack([np.abs(x[:, 1]), np.abs(W - x[:, 0]),
                     np.abs(H - x[:, 1]), np.abs(x[:, 0])], axis=1)
    arcs = np.stack([cx, W + cy, W + H + (W - cx), 2 * W + H + (H - cy)], axis=1)
    arcs = np.mod(arcs, per)
    dmin = dist.min(axis=1, keepdims=True)
    tied = dist <= dmin + 1e-12
    inside_t = np.where(tied, arcs, np.inf).min(axis=1)
    # outside points have a unique closest point, the clamp
    out_t = _arclength_of_boundary_point(W, H, cx, cy)
    return np.where(outside, out_t, inside_t)


def _arclength_of_boundary_point(W, H, bx, by):
    t = np.where(by <= 0, bx,
                 np.where(bx >= W, W + by,
                          np.where(by >= H, W + H + (W - bx), 2 * W + H + (H - by))))
    return np.mod(t, 2.0 * (W + H))


# --------------------------------------------------------------------------
# grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid3:
    n: int
    m: int
    p: int
    h1: float
    h2: float
    hs: float
    origin: tuple
    s0: float
    band: int

    @property
    def shape(self) -> tuple:
        """Node array shape ``(n, m, p + 1)``."""
        return (self.n, self.m, self.p + 1)

    @property
    def x1(self) -> np.ndarray:
        return self.origin[0] + self.h1 * np.arange(self.n)

    @property
    def x2(self) -> np.ndarray:
        return self.origin[1] + self.h2 * np.arange(self.m)

    @property
    def s(self) -> np.ndarray:
        return self.s0 + self.hs * np.arange(self.p + 1)

    @property
    def width(self) -> float:
        return (self.n - 2 * self.band) * self.h1

    @property
    def height(self) -> float:
        return (self.m - 2 * self.band) * self.h2

    def free_mask_2d(self) -> np.ndarray:
        """Cells inside the domain rectangle."""
        b = self.band
        mask = np.zeros((self.n, self.m), dtype=bool)
        mask[b:self.n - b, b:self.m - b] = True
        return mask

    def centers(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1, X2], axis=-1)


def build_grid(sc: Scenario, n: int, m: int, p: int, band: int = 1) -> Grid3:
    """Grid whose free cells tile the domain and whose layers span the trace range plus one layer."""
    for name, val in (("n", n), ("m", m), ("p", p), ("band", band)):
        if int(val) != val:
            raise ConfigurationError(f"grid.{name} must be an integer, got {val!r}")
    if band < 1:
        raise ConfigurationError("grid.band must be >= 1 (frozen ring around the domain)")
    for name, val in (("n", n), ("m", m), ("p", p)):
        if val < 2 * band + 2:
            raise ConfigurationError(
                f"grid.{name}={val} too small; need at least 2*band+2={2 * band + 2}")
    h1 = sc.width / (n - 2 * band)
    h2 = sc.height / (m - 2 * band)
    lo, hi = boundary_trace(sc).range
    span = hi - lo
    hs = span / (p - 2) if span > 0 else 1.0 / (p - 2)
    origin = ((0.5 - band) * h1, (0.5 - band) * h2)
    return Grid3(int(n), int(m), int(p), h1, h2, hs, origin, lo - hs, int(band))


def snap_to_grid(sc: Scenario, n: int, m: int, band: int = 1):
    """Move every atom to the nearest cell corner on the boundary.

    Returns the snapped scenario and the largest displacement in arclength.
    """
    h1 = sc.width / (n - 2 * band)
    h2 = sc.height / (m - 2 * band)
    W, H = sc.width, sc.height

    def snap(t):
        pts = sc.point_at(t)
        bx = np.round(pts[..., 0] / h1) * h1
        by = np.round(pts[..., 1] / h2) * h2
        bx = np.clip(bx, 0.0, W)
        by = np.clip(by, 0.0, H)
        # keep the point on the edge it started on
        on_h = (pts[..., 1] <= 0) | (pts[..., 1] >= H)
        bx = np.where(on_h, bx, pts[..., 0])
        by = np.where(on_h, pts[..., 1], by)
        return _arclength_of_boundary_point(W, H, bx, by)

    moved = 0.0
    out = []
    for meas in (sc.sources, sc.sinks):
        if len(meas) == 0:
            out.append(meas)
            continue
        t_new = snap(meas.positions)
        d = np.abs(t_new - meas.positions)
        d = np.minimum(d, sc.perimeter - d)
        moved = max(moved, float(d.max()))
        out.append(BoundaryMeasure.from_atoms(zip(t_new, meas.masses)))
    return Scenario(W, H, out[0], out[1], sc.model), moved


# --------------------------------------------------------------------------
# lifted field
# --------------------------------------------------------------------------

@dataclass
class LiftedField:
    """Values on the lifted grid together with the frozen nodes and their data."""

    values: np.ndarray
    fixed: np.ndarray
    data: np.ndarray

    def copy(self) -> "LiftedField":
        return LiftedField(self.values.copy(), self.fixed, self.data)

    def with_values(self, values) -> "LiftedField":
        return LiftedField(np.asarray(values, dtype=float), self.fixed, self.data)


def trace_image(trace: BoundaryTrace, g: Grid3) -> np.ndarray:
    """Trace value at the closest boundary point of every cell centre."""
    t = boundary_arclength(g.width, g.height, g.centers().reshape(-1, 2))
    return trace(t).reshape(g.n, g.m)


def indicator_boundary_data(trace: BoundaryTrace, g: Grid3) -> LiftedField:
    """Subgraph indicator of the trace, frozen on band columns and on layers 0 and p.

    Interior columns start from the same indicator (their closest boundary
    point decides the value); they are not frozen.
    """
    u = trace_image(trace, g)
    s = g.s
    ind = (u[:, :, None] > s[None, None, :] + LAYER_GUARD * g.hs).astype(float)
    ind[:, :, 0] = 1.0
    ind[:, :, -1] = 0.0
    fixed = np.repeat(~g.free_mask_2d()[:, :, None], g.p + 1, axis=2)
    fixed[:, :, 0] = True
    fixed[:, :, -1] = True
    return LiftedField(ind.copy(), fixed, ind)


def project_C(v: LiftedField) -> LiftedField:
    """Clamp free values to [0, 1] and restore the frozen data."""
    return v.with_values(project_C_values(v.values, v.fixed, v.data))


def project_C_values(values, fixed, data) -> np.ndarray:
    return np.where(fixed, data, np.clip(values, 0.0, 1.0))


def validate_C(v: LiftedField, atol: float = 0.0) -> bool:
    vals = v.values
    ok_box = np.all(vals >= -atol) and np.all(vals <= 1 + atol)
    ok_fixed = np.all(np.abs(vals[v.fixed] - v.data[v.fixed]) <= atol)
    return bool(ok_box and ok_fixed and np.all(vals[:, :, 0] == 1) and np.all(vals[:, :, -1] == 0))
