"""From the relaxed lifted field back to images, fluxes and networks.

Images are piecewise constant on the cells of the planar grid.  Jumps
live on cell faces; a face belongs to the closed domain when at least
one of its two cells is free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lift import Grid3, LiftedField
from .model import CostModel, TransportGraph


@dataclass
class GridImage:
    u: np.ndarray
    grid: Grid3
    binarity: float = 0.0


@dataclass
class FluxField:
    """Rotated gradient; ``f[i, j]`` uses forward differences from cell ``(i, j)``."""

    f: np.ndarray
    grid: Grid3


@dataclass
class NetworkSegments:
    segments: np.ndarray
    masses: np.ndarray

    def __len__(self):
        return len(self.masses)


def collapse(v, g: Grid3, soft: bool = False) -> GridImage:
    """Count layers with ``v > 1/2`` (or sum ``v`` when ``soft``) to recover ``u``.

    ``binarity`` is the fraction of free nodes with ``v`` in ``[0.05, 0.95]``.
    """
    if isinstance(v, LiftedField):
        vals, fixed = v.values, v.fixed
    else:
        vals = np.asarray(v, dtype=float)
        fixed = np.zeros(vals.shape, dtype=bool)
        fixed[:, :, 0] = fixed[:, :, -1] = True
        fixed[~g.free_mask_2d()] = True
    if soft:
        u = g.s0 + g.hs * vals.sum(axis=2)
    else:
        u = g.s0 + g.hs * np.count_nonzero(vals > 0.5, axis=2)
    free = ~fixed
    mid = (vals >= 0.05) & (vals <= 0.95) & free
    score = float(mid.sum() / max(free.sum(), 1))
    return GridImage(u, g, score)


def flux(img: GridImage) -> FluxField:
    """``f = (-D2 u, D1 u)``, the image gradient turned by a quarter counterclockwise."""
    u, g = img.u, img.grid
    d1 = np.zeros_like(u)
    d2 = np.zeros_like(u)
    d1[:-1, :] = (u[1:, :] - u[:-1, :]) / g.h1
    d2[:, :-1] = (u[:, 1:] - u[:, :-1]) / g.h2
    return FluxField(np.stack([-d2, d1], axis=-1), g)


def dual_cell_outflow(fl: FluxField) -> np.ndarray:
    """Net outflow through the four faces around every cell corner ``(i+1/2, j+1/2)``."""
    g = fl.grid
    f1 = fl.f[..., 0]  # sits on the face between (i, j) and (i, j+1)
    f2 = fl.f[..., 1]  # sits on the face between (i, j) and (i+1, j)
    return ((f1[1:, :-1] - f1[:-1, :-1]) * g.h2
            + (f2[:-1, 1:] - f2[:-1, :-1]) * g.h1)


def _domain_faces(g: Grid3):
    free = g.free_mask_2d()
    vert = free[:-1, :] | free[1:, :]   # between (i, j) and (i+1, j)
    horiz = free[:, :-1] | free[:, 1:]  # between (i, j) and (i, j+1)
    return vert, horiz


def grid_energy(img: GridImage, model: CostModel) -> float:
    """Jump cost summed over all cell faces of the closed domain."""
    u, g = img.u, img.grid
    vert, horiz = _domain_faces(g)
    dv = np.abs(u[1:, :] - u[:-1, :])
    dh = np.abs(u[:, 1:] - u[:, :-1])
    ev = np.asarray(model.jump_cost(dv)) * g.h2
    eh = np.asarray(model.jump_cost(dh)) * g.h1
    return float(ev[vert].sum() + eh[horiz].sum())


def extract_network(img: GridImage, mass_tol: float) -> NetworkSegments:
    """One segment per domain face whose jump exceeds ``mass_tol``."""
    if mass_tol <= 0:
        raise ValueError("mass_tol must be positive")
    u, g = img.u, img.grid
    vert, horiz = _domain_faces(g)
    x1, x2 = g.x1, g.x2
    segs, masses = [], []
    dv = np.abs(u[1:, :] - u[:-1, :])
    for i, j in zip(*np.nonzero(vert & (dv > mass_tol))):
        xf = x1[i] + 0.5 * g.h1
        segs.append(((xf, x2[j] - 0.5 * g.h2), (xf, x2[j] + 0.5 * g.h2)))
        masses.append(dv[i, j])
    dh = np.abs(u[:, 1:] - u[:, :-1])
    for i, j in zip(*np.nonzero(horiz & (dh > mass_tol))):
        yf = x2[j] + 0.5 * g.h2
        segs.append(((x1[i] - 0.5 * g.h1, yf), (x1[i] + 0.5 * g.h1, yf)))
        masses.append(dh[i, j])
    return NetworkSegments(np.array(segs, dtype=float).reshape(-1, 2, 2),
                           np.array(masses, dtype=float))


def default_mass_tol(sc) -> float:
    masses = np.concatenate([sc.sources.masses, sc.sinks.masses])
    return 0.25 * float(masses.min()) if len(masses) else 1e-9


# --------------------------------------------------------------------------
# coarse topology descriptors
# --------------------------------------------------------------------------

FAMILIES = {
    (4,): "pipes",
    (4, 2, 4): "pairwise",
    (4, 2, 1, 2, 4): "double_tree",
    (4, 1, 4): "single_trunk",
}


def _clusters(xs, gap: float) -> int:
    if len(xs) == 0:
        return 0
    xs = np.sort(np.asarray(xs, dtype=float))
    return int(1 + np.count_nonzero(np.diff(xs) > gap))


def image_row_crossings(img: GridImage, mass_tol: float, gap_cells: float = 1.5) -> np.ndarray:
    """Number of separate network strands crossing each free row of cells."""
    u, g = img.u, img.grid
    vert, _ = _domain_faces(g)
    dv = np.abs(u[1:, :] - u[:-1, :])
    xf = g.x1[:-1] + 0.5 * g.h1
    b = g.band
    rows = range(b, g.m - b)
    return np.array([_clusters(xf[(dv[:, j] > mass_tol) & vert[:, j]], gap_cells * g.h1)
                     for j in rows])


def graph_row_crossings(graph: TransportGraph, heights, gap: float) -> np.ndarray:
    """Strand counts of a straight-line graph along horizontal lines."""
    seg = graph.segments[graph.weights > 0]
    out = []
    for y in heights:
        xs = []
        for (xa, ya), (xb, yb) in seg:
            lo, hi = min(ya, yb), max(ya, yb)
            if hi == lo or not (lo <= y <= hi):
                continue
            t = (y - ya) / (yb - ya)
            xs.append(xa + t * (xb - xa))
        out.append(_clusters(xs, gap))
    return np.array(out)


def topology_signature(counts, min_run: int = 2, ends: tuple | None = None) -> tuple:
    """Run-length summary of strand counts, ignoring runs shorter than ``min_run``.

    ``ends`` gives the terminal counts at the first and last row; they are
    attached to the summary since mergers right next to the terminals are
    often invisible at grid resolution.
    """
    runs = []
    for c in counts:
        if runs and runs[-1][0] == c:
            runs[-1][1] += 1
        else:
            runs.append([int(c), 1])
    kept = [c for c, n in runs if n >= min_run]
    if ends is not None:
        kept = [int(ends[0])] + kept + [int(ends[1])]
    sig = []
    for c in kept:
        if not sig or sig[-1] != c:
            sig.append(c)
    return tuple(sig)


def family_name(signature: tuple) -> str:
    return FAMILIES.get(tuple(signature), "other:" + "-".join(map(str, signature)))


def _row_ends(sc, g: Grid3):
    """Number of terminals on the bottom and top edges."""
    if sc is None:
        return None
    pts = np.vstack([sc.source_measure().points, sc.sink_measure().points])
    return (int(np.sum(np.isclose(pts[:, 1], 0.0))), int(np.sum(np.isclose(pts[:, 1], g.height))))


def image_family(img: GridImage, mass_tol: float, sc=None, gap_cells: float = 1.5,
                 min_run: int = 2) -> str:
    counts = image_row_crossings(img, mass_tol, gap_cells)
    return family_name(topology_signature(counts, min_run, _row_ends(sc, img.grid)))


def graph_family(graph: TransportGraph, g: Grid3, sc=None, gap_cells: float = 1.5,
                 min_run: int = 2) -> str:
    """Family of an exact graph sampled at the free row heights of ``g``."""
    heights = g.x2[g.band:g.m - g.band]
    counts = graph_row_crossings(graph, heights, gap_cells * g.h1)
    return family_name(topology_signature(counts, min_run, _row_ends(sc, g)))
