"""Bundled boundary configurations.

All of them live on rectangles with atoms on the boundary, positions given
as counterclockwise arclength from the lower left corner.
"""
from __future__ import annotations

import numpy as np

from .model import BoundaryMeasure, ConfigurationError, Scenario, make_model


def _bottom(x):
    return np.asarray(x, dtype=float)


def _top(x, width, height):
    return width + height + (width - np.asarray(x, dtype=float))


def line_to_line(ell: float = 2.0, atoms_per_unit: int = 16, model=None) -> Scenario:
    """Evenly spread unit density along the bottom edge moving straight up.

    Each unit of length carries ``atoms_per_unit`` atoms at the cell
    midpoints ``(k + 1/2) / atoms_per_unit``.
    """
    model = model or make_model("urban", 1e-3, 5.0)
    k = int(round(ell * atoms_per_unit))
    if k < 1 or not np.isclose(k, ell * atoms_per_unit):
        raise ConfigurationError("scenario.ell * scenario.atoms_per_unit must be a positive integer")
    x = (np.arange(k) + 0.5) / atoms_per_unit
    w = 1.0 / atoms_per_unit
    src = BoundaryMeasure.from_atoms(zip(_bottom(x), np.full(k, w)))
    snk = BoundaryMeasure.from_atoms(zip(_top(x, ell, 1.0), np.full(k, w)))
    return Scenario(float(ell), 1.0, src, snk, model)


def top_to_bottom(xs, mass: float, model, width: float = 1.0, height: float = 1.0) -> Scenario:
    """Equal atoms at the same abscissae, sources on top and sinks at the bottom."""
    xs = np.asarray(xs, dtype=float)
    src = BoundaryMeasure.from_atoms(zip(_top(xs, width, height), np.full(len(xs), mass)))
    snk = BoundaryMeasure.from_atoms(zip(_bottom(xs), np.full(len(xs), mass)))
    return Scenario(width, height, src, snk, model)


def four_to_four(model=None, mass: float = 0.3) -> Scenario:
    """Four sources over four sinks on the unit square."""
    model = model or make_model("urban", 0.5, 5.0)
    return top_to_bottom([0.2, 0.4, 0.6, 0.8], mass, model)


def single_pipe(model=None) -> Scenario:
    """One unit source opposite one unit sink, distance one apart."""
    model = model or make_model("urban", 0.5, 2.0)
    return top_to_bottom([0.5], 1.0, model)


def sixteen_to_sixteen(model=None, width: float = 2.0) -> Scenario:
    """Sixteen equal sources on top of a 2x1 box, sixteen sinks below."""
    model = model or make_model("urban", 0.5, 5.0)
    xs = (np.arange(16) + 0.5) * width / 16
    return top_to_bottom(xs, 1.0 / 16, model, width=width)


def alternating_hexagon(model=None) -> Scenario:
    """Six atoms spread evenly around the unit square, sources and sinks alternating.

    Stand-in for a hexagonal layout; the masses differ from atom to atom.
    """
    model = model or make_model("branched", 0.3)
    per = 4.0
    t = (np.arange(6) + 0.5) * per / 6
    src = BoundaryMeasure.from_atoms(zip(t[0::2], [0.2, 0.3, 0.5]))
    snk = BoundaryMeasure.from_atoms(zip(t[1::2], [0.5, 0.2, 0.3]))
    return Scenario(1.0, 1.0, src, snk, model)


PRESETS = {
    "line_to_line": line_to_line,
    "four_to_four": four_to_four,
    "single_pipe": single_pipe,
    "sixteen_to_sixteen": sixteen_to_sixteen,
    "alternating_hexagon": alternating_hexagon,
}


def preset(name: str, model=None, **kw) -> Scenario:
    try:
        build = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown scenario preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return build(model=model, **kw)
