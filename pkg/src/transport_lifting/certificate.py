"""Analytic dual certificate for the line-to-line problem.

Sources of density one on ``[0, l] x {0}`` and sinks on ``[0, l] x {1}``
have boundary trace ``u(x) = x1``.  A test field built from a stretched
circular flow is admissible for the dual constraints, and its boundary
flux is exactly ``beta * l``, which is therefore a lower bound on the
minimal network energy.

In closed form, with ``sh = s - x1`` and ``0 <= x2 <= 1/2``,

    phi(x, s) = (beta x2, sh / (4 beta)) / r,   r = sqrt(sh^2 / (4 beta^2) + x2^2)

inside the half ellipse ``r <= 1/2`` and for ``s`` in ``[0, l]``, zero
elsewhere.  For ``x2 > 1/2`` the field is mirrored across ``x2 = 1/2``
(second component flipped).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ParameterError

URBAN_C = 0.25 * 1.5 ** (2.0 / 3.0)


def circular_flow(x) -> np.ndarray:
    """Clockwise unit circulation inside the disc of radius 1/2, zero outside."""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    inside = (r <= 0.5) & (r > 0)
    safe = np.where(r > 0, r, 1.0)
    out = np.stack([x[..., 1] / safe, -x[..., 0] / safe], axis=-1)
    return np.where(inside[..., None], out, 0.0)


def beta_urban(eps: float, a: float, with_branch: bool = False):
    """``min(1 + (1/4)(3/2)^(2/3) eps^(2/3), a)``; optionally also the active branch."""
    if not eps > 0:
        raise ParameterError("eps must be positive")
    if not a > 1:
        raise ParameterError("a must exceed 1")
    free = 1.0 + URBAN_C * eps ** (2.0 / 3.0)
    beta = min(free, a)
    if with_branch:
        return beta, ("clamped" if a < free else "scaling")
    return beta


def beta_branched(eps: float) -> float:
    """``1 + eps |log eps| / 2``."""
    if not 0 < eps < 1:
        raise ParameterError("branched certificate needs 0 < eps < 1")
    return 1.0 + 0.5 * eps * abs(math.log(eps))


@dataclass(frozen=True)
class CertificateParams:
    kind: str
    eps: float
    ell: float
    beta: float
    a: float | None = None
    # beta - 1 from the closed form, kept separately to avoid cancellation
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ("urban", "branched"):
            raise ParameterError(f"unknown certificate kind {self.kind!r}")
        if self.kind == "urban" and (self.a is None or not self.a > 1):
            raise ParameterError("urban certificate needs a > 1")
        if not self.ell > 0:
            raise ParameterError("ell must be positive")
        if not self.beta >= 1:
            raise ParameterError("beta must be at least 1")
        if self.delta is not None and abs(1.0 + self.delta - self.beta) > 4e-16 * self.beta:
            raise ParameterError("delta must equal beta - 1")

    @property
    def B(self) -> np.ndarray:
        return np.diag([2.0 * self.beta, 1.0])

    def sbar(self, x2) -> np.ndarray:
        """Half-width in ``sh`` of the region where ``|phi|`` may exceed one."""
        b = self.beta
        return 4.0 * np.asarray(x2) * b * math.sqrt((b * b - 1.0) / 3.0)

    def bound(self, length):
        """Right-hand side of the dual constraint for an ``s``-interval of this length."""
        length = np.asarray(length, dtype=float)
        if self.kind == "urban":
            return np.minimum(length + self.eps, self.a * length)
        return length ** (1.0 - self.eps)


def make_params(kind: str, eps: float, ell: float = 1.0, a: float | None = None,
                beta: float | None = None) -> CertificateParams:
    """Parameters with the default ``beta`` of each model unless given."""
    delta = None
    if beta is None:
        if kind == "urban":
            beta = beta_urban(eps, a)
            delta = min(URBAN_C * eps ** (2.0 / 3.0), a - 1.0)
        else:
            beta = beta_branched(eps)
            delta = 0.5 * eps * abs(math.log(eps))
    return CertificateParams(kind, float(eps), float(ell), float(beta),
                             None if a is None else float(a), delta)


def _fold(x2):
    """Map ``x2`` to the lower half and return the sign of the second component."""
    x2 = np.asarray(x2, dtype=float)
    upper = x2 > 0.5
    return np.where(upper, 1.0 - x2, x2), np.where(upper, -1.0, 1.0)


def phi_field(params: CertificateParams, x, s) -> np.ndarray:
    """Planar part of the test field at ``(x, s)``; broadcasts over ``x[..., 2]`` and ``s``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    b = params.beta
    y, sign = _fold(x[..., 1])
    sh = s - x[..., 0]
    r = np.sqrt(sh * sh / (4 * b * b) + y * y)
    live = (s >= 0) & (s <= params.ell) & (r <= 0.5)
    safe = np.where(r > 0, r, 1.0)
    p1 = np.where(r > 0, b * y / safe, b)
    p2 = np.where(r > 0, sh / (4 * b * safe), 0.0)
    out = np.stack([p1, sign * p2], axis=-1)
    return np.where(live[..., None], out, 0.0)


def phi_antiderivative(params: CertificateParams, x, s) -> np.ndarray:
    """Exact ``int_{-inf}^{s} phi(x, t) dt`` (for the lower half ``x2 <= 1/2``).

    Used as an independent check of the quadrature.
    """
    x = np.asarray(x, dtype=float)
    b = params.beta
    y = np.asarray(x[..., 1], dtype=float)
    x1 = x[..., 0]
    half = 2 * b * np.sqrt(np.maximum(0.25 - y * y, 0.0))
    lo = np.maximum(0.0, x1 - half)
    hi = np.minimum(params.ell, x1 + half)
    t = np.clip(np.asarray(s, dtype=float), lo, np.maximum(lo, hi))

    def prim(tt):
        sh = tt - x1
        if np.ndim(y) == 0 and y == 0:
            f1 = np.zeros_like(sh)
        else:
            yy = np.where(y > 0, y, 1.0)
            f1 = np.where(y > 0, 2 * b * b * y * np.arcsinh(sh / (2 * b * yy)), 0.0)
        r = np.sqrt(sh * sh / (4 * b * b) + y * y)
        return np.stack([f1, b * r], axis=-1)

    return np.where((hi > lo)[..., None], prim(t) - prim(lo), 0.0)


# --------------------------------------------------------------------------
# quadrature audit
# --------------------------------------------------------------------------

def _cumulative_integral(params, x1, x2, s_eval, per_unit):
    """``int_{-inf}^{s} phi`` at every ``s_eval`` by piecewise composite Simpson.

    Pieces end at every point where the field jumps or bends sharply, so
    each piece sees a smooth integrand.  Nodes are nudged into the open
    piece to pick the one-sided limits at jumps.
    """
    b = params.beta
    half = 2 * b * math.sqrt(max(0.25 - x2 * x2, 0.0))
    lo, hi = max(0.0, x1 - half), min(params.ell, x1 + half)
    s_eval = np.asarray(s_eval, dtype=float)
    if hi <= lo:
        return np.zeros((len(s_eval), 2))
    breaks = [lo, hi, x1, x1 - float(params.sbar(x2)), x1 + float(params.sbar(x2))]
    if x2 > 0:
        # geometric refinement where the field turns on the scale x2
        w = 2 * b * x2
        breaks += [x1 + sgn * w * 2.0 ** k for k in range(-6, 8) for sgn in (-1, 1)]
    breaks = np.unique(np.clip(np.concatenate([breaks, s_eval]), lo, hi))
    a0, a1 = breaks[:-1], breaks[1:]
    nsub = np.maximum(2, 2 * np.ceil(0.5 * per_unit * (a1 - a0))).astype(int)
    offsets = np.concatenate([[0], np.cumsum(nsub + 1)])
    seg = np.repeat(np.arange(len(a0)), nsub + 1)
    local = np.arange(offsets[-1]) - offsets[seg]
    h = (a1 - a0) / nsub
    t = a0[seg] + local * h[seg]
    nudge = 1e-12 * (a1 - a0)[seg]
    t = np.clip(t, a0[seg] + nudge, a1[seg] - nudge)
    pts = np.empty((len(t), 2))
    pts[:, 0], pts[:, 1] = x1, x2
    f = phi_field(params, pts, t)
    wts = np.where(local % 2 == 1, 4.0, 2.0)
    wts[(local == 0) | (local == nsub[seg])] = 1.0
    contrib = (h[seg] / 3.0)[:, None] * wts[:, None] * f
    pieces = np.zeros((len(a0), 2))
    np.add.at(pieces, seg, contrib)
    F = np.vstack([np.zeros((1, 2)), np.cumsum(pieces, axis=0)])
    idx = np.searchsorted(breaks, np.clip(s_eval, lo, hi))
    return F[np.clip(idx, 0, len(breaks) - 1)]


@dataclass
class AdmissibilityReport:
    max_violation: float
    max_relative_violation: float
    worst: tuple
    samples: int

    @property
    def admissible(self) -> bool:
        return self.max_violation <= 1e-6


def verify_admissibility(params: CertificateParams, density: int = 50,
                         per_unit: int = 200) -> AdmissibilityReport:
    """Largest excess of ``|int_{s1}^{s2} phi ds|`` over the dual bound on a lattice.

    ``x1`` covers the support ``[-beta, l + beta]``, ``x2`` covers ``[0, 1/2]``
    (the upper half follows by reflection), and for each ``x`` the ``s``
    lattice adds the points where the field changes character.
    """
    if density < 50:
        raise ValueError("sample density must be at least 50 per axis")
    if per_unit < 200:
        raise ValueError("quadrature needs at least 200 subintervals per unit length")
    b = params.beta
    x1s = np.linspace(-b, params.ell + b, density)
    x2s = np.linspace(0.0, 0.5, density)
    s_base = np.linspace(-0.25, params.ell + 0.25, density)
    worst = (-np.inf, 0.0, None)
    count = 0
    for x2 in x2s:
        half = 2 * b * math.sqrt(max(0.25 - x2 * x2, 0.0))
        sb = float(params.sbar(x2))
        for x1 in x1s:
            extra = [0.0, params.ell, x1, x1 - half, x1 + half, x1 - sb, x1 + sb]
            s = np.unique(np.concatenate([s_base, extra]))
            F = _cumulative_integral(params, x1, x2, s, per_unit)
            D = F[None, :, :] - F[:, None, :]
            mag = np.hypot(D[..., 0], D[..., 1])
            length = np.abs(s[None, :] - s[:, None])
            rhs = params.bound(length)
            # zero-length pairs are trivially tight and make poor witnesses
            exc = np.where(length > 0, mag - rhs, -np.inf)
            k = np.unravel_index(np.argmax(exc), exc.shape)
            rel = float(np.max(np.where(rhs > 0, exc / np.where(rhs > 0, rhs, 1.0), 0.0)))
            count += exc.size
            if exc[k] > worst[0]:
                worst = (float(exc[k]), rel, (float(x1), float(x2), float(s[k[0]]), float(s[k[1]])))
            elif rel > worst[1]:
                worst = (worst[0], rel, worst[2])
    return AdmissibilityReport(max(worst[0], 0.0), max(worst[1], 0.0), worst[2], count)


def certificate_bound(params: CertificateParams) -> dict:
    """Certified lower bound ``beta l`` and its excess over ``l``."""
    delta = params.beta - 1.0 if params.delta is None else params.delta
    return {"total": params.beta * params.ell, "excess": params.ell * delta}


def urban_inequality_chain(eps: float, beta: float) -> dict:
    """Terms of the urban admissibility estimate at the worst height ``x2 = 1/2``."""
    sbar = 2.0 * beta * math.sqrt((beta * beta - 1) / 3.0)
    return {
        "two_sbar_excess": 2 * sbar * (beta - 1),
        "four_beta_root": 4 * beta * math.sqrt((beta * beta - 1) / 3.0) * (beta - 1),
        "four_root_square": 4 * math.sqrt((beta * beta - 1) / 3.0) * (beta * beta - 1),
        "eps": eps,
    }


def branched_eps0(probes=None, density: int = 50, viol_tol: float = 1e-6) -> dict:
    """Where the branched field passes the audit.

    ``eps0`` is the largest probe below which every probe passes (zero if
    the smallest fails); ``threshold`` is refined by bisection between the
    last failing and the first passing probe.
    """
    if probes is None:
        probes = [1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95]
    probes = sorted(probes)

    def viol(e):
        return verify_admissibility(make_params("branched", e), density).max_violation

    table = [(e, viol(e)) for e in probes]
    ok = [v <= viol_tol for _, v in table]
    eps0 = 0.0
    for (e, _), good in zip(table, ok):
        if not good:
            break
        eps0 = e
    threshold = None
    for k in range(len(table) - 1, 0, -1):
        if ok[k] and not ok[k - 1]:
            lo, hi = table[k - 1][0], table[k][0]
            while hi - lo > 1e-3:
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if viol(mid) <= viol_tol else (mid, hi)
            threshold = hi
            break
    return {"eps0": eps0, "threshold": threshold, "table": table}


def max_admissible_beta(kind: str, eps: float, a: float | None = None, ell: float = 1.0,
                        density: int = 50, viol_tol: float = 1e-6, tol: float = 1e-6) -> float:
    """Largest ``beta`` (by bisection) whose field passes the audit."""
    def ok(b):
        p = make_params(kind, eps, ell, a, beta=b)
        return verify_admissibility(p, density).max_violation <= viol_tol
    lo, hi = 1.0, 2.0 if kind == "branched" else min(2.0, a)
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo
