"""Flat ``section.key = value`` run configuration.

One assignment per line, ``#`` starts a comment.  Every key has a type
and a default; unknown keys and bad values are errors that name the key
and the line they came from.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .model import ConfigurationError

MODES = ("solve", "oracle", "certificate", "sweep")
FORMATS = ("u.csv", "flux.csv", "u.pgm", "network.csv", "energy.json", "log.jsonl")


def _as_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _as_float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _as_optional_float(text):
    return None if text.strip().lower() in ("", "none", "auto") else _as_float(text)


def _as_floats(text):
    vals = [_as_float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    return tuple(vals)


def _as_strs(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _as_atoms(text):
    """``t:w, t:w, ...`` pairs of boundary arclength and mass."""
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        t, sep, w = item.partition(":")
        if not sep:
            raise ValueError(f"atom {item.strip()!r} is not of the form position:mass")
        out.append((_as_float(t), _as_float(w)))
    return tuple(out)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{t!r}:{w!r}" for t, w in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, default)
SCHEMA = {
    "mode": (str, "solve"),
    "scenario.preset": (str, "line_to_line"),
    "scenario.ell": (_as_float, 2.0),
    "scenario.width": (_as_float, 1.0),
    "scenario.height": (_as_float, 1.0),
    "scenario.sources": (_as_atoms, ()),
    "scenario.sinks": (_as_atoms, ()),
    "model.kind": (str, "urban"),
    "model.eps": (_as_float, 1e-3),
    "model.a": (_as_float, 5.0),
    "grid.n": (int, 66),
    "grid.m": (int, 34),
    "grid.p": (int, 34),
    "grid.band": (int, 1),
    "solver.tau": (_as_optional_float, None),
    "solver.sigma": (_as_optional_float, None),
    "solver.theta": (_as_float, 1.0),
    "solver.max_iters": (int, 1000),
    "solver.stop_tol": (_as_float, 5e-3),
    "solver.dykstra_tol": (_as_float, 1e-6),
    "solver.dykstra_cycles": (int, 50),
    "solver.dyadic": (_as_bool, False),
    "solver.log_every": (int, 10),
    "oracle.enabled": (_as_bool, False),
    "oracle.max_steiner": (int, 6),
    "extract.mass_tol": (_as_optional_float, None),
    "certificate.density": (int, 50),
    "certificate.per_unit": (int, 200),
    "certificate.tol": (_as_float, 1e-6),
    "sweep.key": (str, "model.eps"),
    "sweep.values": (_as_floats, ()),
    "outputs.dir": (str, "out"),
    "outputs.formats": (_as_strs, FORMATS),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    source: dict = field(default_factory=dict, compare=False)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, text: str, where: str = "") -> None:
        """Parse ``text`` for ``key``; ``where`` labels the origin in error messages."""
        if key not in SCHEMA:
            raise ConfigurationError(f"{where}unknown key {key!r}")
        parse, _ = SCHEMA[key]
        try:
            self.values[key] = parse(text.strip())
        except ValueError as err:
            raise ConfigurationError(f"{where}bad value for {key}: {err}") from None
        self.source[key] = where.rstrip(": ")

    def dumps(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.values.items())

    def validate(self) -> "RunConfig":
        v = self.values

        def bad(key, msg):
            origin = self.source.get(key)
            prefix = f"{origin}: " if origin else ""
            raise ConfigurationError(f"{prefix}{key}: {msg}")

        if v["mode"] not in MODES:
            bad("mode", f"must be one of {', '.join(MODES)}")
        if v["model.kind"] not in ("urban", "branched"):
            bad("model.kind", "must be urban or branched")
        if v["scenario.preset"] == "custom":
            if not v["scenario.sources"] or not v["scenario.sinks"]:
                bad("scenario.sources", "custom scenarios need scenario.sources and scenario.sinks")
        if v["mode"] == "sweep":
            if not v["sweep.values"]:
                bad("sweep.values", "sweep needs a non-empty list")
            if v["sweep.key"] not in SCHEMA or SCHEMA[v["sweep.key"]][0] is not _as_float:
                bad("sweep.key", "must name a real-valued key")
        for fmt in v["outputs.formats"]:
            if fmt not in FORMATS:
                bad("outputs.formats", f"unknown format {fmt!r}")
        for key in ("grid.n", "grid.m", "grid.p", "solver.max_iters", "solver.log_every",
                    "solver.dykstra_cycles", "certificate.density", "certificate.per_unit"):
            if v[key] < 1:
                bad(key, "must be positive")
        return self


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        where = f"{name}:{lineno}: "
        if not sep:
            raise ConfigurationError(f"{where}expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        if key in seen:
            raise ConfigurationError(f"{where}{key} already set on line {seen[key]}")
        seen[key] = lineno
        cfg.set(key, value, where)
    return cfg


def preset_dir() -> Path:
    return Path(__file__).with_name("presets")


def load_config(path) -> RunConfig:
    """Read a config file; a bare preset name such as ``line_to_line`` also works."""
    p = Path(path)
    if not p.exists():
        cand = preset_dir() / (p.name if p.suffix == ".cfg" else p.name + ".cfg")
        if cand.exists():
            p = cand
        else:
            raise ConfigurationError(f"cannot read config {str(path)!r}: no such file or preset")
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigurationError(f"cannot read config {str(p)!r}: {err.strerror}") from None
    return parse_config(text, str(p))


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set {item!r}: expected KEY=VALUE")
        cfg.set(key.strip(), value, f"--set {key.strip()}: ")
    return cfg
