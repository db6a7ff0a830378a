"""Command line runs driven by a flat config file.

    transport-lifting --config line_to_line --out runs/l2l --set model.eps=0.01

Exit status is 0 on success, 2 when a solve did not reach its stopping
tolerance or a certificate failed its audit (artifacts are still
written), and 1 on configuration or IO errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import certificate as cert
from . import extract, lift, oracle, scenarios, solver
from .config import RunConfig, apply_overrides, load_config
from .model import (BoundaryMeasure, ConfigurationError, InfeasibleError, ParameterError,
                    Scenario, make_model)

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


def _num(x) -> str:
    return format(float(x), ".17g")


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def build_scenario(cfg: RunConfig) -> Scenario:
    kind = cfg["model.kind"]
    model = make_model(kind, cfg["model.eps"], cfg["model.a"] if kind == "urban" else None)
    name = cfg["scenario.preset"]
    if name == "custom":
        return Scenario(cfg["scenario.width"], cfg["scenario.height"],
                        BoundaryMeasure.from_atoms(cfg["scenario.sources"]),
                        BoundaryMeasure.from_atoms(cfg["scenario.sinks"]), model)
    if name == "line_to_line":
        return scenarios.line_to_line(cfg["scenario.ell"], model=model)
    return scenarios.preset(name, model=model)


def solver_options(cfg: RunConfig) -> solver.SolverOptions:
    return solver.SolverOptions(
        tau=cfg["solver.tau"], sigma=cfg["solver.sigma"], theta=cfg["solver.theta"],
        max_iters=cfg["solver.max_iters"], stop_tol=cfg["solver.stop_tol"],
        dykstra_tol=cfg["solver.dykstra_tol"], dykstra_cycles=cfg["solver.dykstra_cycles"],
        dyadic=cfg["solver.dyadic"], log_every=cfg["solver.log_every"])


@dataclass
class RunResult:
    energy: dict
    image: extract.GridImage | None = None
    network: list = field(default_factory=list)   # (x1a, x2a, x1b, x2b, mass)
    log: list = field(default_factory=list)
    trace_range: tuple = (0.0, 1.0)
    extra: dict = field(default_factory=dict)
    ok: bool = True


def _energy(primal=None, grid=None, oracle_energy=None, bound=None, iterations=None,
            converged=None, binarity=None) -> dict:
    return {
        "primal_value": _json_num(primal),
        "grid_energy": _json_num(grid),
        "oracle_energy": _json_num(oracle_energy),
        "certificate_bound": _json_num(bound),
        "iterations": iterations,
        "converged": converged,
        "binarity_score": _json_num(binarity),
    }


def run_solve(cfg: RunConfig, sc: Scenario) -> RunResult:
    res = solver.solve(sc, cfg["grid.n"], cfg["grid.m"], cfg["grid.p"], cfg["grid.band"],
                       solver_options(cfg))
    img = extract.collapse(res.v, res.grid)
    mass_tol = cfg["extract.mass_tol"] or extract.default_mass_tol(res.scenario)
    net = extract.extract_network(img, mass_tol)
    rows = [(*seg[0], *seg[1], w) for seg, w in zip(net.segments, net.masses)]
    extra = {"image_family": extract.image_family(img, mass_tol, res.scenario),
             "snap_displacement": res.snap_displacement}
    oracle_energy = None
    if cfg["oracle.enabled"]:
        found = oracle.oracle_min_energy(sc, cfg["oracle.max_steiner"])
        oracle_energy = found.energy
        extra["oracle_topology"] = found.topology_id
        extra["oracle_family"] = extract.graph_family(found.graph, res.grid, res.scenario)
    energy = _energy(res.primal_value, extract.grid_energy(img, sc.model), oracle_energy,
                     iterations=res.iterations, converged=res.converged,
                     binarity=img.binarity)
    return RunResult(energy, img, rows, res.log, lift.boundary_trace(res.scenario).range,
                     extra, ok=res.converged)


def run_oracle(cfg: RunConfig, sc: Scenario) -> RunResult:
    found = oracle.oracle_min_energy(sc, cfg["oracle.max_steiner"])
    g = found.graph
    rows = [(*seg[0], *seg[1], w) for seg, w in zip(g.segments, g.weights)]
    return RunResult(_energy(oracle_energy=found.energy), None, rows,
                     extra={"oracle_topology": found.topology_id})


def run_certificate(cfg: RunConfig, sc: Scenario) -> RunResult:
    if cfg["scenario.preset"] != "line_to_line":
        raise ConfigurationError("mode=certificate needs scenario.preset = line_to_line")
    kind = cfg["model.kind"]
    a = cfg["model.a"] if kind == "urban" else None
    params = cert.make_params(kind, cfg["model.eps"], cfg["scenario.ell"], a)
    report = cert.verify_admissibility(params, cfg["certificate.density"],
                                       cfg["certificate.per_unit"])
    bound = cert.certificate_bound(params)
    ok = report.max_violation <= cfg["certificate.tol"]
    extra = {
        "kind": kind, "eps": params.eps, "a": a, "ell": params.ell, "beta": params.beta,
        "branch": cert.beta_urban(params.eps, a, with_branch=True)[1] if kind == "urban" else None,
        "total": bound["total"], "excess": bound["excess"],
        "max_violation": report.max_violation,
        "max_relative_violation": report.max_relative_violation,
        "worst": list(report.worst) if report.worst else None,
        "admissible": ok,
    }
    return RunResult(_energy(bound=bound["total"]), extra=extra, ok=ok)


SWEEP_COLUMNS = ("value", "primal_value", "grid_energy", "oracle_energy", "image_family",
                 "oracle_family", "oracle_topology", "iterations", "converged", "binarity_score")


def run_sweep(cfg: RunConfig, quiet: bool = True):
    rows, ok = [], True
    key = cfg["sweep.key"]
    for val in cfg["sweep.values"]:
        point = RunConfig(dict(cfg.values))
        point.values[key] = float(val)
        point.values["mode"] = "solve"
        r = run_solve(point, build_scenario(point))
        ok &= r.ok
        e = r.energy
        rows.append((val, e["primal_value"], e["grid_energy"], e["oracle_energy"],
                     r.extra.get("image_family", ""), r.extra.get("oracle_family", ""),
                     r.extra.get("oracle_topology", ""), e["iterations"], e["converged"],
                     e["binarity_score"]))
        if not quiet:
            print(f"{key}={val:g}: primal {e['primal_value']:.6f}"
                  + (f", oracle {e['oracle_energy']:.6f}" if e["oracle_energy"] is not None else "")
                  + f", {r.extra.get('image_family', '')}", flush=True)
    return rows, ok


# --------------------------------------------------------------------------
# artifacts
# --------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def u_csv(img: extract.GridImage) -> str:
    g = img.grid
    x1, x2 = g.x1, g.x2
    rows = ((i, j, x1[i], x2[j], img.u[i, j]) for i in range(g.n) for j in range(g.m))
    return _csv_text(("i", "j", "x1", "x2", "u"), rows)


def flux_csv(img: extract.GridImage) -> str:
    g = img.grid
    f = extract.flux(img).f
    x1, x2 = g.x1, g.x2
    rows = ((i, j, x1[i], x2[j], f[i, j, 0], f[i, j, 1]) for i in range(g.n) for j in range(g.m))
    return _csv_text(("i", "j", "x1", "x2", "fx", "fy"), rows)


def u_pgm(img: extract.GridImage, lo: float, hi: float) -> bytes:
    """Binary greyscale of the domain cells, top row first."""
    g = img.grid
    b = g.band
    u = img.u[b:g.n - b, b:g.m - b]
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.rint((u - lo) * scale), 0, 255).astype(np.uint8)
    px = px.T[::-1]
    head = f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii")
    return head + px.tobytes()


def network_csv(rows) -> str:
    return _csv_text(("x1a", "x2a", "x1b", "x2b", "mass"), rows)


def log_jsonl(log) -> str:
    return "".join(json.dumps({"iter": int(k), "residual": _json_num(r),
                               "dykstra_violation": _json_num(d)}) + "\n" for k, r, d in log)


def _write(path: Path, data) -> None:
    try:
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from None


def emit(result: RunResult, formats, out_dir) -> list:
    """Write the requested artifacts that apply to this result; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create {out}: {err.strerror}") from None
    written = []
    img = result.image
    for fmt in formats:
        if fmt == "u.csv" and img is not None:
            data = u_csv(img)
        elif fmt == "flux.csv" and img is not None:
            data = flux_csv(img)
        elif fmt == "u.pgm" and img is not None:
            data = u_pgm(img, *result.trace_range)
        elif fmt == "network.csv" and result.network:
            data = network_csv(result.network)
        elif fmt == "energy.json":
            data = json.dumps(result.energy, indent=2) + "\n"
        elif fmt == "log.jsonl" and result.log:
            data = log_jsonl(result.log)
        else:
            continue
        _write(out / fmt, data)
        written.append(out / fmt)
    return written


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="transport-lifting",
        description="Convex network optimization for urban planning and branched transport.")
    ap.add_argument("--config", required=True,
                    help="config file, or the name of a bundled preset")
    ap.add_argument("--out", help="output directory (overrides outputs.dir)")
    ap.add_argument("--mode", choices=("solve", "oracle", "certificate", "sweep"))
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one config entry; repeatable")
    ap.add_argument("--quiet", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda *a: None) if args.quiet else (lambda *a: print(*a, flush=True))
    try:
        cfg = apply_overrides(load_config(args.config), args.set)
        if args.mode:
            cfg.set("mode", args.mode, "--mode: ")
        if args.out:
            cfg.set("outputs.dir", args.out, "--out: ")
        cfg.validate()
        sc = build_scenario(cfg)
        out = Path(cfg["outputs.dir"])
        mode = cfg["mode"]
        if mode == "sweep":
            rows, ok = run_sweep(cfg, quiet=args.quiet)
            out.mkdir(parents=True, exist_ok=True)
            _write(out / "sweep.csv", _csv_text(SWEEP_COLUMNS, rows))
            _write(out / "config.cfg", cfg.dumps())
            say(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
            return EXIT_OK if ok else EXIT_UNCONVERGED
        runner = {"solve": run_solve, "oracle": run_oracle, "certificate": run_certificate}[mode]
        result = runner(cfg, sc)
        emit(result, cfg["outputs.formats"], out)
        if result.extra:
            _write(out / f"{mode}.json", json.dumps(result.extra, indent=2, default=_json_num) + "\n")
        _write(out / "config.cfg", cfg.dumps())
        e = result.energy
        for k in ("primal_value", "grid_energy", "oracle_energy", "certificate_bound"):
            if e[k] is not None:
                say(f"{k}: {e[k]:.8g}")
        if mode == "solve":
            say(f"iterations: {e['iterations']} converged: {e['converged']}")
        if mode == "certificate":
            say(f"max violation: {result.extra['max_violation']:.3g} "
                f"admissible: {result.extra['admissible']}")
        return EXIT_OK if result.ok else EXIT_UNCONVERGED
    except (ConfigurationError, ParameterError, InfeasibleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
