"""Command-line entry point.

Every command takes its parameters from defaults, then an optional JSON config
file (``--config``), then flags; flag names are the config keys with ``_``
written as ``-``. Each run writes its outputs and ``<command>.manifest.json``
into ``--out``. Outputs carry the hash of the resolved configuration; the
manifest alone holds a timestamp.

Exit codes: 0 success, 1 numeric or solver failure, 2 validation failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import AssemblyError, BlochHSError, NumericError

EXIT_OK, EXIT_NUMERIC, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2, 64

CELL_DEFAULTS = {
    "cell": "disk", "R": math.sqrt(0.5), "a": 0.5, "axis": 1, "rho1": 0.3, "rho2": 1.0, "m1": 0.0, "m2": 0.4,
    "size": 0.3, "alpha": 1.0, "beta": 2.0, "h": 0.02,
}
LEVEL_DEFAULTS = {"levels": [0.2, 0.1, 0.05], "residual": 0.05, "eps_ratio": 40.0, "grid": 1024}

DEFAULTS = {
    "cell-spectrum": {**CELL_DEFAULTS, "h": 0.04, "eta_max": 0.5, "n_eta": 5, "tol": 1e-10, "format": "csv"},
    "homogenize": {**CELL_DEFAULTS, "route": "all", "format": "json"},
    "dispersion": {**CELL_DEFAULTS, "directions": 16, "oracle": False, "format": "csv"},
    "covering": {"kind": "disk", "eps_max": 0.2, "eps_min": None, "residual": 0.1, "grid": 1024,
                 "domain": [0.0, 0.0, 1.0, 1.0], "axis": 1, "scales": None, "format": "json"},
    "bloch": {"R": math.sqrt(0.5), "alpha": 1.0, "beta": 2.0, "h": 0.1, **LEVEL_DEFAULTS, "xi_radius": 4.0,
              "xi_points": 9, "mode": "exact", "bessel": False, "format": "csv"},
    "dns": {"R": math.sqrt(0.5), "alpha": 1.0, "beta": 2.0, "h": 0.02, **LEVEL_DEFAULTS, "per_eps": 8.0,
            "f": 1.0, "format": "csv"},
    "verify-all": {"fast": False, "only": None, "format": "json"},
}
COMMON = {"seed": 0}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add(p: argparse.ArgumentParser, key: str, default):
    if isinstance(default, bool):
        p.add_argument(_flag(key), dest=key, action="store_const", const=True, default=None)
    elif isinstance(default, list) or key in ("scales", "only"):
        typ = int if key == "only" else float
        p.add_argument(_flag(key), dest=key, type=typ, nargs="+", default=None)
    elif key in ("cell", "kind", "route", "mode", "format"):
        choices = {"cell": ["disk", "laminate", "ellipse", "periodic-disk", "periodic-slab"],
                   "kind": ["disk", "laminate"], "route": ["cell-integral", "hessian", "all"],
                   "mode": ["exact", "taylor1"], "format": ["csv", "json"]}[key]
        p.add_argument(_flag(key), dest=key, choices=choices, default=None)
    elif isinstance(default, int) and not isinstance(default, bool):
        p.add_argument(_flag(key), dest=key, type=int, default=None)
    else:
        p.add_argument(_flag(key), dest=key, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bloch-hs", description="Bloch-wave homogenization experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON file with parameter values")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker cap (sets BLOCH_HS_THREADS)")
        for key, value in {**defaults, **COMMON}.items():
            _add(p, key, value)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[command], **COMMON)
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(doc) - set(cfg)
        if unknown:
            from .errors import ArgumentError
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def _cell_field(cfg: dict):
    from .geometry import CoefficientField, ConfocalEllipse, DiskInclusion, LaminateCell, PeriodicSquare
    kind = cfg.get("cell", "disk")
    if kind == "disk":
        geom = DiskInclusion(float(cfg["R"]))
    elif kind == "laminate":
        geom = LaminateCell(float(cfg["a"]), int(cfg["axis"]))
    elif kind == "ellipse":
        geom = ConfocalEllipse(float(cfg["rho1"]), float(cfg["rho2"]), (float(cfg["m1"]), float(cfg["m2"])))
    elif kind == "periodic-disk":
        geom = PeriodicSquare("disk", float(cfg["size"]))
    else:
        geom = PeriodicSquare("slab", float(cfg["size"]), int(cfg["axis"]))
    return CoefficientField.two_phase(geom, float(cfg["alpha"]), float(cfg["beta"]))


def _forms(field, h):
    from .fem import assemble, default_space
    from .mesh import generate_cell_mesh
    mesh = generate_cell_mesh(field.geometry, h)
    return assemble(field, mesh, default_space(field.geometry, mesh))


def _analytic(field) -> Optional[dict]:
    from .geometry import (ConfocalEllipse, DiskInclusion, LaminateCell, hs_elliptical_rhs, hs_spherical_gamma,
                           laminate_means)
    g = field.geometry
    if not field.isotropic:
        return None
    a, b = field.alpha, field.beta
    if isinstance(g, DiskInclusion):
        gamma = hs_spherical_gamma(a, b, g.theta)
        return {"entries": [gamma, 0.0, 0.0, gamma], "relation": "spherical"}
    if isinstance(g, LaminateCell):
        harm, arith = laminate_means(a, b, g.theta)
        d = [harm, arith] if g.axis == 1 else [arith, harm]
        return {"entries": [d[0], 0.0, 0.0, d[1]], "relation": "laminate"}
    if isinstance(g, ConfocalEllipse):
        return {"sum_relation_rhs": hs_elliptical_rhs(a, b, g.theta), "relation": "elliptical"}
    return None


def _table(rows: list, header: str) -> str:
    import csv
    import io
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], float) else r[k] for k in keys])
    return buf.getvalue()


def cmd_cell_spectrum(cfg, tag):
    from .spectra import sweep_lambda1
    forms = _forms(_cell_field(cfg), float(cfg["h"]))
    r, n = float(cfg["eta_max"]), int(cfg["n_eta"])
    t = np.linspace(-r, r, n)
    grid = np.array([(a, b) for a in t for b in t if math.hypot(a, b) <= r * (1 + 1e-12)])
    table = sweep_lambda1(forms, grid, float(cfg["tol"]), r)
    q = table.lipschitz_quotients()
    summary = {"config_hash": tag, "n_points": len(grid), "max_lipschitz_quotient": float(q.max()) if len(q) else 0.0,
               "max_lambda1": float(table.lambdas.max())}
    if cfg["format"] == "json":
        body = json.dumps(dict(summary, etas=table.etas.tolist(), lambda1=table.lambdas.tolist(),
                               residual=table.residuals.tolist(), iterations=table.iterations.tolist()),
                          sort_keys=True, indent=2)
        return {"cell-spectrum.json": body}, summary
    return {"cell-spectrum.csv": table.to_csv(f"config_hash={tag}")}, summary


def cmd_homogenize(cfg, tag):
    from .homog import homogenized_cell_integral, homogenized_from_hessian, periodic_homogenized, solve_correctors
    field = _cell_field(cfg)
    forms = _forms(field, float(cfg["h"]))
    route = cfg["route"]
    tensors = {}
    if route in ("cell-integral", "all"):
        if forms.space.master is None:
            tensors["PeriodicCell"] = periodic_homogenized(field, forms.mesh).to_dict()
        else:
            tensors["CellIntegral"] = homogenized_cell_integral(solve_correctors(forms, np.eye(2))).to_dict()
    if route in ("hessian", "all"):
        tensors["EigHessian"] = homogenized_from_hessian(forms).to_dict()
    doc = {"config_hash": tag, "cell": field.to_dict(), "h": float(cfg["h"]), "tensors": tensors,
           "analytic": _analytic(field)}
    body = json.dumps(doc, sort_keys=True, indent=2)
    if cfg["format"] == "csv":
        rows = [{"route": k, "m11": v["entries"][0], "m12": v["entries"][1], "m22": v["entries"][3]}
                for k, v in tensors.items()]
        return {"homogenize.csv": _table(rows, f"config_hash={tag}")}, doc
    return {"homogenize.json": body}, doc


def cmd_dispersion(cfg, tag):
    from .dispersion import BurnettSolver, dispersion_csv, fan_directions
    from .spectra import fd_derivatives_lambda1
    forms = _forms(_cell_field(cfg), float(cfg["h"]))
    solver = BurnettSolver(forms)
    n = int(cfg["directions"])
    dirs = fan_directions(n)
    ang = 2 * np.pi * np.arange(n) / n
    d = [solver.state(e).d for e in dirs]
    if cfg["oracle"]:
        q4 = [fd_derivatives_lambda1(forms, e, (0.05, 0.1, 0.15, 0.2)).q4 for e in dirs]
    else:
        q4 = [float("nan")] * n
    summary = {"config_hash": tag, "max_d": float(max(d)), "min_d": float(min(d)),
               "M": solver.M.entries.tolist()}
    if cfg["format"] == "json":
        body = json.dumps(dict(summary, angle=ang.tolist(), d=d, q4=q4), sort_keys=True, indent=2)
        return {"dispersion.json": body}, summary
    return {"dispersion.csv": dispersion_csv(ang, d, q4, f"config_hash={tag}")}, summary


def cmd_covering(cfg, tag):
    from .covering import generate_disk_covering, generate_laminate_covering
    if cfg["kind"] == "disk":
        eps_min = cfg["eps_min"] if cfg["eps_min"] is not None else float(cfg["eps_max"]) / 40.0
        cov = generate_disk_covering(cfg["domain"], float(cfg["eps_max"]), float(eps_min), float(cfg["residual"]),
                                     int(cfg["seed"]), int(cfg["grid"]))
    else:
        scales = cfg["scales"]
        if scales is None:
            from .errors import ArgumentError
            raise ArgumentError("laminate coverings need --scales")
        cov = generate_laminate_covering(cfg["domain"], int(cfg["axis"]), scales, int(cfg["seed"]))
    doc = dict(cov.to_dict(), config_hash=tag)
    summary = {"config_hash": tag, "n_cells": cov.n_cells, "kappa": cov.kappa,
               "residual_fraction": cov.residual_fraction, "target_missed": cov.target_missed}
    if cfg["format"] == "csv":
        rows = [c for c in doc["cells"]]
        return {"covering.csv": _table(rows, f"config_hash={tag}")}, summary
    return {"covering.json": json.dumps(doc, sort_keys=True, indent=2)}, summary


def _levels(cfg):
    from .covering import refinement_levels
    return refinement_levels(tuple(cfg["levels"]), float(cfg["residual"]), float(cfg["eps_ratio"]),
                             int(cfg["grid"]), seed=int(cfg["seed"]))


def cmd_bloch(cfg, tag):
    from .bloch import BlochCell, bessel_check, bloch_transform_first, bump, fourier_limit_check, xi_grid
    from .covering import MicroField
    from .geometry import hs_spherical_gamma
    field = _cell_field(dict(cfg, cell="disk"))
    cell = BlochCell(field, h=float(cfg["h"]))
    gamma = hs_spherical_gamma(field.alpha, field.beta, field.geometry.theta)
    fields = [MicroField(c, field, gamma) for c in _levels(cfg)]
    g = bump()
    xi = xi_grid(float(cfg["xi_radius"]), int(cfg["xi_points"]))
    rows = fourier_limit_check(g, fields, cell, xi, cfg["mode"])
    summary = {"config_hash": tag, "levels": rows}
    if cfg["bessel"]:
        from .acceptance import sine_product
        summary["bessel"] = [bessel_check(sine_product, f, cell)["constant"] for f in fields]
    res = bloch_transform_first(g, fields[-1], cell, xi, cfg["mode"])
    out = {"bloch.json": json.dumps(summary, sort_keys=True, indent=2)}
    if cfg["format"] == "csv":
        out["bloch.csv"] = res.to_csv(f"config_hash={tag}")
    return out, summary


def cmd_dns(cfg, tag):
    from .dns import convergence_study
    from .homog import homogenized_cell_integral, solve_correctors
    field = _cell_field(dict(cfg, cell="disk"))
    M = homogenized_cell_integral(solve_correctors(_forms(field, float(cfg["h"])), np.eye(2)))
    study = convergence_study(field, _levels(cfg), M, float(cfg["f"]), float(cfg["per_eps"]))
    rows = [{k: getattr(r, k) for k in ("kappa", "residual", "l2_err", "flux_err", "strong_flux_err", "dofs")}
            for r in study.rows]
    summary = {"config_hash": tag, "M": M.entries.tolist(), "rows": rows}
    out = {"dns.json": json.dumps(summary, sort_keys=True, indent=2)}
    if cfg["format"] == "csv":
        # wall-clock seconds would break byte-identical reruns; they go to the manifest
        out["dns.csv"] = _table(rows, f"config_hash={tag}")
    return out, dict(summary, seconds=[r.seconds for r in study.rows])


def cmd_verify_all(cfg, tag):
    from .acceptance import Settings, run_all
    settings = Settings.fast() if cfg["fast"] else Settings.full()
    results = run_all(settings, cfg["only"], report=lambda r: print(r.line(), flush=True))
    passed = all(r.passed for r in results)
    doc = {"config_hash": tag, "settings": settings.name, "passed": passed,
           "criteria": [{"number": r.number, "title": r.title, "passed": r.passed, "checks": r.checks,
                         "metrics": r.metrics} for r in results]}
    summary = {"config_hash": tag, "passed": passed, "seconds": [r.seconds for r in results]}
    return {"verify-all.json": json.dumps(doc, sort_keys=True, indent=2, default=float)}, summary


COMMANDS = {
    "cell-spectrum": cmd_cell_spectrum, "homogenize": cmd_homogenize, "dispersion": cmd_dispersion,
    "covering": cmd_covering, "bloch": cmd_bloch, "dns": cmd_dns, "verify-all": cmd_verify_all,
}


def _write(out_dir: Path, files: dict, manifest: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    (out_dir / f"{manifest['command']}.manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, default=float), encoding="utf-8")


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.threads is not None:
        os.environ["BLOCH_HS_THREADS"] = str(max(1, args.threads))
    command = args.command
    try:
        cfg = resolve_config(command, args)
        tag = config_hash(command, cfg)
        t0 = time.time()
        files, summary = COMMANDS[command](cfg, tag)
        manifest = {"command": command, "config": cfg, "config_hash": tag, "outputs": sorted(files),
                    "backend": kernels.BACKEND, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t0)),
                    "elapsed_seconds": time.time() - t0, "summary": summary}
        _write(args.out, files, manifest)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BlochHSError, ValueError, OSError, json.JSONDecodeError) as exc:
        kind = "assembly error" if isinstance(exc, AssemblyError) else "invalid input"
        print(f"{kind}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if command == "homogenize":
        print(json.dumps({k: summary[k] for k in ("config_hash", "tensors", "analytic")}, sort_keys=True))
    elif command != "verify-all":
        shown = {k: v for k, v in summary.items() if k != "levels"}
        if "levels" in summary:
            shown["max_error"] = [row["max_error"] for row in summary["levels"]]
        print(json.dumps(shown, sort_keys=True, default=float))
    if command == "verify-all" and not summary["passed"]:
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
