"""Config-driven runner: ``cone-spectra run | validate | catalog``."""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Optional

import numpy as np
import scipy

from . import __version__
from .exponents import ExponentError, check_bounds, exponents_from_mu, lp_report, radial_lq_report, radial_residual
from .geometry import FAMILIES, EuclideanFactor, GeometryError, ProductOfSpheres, RoundLink, build_cone, cone_spec_from_dict
from .hardy import build_cover, h12_norm, hardy_report
from .mesh import ExhaustionSchedule, RadialGrid
from .operators import (
    Conformal,
    DimShiftedConformal,
    Jacobi,
    OperatorError,
    ShiftedOperator,
    cross_section,
    kind_from_dict,
    kind_to_dict,
    log_bump,
)
from .skin import ray_cloud, skin_axiom_report, skin_closed_form, skin_numeric, tube_interior
from .spectral import principal_eigen_link, weighted_principal_eigenvalue

__all__ = ["SchemaError", "validate_config", "run_config", "emit", "dumps", "main", "CSV_COLUMNS", "ANALYSES"]

log = logging.getLogger("cone_spectra")

ANALYSES = ("skin", "spectrum", "exponents", "bounds", "hardy", "cover", "lp", "residual")
CSV_COLUMNS = ["cone", "family", "p", "q", "m", "n", "kind", "lambda", "w", "mu", "alpha_plus", "alpha_minus", "k_direct", "k_cover", "all_bounds_pass"]

DEFAULTS = {
    "w": 1.0,
    "lambda": 0.0,
    "mesh": {"N": 4000, "radial_N": 8000, "windows": [5.0, 10.0, 20.0], "eps0": 1e-2, "eps_terms": 6},
    "cloud": {"samples": 2000, "r_min": 0.1, "r_max": 10.0},
    "cover": {"xi": 0.05, "samples": 4000},
    "lp": {"p": [1.0, 1.3], "q": [1.2]},
    "residual": {"annulus": [0.5, 2.0], "resolutions": [200, 400, 800]},
    "norms": {"tests": 8},
    "seed": 0,
    "output": {"format": "json"},
}
TOP_KEYS = {"cone", "cones", "operator", "lambda", "w", "mesh", "cloud", "cover", "lp", "residual", "norms", "analyses", "seed", "output"}

EXIT_OK, EXIT_SCHEMA, EXIT_ANALYSIS, EXIT_VERDICT = 0, 1, 2, 3


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ----------------------------------------------------------------- schema


def _number(value, path, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(path, "must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise SchemaError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise SchemaError(path, f"must be <= {hi}, got {value}")
    return value


def _number_list(value, path, **kw):
    if not isinstance(value, list) or not value:
        raise SchemaError(path, "expected a nonempty list")
    return [_number(v, f"{path}[{i}]", **kw) for i, v in enumerate(value)]


def _section(doc, key, allowed):
    merged = copy.deepcopy(DEFAULTS[key])
    given = doc.get(key, {})
    if not isinstance(given, dict):
        raise SchemaError(key, "expected an object")
    for k in given:
        if k not in allowed:
            raise SchemaError(f"{key}.{k}", "unknown field")
    merged.update(given)
    return merged


def validate_config(doc) -> dict:
    """Check a run document and return it normalized with defaults filled in."""
    if not isinstance(doc, dict):
        raise SchemaError("$", "config must be a JSON object")
    for k in doc:
        if k not in TOP_KEYS:
            raise SchemaError(k, "unknown field")
    if ("cone" in doc) == ("cones" in doc):
        raise SchemaError("cone", "give exactly one of 'cone' or 'cones'")
    if "cone" in doc:
        specs = [(doc["cone"], "cone")]
    else:
        if not isinstance(doc["cones"], list) or not doc["cones"]:
            raise SchemaError("cones", "expected a nonempty list")
        specs = [(c, f"cones[{i}]") for i, c in enumerate(doc["cones"])]
    cones = []
    for spec_doc, path in specs:
        try:
            spec = cone_spec_from_dict(spec_doc, path)
            build_cone(spec)
        except GeometryError as exc:
            msg = str(exc)
            raise SchemaError(msg.split(":")[0] if msg.startswith(path) else path, msg.split(": ", 1)[-1]) from None
        cones.append(spec.to_dict())

    if "operator" not in doc:
        raise SchemaError("operator", "missing field")
    try:
        kind = kind_from_dict(doc["operator"])
    except OperatorError as exc:
        path, _, msg = str(exc).partition(": ")
        raise SchemaError(path, msg) from None
    for spec_doc in cones:
        model = build_cone(cone_spec_from_dict(spec_doc))
        if isinstance(kind, DimShiftedConformal) and kind.n_shift < model.n:
            raise SchemaError("operator.n_shift", f"must be >= cone dimension {model.n}")

    lam = doc.get("lambda", DEFAULTS["lambda"])
    lam_grid = _number_list(lam, "lambda", lo=0.0) if isinstance(lam, list) else [_number(lam, "lambda", lo=0.0)]
    w = _number(doc.get("w", DEFAULTS["w"]), "w", lo=0.0, lo_open=True)

    mesh = _section(doc, "mesh", DEFAULTS["mesh"].keys())
    _number(mesh["N"], "mesh.N", lo=16, hi=100_000, integer=True)
    _number(mesh["radial_N"], "mesh.radial_N", lo=16, hi=100_000, integer=True)
    windows = _number_list(mesh["windows"], "mesh.windows", lo=0.0, lo_open=True)
    if windows != sorted(windows) or len(set(windows)) != len(windows):
        raise SchemaError("mesh.windows", "must be strictly increasing")
    _number(mesh["eps0"], "mesh.eps0", lo=0.0, lo_open=True, hi=math.pi / 8)
    _number(mesh["eps_terms"], "mesh.eps_terms", lo=1, hi=20, integer=True)

    cloud = _section(doc, "cloud", DEFAULTS["cloud"].keys())
    _number(cloud["samples"], "cloud.samples", lo=2, hi=200_000, integer=True)
    _number(cloud["r_min"], "cloud.r_min", lo=0.0, lo_open=True)
    _number(cloud["r_max"], "cloud.r_max", lo=0.0, lo_open=True)
    if not cloud["r_min"] < cloud["r_max"]:
        raise SchemaError("cloud.r_max", "must exceed cloud.r_min")

    cover = _section(doc, "cover", DEFAULTS["cover"].keys())
    _number(cover["xi"], "cover.xi", lo=0.0, lo_open=True, hi=1.0)
    _number(cover["samples"], "cover.samples", lo=2, hi=200_000, integer=True)

    lp = _section(doc, "lp", DEFAULTS["lp"].keys())
    _number_list(lp["p"], "lp.p", lo=0.0, lo_open=True)
    _number_list(lp["q"], "lp.q", lo=0.0, lo_open=True)

    residual = _section(doc, "residual", DEFAULTS["residual"].keys())
    ann = _number_list(residual["annulus"], "residual.annulus", lo=0.0, lo_open=True)
    if len(ann) != 2 or not ann[0] < ann[1]:
        raise SchemaError("residual.annulus", "expected [r_lo, r_hi] with 0 < r_lo < r_hi")
    _number_list(residual["resolutions"], "residual.resolutions", lo=16, hi=100_000, integer=True)

    norms = _section(doc, "norms", DEFAULTS["norms"].keys())
    _number(norms["tests"], "norms.tests", lo=0, hi=10_000, integer=True)

    analyses = doc.get("analyses")
    if not isinstance(analyses, list) or not analyses:
        raise SchemaError("analyses", "expected a nonempty list")
    for i, a in enumerate(analyses):
        if a not in ANALYSES:
            raise SchemaError(f"analyses[{i}]", f"unknown analysis {a!r}; known: {', '.join(ANALYSES)}")
    seed = _number(doc.get("seed", DEFAULTS["seed"]), "seed", lo=0, integer=True)

    output = _section(doc, "output", {"format", "path"})
    if output["format"] not in ("json", "csv"):
        raise SchemaError("output.format", f"expected 'json' or 'csv', got {output['format']!r}")
    if "path" in output and not isinstance(output["path"], str):
        raise SchemaError("output.path", "expected a string")

    return {
        "cones": cones,
        "operator": kind_to_dict(kind),
        "lambda": lam_grid,
        "w": w,
        "mesh": mesh,
        "cloud": cloud,
        "cover": cover,
        "lp": lp,
        "residual": residual,
        "norms": norms,
        "analyses": [a for a in ANALYSES if a in analyses],
        "seed": seed,
        "output": output,
    }


# ----------------------------------------------------------------- analyses


def _skin_block(model, skin, cfg):
    cloud_cfg = cfg["cloud"]
    cloud = ray_cloud(model, cloud_cfg["r_min"], cloud_cfg["r_max"], cloud_cfg["samples"])
    numeric = skin_numeric(cloud, cfg["w"])
    closed = skin.eval(cloud.positions)
    r = np.linalg.norm(cloud.positions, axis=1)
    mask = tube_interior(model, r, cloud_cfg["r_min"], cfg["w"])
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(closed[mask] > 0, np.abs(numeric.values[mask] - closed[mask]) / np.where(closed[mask] > 0, closed[mask], 1.0), np.abs(numeric.values[mask]))
    return {
        "s_hat": skin.s_hat,
        "lipschitz_bound": skin.lipschitz_bound,
        "closed_form": skin_axiom_report(skin, cloud).to_dict(),
        "numeric": skin_axiom_report(numeric, cloud).to_dict(),
        "numeric_max_relative_error": float(np.max(rel)) if rel.size else 0.0,
        "interior_samples": int(mask.sum()),
        "saturated": int(numeric.saturated.sum()),
    }


def _norm_block(model, skin, kind, lambda_s, cfg, rng):
    """Random log-bump tests of ``int f L f >= lambda^s int s^2 f^2`` and the norm equivalence."""
    S = cfg["mesh"]["windows"][-1]
    grid = RadialGrid.window(S, min(cfg["mesh"]["radial_N"], 4000))
    worst_adapted, worst_equiv, passed = math.inf, math.inf, True
    for _ in range(cfg["norms"]["tests"]):
        width = rng.uniform(0.5, S * 0.9)
        center = rng.uniform(-S + width, S - width)
        f = log_bump(grid.s, center, width) * (1 + 0.3 * np.sin(rng.uniform(0.5, 4) * grid.s))
        check = h12_norm(f, model, skin, grid, lambda_s, kind)
        worst_adapted = min(worst_adapted, check.form / check.skin_weighted - lambda_s)
        worst_equiv = min(worst_equiv, check.beta_star * check.form / check.h12 - 1.0)
        passed = passed and check.adapted_ok and check.equivalence_ok
    return {"tests": cfg["norms"]["tests"], "min_quotient_margin": worst_adapted, "min_equivalence_margin": worst_equiv, "passed": passed}


def _bound_kind(kind) -> bool:
    return isinstance(kind, (Conformal, DimShiftedConformal, Jacobi))


def run_cell(args) -> dict:
    """All requested analyses for one (cone, lambda) pair; failures are recorded per block."""
    spec_doc, lam, cfg = args
    spec = cone_spec_from_dict(spec_doc)
    model = build_cone(spec)
    kind = kind_from_dict(cfg["operator"])
    requested = set(cfg["analyses"])
    need = set(requested)
    if need & {"exponents", "bounds", "lp", "residual"}:
        need.add("spectrum")
    if "hardy" in need:
        need.add("cover")
    rng = np.random.default_rng([cfg["seed"], cfg["cones"].index(spec_doc), cfg["lambda"].index(lam)])
    cell: dict[str, Any] = {
        "cone": spec.label,
        "spec": spec.to_dict(),
        "n": model.n,
        "minimizing": model.minimizing,
        "kind": kind.name,
        "lambda": lam,
        "w": cfg["w"],
        "blocks": {},
        "verdicts": [],
        "errors": [],
    }
    blocks = cell["blocks"]
    state: dict[str, Any] = {}

    def attempt(name, fn):
        try:
            blocks[name] = fn()
        except Exception as exc:  # analysis errors are collected per block
            blocks[name] = {"error": f"{type(exc).__name__}: {exc}"}
            cell["errors"].append(name)
            log.info("%s %s: %s", spec.label, name, exc)

    skin = skin_closed_form(model, cfg["w"])
    if "skin" in need:
        attempt("skin", lambda: _skin_block(model, skin, cfg))

    if "spectrum" in need:

        def spectrum():
            xop = cross_section(ShiftedOperator(kind, lam, skin), model)
            schedule = ExhaustionSchedule.geometric(cfg["mesh"]["eps0"], cfg["mesh"]["eps_terms"])
            result = principal_eigen_link(xop, cfg["mesh"]["N"], schedule)
            state["result"] = result
            out = result.to_dict()
            if model.homogeneous and not isinstance(spec, RoundLink):
                est = weighted_principal_eigenvalue(ShiftedOperator(kind, 0.0, skin), model, cfg["mesh"]["windows"], cfg["mesh"]["radial_N"])
                state["lambda_s"] = est.extrapolated
                out["weighted_eigenvalue"] = est.to_dict()
                out["adapted"] = bool(lam < est.extrapolated)
                if est.extrapolated > 0 and cfg["norms"]["tests"]:
                    out["norm_equivalence"] = _norm_block(model, skin, kind, est.extrapolated, cfg, rng)
            return out

        attempt("spectrum", spectrum)

    result = state.get("result")
    if "exponents" in need or "bounds" in need or "residual" in need or "lp" in need:
        if result is not None:
            try:
                state["pair"] = exponents_from_mu(result.mu_limit, model.n)
            except ExponentError as exc:
                blocks["exponents"] = {"error": f"ExponentError: {exc}"}
                cell["errors"].append("exponents")
    pair = state.get("pair")
    if "exponents" in requested and pair is not None:
        blocks["exponents"] = dict(pair.to_dict(), vieta_error=pair.vieta_error())

    if "bounds" in requested and result is not None and pair is not None:

        def bounds():
            if not _bound_kind(kind):
                return {"skipped": f"no bounds registered for {kind.name}"}
            tol = 0.0 if result.homogeneous else 1e-6
            report = check_bounds(kind, model.n, model.n, lam, result, pair, tol=tol)
            for rec in report.records:
                cell["verdicts"].append({"cone": spec.label, "lambda": lam, "name": rec.name, "satisfied": rec.satisfied, "margin": rec.margin})
            return report.to_dict()

        attempt("bounds", bounds)

    if "cover" in need:

        def cover_block():
            if not model.homogeneous or isinstance(spec, RoundLink):
                raise ValueError(f"{spec.label}: cover pipeline needs a homogeneous singular link")
            cloud_cfg = cfg["cloud"]
            cloud = ray_cloud(model, cloud_cfg["r_min"], cloud_cfg["r_max"], cfg["cover"]["samples"], spacing="geometric")
            cover = build_cover(cloud, skin.eval(cloud.positions), cfg["cover"]["xi"], skin.lipschitz_bound)
            state["cover"] = cover
            return cover.to_dict()

        attempt("cover", cover_block)

    if "hardy" in requested and "cover" in state:

        def hardy():
            report = hardy_report(model, skin, state["cover"], cfg["cloud"]["r_max"], cfg["mesh"]["windows"], cfg["mesh"]["radial_N"])
            state["hardy"] = report
            cell["verdicts"].append({"cone": spec.label, "lambda": lam, "name": "hardy.k_cover_positive", "satisfied": report.k_cover > 0, "margin": report.k_cover})
            cell["verdicts"].append(
                {"cone": spec.label, "lambda": lam, "name": "hardy.k_cover_le_k_direct", "satisfied": report.ordered, "margin": report.k_direct + 1e-6 - report.k_cover}
            )
            return report.to_dict()

        attempt("hardy", hardy)

    if "lp" in requested and result is not None:

        def lp():
            out = {"link": lp_report(result, model, cfg["lp"]["p"]).to_dict()}
            if pair is not None:
                out["radial"] = radial_lq_report(pair, result, model, cfg["lp"]["q"]).to_dict()
            return out

        attempt("lp", lp)

    if "residual" in requested and result is not None and pair is not None:
        attempt("residual", lambda: radial_residual(pair, result, tuple(cfg["residual"]["annulus"]), cfg["residual"]["resolutions"]).to_dict())

    cell["row"] = _row(spec, model, kind, lam, cfg["w"], result, pair, state.get("hardy"), blocks.get("bounds"))
    return cell


def _row(spec, model, kind, lam, w, result, pair, hardy, bounds) -> dict:
    p = q = m = None
    base = spec
    if isinstance(spec, EuclideanFactor):
        m = model.factor_m
        base = model.base
    if isinstance(base, ProductOfSpheres):
        p, q = base.p, base.q
    all_pass = None
    if isinstance(bounds, dict) and "all_satisfied" in bounds:
        all_pass = bounds["all_satisfied"]
    return {
        "cone": spec.label,
        "family": spec.family,
        "p": p,
        "q": q,
        "m": m,
        "n": model.n,
        "kind": kind.name,
        "lambda": lam,
        "w": w,
        "mu": result.mu_limit if result is not None else None,
        "alpha_plus": pair.alpha_plus if pair is not None else None,
        "alpha_minus": pair.alpha_minus if pair is not None else None,
        "k_direct": hardy.k_direct if hardy is not None else None,
        "k_cover": hardy.k_cover if hardy is not None else None,
        "all_bounds_pass": all_pass,
    }


def run_config(document, jobs: Optional[int] = None, timing: bool = False) -> dict:
    """Validate and execute a run document; returns the report."""
    cfg = validate_config(document)
    start = time.perf_counter()
    tasks = [(spec, lam, cfg) for spec in cfg["cones"] for lam in cfg["lambda"]]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            cells = list(pool.map(run_cell, tasks))
    else:
        cells = [run_cell(t) for t in tasks]
    verdicts = [v for c in cells for v in c["verdicts"]]
    report = {
        "provenance": {
            "config": cfg,
            "versions": {"cone_spectra": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
            "wall_time": (time.perf_counter() - start) if timing else None,
        },
        "cells": cells,
        "rows": [c.pop("row") for c in cells],
        "verdicts": verdicts,
        "summary": {
            "cells": len(cells),
            "errors": sum(len(c["errors"]) for c in cells),
            "verdicts": len(verdicts),
            "verdicts_failed": sum(1 for v in verdicts if not v["satisfied"]),
        },
    }
    return report


# ----------------------------------------------------------------- output


def _encode(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.append(format(x, ".17g") if math.isfinite(x) else json.dumps(str(x)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)) + ": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report) -> str:
    """JSON with every float written to 17 significant digits (non-finite values as strings)."""
    out: list = []
    _encode(report, out)
    return "".join(out) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def to_csv(report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.get("rows", []):
        writer.writerow([_csv_cell(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit(report, fmt: str = "json", path: Optional[str] = None) -> str:
    text = dumps(report) if fmt == "json" else to_csv(report)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def catalog_text() -> str:
    lines = ["families:"]
    for name, desc in FAMILIES.items():
        lines.append(f"  {name}: {desc}")
    lines.append("registry (product_of_spheres, p <= q):")
    for total in range(2, 11):
        for p in range(1, total // 2 + 1):
            spec = ProductOfSpheres(p, total - p)
            lines.append(f"  {spec.label:<10} n={spec.n:<3} minimizing={str(spec.minimizing).lower()}")
    lines.append("euclidean_factor: minimizing iff inner is; nesting depth <= 2; round_link inner rejected")
    lines.append("round_link: always minimizing (flat); skin identically zero")
    return "\n".join(lines) + "\n"


def _load(path: str):
    with open(path) as fh:
        return json.load(fh)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cone-spectra", description="Spectral and Hardy analysis on explicit minimal cones.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a run document")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output path (default: stdout or output.path)")
    run.add_argument("--format", choices=("json", "csv"), default=None)
    run.add_argument("--jobs", type=int, default=None, help="parallel sweep width (default: logical cores)")
    run.add_argument("--strict-verdicts", action="store_true", help="exit 3 when any verdict fails")
    run.add_argument("--timing", action="store_true", help="record wall time in the provenance block")
    val = sub.add_parser("validate", help="schema check only")
    val.add_argument("--config", required=True)
    sub.add_parser("catalog", help="list known families and registry flags")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "catalog":
        sys.stdout.write(catalog_text())
        return EXIT_OK
    try:
        document = _load(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        cfg = validate_config(document)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if args.command == "validate":
        print("ok")
        return EXIT_OK
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_SCHEMA
    report = run_config(document, jobs=args.jobs, timing=args.timing)
    fmt = args.format or cfg["output"]["format"]
    path = args.out or cfg["output"].get("path")
    try:
        emit(report, fmt, path)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    if report["summary"]["errors"]:
        return EXIT_ANALYSIS
    if args.strict_verdicts and report["summary"]["verdicts_failed"]:
        return EXIT_VERDICT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
