"""Command line entry point.

    balayage <command> --config <path> [--out <dir>] [--seed <u64>]

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid configuration or
geometry, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .balayage import BalayageError, partial_balayage, saturated_set, structure_defects
from .config import ConfigError, RunConfig, load_config
from .geometry import GeometryError, equivalent_radius, rasterize, spec_volume
from .harmonic import BasisError
from .lambda1 import OptimizerError, compute_lambda1
from .oracles import bounds, oracle_lambda1, oracle_record
from .potential import MeasureDensity, SolverError, write_field
from .proof_trace import proof_trace_upper_bound
from .transport import TransportError, brenier_diagnostics, sample_ball, sample_uniform, solve_assignment
from .verification import run_suite

log = logging.getLogger("balayage")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
COMMANDS = ("lambda1", "balayage", "brenier", "proof-trace", "oracle", "verify")


class CheckFailed(Exception):
    def __init__(self, check: str, margin: float, message: str = ""):
        super().__init__(message or check)
        self.check = check
        self.margin = margin


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _flat(prefix: str, obj, out: dict) -> dict:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flat(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], (dict, list, tuple)):
        return out
    else:
        out[prefix] = obj
    return out


def _write_kv_csv(path: Path, report: dict) -> None:
    flat = _flat("", report, {})
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["key", "value"])
        for k, v in flat.items():
            wr.writerow([k, json.dumps(v) if isinstance(v, (list, tuple)) else v])


def _first_failure(checks: dict[str, dict]) -> None:
    for name, c in checks.items():
        if not c["pass"]:
            raise CheckFailed(name, c["margin"])


def _check(margin: float) -> dict:
    return {"pass": bool(margin >= 0), "margin": float(margin)}


def _need_domain(cfg: RunConfig):
    if cfg.domain is None:
        raise ConfigError("this command needs a domain")
    return cfg.domain


# -- commands ----------------------------------------------------------------


def cmd_lambda1(cfg: RunConfig, out: Path) -> dict:
    spec = _need_domain(cfg)
    res = compute_lambda1(spec, cfg.degree, samples=cfg.boundary_samples, pole_degree=cfg.pole_degree, seed=cfg.seed)
    tol = cfg.tolerances
    lower, upper = bounds(spec)
    oracle = oracle_lambda1(spec)
    with (out / "residuals.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{k}" for k in range(spec.dim)] + ["residual"])
        for p, r in zip(res.points, res.residuals):
            wr.writerow([*map(repr, p.tolist()), repr(float(r))])
    checks = {"upper_bound": _check(upper + tol.verification - res.value)}
    if lower is not None:
        checks["lower_bound"] = _check(res.value - lower + tol.verification)
    if oracle is not None:
        checks["oracle"] = _check(tol.oracle_relative * oracle - abs(res.value - oracle))
    checks["certificate_stability"] = _check(0.01 * res.value - (res.certificate - res.value))
    return {
        "command": "lambda1",
        "seed": cfg.seed,
        "value": res.value,
        "certificate": res.certificate,
        "interior_max": res.interior_max,
        "degree": res.degree,
        "coefficients": dict(zip(res.labels, res.coefficients.tolist())),
        "residual_csv_path": "residuals.csv",
        "stages": [{"p": s.p, "surrogate": s.surrogate, "true_max": s.true_max} for s in res.stages],
        "oracle": oracle,
        "bounds": {"lower": lower, "upper": upper},
        "checks": checks,
    }


def cmd_balayage(cfg: RunConfig, out: Path) -> dict:
    spec = _need_domain(cfg)
    setup = cfg.balayage
    O = rasterize(spec, cfg.resolution)
    N = spec.dim
    region = None if setup.density_region is None else setup.density_region.contains(O.cell_centers())
    mu = MeasureDensity.uniform(O, setup.density, region)
    if setup.atoms:
        mu = mu.plus(MeasureDensity.atoms(O, [a.location for a in setup.atoms], [a.mass for a in setup.atoms]))
    nu_val = float(N) if setup.nu is None else setup.nu
    nu = MeasureDensity.uniform(O, nu_val)
    res = partial_balayage(O, mu, nu, tol=cfg.tolerances.complementarity)
    sat = saturated_set(res)
    defects = structure_defects(res, mu, nu)
    write_field(out / "eta.gfd", res.eta.density, O)
    write_field(out / "deficiency.gfd", res.deficiency)
    write_field(out / "saturated.gfd", sat.mask.astype(float), O)
    checks = {"complementarity": _check(cfg.tolerances.complementarity - res.residual)}
    cap_excess = defects["above_cap"]
    if cap_excess > cfg.tolerances.complementarity:
        # logged rather than failed: the cap bound is only asserted for measures dominating nu
        log.warning("eta exceeds nu by %.3g", cap_excess)
    return {
        "command": "balayage",
        "seed": cfg.seed,
        "mass": res.mass_report.as_dict(),
        "residual": res.residual,
        "sweeps": res.sweeps,
        "threshold": res.threshold,
        "saturated_cells": int(sat.mask.sum()),
        "saturated_components": sat.n_components,
        "structure": defects,
        "grid": {"origin": O.origin.tolist(), "h": O.h, "shape": list(O.shape)},
        "checks": checks,
    }


def cmd_brenier(cfg: RunConfig, out: Path) -> dict:
    spec = _need_domain(cfg)
    n = cfg.n_transport
    r_D = equivalent_radius(spec_volume(spec), spec.dim)
    src = sample_uniform(spec, n, cfg.seed)
    tgt = sample_ball(spec.dim, r_D, n, cfg.seed + 1)
    t = solve_assignment(src, tgt)
    interior = spec.signed_distance(src.points) < 0
    diag = brenier_diagnostics(t, r_D, interior=interior, seed=cfg.seed) if n >= 50 else None
    N = spec.dim
    with (out / "assignment.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["source", "target"] + [f"x{k}" for k in range(N)] + [f"y{k}" for k in range(N)])
        for i, j in enumerate(t.assignment):
            wr.writerow([i, int(j), *map(repr, src.points[i].tolist()), *map(repr, tgt.points[j].tolist())])
    checks = {}
    if diag is not None:
        checks["range"] = _check(r_D * (1 + 1e-12) - diag.max_target_norm)
        checks["monotonicity"] = _check(-float(diag.monotonicity_violations))
        checks["dual_feasibility"] = _check(1e-9 - diag.dual_gap)
    return {
        "command": "brenier",
        "seed": cfg.seed,
        "n": n,
        "r_D": r_D,
        "cost": t.cost,
        "diagnostics": None if diag is None else diag.as_dict(),
        "checks": checks,
    }


def cmd_proof_trace(cfg: RunConfig, out: Path) -> dict:
    spec = _need_domain(cfg)
    tr = proof_trace_upper_bound(spec, cfg.resolution, cfg.n_transport, seed=cfg.seed,
                                 tol=cfg.tolerances.complementarity)
    for name in ("w_eps", "deficiency", "G_eta"):
        if name in tr.fields:
            write_field(out / f"{name}.gfd", tr.fields[name])
    if "eta" in tr.fields:
        write_field(out / "eta.gfd", tr.fields["eta"].density, tr.fields["eta"].carrier)
    checks = {
        "omega_in_saturated": _check(0.0 if tr.omega_in_saturated else -float(tr.uncovered_cells)),
        "bound_le_r_D": _check(tr.r_D + cfg.tolerances.trace - tr.bound),
    }
    return {"command": "proof-trace", "seed": cfg.seed, **tr.as_dict(), "checks": checks}


def cmd_oracle(cfg: RunConfig, out: Path) -> dict:
    rec = oracle_record(_need_domain(cfg))
    print(json.dumps(rec.as_dict()))
    return {"command": "oracle", "seed": cfg.seed, **rec.as_dict(), "checks": {}}


def cmd_verify(cfg: RunConfig, out: Path) -> dict:
    rows = run_suite(cfg.tolerances, resolution=cfg.resolution, n_transport=cfg.n_transport, seed=cfg.seed)
    table = [r.as_dict() for r in rows]
    cols = ["name", "N", "V", "P", "NV/P", "r_Omega", "lambda1_direct", "lambda1_trace_bound",
            "lambda1_oracle", "equality_gap", "pass"]
    with (out / "suite.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in table:
            wr.writerow([row[c] for c in cols])
    checks = {}
    for row in table:
        for name, c in row["checks"].items():
            checks[f"{row['name']}.{name}"] = c
    return {
        "command": "verify",
        "seed": cfg.seed,
        "rows": table,
        "summary": {"cases": len(table), "passed": sum(r["pass"] for r in table)},
        "checks": checks,
    }


HANDLERS = {
    "lambda1": cmd_lambda1,
    "balayage": cmd_balayage,
    "brenier": cmd_brenier,
    "proof-trace": cmd_proof_trace,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="balayage", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="seed (overrides the config)")
    ap.add_argument("--suite", action="store_true", help="run the built-in suite (verify only)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(out: Path | None, code: int, check: str, margin: float | None, message: str) -> int:
    reason = {"status": "fail", "exit_code": code, "check": check, "margin": margin, "message": message}
    print(json.dumps(reason), file=sys.stderr)
    if out is not None and out.is_dir():
        _dump_json(out / "reason.json", reason)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out: Path | None = None
    try:
        if args.command == "verify" and not args.suite:
            raise ConfigError("verify requires --suite")
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "verify":
            cfg = RunConfig()
        else:
            raise ConfigError(f"{args.command} requires --config")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out)
        out = Path(cfg.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "config.echo.json", cfg.as_dict())
        report = HANDLERS[args.command](cfg, out)
        _dump_json(out / "report.json", report)
        _write_kv_csv(out / "report.csv", {k: v for k, v in report.items() if k != "rows"})
        _first_failure(report.get("checks", {}))
    except CheckFailed as exc:
        return _fail(out, EXIT_CHECK, exc.check, exc.margin, str(exc))
    except (ConfigError, GeometryError, BasisError, TransportError, BalayageError) as exc:
        return _fail(out, EXIT_CONFIG, type(exc).__name__, None, str(exc))
    except SolverError as exc:
        return _fail(out, EXIT_SOLVER, "convergence", exc.residual, str(exc))
    except OptimizerError as exc:
        return _fail(out, EXIT_SOLVER, "optimizer", None, str(exc))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
