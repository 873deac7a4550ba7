"""The built-in verification suite: isoperimetric sandwich, oracles and equality gaps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config import Tolerances
from .geometry import DomainSpec, spec_volume, surface_area
from .lambda1 import compute_lambda1
from .oracles import bounds, oracle_lambda1
from .proof_trace import proof_trace_upper_bound


@dataclass(frozen=True)
class SuiteCase:
    name: str
    spec: DomainSpec
    degree: int
    is_ball: bool
    trace: bool


def default_suite() -> list[SuiteCase]:
    B = DomainSpec.ball
    return [
        SuiteCase("annulus_2d", DomainSpec.annulus(1.0, 2.0, 2), 4, False, True),
        SuiteCase("annulus_3d", DomainSpec.annulus(1.0, 2.0, 3), 3, False, False),
        SuiteCase("ball_2d", B([0.0, 0.0], 1.0), 4, True, True),
        SuiteCase("ball_3d_offcenter", B([0.3, -0.2, 0.1], 1.0), 3, True, False),
        SuiteCase("ellipse", DomainSpec.ellipsoid(coefficients=[2.0, 1.0]), 4, False, True),
        SuiteCase("ellipsoid_112", DomainSpec.ellipsoid(coefficients=[1.0, 1.0, 2.0]), 4, False, False),
        SuiteCase("union_2d", DomainSpec.union_of_balls([B([-0.7, 0.0], 1.0), B([0.7, 0.0], 1.0)]), 12, False, True),
    ]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float  # positive when satisfied


@dataclass(frozen=True)
class SuiteRow:
    name: str
    dim: int
    volume: float
    perimeter: float
    lower: float
    r_omega: float
    lambda1: float
    certificate: float
    trace_bound: float | None
    trace_r_D: float | None
    oracle: float | None
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "N": self.dim,
            "V": self.volume,
            "P": self.perimeter,
            "NV/P": self.lower,
            "r_Omega": self.r_omega,
            "lambda1_direct": self.lambda1,
            "lambda1_certificate": self.certificate,
            "lambda1_trace_bound": self.trace_bound,
            "trace_r_D": self.trace_r_D,
            "lambda1_oracle": self.oracle,
            "equality_gap": equality_gap(self),
            "checks": {c.name: {"pass": c.passed, "margin": c.margin} for c in self.checks},
            "pass": self.passed,
        }


def equality_gap(row: SuiteRow) -> float:
    return row.r_omega - row.lambda1


def _check(name: str, margin: float) -> Check:
    return Check(name, bool(margin >= 0), float(margin))


def run_case(case: SuiteCase, tol: Tolerances, resolution: int, n_transport: int, seed: int) -> SuiteRow:
    spec = case.spec
    V = spec_volume(spec)
    P = surface_area(spec)
    lower, upper = bounds(spec)
    est = compute_lambda1(spec, case.degree, seed=seed)
    lam = est.value
    oracle = oracle_lambda1(spec)
    checks = [
        _check("lower_bound", lam - (lower - tol.verification)),
        _check("upper_bound", upper + tol.verification - lam),
    ]
    if oracle is not None:
        checks.append(_check("oracle", tol.oracle_relative * oracle - abs(lam - oracle)))
    gap = upper - lam
    if case.is_ball:
        checks.append(_check("equality_gap", tol.equality - abs(gap)))
    else:
        checks.append(_check("equality_gap", gap - tol.separation))
    tb = trd = None
    if case.trace:
        tr = proof_trace_upper_bound(spec, resolution, n_transport, seed=seed)
        tb, trd = tr.bound, tr.r_D
        checks.append(_check("trace_saturation", 0.0 if tr.omega_in_saturated else -float(tr.uncovered_cells)))
        checks.append(_check("trace_le_r_D", tr.r_D + tol.trace - tr.bound))
        checks.append(_check("trace_ge_direct", tr.bound - (lam - tol.oracle_relative)))
    return SuiteRow(case.name, spec.dim, V, P, lower, upper, lam, est.certificate, tb, trd, oracle, tuple(checks))


def thread_cap() -> int:
    raw = os.environ.get("BALAYAGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_suite(
    tol: Tolerances | None = None,
    *,
    resolution: int = 96,
    n_transport: int = 2000,
    seed: int = 0,
    cases: list[SuiteCase] | None = None,
) -> list[SuiteRow]:
    tol = tol or Tolerances()
    cases = sorted(cases or default_suite(), key=lambda c: c.name)
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        rows = list(pool.map(lambda c: run_case(c, tol, resolution, n_transport, seed), cases))
    return rows
