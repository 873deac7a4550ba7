"""Closed-form values of lambda_1, minimisers and the isoperimetric bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import DomainSpec, GeometryError, equivalent_radius, spec_volume, surface_area


@dataclass(frozen=True)
class AnalyticField:
    """``u`` and its gradient as closures over ``(n, N)`` point arrays."""

    name: str
    u: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    laplacian: float


@dataclass(frozen=True)
class OracleRecord:
    spec: DomainSpec
    lambda1: float | None
    lower_bound: float | None
    upper_bound: float
    minimizer: AnalyticField | None
    provenance: str | None = None

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "lambda1": self.lambda1,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "minimizer": None if self.minimizer is None else self.minimizer.name,
            "provenance": self.provenance,
        }


def oracle_lambda1(spec: DomainSpec) -> float | None:
    N = spec.dim
    if spec.kind == "ball":
        return float(spec.radii[0])
    if spec.kind == "ellipsoid":
        return float(N / spec.coefficients.sum())
    if spec.kind == "annulus":
        r, R = spec.radii
        if N == 2:
            return float(R - r)
        return float((R**N - r**N) / (R ** (N - 1) + r ** (N - 1)))
    return None


def oracle_provenance(spec: DomainSpec) -> str | None:
    if spec.kind == "annulus" and spec.dim == 2:
        return "derived: planar analogue with the logarithmic term"
    return None


def annulus_constant(r: float, R: float, dim: int) -> float:
    """Coefficient ``K`` of the singular term in the annulus minimiser."""
    if dim == 2:
        return R * r
    return (R + r) / ((dim - 2) * (R ** (1 - dim) + r ** (1 - dim)))


def oracle_minimizer(spec: DomainSpec) -> AnalyticField | None:
    N = spec.dim
    c0 = np.asarray(spec.center, dtype=float)
    if spec.kind == "ball":
        return AnalyticField(
            "half_square_norm",
            lambda x: 0.5 * ((x - c0) ** 2).sum(axis=1),
            lambda x: x - c0,
            float(N),
        )
    if spec.kind == "ellipsoid":
        a = spec.coefficients
        k = N / (2 * a.sum())
        return AnalyticField(
            "ellipsoid_quadratic",
            lambda x: k * ((x - c0) ** 2 * a).sum(axis=1),
            lambda x: 2 * k * (x - c0) * a,
            float(N),
        )
    if spec.kind == "annulus":
        r, R = spec.radii
        K = annulus_constant(r, R, N)
        if N == 2:
            return AnalyticField(
                "annulus_log",
                lambda x: 0.5 * ((x - c0) ** 2).sum(axis=1) - 0.5 * K * np.log(((x - c0) ** 2).sum(axis=1)),
                lambda x: (x - c0) * (1 - K / ((x - c0) ** 2).sum(axis=1))[:, None],
                2.0,
            )
        return AnalyticField(
            "annulus_singular",
            lambda x: 0.5 * ((x - c0) ** 2).sum(axis=1) + K * np.linalg.norm(x - c0, axis=1) ** (2 - N),
            lambda x: (x - c0) * (1 - (N - 2) * K * np.linalg.norm(x - c0, axis=1) ** (-N))[:, None],
            float(N),
        )
    return None


def counterexample_field(dim: int = 3) -> AnalyticField:
    """Quadratic with constant gradient norm on the unit sphere that is not a minimiser."""
    if dim < 3:
        raise ValueError("needs N >= 3")
    k = dim / (2 * (dim - 2))
    sign = np.ones(dim)
    sign[-1] = -1.0
    return AnalyticField(
        "constant_norm_counterexample",
        lambda x: k * (x**2 * sign).sum(axis=1),
        lambda x: 2 * k * x * sign,
        float(dim),
    )


def bounds(spec: DomainSpec) -> tuple[float | None, float]:
    """``(N V / P, r_Omega)``; the lower bound is absent when ``P`` is unavailable."""
    V = spec_volume(spec)
    upper = equivalent_radius(V, spec.dim)
    try:
        P = surface_area(spec)
    except GeometryError:
        return None, upper
    return spec.dim * V / P, upper


def planar_analytic_content_bounds(spec: DomainSpec) -> tuple[float, float]:
    if spec.dim != 2:
        raise GeometryError("planar bounds need N = 2")
    A = spec_volume(spec)
    P = surface_area(spec)
    return 2 * A / P, float(np.sqrt(A / np.pi))


def oracle_record(spec: DomainSpec) -> OracleRecord:
    lo, hi = bounds(spec)
    return OracleRecord(spec, oracle_lambda1(spec), lo, hi, oracle_minimizer(spec), oracle_provenance(spec))
