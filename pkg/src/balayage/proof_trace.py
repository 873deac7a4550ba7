"""Numerical replay of the transport and balayage construction of an upper bound.

Steps: dilate Omega to D with a small volume excess; transport D onto the ball
of equal volume; take the max-affine extension ``w`` of the Brenier potential
and mollify it; set ``O = {w_eps < C}`` and ``mu = Laplacian w_eps``; sweep
``mu`` onto ``N m|_O``.  On the saturated set the swept potential ``G_O eta``
has Laplacian ``-N``, so ``-G_O eta`` is a competitor for lambda_1 and the
largest ``|grad G_O eta|`` over Omega bounds it from above.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .balayage import partial_balayage
from .geometry import (
    DomainSpec,
    GeometryError,
    GridDomain,
    boundary_samples,
    equivalent_radius,
    grid_for_box,
    grid_volume,
    spec_volume,
    surface_area,
    unit_ball_volume,
)
from .potential import MeasureDensity, ScalarField, gradient_at, mollify, solve_dirichlet_poisson
from .transport import brenier_diagnostics, extend_convex, sample_ball, sample_uniform, solve_assignment

log = logging.getLogger(__name__)

DILATION_FRACTION = 0.5


# -- cap ratio ---------------------------------------------------------------


def cap_ratio_quadrature(dim: int) -> float:
    """``m({y in B(0,1): y_N >= 1/2}) / m(B(0,1))`` by slice integration."""
    slice_area = unit_ball_volume(dim - 1)
    val, _ = integrate.quad(lambda t: slice_area * (1 - t * t) ** ((dim - 1) / 2), 0.5, 1.0, epsabs=0, epsrel=1e-13)
    return val / unit_ball_volume(dim)


def cap_ratio_closed_form(dim: int) -> float:
    """Same ratio through the regularised incomplete beta function."""
    return 0.5 * float(special.betainc((dim + 1) / 2, 0.5, 0.75))


# -- dilation ----------------------------------------------------------------


@dataclass(frozen=True)
class DilatedDomain:
    """``{x : dist_signed(x, Omega) < delta}``."""

    base: DomainSpec
    delta: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.base.signed_distance(np.atleast_2d(x)) < self.delta

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        return self.base.signed_distance(np.atleast_2d(x)) - self.delta

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.base.bounding_box()
        return np.asarray(lo) - self.delta, np.asarray(hi) + self.delta


def dilated_volume(spec: DomainSpec, delta: float, resolution: int | None = None) -> float:
    """Volume of the ``delta``-neighbourhood of ``spec``."""
    N = spec.dim
    if spec.kind == "ball":
        return unit_ball_volume(N) * (spec.radii[0] + delta) ** N
    if spec.kind == "annulus":
        r, R = spec.radii
        return unit_ball_volume(N) * ((R + delta) ** N - max(r - delta, 0.0) ** N)
    if spec.kind == "ellipsoid" and N == 2:
        # Steiner formula for a convex planar body
        return spec_volume(spec) + surface_area(spec) * delta + math.pi * delta**2
    region = DilatedDomain(spec, delta)
    lo, hi = region.bounding_box()
    res = resolution or (512 if N == 2 else 128)
    origin, h, shape = grid_for_box(lo, hi, res)
    centers = GridDomain.box(origin, h, shape).cell_centers()
    level = region.signed_distance(centers.reshape(-1, N)).reshape(shape)
    return grid_volume(GridDomain(origin, h, level < 0, level))


def choose_dilation(spec: DomainSpec, fraction: float = DILATION_FRACTION) -> tuple[float, float]:
    """Largest ``delta`` with ``m(D \\ Omega) <= fraction * b_N * m(Omega)``; returns ``(delta, m(D))``."""
    V = spec_volume(spec)
    budget = fraction * cap_ratio_quadrature(spec.dim) * V
    lo, hi = spec.bounding_box()
    upper = float(np.max(np.asarray(hi) - np.asarray(lo)))
    f = lambda d: dilated_volume(spec, d) - V - budget  # noqa: E731
    delta = optimize.brentq(f, 1e-9, upper, xtol=1e-12)
    return delta, dilated_volume(spec, delta)


# -- pipeline ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceReport:
    bound: float
    r_D: float
    r_Omega: float
    delta: float
    epsilon: float
    level_C: float
    omega_in_saturated: bool
    uncovered_cells: int
    short_circuit: bool
    residual: float
    trace_median: float
    grid_h: float
    fields: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "bound": self.bound,
            "r_D": self.r_D,
            "r_Omega": self.r_Omega,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "level_C": self.level_C,
            "omega_in_saturated": self.omega_in_saturated,
            "uncovered_cells": self.uncovered_cells,
            "short_circuit": self.short_circuit,
            "complementarity_residual": self.residual,
            "trace_median": self.trace_median,
            "grid_h": self.grid_h,
        }


def _five_point_laplacian(v: np.ndarray, h: float) -> np.ndarray:
    """Laplacian on interior cells; the outermost layer is left at zero."""
    out = np.zeros_like(v)
    core = tuple(slice(1, -1) for _ in range(v.ndim))
    acc = -2 * v.ndim * v[core]
    for k in range(v.ndim):
        for s in (-1, 1):
            sl = [slice(1, -1)] * v.ndim
            sl[k] = slice(1 + s, v.shape[k] - 1 + s)
            acc = acc + v[tuple(sl)]
    out[core] = acc / h**2
    return out


def proof_trace_upper_bound(
    spec: DomainSpec,
    resolution: int = 96,
    n_transport: int = 2000,
    *,
    seed: int = 0,
    fraction: float = DILATION_FRACTION,
    box_margin: float = 0.3,
    tol: float = 1e-8,
) -> TraceReport:
    N = spec.dim
    if n_transport > 5000:
        raise GeometryError("n_transport must not exceed 5000")
    V = spec_volume(spec)
    r_Omega = equivalent_radius(V, N)
    delta, VD = choose_dilation(spec, fraction)
    r_D = equivalent_radius(VD, N)
    D = DilatedDomain(spec, delta)

    if spec.kind == "ball":
        # the Brenier map of a ball onto a concentric ball is a dilation, Laplacian v = N
        return TraceReport(r_D, r_D, r_Omega, delta, 0.0, math.nan, True, 0, True, 0.0, float(N), 0.0)

    src = sample_uniform(D, n_transport, seed)
    tgt = sample_ball(N, r_D, n_transport, seed + 1)
    t = solve_assignment(src, tgt)
    interior = spec.signed_distance(src.points) < 0
    diag = brenier_diagnostics(t, r_D, interior=interior, seed=seed)
    if abs(diag.trace_median - N) < 0.03:
        return TraceReport(r_D, r_D, r_Omega, delta, 0.0, math.nan, True, 0, True, 0.0, diag.trace_median, 0.0)

    # grid over a box around D
    lo, hi = D.bounding_box()
    ext = float(np.max(np.asarray(hi) - np.asarray(lo)))
    origin, h, shape = grid_for_box(np.asarray(lo) - box_margin * ext, np.asarray(hi) + box_margin * ext, resolution)
    box = GridDomain.box(origin, h, shape)
    centers = box.cell_centers().reshape(-1, N)
    w = extend_convex(t, centers).reshape(shape)

    # R = {dist < delta / 2}, so dist(closure Omega, complement of R) = delta / 2
    sd = spec.signed_distance(centers).reshape(shape)
    in_R = sd < 0.5 * delta
    eps = max(0.25 * delta, 2 * h)
    w_eps = mollify(ScalarField(box, w), eps).values
    sup_R = float(w_eps[in_R].max())
    rim = np.zeros(shape, dtype=bool)
    for k in range(N):
        sl = [slice(None)] * N
        sl[k] = [0, 1, 2, 3, -4, -3, -2, -1]
        rim[tuple(sl)] = True
    floor_rim = float(w_eps[rim].min())
    if floor_rim <= sup_R:
        raise GeometryError("grid box too small to contain a sublevel set above R")
    C = sup_R + 0.5 * (floor_rim - sup_R)

    O = GridDomain.from_level(origin, h, w_eps - C)
    mu = MeasureDensity(O, np.where(O.inside, np.maximum(_five_point_laplacian(w_eps, h), 0.0), 0.0))
    nu = MeasureDensity.uniform(O, N)
    res = partial_balayage(O, mu, nu, tol=tol)
    G_eta = solve_dirichlet_poisson(O, res.eta)

    omega_cells = (sd < 0) & O.inside
    uncovered = int((omega_cells & ~res.saturated_mask).sum())
    bpts, _ = boundary_samples(spec, 4 * resolution if N == 2 else 2 * resolution**2)
    grads = gradient_at(G_eta, bpts)
    bound = float(np.linalg.norm(grads, axis=1).max())
    log.debug("proof trace: bound %.5f r_D %.5f eps %.4f h %.4f", bound, r_D, eps, h)
    return TraceReport(
        bound=bound,
        r_D=r_D,
        r_Omega=r_Omega,
        delta=delta,
        epsilon=eps,
        level_C=C,
        omega_in_saturated=uncovered == 0,
        uncovered_cells=uncovered,
        short_circuit=False,
        residual=res.residual,
        trace_median=diag.trace_median,
        grid_h=h,
        fields={"w_eps": ScalarField(box, w_eps), "eta": res.eta, "deficiency": res.deficiency,
                "saturated": res.saturated_mask, "G_eta": G_eta},
    )
