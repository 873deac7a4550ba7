"""Checks of the boundary conditions characterising minimisers of lambda_1.

A minimiser has constant ``|grad u|`` on the boundary (necessary); when in
addition ``grad u . n >= 0`` there it is a minimiser (sufficient), and a
convex minimiser maps the domain onto the ball of radius lambda_1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DomainSpec, boundary_samples
from .oracles import AnalyticField
from .potential import ScalarField, gradient_at
from .transport import sample_uniform


class NotACandidate(ValueError):
    """The field does not satisfy ``Laplacian u = N``."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ConditionReport:
    boundary_norm_mean: float
    boundary_norm_rel_std: float
    min_normal_derivative: float
    coverage: float
    laplacian_residual: float
    constant_norm: bool
    normal_sign_ok: bool
    is_minimizer: bool
    converse_counterexample: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _analytic_laplacian(u: AnalyticField, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    dim = x.shape[1]
    f0 = u.u(x)
    lap = np.zeros(len(x))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        lap += (-u.u(x + 2 * e) + 16 * u.u(x + e) - 30 * f0 + 16 * u.u(x - e) - u.u(x - 2 * e)) / (12 * step**2)
    return lap


def _grid_laplacian(field: ScalarField) -> np.ndarray:
    """Five-point Laplacian on inside cells whose whole stencil is inside."""
    dom = field.carrier
    v = field.values
    ok = dom.inside.copy()
    lap = -2 * dom.dim * v
    for k in range(dom.dim):
        for s in (1, -1):
            lap = lap + np.roll(v, s, axis=k)
            ok &= np.roll(dom.inside, s, axis=k)
        edge = [slice(None)] * dom.dim
        edge[k] = [0, -1]
        ok[tuple(edge)] = False
    return (lap / dom.h**2)[ok]


def coverage(images: np.ndarray, radius: float, grid_points: int = 4000) -> float:
    """Fraction of a uniform grid in ``B(0, radius)`` within twice the image spacing."""
    dim = images.shape[1]
    per_axis = int(np.ceil((grid_points / (np.pi if dim == 2 else 4.19) * 2**dim) ** (1 / dim)))
    ax = np.linspace(-radius, radius, per_axis)
    g = np.stack(np.meshgrid(*[ax] * dim, indexing="ij"), -1).reshape(-1, dim)
    g = g[np.linalg.norm(g, axis=1) <= radius]
    tree = cKDTree(images)
    spacing = float(tree.query(images, k=2)[0][:, 1].mean())
    d, _ = tree.query(g)
    return float(np.mean(d <= 2 * spacing))


def check_minimizer_conditions(
    spec: DomainSpec,
    u: AnalyticField | ScalarField,
    lambda1: float,
    *,
    samples: int | None = None,
    interior: int = 20_000,
    delta: float = 0.05,
    laplacian_tol: float = 1e-6,
    value_tol: float = 1e-2,
    seed: int = 0,
) -> ConditionReport:
    """Necessary, sufficient and surjectivity diagnostics for a candidate ``u``.

    ``lambda1`` is the reference value (oracle or direct estimate) that a
    minimiser's boundary norm must match within ``value_tol``.
    """
    N = spec.dim
    count = samples or (256 if N == 2 else 1024)
    pts, normals = boundary_samples(spec, count)
    inner = sample_uniform(spec, interior, seed).points
    if isinstance(u, ScalarField):
        lap = _grid_laplacian(u)
        grad_b = gradient_at(u, pts)
        grad_i = gradient_at(u, inner)
        rel_tol = 1e-3
    else:
        away = spec.signed_distance(inner) < -1e-2
        lap = _analytic_laplacian(u, inner[away][:2000])
        grad_b = u.grad(pts)
        grad_i = u.grad(inner)
        rel_tol = 1e-10
    resid = float(np.abs(lap - N).max()) if len(lap) else 0.0
    if resid > laplacian_tol:
        raise NotACandidate(f"Laplacian residual {resid:.3g} exceeds {laplacian_tol:.3g}", resid)
    norms = np.linalg.norm(grad_b, axis=1)
    mean = float(norms.mean())
    rel_std = float(norms.std() / mean) if mean > 0 else float("inf")
    dn = float((grad_b * normals).sum(axis=1).min())
    constant = rel_std <= rel_tol
    cov = coverage(grad_i, lambda1 * (1 - delta))
    matches = abs(norms.max() - lambda1) <= value_tol * max(lambda1, 1.0)
    return ConditionReport(
        boundary_norm_mean=mean,
        boundary_norm_rel_std=rel_std,
        min_normal_derivative=dn,
        coverage=cov,
        laplacian_residual=resid,
        constant_norm=constant,
        normal_sign_ok=dn > 0,
        is_minimizer=bool(matches and constant),
        converse_counterexample=bool(constant and norms.max() > lambda1 * (1 + value_tol)),
    )
