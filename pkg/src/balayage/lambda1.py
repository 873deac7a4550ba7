"""Direct estimate of lambda_1 by minimax over harmonic gradients.

With ``u = |x|^2 / 2 - h`` and ``h`` harmonic, ``grad u = x - grad h`` and
``|grad u|`` is subharmonic, so its supremum over the closure is attained on
the boundary.  The estimate minimises the largest boundary residual
``|x_i - sum_j c_j grad h_j(x_i)|`` over the coefficients ``c``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import DomainSpec, boundary_samples
from .harmonic import HarmonicBasis, build_basis
from .transport import sample_uniform

log = logging.getLogger(__name__)

P_SCHEDULE = (2, 4, 8, 16, 32, 64, 128)


class OptimizerError(RuntimeError):
    """A homotopy stage increased its own objective."""

    def __init__(self, message: str, stages):
        super().__init__(message)
        self.stages = stages


@dataclass(frozen=True)
class Stage:
    p: float
    surrogate: float
    true_max: float
    iterations: int


@dataclass(frozen=True, eq=False)
class Lambda1Result:
    value: float
    coefficients: np.ndarray
    points: np.ndarray
    residuals: np.ndarray  # |grad u| at the optimisation samples
    certificate: float
    stages: tuple[Stage, ...]
    labels: tuple[str, ...]
    interior_max: float = float("nan")
    degree: int = 0


class SupObjective:
    """``F(c) = max_i |x_i - G_i c|`` and its p-norm surrogates."""

    def __init__(self, basis: HarmonicBasis, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        self.G = basis.gradients(self.points)  # (n, N, m)

    def residual_vectors(self, c: np.ndarray) -> np.ndarray:
        return self.points - self.G @ c

    def norms(self, c: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.residual_vectors(c), axis=1)

    def __call__(self, c: np.ndarray) -> float:
        return float(self.norms(c).max())

    def surrogate(self, c: np.ndarray, p: float) -> tuple[float, np.ndarray]:
        """``F_p`` and its gradient, scaled by the max residual for stability."""
        r = self.residual_vectors(c)
        nr = np.linalg.norm(r, axis=1)
        M = nr.max()
        if M == 0:
            return 0.0, np.zeros_like(c)
        q = nr / M
        Fp = M * float((q**p).sum()) ** (1.0 / p)
        wts = (nr / Fp) ** (p - 1)
        safe = np.where(nr > 0, nr, 1.0)
        # d|r_i|/dc = -G_i^T r_i / |r_i|
        dn = -np.einsum("ikm,ik->im", self.G, r / safe[:, None])
        return Fp, wts @ dn


def minimize_sup(
    basis: HarmonicBasis,
    points: np.ndarray,
    *,
    certificate_points: np.ndarray | None = None,
    init: np.ndarray | None = None,
    schedule=P_SCHEDULE,
    stage_tol: float = 1e-10,
    max_iter: int = 2000,
) -> Lambda1Result:
    m = basis.size
    if len(points) < 8 * max(m, 1):
        raise ValueError(f"need at least {8 * m} boundary samples for {m} basis functions")
    obj = SupObjective(basis, points)
    c = np.zeros(m) if init is None else np.asarray(init, dtype=float).copy()
    best_c, best = c.copy(), obj(c)
    stages: list[Stage] = []
    prev = np.inf
    for p in schedule:
        if m == 0:
            break
        f0, _ = obj.surrogate(c, p)
        res = minimize(lambda z: obj.surrogate(z, p), c, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-12})
        if not np.all(np.isfinite(res.x)) or res.fun > f0 * (1 + 1e-12):
            raise OptimizerError(f"stage p={p} increased the surrogate", tuple(stages))
        c = res.x
        tm = obj(c)
        if tm < best:
            best, best_c = tm, c.copy()
        stages.append(Stage(float(p), float(res.fun), tm, int(res.nit)))
        if abs(prev - tm) < stage_tol * tm:
            break
        prev = tm
    norms = obj.norms(best_c)
    cert = best
    if certificate_points is not None:
        cert = max(best, SupObjective(basis, certificate_points)(best_c))
    return Lambda1Result(
        value=float(norms.max()),
        coefficients=best_c,
        points=np.asarray(points, dtype=float),
        residuals=norms,
        certificate=float(cert),
        stages=tuple(stages),
        labels=tuple(basis.labels),
        degree=basis.degree,
    )


def default_sample_count(basis: HarmonicBasis, components: int = 1) -> int:
    floor = 256 if basis.dim == 2 else 1024
    return max(floor, int(np.ceil(8 * basis.size / components)) + 1)


def interior_max(spec: DomainSpec, basis: HarmonicBasis, c: np.ndarray, n: int = 2000, seed: int = 0) -> float:
    """Largest ``|grad u|`` over interior Halton samples, for the boundary-max check."""
    pts = sample_uniform(spec, n, seed).points
    return SupObjective(basis, pts)(c)


def embed(coefficients: np.ndarray, from_labels, to_labels) -> np.ndarray:
    """Carry coefficients across bases by matching labels; new terms start at zero."""
    pos = {lab: i for i, lab in enumerate(to_labels)}
    out = np.zeros(len(to_labels))
    for lab, v in zip(from_labels, coefficients):
        if lab in pos:
            out[pos[lab]] = v
    return out


def compute_lambda1(
    spec: DomainSpec,
    degree: int,
    *,
    samples: int | None = None,
    pole_degree: int | None = None,
    init: Lambda1Result | None = None,
    seed: int = 0,
) -> Lambda1Result:
    """Minimax estimate on boundary samples with a 4x denser certificate."""
    basis = build_basis(spec, degree, pole_degree)
    comps = spec.num_boundary_components()
    count = samples or default_sample_count(basis, comps)
    pts, _ = boundary_samples(spec, count)
    dense, _ = boundary_samples(spec, 4 * count)
    c0 = None if init is None else embed(init.coefficients, init.labels, basis.labels)
    res = minimize_sup(basis, pts, certificate_points=dense, init=c0)
    inner = interior_max(spec, basis, res.coefficients, seed=seed)
    log.debug("lambda1 %s degree %d: %.6f (certificate %.6f, interior %.6f)",
              spec.kind, degree, res.value, res.certificate, inner)
    return Lambda1Result(res.value, res.coefficients, res.points, res.residuals, res.certificate,
                         res.stages, res.labels, inner, degree)


def lambda1_sequence(spec: DomainSpec, degrees, **kwargs) -> list[Lambda1Result]:
    """Estimates over increasing degrees, each warm-started from the previous one."""
    out: list[Lambda1Result] = []
    for d in degrees:
        out.append(compute_lambda1(spec, d, init=out[-1] if out else None, **kwargs))
    return out
