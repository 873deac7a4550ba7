"""Partial balayage of a measure onto a density cap via an obstacle problem.

The deficiency ``w = G_O mu - G_O eta`` solves the linear complementarity
problem

    w >= 0,   L w - (mu - nu) >= 0,   w * (L w - (mu - nu)) = 0,

with ``w = 0`` outside ``O`` and ``L`` the Dirichlet operator of
:mod:`balayage.potential`.  The swept measure is then ``eta = mu - L w``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import GridDomain
from .potential import DirichletLaplacian, MeasureDensity, ScalarField, SolverError, dirichlet_laplacian

log = logging.getLogger(__name__)

OMEGA = 1.7


class BalayageError(ValueError):
    """Inputs violate the preconditions of a balayage solve."""


@dataclass(frozen=True)
class MassReport:
    mu_mass: float
    eta_mass: float
    leakage: float

    def as_dict(self) -> dict[str, float]:
        return {"mu_mass": self.mu_mass, "eta_mass": self.eta_mass, "boundary_leakage": self.leakage}


@dataclass(frozen=True, eq=False)
class BalayageResult:
    eta: MeasureDensity
    deficiency: ScalarField
    saturated_mask: np.ndarray
    mass_report: MassReport
    residual: float
    sweeps: int
    threshold: float
    excess: np.ndarray  # mu - nu as deposited densities

    @property
    def container(self) -> GridDomain:
        return self.deficiency.carrier


@dataclass(frozen=True)
class SaturatedSet:
    mask: np.ndarray
    n_components: int


def complementarity_residual(op: DirichletLaplacian, w: np.ndarray, f: np.ndarray) -> float:
    """``max |min(w, L w - f)|`` over the inside cells."""
    inside = op.domain.inside
    Lw = op.apply_full(w)
    return float(np.abs(np.minimum(w, Lw - f))[inside].max(initial=0.0))


def _neighbour_sum(w: np.ndarray) -> np.ndarray:
    s = np.zeros_like(w)
    for k in range(w.ndim):
        lo = [slice(None)] * w.ndim
        hi = [slice(None)] * w.ndim
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        s[tuple(lo)] += w[tuple(hi)]
        s[tuple(hi)] += w[tuple(lo)]
    return s


def projected_sor(
    op: DirichletLaplacian,
    f: np.ndarray,
    *,
    omega: float = OMEGA,
    tol: float = 1e-8,
    max_sweeps: int = 400_000,
    check_every: int = 50,
    w0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int]:
    """Red-black projected SOR for the complementarity problem ``(L, f)``.

    Each colour is updated simultaneously, so the result does not depend on
    any sweep order within a colour.
    """
    dom = op.domain
    inside = dom.inside
    h2 = dom.h**2
    parity = np.indices(dom.shape).sum(axis=0) % 2
    colours = [inside & (parity == 0), inside & (parity == 1)]
    diag = np.where(inside, op.diag, 1.0)
    w = np.zeros(dom.shape) if w0 is None else np.where(inside, np.maximum(w0, 0.0), 0.0)
    resid = np.inf
    for sweep in range(1, max_sweeps + 1):
        for mask in colours:
            # L w = diag * w - neighbour_sum / h^2 on inside cells
            Lw = diag * w - _neighbour_sum(w) / h2
            upd = np.maximum(w - omega * (Lw - f) / diag, 0.0)
            w = np.where(mask, upd, w)
        if sweep % check_every == 0:
            resid = complementarity_residual(op, w, f)
            if resid <= tol:
                return w, resid, sweep
    raise SolverError("projected SOR did not converge", resid, max_sweeps)


def partial_balayage(
    O: GridDomain,
    mu: MeasureDensity,
    nu: MeasureDensity,
    *,
    tol: float = 1e-8,
    threshold_rel: float = 1e-7,
    omega: float = OMEGA,
    max_sweeps: int = 400_000,
    operator: DirichletLaplacian | None = None,
) -> BalayageResult:
    """Sweep ``mu`` onto the cap ``nu`` inside the container ``O``."""
    if not (mu.carrier.same_grid(O) and nu.carrier.same_grid(O)):
        raise BalayageError("mu and nu must be carried on the grid of O")
    if len(nu.atom_masses):
        raise BalayageError("nu must have a bounded density (no atoms)")
    if len(mu.atom_masses):
        idx = O.cell_index(mu.atom_locations)
        if np.any(~O.inside[tuple(idx.T)]) or np.any(O.sdf[tuple(idx.T)] > -4 * O.h):
            raise BalayageError("atoms of mu must lie at least 4h inside O")
    op = operator or dirichlet_laplacian(O)
    mu_dens = np.where(O.inside, mu.deposited(), 0.0)
    nu_dens = np.where(O.inside, nu.density, 0.0)
    f = mu_dens - nu_dens
    if np.all(f[O.inside] <= 0):
        # obstacle inactive: w = 0 solves the problem exactly
        w, resid, sweeps = np.zeros(O.shape), complementarity_residual(op, np.zeros(O.shape), f), 0
    else:
        w, resid, sweeps = projected_sor(op, f, omega=omega, tol=tol, max_sweeps=max_sweeps)
    log.debug("balayage converged: residual %.3e after %d sweeps", resid, sweeps)
    Lw = op.apply_full(w)
    eta_dens = np.where(O.inside, mu_dens - Lw, 0.0)
    eta = MeasureDensity(O, np.maximum(eta_dens, 0.0))
    cv = O.cell_volume
    mu_mass = float(mu_dens.sum() * cv)
    eta_mass = float(eta_dens.sum() * cv)
    wmax = float(w.max(initial=0.0))
    threshold = threshold_rel * wmax
    mask = (w > threshold) & O.inside if wmax > 0 else np.zeros(O.shape, dtype=bool)
    return BalayageResult(
        eta=eta,
        deficiency=ScalarField(O, w),
        saturated_mask=mask,
        mass_report=MassReport(mu_mass, eta_mass, mu_mass - eta_mass),
        residual=resid,
        sweeps=sweeps,
        threshold=threshold,
        excess=f,
    )


def saturated_set(result: BalayageResult, threshold: float | None = None) -> SaturatedSet:
    """Cells where the deficiency exceeds ``threshold`` (default ``1e-7 max w``)."""
    w = result.deficiency.values
    if threshold is None:
        threshold = 1e-7 * float(w.max(initial=0.0))
    mask = (w > threshold) & result.container.inside
    if not mask.any():
        return SaturatedSet(mask, 0)
    _, n = ndimage.label(mask)
    return SaturatedSet(mask, int(n))


def structure_defects(result: BalayageResult, mu: MeasureDensity, nu: MeasureDensity) -> dict[str, float]:
    """How far ``eta`` is from ``nu`` on S and from ``mu`` on the interior of the complement.

    Cells of ``O \\ S`` whose stencil touches S carry the swept mass and are
    excluded from the second comparison.
    """
    O = result.container
    eta = result.eta.density
    S = result.saturated_mask
    halo = ndimage.binary_dilation(S, structure=ndimage.generate_binary_structure(O.dim, 1))
    free = O.inside & ~halo
    mu_dens = mu.deposited()
    return {
        "on_saturated": float(np.abs(eta - nu.density)[S].max(initial=0.0)),
        "off_saturated": float(np.abs(eta - mu_dens)[free].max(initial=0.0)),
        "above_cap": float((eta - nu.density)[O.inside].max(initial=0.0)),
    }


@dataclass(frozen=True)
class SupportControl:
    b: float
    passed: bool
    tested: tuple[tuple[float, bool], ...]


def support_escapes(
    Omega: GridDomain, tau: MeasureDensity, Omega0: GridDomain, b: float, **kwargs
) -> bool:
    """True when the saturated set of the balayage of ``N m|Omega + b tau`` leaves ``Omega0``."""
    O = tau.carrier
    N = O.dim
    mu = MeasureDensity.uniform(O, N, Omega.inside).plus(tau, b)
    nu = MeasureDensity.uniform(O, N)
    res = partial_balayage(O, mu, nu, **kwargs)
    return bool(np.any(res.saturated_mask & ~Omega0.inside))


def support_control_test(
    Omega: GridDomain,
    tau: MeasureDensity,
    Omega0: GridDomain,
    *,
    b_start: float = 1.0,
    max_halvings: int = 30,
    refine: int = 6,
    **kwargs,
) -> SupportControl:
    """Largest tested ``b <= b_start`` keeping the swept support inside ``Omega0``.

    Halve ``b`` until the support stays inside, then bisect between the last
    failure and the first success.
    """
    O = tau.carrier
    if not (Omega.same_grid(O) and Omega0.same_grid(O)):
        raise BalayageError("Omega, Omega0 and tau must share one grid")
    if np.any(Omega.inside & ~Omega0.inside) or np.any(Omega0.inside & ~O.inside):
        raise BalayageError("need Omega inside Omega0 inside O")
    tested: list[tuple[float, bool]] = []
    b = b_start
    fail_b = None
    for _ in range(max_halvings + 1):
        ok = not support_escapes(Omega, tau, Omega0, b, **kwargs)
        tested.append((b, ok))
        if ok:
            break
        fail_b = b
        b *= 0.5
    else:
        return SupportControl(0.0, False, tuple(tested))
    good = b
    if fail_b is not None:
        lo, hi = good, fail_b
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            ok = not support_escapes(Omega, tau, Omega0, mid, **kwargs)
            tested.append((mid, ok))
            if ok:
                lo = mid
            else:
                hi = mid
        good = lo
    return SupportControl(good, good > 0, tuple(tested))
