"""Harmonic function bases with analytic gradients.

Interior terms are centred at the domain centroid and scaled so that the
domain sits inside the unit ball of the scaled variable.  Cavities of a
multiply connected domain each receive a pole with the fundamental solution
and exterior multipoles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainSpec, GeometryError, boundary_samples, cavities, rasterize

MAX_DEGREE = 24


class BasisError(ValueError):
    """Invalid basis request."""


@dataclass(frozen=True)
class Pole:
    location: np.ndarray
    scale: float


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    dim: int
    degree: int
    pole_degree: int
    center: np.ndarray
    scale: float
    poles: tuple[Pole, ...] = field(default=())

    @property
    def labels(self) -> list[str]:
        out = []
        if self.dim == 2:
            for k in range(1, self.degree + 1):
                out += [f"re{k}", f"im{k}"]
            for q in range(len(self.poles)):
                out.append(f"p{q}:log")
                for k in range(1, self.pole_degree + 1):
                    out += [f"p{q}:re{k}", f"p{q}:im{k}"]
        else:
            for l in range(1, self.degree + 1):
                out += [f"y{l}.{j}" for j in range(2 * l + 1)]
            for q in range(len(self.poles)):
                for l in range(self.pole_degree + 1):
                    out += [f"p{q}:y{l}.{j}" for j in range(2 * l + 1)]
        return out

    @property
    def size(self) -> int:
        return len(self.labels)

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n, m)`` and gradients ``(n, N, m)`` at points ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise BasisError("point dimension does not match the basis")
        vals, grads = [], []
        if self.dim == 2:
            _planar_interior(x, self, vals, grads)
            for pole in self.poles:
                _planar_pole(x, pole, self.pole_degree, vals, grads)
        else:
            _solid_interior(x, self, vals, grads)
            for pole in self.poles:
                _solid_pole(x, pole, self.pole_degree, vals, grads)
        if not vals:
            n = len(x)
            return np.zeros((n, 0)), np.zeros((n, self.dim, 0))
        return np.column_stack(vals), np.stack(grads, axis=-1)

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[0]

    def gradients(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[1]


# -- planar ------------------------------------------------------------------


def _complex_pair(f: np.ndarray, df: np.ndarray, vals: list, grads: list) -> None:
    # for analytic f: grad Re f = (Re f', -Im f'), grad Im f = (Im f', Re f')
    vals += [f.real, f.imag]
    grads += [np.column_stack([df.real, -df.imag]), np.column_stack([df.imag, df.real])]


def _planar_interior(x: np.ndarray, b: HarmonicBasis, vals: list, grads: list) -> None:
    z = ((x[:, 0] - b.center[0]) + 1j * (x[:, 1] - b.center[1])) / b.scale
    zk1 = np.ones_like(z)  # z^(k-1)
    for k in range(1, b.degree + 1):
        _complex_pair(zk1 * z, k * zk1 / b.scale, vals, grads)
        zk1 = zk1 * z


def _planar_pole(x: np.ndarray, pole: Pole, degree: int, vals: list, grads: list) -> None:
    d = x - pole.location
    r2 = (d**2).sum(axis=1)
    vals.append(0.5 * np.log(r2 / pole.scale**2))
    grads.append(d / r2[:, None])
    w = (d[:, 0] + 1j * d[:, 1]) / pole.scale
    inv = 1.0 / w
    wk = np.ones_like(w)  # w^(-k)
    for k in range(1, degree + 1):
        wk = wk * inv
        _complex_pair(wk, -k * wk * inv / pole.scale, vals, grads)


# -- spatial -----------------------------------------------------------------


def _plane_wave_directions(l: int) -> list[tuple[np.ndarray, str]]:
    """``2l + 1`` isotropic vectors whose powers span the degree-``l`` harmonics."""
    out = []
    for k in range(l + 1):
        t = np.pi * k / (l + 1)
        out.append((np.array([np.cos(t), np.sin(t), 1j]), "re"))
    for k in range(l):
        t = np.pi * k / l
        out.append((np.array([np.cos(t), np.sin(t), 1j]), "im"))
    return out


def _homogeneous(y: np.ndarray, l: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Degree-``l`` solid harmonics of ``y`` and their gradients."""
    if l == 0:
        n = len(y)
        return [np.ones(n)], [np.zeros((n, 3))]
    fs, gs = [], []
    for a, part in _plane_wave_directions(l):
        s = y @ a
        f = s**l
        g = (l * s ** (l - 1))[:, None] * a[None, :]
        take = np.real if part == "re" else np.imag
        fs.append(take(f))
        gs.append(take(g))
    return fs, gs


def _solid_interior(x: np.ndarray, b: HarmonicBasis, vals: list, grads: list) -> None:
    y = (x - b.center) / b.scale
    for l in range(1, b.degree + 1):
        fs, gs = _homogeneous(y, l)
        vals += fs
        grads += [g / b.scale for g in gs]


def _solid_pole(x: np.ndarray, pole: Pole, degree: int, vals: list, grads: list) -> None:
    # Kelvin transform: f(y) |y|^(-2l-1) is harmonic away from y = 0
    y = (x - pole.location) / pole.scale
    r2 = (y**2).sum(axis=1)
    for l in range(degree + 1):
        fs, gs = _homogeneous(y, l)
        wgt = r2 ** (-(2 * l + 1) / 2)
        dw = -(2 * l + 1) * r2 ** (-(2 * l + 3) / 2)
        for f, g in zip(fs, gs):
            vals.append(f * wgt)
            grads.append((g * wgt[:, None] + (f * dw)[:, None] * y) / pole.scale)


# -- construction ------------------------------------------------------------


def find_poles(spec: DomainSpec, resolution: int = 64) -> list[np.ndarray]:
    """One pole per bounded complementary component of ``spec``."""
    if spec.kind == "annulus":
        return [np.asarray(spec.center, dtype=float)]
    if spec.kind == "union_of_balls":
        return cavities(rasterize(spec, resolution))
    return []


def build_basis(spec: DomainSpec, degree: int, pole_degree: int | None = None) -> HarmonicBasis:
    if not 2 <= degree <= MAX_DEGREE:
        raise BasisError(f"degree must lie in [2, {MAX_DEGREE}]")
    if spec.dim not in (2, 3):
        raise BasisError("bases are provided for N = 2 and N = 3")
    pole_degree = degree if pole_degree is None else pole_degree
    if not 0 <= pole_degree <= MAX_DEGREE:
        raise BasisError(f"pole degree must lie in [0, {MAX_DEGREE}]")
    center = spec.centroid()
    pts, _ = boundary_samples(spec, 512 if spec.dim == 2 else 2048)
    scale = float(np.linalg.norm(pts - center, axis=1).max())
    poles = []
    for p in find_poles(spec):
        if spec.contains(p[None, :])[0]:
            raise GeometryError("pole lies inside the domain")
        dist = float(np.abs(spec.signed_distance(p[None, :]))[0])
        poles.append(Pole(np.asarray(p, dtype=float), dist))
    return HarmonicBasis(spec.dim, degree, pole_degree, center, scale, tuple(poles))


def laplacian_defect(basis: HarmonicBasis, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Fourth-order finite-difference Laplacian of each basis function at ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f0 = basis.values(x)
    lap = np.zeros_like(f0)
    for k in range(basis.dim):
        e = np.zeros(basis.dim)
        e[k] = step
        fp1, fm1 = basis.values(x + e), basis.values(x - e)
        fp2, fm2 = basis.values(x + 2 * e), basis.values(x - 2 * e)
        lap += (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * step**2)
    return lap
