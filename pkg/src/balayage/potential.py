"""Grid fields, Dirichlet Poisson solves, gradients and mollification.

The discrete operator ``L ~ -Laplacian`` is the star stencil on inside
cells.  Where a stencil arm leaves the domain, the zero Dirichlet value is
imposed at the boundary crossing ``theta * h`` along that arm (``theta``
from linear interpolation of the signed distance), using the symmetric
one-sided form ``u_i / (theta h^2)``.  The matrix stays symmetric positive
definite and the solution is second-order accurate in the max norm.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .geometry import GridDomain

THETA_MIN = 1e-3


class SolverError(RuntimeError):
    """An iterative solve hit its iteration cap."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class ScalarField:
    carrier: GridDomain
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != self.carrier.shape:
            raise ValueError("field shape does not match its carrier grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field must be finite")


@dataclass(frozen=True, eq=False)
class VectorField:
    carrier: GridDomain
    values: np.ndarray  # shape + (dim,)

    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=-1)


@dataclass(frozen=True, eq=False)
class MeasureDensity:
    """Nonnegative density per cell plus optional point atoms."""

    carrier: GridDomain
    density: np.ndarray
    atom_locations: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    atom_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if self.density.shape != self.carrier.shape:
            raise ValueError("density shape does not match its carrier grid")
        if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
            raise ValueError("density must be finite and nonnegative")
        object.__setattr__(self, "atom_masses", np.asarray(self.atom_masses, dtype=float).reshape(-1))
        if not len(self.atom_masses):
            object.__setattr__(self, "atom_locations", np.zeros((0, self.carrier.dim)))
        else:
            locs = np.atleast_2d(np.asarray(self.atom_locations, dtype=float))
            object.__setattr__(self, "atom_locations", locs)
            if locs.shape != (len(self.atom_masses), self.carrier.dim):
                raise ValueError("atom locations must be (n_atoms, dim)")
            if np.any(self.atom_masses <= 0):
                raise ValueError("atom masses must be positive")
            idx = self.carrier.cell_index(locs)
            if not np.all(self.carrier.inside[tuple(idx.T)]):
                raise ValueError("atoms must lie inside the carrier")

    @classmethod
    def uniform(cls, carrier: GridDomain, value: float, where: np.ndarray | None = None) -> "MeasureDensity":
        mask = carrier.inside if where is None else where & carrier.inside
        return cls(carrier, np.where(mask, float(value), 0.0))

    @classmethod
    def atoms(cls, carrier: GridDomain, locations, masses) -> "MeasureDensity":
        locs = np.atleast_2d(np.asarray(locations, dtype=float))
        return cls(carrier, np.zeros(carrier.shape), locs, np.asarray(masses, dtype=float).reshape(-1))

    def plus(self, other: "MeasureDensity", scale: float = 1.0) -> "MeasureDensity":
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        locs = np.concatenate([self.atom_locations, other.atom_locations])
        masses = np.concatenate([self.atom_masses, scale * other.atom_masses])
        keep = masses > 0
        return MeasureDensity(self.carrier, self.density + scale * other.density, locs[keep], masses[keep])

    def deposited(self) -> np.ndarray:
        """Density with every atom spread over its host cell."""
        out = self.density.astype(float).copy()
        if len(self.atom_masses):
            idx = self.carrier.cell_index(np.atleast_2d(self.atom_locations))
            np.add.at(out, tuple(idx.T), self.atom_masses / self.carrier.cell_volume)
        return out

    def total_mass(self) -> float:
        return float(self.density.sum() * self.carrier.cell_volume + self.atom_masses.sum())


# -- operator ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirichletLaplacian:
    """``-Laplacian`` on the inside cells of a grid domain, zero outside."""

    domain: GridDomain
    diag: np.ndarray  # full grid shape, 0 outside
    index: np.ndarray  # full grid shape, -1 outside
    matrix: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def gather(self, full: np.ndarray) -> np.ndarray:
        return full[self.domain.inside]

    def scatter(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.domain.shape)
        out[self.domain.inside] = vec
        return out

    def apply_full(self, w: np.ndarray) -> np.ndarray:
        """``L w`` on the full grid for a field that vanishes outside."""
        return self.scatter(self.matrix @ self.gather(w))


def _crossing_fraction(d_in: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = d_in / (d_in - d_out)
    theta = np.where(np.isfinite(theta), theta, 1.0)
    return np.clip(theta, THETA_MIN, 1.0)


def dirichlet_laplacian(domain: GridDomain) -> DirichletLaplacian:
    inside = domain.inside
    dim = domain.dim
    h2 = domain.h**2
    n = int(inside.sum())
    index = -np.ones(domain.shape, dtype=np.int64)
    index[inside] = np.arange(n)
    diag = np.zeros(domain.shape)
    rows, cols = [], []
    sdf = domain.sdf
    for k in range(dim):
        for step in (1, -1):
            nb_inside = np.zeros_like(inside)
            nb_sdf = np.full(domain.shape, np.inf)
            src = [slice(None)] * dim
            dst = [slice(None)] * dim
            if step == 1:
                src[k], dst[k] = slice(1, None), slice(0, -1)
            else:
                src[k], dst[k] = slice(0, -1), slice(1, None)
            nb_inside[tuple(dst)] = inside[tuple(src)]
            nb_sdf[tuple(dst)] = sdf[tuple(src)]
            interior = inside & nb_inside
            diag[interior] += 1.0 / h2
            i_idx = index[interior]
            nb_index = -np.ones(domain.shape, dtype=np.int64)
            nb_index[tuple(dst)] = index[tuple(src)]
            rows.append(i_idx)
            cols.append(nb_index[interior])
            edge = inside & ~nb_inside
            theta = _crossing_fraction(sdf[edge], nb_sdf[edge])
            diag[edge] += 1.0 / (theta * h2)
    rows_a = np.concatenate(rows + [np.arange(n)])
    cols_a = np.concatenate(cols + [np.arange(n)])
    off = np.full(sum(len(r) for r in rows), -1.0 / h2)
    vals = np.concatenate([off, diag[inside]])
    mat = sp.csr_matrix((vals, (rows_a, cols_a)), shape=(n, n))
    return DirichletLaplacian(domain, diag, index, mat)


def pcg(matrix, rhs: np.ndarray, diag: np.ndarray, *, rtol: float = 1e-10, maxiter: int = 1000, x0=None):
    """Conjugate gradients with a diagonal (Jacobi) preconditioner."""
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = spla.cg(matrix, rhs, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter,
                      M=sp.diags(1.0 / diag), callback=tick)
    if info != 0:
        resid = float(np.linalg.norm(rhs - matrix @ x)) / bnorm
        raise SolverError("conjugate gradient did not converge", resid, count[0])
    return x, count[0]


def solve_dirichlet_poisson(
    O: GridDomain, rhs: MeasureDensity, *, rtol: float = 1e-10, operator: DirichletLaplacian | None = None
) -> ScalarField:
    """Green potential ``G_O rhs``: ``L w = rhs`` inside ``O``, ``w = 0`` outside.

    Atoms are deposited on their host cell with density ``mass / h^N``.
    """
    if not rhs.carrier.same_grid(O):
        raise ValueError("rhs must be carried on the grid of O")
    if len(rhs.atom_masses):
        locs = np.atleast_2d(rhs.atom_locations)
        idx = O.cell_index(locs)
        if np.any(O.sdf[tuple(idx.T)] > -2 * O.h):
            raise ValueError("atoms must lie at least 2h inside O")
    op = operator or dirichlet_laplacian(O)
    b = op.gather(rhs.deposited())
    maxiter = 50 * max(O.shape)
    x, _ = pcg(op.matrix, b, op.diag[O.inside], rtol=rtol, maxiter=maxiter)
    return ScalarField(O, op.scatter(x))


# -- gradients --------------------------------------------------------------


def gradient(field: ScalarField) -> VectorField:
    """Grid gradient: central differences, one-sided second order near the boundary."""
    f = field.values
    inside = field.carrier.inside
    h = field.carrier.h
    dim = f.ndim
    out = np.zeros(f.shape + (dim,))

    def shifted(a: np.ndarray, k: int, s: int, fill) -> np.ndarray:
        res = np.full(a.shape, fill, dtype=a.dtype)
        src = [slice(None)] * dim
        dst = [slice(None)] * dim
        if s > 0:
            src[k], dst[k] = slice(s, None), slice(0, -s)
        else:
            src[k], dst[k] = slice(0, s), slice(-s, None)
        res[tuple(dst)] = a[tuple(src)]
        return res

    for k in range(dim):
        fp1, fm1 = shifted(f, k, 1, 0.0), shifted(f, k, -1, 0.0)
        fp2, fm2 = shifted(f, k, 2, 0.0), shifted(f, k, -2, 0.0)
        ip1, im1 = shifted(inside, k, 1, False), shifted(inside, k, -1, False)
        ip2, im2 = shifted(inside, k, 2, False), shifted(inside, k, -2, False)
        g = np.zeros(f.shape)
        central = ip1 & im1
        fwd2 = ~central & ip1 & ip2
        bwd2 = ~central & ~fwd2 & im1 & im2
        fwd1 = ~central & ~fwd2 & ~bwd2 & ip1
        bwd1 = ~central & ~fwd2 & ~bwd2 & ~fwd1 & im1
        g = np.where(central, (fp1 - fm1) / (2 * h), g)
        g = np.where(fwd2, (-3 * f + 4 * fp1 - fp2) / (2 * h), g)
        g = np.where(bwd2, (3 * f - 4 * fm1 + fm2) / (2 * h), g)
        g = np.where(fwd1, (fp1 - f) / h, g)
        g = np.where(bwd1, (f - fm1) / h, g)
        out[..., k] = np.where(inside, g, 0.0)
    return VectorField(field.carrier, out)


def _quadratic_design(local: np.ndarray) -> np.ndarray:
    dim = local.shape[1]
    cols = [np.ones(len(local))] + [local[:, k] for k in range(dim)]
    for i in range(dim):
        for j in range(i, dim):
            cols.append(local[:, i] * local[:, j])
    return np.column_stack(cols)


def gradient_at(field: ScalarField, points: np.ndarray, radius: int = 2) -> np.ndarray:
    """Gradient at arbitrary points by a local quadratic least-squares fit.

    The fit uses the carrier's inside cells in a ``(2 radius + 1)^N`` block
    around the nearest inside cell, so it extrapolates one-sidedly at
    boundary points.
    """
    dom = field.carrier
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = dom.dim
    inside_idx = np.argwhere(dom.inside)
    centers_inside = dom.origin + (inside_idx + 0.5) * dom.h
    from scipy.spatial import cKDTree

    tree = cKDTree(centers_inside)
    _, nearest = tree.query(points)
    offsets = np.stack(np.meshgrid(*[np.arange(-radius, radius + 1)] * dim, indexing="ij"), -1).reshape(-1, dim)
    shape = np.asarray(dom.shape)
    out = np.zeros((len(points), dim))
    nparams = 1 + dim + dim * (dim + 1) // 2
    for p, (pt, ni) in enumerate(zip(points, nearest)):
        cells = inside_idx[ni] + offsets
        ok = np.all((cells >= 0) & (cells < shape), axis=1)
        cells = cells[ok]
        cells = cells[dom.inside[tuple(cells.T)]]
        if len(cells) < nparams:
            raise ValueError(f"too few inside cells to fit a gradient at {pt}")
        local = (dom.origin + (cells + 0.5) * dom.h - pt) / dom.h
        A = _quadratic_design(local)
        coef, *_ = np.linalg.lstsq(A, field.values[tuple(cells.T)], rcond=None)
        out[p] = coef[1 : 1 + dim] / dom.h
    return out


def value_at(field: ScalarField, points: np.ndarray, radius: int = 2) -> np.ndarray:
    """Field value at points from the same local quadratic fit."""
    dom = field.carrier
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = dom.dim
    idx = dom.cell_index(points)
    offsets = np.stack(np.meshgrid(*[np.arange(-radius, radius + 1)] * dim, indexing="ij"), -1).reshape(-1, dim)
    shape = np.asarray(dom.shape)
    out = np.zeros(len(points))
    for p, (pt, c) in enumerate(zip(points, idx)):
        cells = c + offsets
        cells = cells[np.all((cells >= 0) & (cells < shape), axis=1)]
        cells = cells[dom.inside[tuple(cells.T)]]
        local = (dom.origin + (cells + 0.5) * dom.h - pt) / dom.h
        coef, *_ = np.linalg.lstsq(_quadratic_design(local), field.values[tuple(cells.T)], rcond=None)
        out[p] = coef[0]
    return out


# -- mollification ----------------------------------------------------------


def bump_kernel(epsilon: float, h: float, dim: int) -> np.ndarray:
    """``exp(-1/(1-|x/eps|^2))`` sampled at cell offsets, unit mass on the grid."""
    m = int(math.floor(epsilon / h))
    ax = np.arange(-m, m + 1) * h
    grids = np.meshgrid(*[ax] * dim, indexing="ij")
    q = sum(g * g for g in grids) / epsilon**2
    with np.errstate(divide="ignore", over="ignore"):
        k = np.where(q < 1.0, np.exp(-1.0 / (1.0 - np.minimum(q, 1 - 1e-300))), 0.0)
    return k / (k.sum() * h**dim)


def mollify(item: MeasureDensity | ScalarField, epsilon: float):
    """Convolve with the compactly supported bump kernel of radius ``epsilon``."""
    dom = item.carrier
    if epsilon < 2 * dom.h * (1 - 1e-12):
        raise ValueError(f"epsilon {epsilon:.4g} < 2h = {2 * dom.h:.4g}: kernel unresolved")
    kern = bump_kernel(epsilon, dom.h, dom.dim) * dom.cell_volume
    if isinstance(item, MeasureDensity):
        dens = ndimage.convolve(item.deposited(), kern, mode="constant", cval=0.0)
        return MeasureDensity(dom, np.maximum(dens, 0.0))
    return ScalarField(dom, ndimage.convolve(item.values, kern, mode="nearest"))


# -- GFD1 dumps -------------------------------------------------------------

GFD_MAGIC = b"GFD1"


def write_gfd(path: str | Path, values: np.ndarray, origin, spacing: float) -> None:
    """Little-endian grid field dump: magic, dim, counts, origin, spacing, values."""
    values = np.asarray(values, dtype=float)
    origin = np.asarray(origin, dtype=float)
    dim = values.ndim
    with open(path, "wb") as fh:
        fh.write(GFD_MAGIC)
        fh.write(struct.pack(f"<I{dim}I", dim, *values.shape))
        fh.write(struct.pack(f"<{dim}dd", *origin, float(spacing)))
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes(order="C"))


def read_gfd(path: str | Path) -> tuple[np.ndarray, np.ndarray, float]:
    data = Path(path).read_bytes()
    if data[:4] != GFD_MAGIC:
        raise ValueError("not a GFD1 file")
    (dim,) = struct.unpack_from("<I", data, 4)
    shape = struct.unpack_from(f"<{dim}I", data, 8)
    off = 8 + 4 * dim
    *origin, spacing = struct.unpack_from(f"<{dim}dd", data, off)
    off += 8 * (dim + 1)
    values = np.frombuffer(data, dtype="<f8", offset=off, count=int(np.prod(shape))).reshape(shape)
    return values.copy(), np.asarray(origin), spacing


def write_field(path: str | Path, field: ScalarField | np.ndarray, carrier: GridDomain | None = None) -> None:
    if isinstance(field, ScalarField):
        carrier, values = field.carrier, field.values
    else:
        values = np.asarray(field, dtype=float)
    write_gfd(path, values, carrier.origin, carrier.h)
