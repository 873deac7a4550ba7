"""Analytic domains, their rasterizations, and basic geometric quantities.

Ellipsoids follow the coefficient convention ``sum(a_i**2 * x_i**2) < 1``,
so the semi-axes are ``1 / a_i``.  The JSON form stores semi-axes under
``"radii"``; use :meth:`DomainSpec.ellipsoid` with ``coefficients=`` to
build one from the ``a_i`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Sequence

import numpy as np
from scipy import integrate, ndimage

KINDS = ("ball", "ellipsoid", "annulus", "union_of_balls")
PAD_CELLS = 4


class GeometryError(ValueError):
    """Invalid domain description or unresolvable rasterization."""


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def unit_sphere_area(dim: int) -> float:
    return dim * unit_ball_volume(dim)


def equivalent_radius(volume: float, dim: int) -> float:
    """Radius of the ball in R^dim with the given volume."""
    if not volume > 0:
        raise GeometryError(f"volume must be positive, got {volume!r}")
    return (volume / unit_ball_volume(dim)) ** (1.0 / dim)


@dataclass(frozen=True)
class DomainSpec:
    """An analytic domain in R^2 or R^3.

    ``radii`` holds ``(r,)`` for a ball, the semi-axes for an ellipsoid and
    ``(r, R)`` for an annulus.  A union of balls keeps its members in
    ``components``.
    """

    kind: str
    dim: int
    center: tuple[float, ...] = ()
    radii: tuple[float, ...] = ()
    components: tuple["DomainSpec", ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {self.dim}")
        if self.kind == "union_of_balls":
            if not self.components:
                raise GeometryError("union_of_balls needs at least one component")
            for comp in self.components:
                if comp.kind != "ball" or comp.dim != self.dim:
                    raise GeometryError("union components must be balls of the same dimension")
            return
        if len(self.center) != self.dim:
            raise GeometryError(f"center must have {self.dim} coordinates")
        if not all(math.isfinite(c) for c in self.center):
            raise GeometryError("center must be finite")
        expected = {"ball": 1, "ellipsoid": self.dim, "annulus": 2}[self.kind]
        if len(self.radii) != expected:
            raise GeometryError(f"{self.kind} needs {expected} radii, got {len(self.radii)}")
        if not all(r > 0 and math.isfinite(r) for r in self.radii):
            raise GeometryError("radii must be strictly positive")
        if self.kind == "annulus" and not self.radii[1] > self.radii[0]:
            raise GeometryError("annulus needs R > r")

    # -- constructors -----------------------------------------------------

    @classmethod
    def ball(cls, center: Sequence[float], r: float) -> "DomainSpec":
        return cls("ball", len(center), tuple(float(c) for c in center), (float(r),))

    @classmethod
    def ellipsoid(
        cls,
        center: Sequence[float] | None = None,
        *,
        semi_axes: Sequence[float] | None = None,
        coefficients: Sequence[float] | None = None,
    ) -> "DomainSpec":
        if (semi_axes is None) == (coefficients is None):
            raise GeometryError("give exactly one of semi_axes or coefficients")
        if coefficients is not None:
            if any(a <= 0 for a in coefficients):
                raise GeometryError("ellipsoid coefficients must be positive")
            semi_axes = [1.0 / a for a in coefficients]
        dim = len(semi_axes)
        center = tuple(float(c) for c in (center if center is not None else [0.0] * dim))
        return cls("ellipsoid", dim, center, tuple(float(s) for s in semi_axes))

    @classmethod
    def annulus(cls, r: float, R: float, dim: int, center: Sequence[float] | None = None) -> "DomainSpec":
        center = tuple(float(c) for c in (center if center is not None else [0.0] * dim))
        return cls("annulus", dim, center, (float(r), float(R)))

    @classmethod
    def union_of_balls(cls, balls: Sequence["DomainSpec"]) -> "DomainSpec":
        balls = tuple(balls)
        if not balls:
            raise GeometryError("union_of_balls needs at least one component")
        return cls("union_of_balls", balls[0].dim, components=balls)

    # -- JSON -------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DomainSpec":
        if not isinstance(data, dict):
            raise GeometryError("domain must be a JSON object")
        kind = data.get("kind")
        allowed = {
            "ball": {"kind", "dim", "center", "r"},
            "ellipsoid": {"kind", "dim", "center", "radii"},
            "annulus": {"kind", "dim", "center", "r", "R"},
            "union_of_balls": {"kind", "dim", "components"},
        }
        if kind not in allowed:
            raise GeometryError(f"unknown domain kind {kind!r}")
        unknown = set(data) - allowed[kind]
        if unknown:
            raise GeometryError(f"unknown keys for {kind}: {sorted(unknown)}")
        try:
            dim = int(data["dim"])
            if kind == "union_of_balls":
                comps = tuple(cls.from_dict(c) for c in data["components"])
                spec = cls("union_of_balls", dim, components=comps)
            else:
                center = tuple(float(c) for c in data.get("center", [0.0] * dim))
                if kind == "ball":
                    radii = (float(data["r"]),)
                elif kind == "ellipsoid":
                    radii = tuple(float(s) for s in data["radii"])
                else:
                    radii = (float(data["r"]), float(data["R"]))
                spec = cls(kind, dim, center, radii)
        except (KeyError, TypeError) as exc:
            raise GeometryError(f"malformed {kind} domain: {exc}") from exc
        return spec

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "union_of_balls":
            return {"kind": self.kind, "dim": self.dim, "components": [c.to_dict() for c in self.components]}
        out: dict[str, Any] = {"kind": self.kind, "dim": self.dim, "center": list(self.center)}
        if self.kind == "ball":
            out["r"] = self.radii[0]
        elif self.kind == "ellipsoid":
            out["radii"] = list(self.radii)
        else:
            out["r"], out["R"] = self.radii
        return out

    # -- analytic description ---------------------------------------------

    @property
    def is_primitive(self) -> bool:
        return self.kind != "union_of_balls"

    @property
    def coefficients(self) -> np.ndarray:
        """The ``a_i`` of an ellipsoid ``sum(a_i^2 x_i^2) < 1``."""
        if self.kind != "ellipsoid":
            raise GeometryError("coefficients only defined for ellipsoids")
        return 1.0 / np.asarray(self.radii)

    def centroid(self) -> np.ndarray:
        if self.kind != "union_of_balls":
            return np.asarray(self.center, dtype=float)
        # pairwise-overlap unions: inclusion-exclusion on first moments
        balls = self.components
        moment = np.zeros(self.dim)
        total = 0.0
        for b in balls:
            v = unit_ball_volume(self.dim) * b.radii[0] ** self.dim
            moment += v * np.asarray(b.center)
            total += v
        for b1, b2 in combinations(balls, 2):
            v, c = _lens_volume_and_centroid(b1, b2)
            moment -= v * c
            total -= v
        return moment / total

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "union_of_balls":
            boxes = [c.bounding_box() for c in self.components]
            return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)
        c = np.asarray(self.center, dtype=float)
        if self.kind == "ball":
            ext = np.full(self.dim, self.radii[0])
        elif self.kind == "ellipsoid":
            ext = np.asarray(self.radii, dtype=float)
        else:
            ext = np.full(self.dim, self.radii[1])
        return c - ext, c + ext

    def level(self, x: np.ndarray) -> np.ndarray:
        """Defining function, negative exactly inside the domain."""
        x = np.asarray(x, dtype=float)
        if self.kind == "union_of_balls":
            return np.min([c.level(x) for c in self.components], axis=0)
        y = x - np.asarray(self.center)
        if self.kind == "ball":
            return np.sum(y * y, axis=-1) - self.radii[0] ** 2
        if self.kind == "ellipsoid":
            return np.sum((y / np.asarray(self.radii)) ** 2, axis=-1) - 1.0
        r, R = self.radii
        q = np.sum(y * y, axis=-1)
        return np.maximum(q - R * R, r * r - q)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.level(x) < 0

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Signed Euclidean distance to the boundary (negative inside)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "union_of_balls":
            return np.min([c.signed_distance(x) for c in self.components], axis=0)
        y = x - np.asarray(self.center)
        if self.kind == "ball":
            return np.linalg.norm(y, axis=-1) - self.radii[0]
        if self.kind == "annulus":
            rho = np.linalg.norm(y, axis=-1)
            return np.maximum(rho - self.radii[1], self.radii[0] - rho)
        return ellipsoid_signed_distance(y, np.asarray(self.radii, dtype=float))

    def num_boundary_components(self) -> int:
        return 2 if self.kind == "annulus" else 1


def _lens_volume_and_centroid(b1: DomainSpec, b2: DomainSpec) -> tuple[float, np.ndarray]:
    """Volume and centroid of the intersection of two balls (numerical centroid)."""
    dim = b1.dim
    c1, c2 = np.asarray(b1.center), np.asarray(b2.center)
    r1, r2 = b1.radii[0], b2.radii[0]
    d = float(np.linalg.norm(c2 - c1))
    if d >= r1 + r2:
        return 0.0, c1
    if d <= abs(r1 - r2):
        small = b1 if r1 <= r2 else b2
        return unit_ball_volume(dim) * small.radii[0] ** dim, np.asarray(small.center)
    vol = lens_volume(d, r1, r2, dim)
    # plane of intersection along the center line
    a = (d * d + r1 * r1 - r2 * r2) / (2 * d)
    e = (c2 - c1) / d

    def slab(t: float) -> float:
        rad2 = r1 * r1 - t * t if t <= a else r2 * r2 - (d - t) ** 2
        rad2 = max(rad2, 0.0)
        return math.pi * rad2 if dim == 3 else 2.0 * math.sqrt(rad2)

    lo, hi = d - r2, r1
    m1 = integrate.quad(lambda t: t * slab(t), lo, hi, points=[a], epsabs=1e-13)[0]
    return vol, c1 + e * (m1 / vol)


def lens_volume(d: float, r1: float, r2: float, dim: int) -> float:
    """Measure of the intersection of two balls with center distance ``d``."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return unit_ball_volume(dim) * min(r1, r2) ** dim
    if dim == 2:
        a1 = math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
        a2 = math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
        return (
            r1 * r1 * a1
            + r2 * r2 * a2
            - 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
        )
    return (
        math.pi
        * (r1 + r2 - d) ** 2
        * (d * d + 2 * d * r2 - 3 * r2 * r2 + 2 * d * r1 + 6 * r1 * r2 - 3 * r1 * r1)
        / (12 * d)
    )


def _check_pairwise_only(spec: DomainSpec) -> None:
    balls = spec.components
    overlap = {
        (i, j)
        for i, j in combinations(range(len(balls)), 2)
        if np.linalg.norm(np.subtract(balls[i].center, balls[j].center)) < balls[i].radii[0] + balls[j].radii[0]
    }
    for i, j, k in combinations(range(len(balls)), 3):
        if {(i, j), (i, k), (j, k)} <= overlap:
            raise GeometryError("closed forms for unions need overlaps confined to pairs of balls")


def ellipsoid_signed_distance(y: np.ndarray, semi_axes: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Signed distance from centered points ``y`` to an axis-aligned ellipsoid.

    The foot point is ``x_i = s_i^2 y_i / (t + s_i^2)`` where ``t`` is the root
    of ``sum((s_i y_i / (t + s_i^2))^2) = 1``, which is decreasing on
    ``(-min(s)^2, inf)``.  The search runs in ``tau = t + min(s)^2`` so the
    smallest denominator is carried without cancellation near the centre.
    The root is bracketed, bisected, then polished by Newton steps.
    """
    y = np.abs(np.atleast_2d(np.asarray(y, dtype=float)))
    shape = y.shape[:-1]
    y = y.reshape(-1, y.shape[-1])
    s = np.asarray(semi_axes, dtype=float)
    s2 = s * s
    smin2 = s2.min()
    shift = s2 - smin2  # exact zero on the shortest axes
    # keep the root strictly inside the bracket on symmetry planes
    y = np.maximum(y, 1e-12 * s.max())
    inside = np.sum((y / s) ** 2, axis=1) < 1.0

    def F(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        den = tau[:, None] + shift
        q = (s * y) / den
        return np.sum(q * q, axis=1) - 1.0, -2.0 * np.sum(q * q / den, axis=1)

    lo = np.zeros(len(y))
    hi = s.max() * np.linalg.norm(y, axis=1) + smin2 + 1e-300
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f, _ = F(mid)
        pos = f > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    tau = 0.5 * (lo + hi)
    for _ in range(4):
        f, df = F(tau)
        step = np.where(df != 0, f / np.where(df != 0, df, 1.0), 0.0)
        tau_new = tau - step
        ok = (tau_new > lo) & (tau_new < hi)
        tau = np.where(ok, tau_new, tau)
    dist = np.abs(tau - smin2) * np.linalg.norm(y / (tau[:, None] + shift), axis=1)
    dist = np.where(inside, -dist, dist)
    return dist.reshape(shape)


# -- volumes and areas ------------------------------------------------------


def spec_volume(spec: DomainSpec) -> float:
    kappa = unit_ball_volume(spec.dim)
    if spec.kind == "ball":
        return kappa * spec.radii[0] ** spec.dim
    if spec.kind == "ellipsoid":
        return kappa * float(np.prod(spec.radii))
    if spec.kind == "annulus":
        r, R = spec.radii
        return kappa * (R**spec.dim - r**spec.dim)
    _check_pairwise_only(spec)
    total = sum(kappa * b.radii[0] ** spec.dim for b in spec.components)
    for b1, b2 in combinations(spec.components, 2):
        d = float(np.linalg.norm(np.subtract(b1.center, b2.center)))
        total -= lens_volume(d, b1.radii[0], b2.radii[0], spec.dim)
    return total


def grid_volume(domain: "GridDomain") -> float:
    """Cell count with the sub-cell correction ``clamp(1/2 - d/h, 0, 1)``."""
    frac = np.clip(0.5 - domain.sdf / domain.h, 0.0, 1.0)
    return float(frac.sum() * domain.cell_volume)


def volume(domain: "GridDomain | DomainSpec") -> float:
    """Closed-form volume of a spec, or the corrected cell count of a grid."""
    if isinstance(domain, DomainSpec):
        return spec_volume(domain)
    return grid_volume(domain)


def surface_area(spec: DomainSpec) -> float:
    """Total boundary measure (perimeter in 2D)."""
    dim = spec.dim
    if spec.kind == "ball":
        return unit_sphere_area(dim) * spec.radii[0] ** (dim - 1)
    if spec.kind == "annulus":
        r, R = spec.radii
        return unit_sphere_area(dim) * (R ** (dim - 1) + r ** (dim - 1))
    if spec.kind == "ellipsoid":
        return _ellipsoid_area(np.asarray(spec.radii, dtype=float))
    return _union_area(spec)


def _ellipsoid_area(s: np.ndarray) -> float:
    if len(s) == 2:
        a, b = s

        def speed(t: float) -> float:
            return math.hypot(a * math.sin(t), b * math.cos(t))

        val, _ = integrate.quad(speed, 0.0, math.pi / 2, epsabs=0, epsrel=1e-13, limit=200)
        return 4.0 * val
    a, b, c = s

    def inner(theta: float) -> float:
        st, ct = math.sin(theta), math.cos(theta)

        def dA(phi: float) -> float:
            sp, cp = math.sin(phi), math.cos(phi)
            # |d/dtheta x d/dphi| of (a st cp, b st sp, c ct)
            nx = b * c * st * st * cp
            ny = a * c * st * st * sp
            nz = a * b * st * ct
            return math.sqrt(nx * nx + ny * ny + nz * nz)

        return integrate.quad(dA, 0.0, math.pi / 2, epsabs=0, epsrel=1e-12, limit=200)[0]

    val, _ = integrate.quad(inner, 0.0, math.pi / 2, epsabs=0, epsrel=1e-11, limit=200)
    return 8.0 * val


def _union_area(spec: DomainSpec) -> float:
    # Caps removed from one sphere by two different balls would imply a
    # triple overlap, so pairwise-only unions have disjoint caps.
    _check_pairwise_only(spec)
    dim = spec.dim
    total = 0.0
    for i, bi in enumerate(spec.components):
        ri = bi.radii[0]
        full = unit_sphere_area(dim) * ri ** (dim - 1)
        removed = 0.0
        for j, bj in enumerate(spec.components):
            if i == j:
                continue
            rj = bj.radii[0]
            d = float(np.linalg.norm(np.subtract(bi.center, bj.center)))
            if d >= ri + rj or d + rj <= ri:
                continue
            if d + ri <= rj:
                removed = full
                break
            cos_a = (d * d + ri * ri - rj * rj) / (2 * d * ri)
            alpha = math.acos(max(-1.0, min(1.0, cos_a)))
            removed += 2 * alpha * ri if dim == 2 else 2 * math.pi * ri * ri * (1 - cos_a)
        total += max(full - removed, 0.0)
    return total


# -- boundary sampling ------------------------------------------------------


def _fibonacci_sphere(count: int) -> np.ndarray:
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _unit_sphere_points(dim: int, count: int) -> np.ndarray:
    if dim == 2:
        t = 2.0 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    return _fibonacci_sphere(count)


def boundary_samples(spec: DomainSpec, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-uniform boundary points and outward unit normals.

    ``count`` points are placed on each boundary component (each sphere of
    a union, before discarding the parts buried in other balls).
    """
    if count < 1:
        raise GeometryError("count must be positive")
    dim = spec.dim
    u = _unit_sphere_points(dim, count)
    if spec.kind == "union_of_balls":
        pts, nrm = [], []
        for i, b in enumerate(spec.components):
            p, n = boundary_samples(b, count)
            others = [c for j, c in enumerate(spec.components) if j != i]
            if others:
                keep = np.all([o.level(p) >= 0 for o in others], axis=0)
                p, n = p[keep], n[keep]
            pts.append(p)
            nrm.append(n)
        return np.concatenate(pts), np.concatenate(nrm)
    c = np.asarray(spec.center, dtype=float)
    if spec.kind == "ball":
        return c + spec.radii[0] * u, u.copy()
    if spec.kind == "annulus":
        r, R = spec.radii
        return np.concatenate([c + R * u, c + r * u]), np.concatenate([u, -u])
    s = np.asarray(spec.radii, dtype=float)
    pts = c + u * s
    grad = u / s  # gradient of sum((y/s)^2) up to a factor 2
    return pts, grad / np.linalg.norm(grad, axis=1, keepdims=True)


# -- grids ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDomain:
    """A domain rasterized on a uniform cell-centered grid.

    Cell ``idx`` has center ``origin + (idx + 0.5) * h``; ``origin`` is the
    lower corner of the box.
    """

    origin: np.ndarray
    h: float
    inside: np.ndarray
    sdf: np.ndarray
    boundary_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    boundary_normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    spec: DomainSpec | None = None

    @property
    def dim(self) -> int:
        return self.inside.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.inside.shape

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.h * np.asarray(self.shape)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[k] + (np.arange(n) + 0.5) * self.h for k, n in enumerate(self.shape)]

    def cell_centers(self) -> np.ndarray:
        """Array of shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(points) - self.origin) / self.h).astype(int)
        return np.clip(idx, 0, np.asarray(self.shape) - 1)

    def same_grid(self, other: "GridDomain") -> bool:
        return (
            self.shape == other.shape
            and abs(self.h - other.h) <= 1e-12 * self.h
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.h)
        )

    def with_mask(self, inside: np.ndarray, sdf: np.ndarray, spec: DomainSpec | None = None) -> "GridDomain":
        """Another domain on the same grid."""
        pts = np.zeros((0, self.dim))
        return GridDomain(self.origin.copy(), self.h, inside, sdf, pts, pts.copy(), spec)

    def with_spec(self, spec: DomainSpec, boundary_count: int | None = None) -> "GridDomain":
        """Rasterize another analytic domain on this grid."""
        centers = self.cell_centers()
        inside = spec.level(centers) < 0
        sdf = spec.signed_distance(centers)
        count = boundary_count or _default_boundary_count(spec.dim, max(self.shape))
        bp, bn = boundary_samples(spec, count)
        return GridDomain(self.origin.copy(), self.h, inside, sdf, bp, bn, spec)

    @classmethod
    def from_level(cls, origin: np.ndarray, h: float, level: np.ndarray) -> "GridDomain":
        """Sublevel set ``{level < 0}`` with first-order distance ``level / |grad level|``.

        Boundary samples sit at the linearly interpolated zero crossings
        between neighbouring cells, with normals from the level gradient.
        """
        level = np.asarray(level, dtype=float)
        grads = np.gradient(level, h)
        gnorm = np.sqrt(sum(g * g for g in grads))
        sdf = level / np.maximum(gnorm, 1e-12)
        inside = level < 0
        dim = level.ndim
        pts, nrm = [], []
        axes = [origin[k] + (np.arange(n) + 0.5) * h for k, n in enumerate(level.shape)]
        for k in range(dim):
            a = [slice(None)] * dim
            b = [slice(None)] * dim
            a[k], b[k] = slice(0, -1), slice(1, None)
            la, lb = level[tuple(a)], level[tuple(b)]
            cross = (la < 0) != (lb < 0)
            if not cross.any():
                continue
            idx = np.argwhere(cross)
            theta = la[cross] / (la[cross] - lb[cross])
            p = np.stack([axes[j][idx[:, j]] for j in range(dim)], axis=1)
            p[:, k] += theta * h
            g = np.stack(
                [(1 - theta) * grads[j][tuple(a)][cross] + theta * grads[j][tuple(b)][cross] for j in range(dim)],
                axis=1,
            )
            pts.append(p)
            nrm.append(g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300))
        bp = np.concatenate(pts) if pts else np.zeros((0, dim))
        bn = np.concatenate(nrm) if nrm else np.zeros((0, dim))
        return cls(np.asarray(origin, dtype=float), float(h), inside, sdf, bp, bn, None)

    @classmethod
    def box(cls, origin: np.ndarray, h: float, shape: tuple[int, ...]) -> "GridDomain":
        """The whole grid box, every cell inside."""
        inside = np.ones(shape, dtype=bool)
        dim = len(shape)
        pts = np.zeros((0, dim))
        return cls(np.asarray(origin, dtype=float), float(h), inside, np.full(shape, -np.inf), pts, pts.copy())


def _default_boundary_count(dim: int, resolution: int) -> int:
    return 4 * resolution if dim == 2 else 2 * resolution * resolution


def grid_for_box(lo: np.ndarray, hi: np.ndarray, resolution: int, pad: int = PAD_CELLS) -> tuple[np.ndarray, float, tuple[int, ...]]:
    """Origin, spacing and shape of a padded grid centred on a box.

    The longest box side gets ``resolution - 2*pad`` cells.
    """
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    ext = hi - lo
    h = float(ext.max()) / (resolution - 2 * pad)
    shape = tuple(int(math.ceil(e / h - 1e-9)) + 2 * pad for e in ext)
    mid = 0.5 * (lo + hi)
    origin = mid - 0.5 * h * np.asarray(shape)
    return origin, h, shape


def rasterize(spec: DomainSpec, resolution: int, boundary_count: int | None = None) -> GridDomain:
    """Rasterize ``spec`` on a grid padded by four cells on every side."""
    if resolution < 16:
        raise GeometryError(f"resolution must be at least 16, got {resolution}")
    lo, hi = spec.bounding_box()
    origin, h, shape = grid_for_box(lo, hi, resolution)
    if spec.kind == "annulus" and spec.radii[1] - spec.radii[0] < 4 * h:
        raise GeometryError(
            f"annulus gap {spec.radii[1] - spec.radii[0]:.4g} is thinner than 4h = {4 * h:.4g}; raise the resolution"
        )
    if spec.kind == "ellipsoid" and 2 * min(spec.radii) < 4 * h:
        raise GeometryError(f"ellipsoid thickness {2 * min(spec.radii):.4g} is thinner than 4h = {4 * h:.4g}")
    if spec.kind == "union_of_balls":
        _check_union_resolution(spec, h)
    dom = GridDomain.box(origin, h, shape).with_spec(spec, boundary_count)
    if not dom.inside.any():
        raise GeometryError("rasterization has no inside cells")
    if spec.kind == "union_of_balls":
        _, ncomp = ndimage.label(dom.inside)
        if ncomp != 1:
            raise GeometryError(f"union of balls is not connected ({ncomp} components)")
    return dom


def _check_union_resolution(spec: DomainSpec, h: float) -> None:
    for b1, b2 in combinations(spec.components, 2):
        d = float(np.linalg.norm(np.subtract(b1.center, b2.center)))
        r1, r2 = b1.radii[0], b2.radii[0]
        if abs(d - (r1 + r2)) < 2 * h or abs(d - abs(r1 - r2)) < 2 * h:
            raise GeometryError("union spheres are (nearly) tangent; boundary is not resolvable as smooth")


def cavities(domain: GridDomain) -> list[np.ndarray]:
    """Centroids of bounded components of the complement."""
    labels, n = ndimage.label(~domain.inside)
    border = set()
    for k in range(domain.dim):
        for sl in (0, -1):
            idx = [slice(None)] * domain.dim
            idx[k] = sl
            border.update(np.unique(labels[tuple(idx)]).tolist())
    centers = domain.cell_centers()
    out = []
    for lab in range(1, n + 1):
        if lab in border:
            continue
        out.append(centers[labels == lab].mean(axis=0))
    return out
