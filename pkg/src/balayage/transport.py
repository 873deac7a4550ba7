"""Discrete Brenier maps between uniform point clouds.

The optimal bijection for the squared-Euclidean cost is computed exactly.
Dual prices from the optimality graph give a convex max-affine potential
whose gradient at each source point is its assigned target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.stats import qmc

EXACT_LIMIT = 5000


class TransportError(ValueError):
    """Invalid transport input."""


class Region(Protocol):
    dim: int

    def contains(self, x: np.ndarray) -> np.ndarray: ...

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or len(pts) < 1:
            raise TransportError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise TransportError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def _halton(dim: int, seed: int) -> qmc.Halton:
    return qmc.Halton(d=dim, scramble=True, seed=np.random.default_rng(seed))


def sample_uniform(region: Region, n: int, seed: int = 0, *, min_efficiency: float = 0.01) -> PointCloud:
    """Exactly ``n`` scrambled Halton points rejected into ``region``."""
    if n < 1:
        raise TransportError("n must be positive")
    lo, hi = (np.asarray(a, dtype=float) for a in region.bounding_box())
    eng = _halton(region.dim, seed)
    kept: list[np.ndarray] = []
    have = drawn = 0
    batch = max(64, 2 * n)
    while have < n:
        u = eng.random(batch)
        x = lo + u * (hi - lo)
        x = x[region.contains(x)]
        kept.append(x)
        have += len(x)
        drawn += batch
        if drawn >= 1000 and have / drawn < min_efficiency:
            raise TransportError(f"rejection efficiency {have / drawn:.4f} below {min_efficiency}")
    return PointCloud(np.concatenate(kept)[:n])


def sample_ball(dim: int, radius: float, n: int, seed: int = 0) -> PointCloud:
    """Uniform points in ``B(0, radius)`` by radial inversion of Halton points."""
    if n < 1 or radius <= 0:
        raise TransportError("need n >= 1 and radius > 0")
    u = _halton(dim, seed).random(n)
    if dim == 2:
        r = radius * np.sqrt(u[:, 0])
        t = 2 * np.pi * u[:, 1]
        return PointCloud(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    if dim == 3:
        r = radius * np.cbrt(u[:, 0])
        z = 1 - 2 * u[:, 1]
        s = np.sqrt(np.clip(1 - z * z, 0, None))
        t = 2 * np.pi * u[:, 2]
        return PointCloud(r[:, None] * np.column_stack([s * np.cos(t), s * np.sin(t), z]))
    raise TransportError("ball sampling supports N = 2 or 3")


@dataclass(frozen=True, eq=False)
class BrenierTransport:
    source: PointCloud
    target: PointCloud
    assignment: np.ndarray  # source i -> target assignment[i]
    potential: np.ndarray  # v_i at source points, min 0
    psi: np.ndarray  # conjugate offsets per target: v(x) = max_j <y_j, x> - psi_j
    prices: np.ndarray
    cost: float  # mean squared displacement

    @property
    def gradients(self) -> np.ndarray:
        """Assigned target of every source point."""
        return self.target.points[self.assignment]


def squared_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)


def dual_prices(C: np.ndarray, perm: np.ndarray, max_rounds: int | None = None) -> np.ndarray:
    """Prices ``p`` with ``C[i, perm[i]] - p[perm[i]] <= C[i, j] - p[j]``.

    Shortest distances from a virtual root in the graph with arcs
    ``perm[i] -> j`` of length ``C[i, j] - C[i, perm[i]]``; optimality of
    ``perm`` rules out negative cycles.
    """
    n = len(perm)
    W = C - C[np.arange(n), perm][:, None]
    p = np.zeros(n)
    for _ in range(max_rounds or n + 1):
        cand = (p[perm][:, None] + W).min(axis=0)
        new = np.minimum(p, cand)
        if np.array_equal(new, p):
            return p
        p = new
    raise TransportError("price relaxation did not settle; assignment is not optimal")


def solve_assignment(source: PointCloud, target: PointCloud) -> BrenierTransport:
    if source.n != target.n or source.dim != target.dim:
        raise TransportError("source and target must have equal size and dimension")
    if source.n > EXACT_LIMIT:
        raise TransportError(f"exact assignment limited to n <= {EXACT_LIMIT}")
    x, y = source.points, target.points
    C = squared_cost(x, y)
    rows, perm = linear_sum_assignment(C)
    perm = perm[np.argsort(rows)]
    p = dual_prices(C, perm)
    psi = 0.5 * ((y**2).sum(axis=1) - p)
    v = (x @ y.T - psi).max(axis=1)
    shift = v.min()
    v = v - shift
    psi = psi + shift
    cost = float(C[np.arange(len(perm)), perm].mean())
    return BrenierTransport(source, target, perm, v, psi, p, cost)


def dual_feasibility_gap(t: BrenierTransport) -> float:
    """Largest violation of the price certificate (``<= 0`` when exact)."""
    C = squared_cost(t.source.points, t.target.points)
    n = t.source.n
    lhs = C[np.arange(n), t.assignment] - t.prices[t.assignment]
    rhs = (C - t.prices[None, :]).min(axis=1)
    return float((lhs - rhs).max())


def extend_convex(t: BrenierTransport, query: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Max-affine extension ``max_i v_i + <y_i, q - x_i>`` at ``query`` points."""
    q = np.atleast_2d(np.asarray(query, dtype=float))
    y = t.target.points
    out = np.empty(len(q))
    for s in range(0, len(q), chunk):
        out[s : s + chunk] = (q[s : s + chunk] @ y.T - t.psi).max(axis=1)
    return out


def extend_convex_gradient(t: BrenierTransport, query: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Slope of the active plane at each query point."""
    q = np.atleast_2d(np.asarray(query, dtype=float))
    y = t.target.points
    out = np.empty_like(q)
    for s in range(0, len(q), chunk):
        out[s : s + chunk] = y[(q[s : s + chunk] @ y.T - t.psi).argmax(axis=1)]
    return out


# -- diagnostics -------------------------------------------------------------


@dataclass(frozen=True)
class HessianFit:
    trace: np.ndarray  # NaN where skipped
    det: np.ndarray
    skipped: int


def _sym_design(dx: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Rows mapping (g, H_sym) to the gradient increments ``H dx``."""
    k, N = dx.shape
    pairs = [(a, b) for a in range(N) for b in range(a, N)]
    A = np.zeros((k * N, N + len(pairs)))
    for r in range(N):
        A[r::N, r] = 1.0
    for c, (a, b) in enumerate(pairs):
        A[a::N, N + c] += dx[:, b]
        if a != b:
            A[b::N, N + c] += dx[:, a]
    return A, pairs


def fit_hessians(points: np.ndarray, grads: np.ndarray, which: np.ndarray | None = None) -> HessianFit:
    """Weighted least-squares fit of ``grad(x_j) ~ g + H (x_j - x_i)`` with ``H`` symmetric.

    Uses the ``2N + 6`` nearest neighbours plus the point itself, Gaussian
    weights of bandwidth twice the mean nearest-neighbour spacing.
    """
    n, N = points.shape
    k = 2 * N + 6
    tree = cKDTree(points)
    dist, nb = tree.query(points, k=min(k + 1, n))
    spacing = float(dist[:, 1].mean()) if n > 1 else 1.0
    bw = 2.0 * spacing
    idx = np.arange(n) if which is None else np.flatnonzero(which)
    trace = np.full(n, np.nan)
    det = np.full(n, np.nan)
    skipped = 0
    for i in idx:
        js = nb[i]
        dx = points[js] - points[i]
        A, pairs = _sym_design(dx)
        wts = np.repeat(np.exp(-0.5 * (dist[i] / bw) ** 2), N)
        sw = np.sqrt(wts)
        Aw = A * sw[:, None]
        b = grads[js].reshape(-1) * sw
        if np.linalg.matrix_rank(Aw, tol=1e-10 * np.abs(Aw).max()) < A.shape[1]:
            skipped += 1
            continue
        coef, *_ = np.linalg.lstsq(Aw, b, rcond=None)
        H = np.zeros((N, N))
        for c, (a, bb) in enumerate(pairs):
            H[a, bb] = H[bb, a] = coef[N + c]
        trace[i] = np.trace(H)
        det[i] = np.linalg.det(H)
    return HessianFit(trace, det, skipped)


def cyclic_violations(t: BrenierTransport, cycles: int = 10_000, seed: int = 0, tol: float = 1e-12) -> int:
    """Random 3-cycles violating ``sum <x_i, y_i> >= sum <x_i, y_sigma(i)>``."""
    n = t.source.n
    if n < 3:
        return 0
    rng = np.random.default_rng(seed)
    tri = np.array([rng.choice(n, 3, replace=False) for _ in range(cycles)])
    x = t.source.points
    y = t.gradients
    own = np.einsum("kij,kij->k", x[tri], y[tri])
    scale = tol * (1.0 + np.abs(own))
    bad = np.zeros(cycles, dtype=bool)
    for shift in (1, 2):
        other = np.einsum("kij,kij->k", x[tri], y[np.roll(tri, shift, axis=1)])
        bad |= own < other - scale
    return int(bad.sum())


@dataclass(frozen=True)
class BrenierDiagnostics:
    max_target_norm: float
    range_ok: bool
    trace_fraction: float  # of fitted interior points with trace >= N - 0.2
    trace_median: float
    det_median: float
    det_histogram: tuple[tuple[float, float, int], ...]
    fitted: int
    skipped: int
    monotonicity_violations: int
    dual_gap: float

    def as_dict(self) -> dict:
        return {
            "max_target_norm": self.max_target_norm,
            "range_ok": self.range_ok,
            "trace_fraction": self.trace_fraction,
            "trace_median": self.trace_median,
            "det_median": self.det_median,
            "det_histogram": [list(b) for b in self.det_histogram],
            "fitted": self.fitted,
            "skipped": self.skipped,
            "monotonicity_violations": self.monotonicity_violations,
            "dual_gap": self.dual_gap,
        }


def brenier_diagnostics(
    t: BrenierTransport,
    r_D: float,
    *,
    interior: np.ndarray | None = None,
    cycles: int = 10_000,
    seed: int = 0,
) -> BrenierDiagnostics:
    if t.source.n < 50:
        raise TransportError("local fits need at least 50 points")
    N = t.source.dim
    norms = np.linalg.norm(t.gradients, axis=1)
    fit = fit_hessians(t.source.points, t.gradients, interior)
    ok = np.isfinite(fit.trace)
    tr, dt = fit.trace[ok], fit.det[ok]
    edges = np.linspace(0.0, 2.0, 11)
    counts, _ = np.histogram(np.clip(dt, 0.0, 2.0), bins=edges)
    hist = tuple((float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts))
    return BrenierDiagnostics(
        max_target_norm=float(norms.max()),
        range_ok=bool(norms.max() <= r_D * (1 + 1e-12)),
        trace_fraction=float(np.mean(tr >= N - 0.2)) if len(tr) else math.nan,
        trace_median=float(np.median(tr)) if len(tr) else math.nan,
        det_median=float(np.median(dt)) if len(dt) else math.nan,
        det_histogram=hist,
        fitted=int(ok.sum()),
        skipped=fit.skipped,
        monotonicity_violations=cyclic_violations(t, cycles, seed),
        dual_gap=dual_feasibility_gap(t),
    )
