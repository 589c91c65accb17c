"""Finite metric spaces, discrete quasi-geodesics and geodesic systems."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import StructuralError

TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A finite point set with one of three distance backends.

    ``dist`` is a dense matrix; ``coords`` with ``norm`` computes distances on
    demand (large lattice samples); ``factors`` is an l1 product of two spaces.
    Point indices are the internal identifiers, ``points`` holds the public ids.
    """

    points: tuple
    base: object
    label: str = ""
    dist: np.ndarray | None = None
    coords: np.ndarray | None = None
    norm: str | None = None
    factors: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        backends = sum(x is not None for x in (self.dist, self.coords, self.factors))
        if backends != 1:
            raise StructuralError("exactly one distance backend is required")
        n = len(self.points)
        if self.dist is not None:
            D = np.asarray(self.dist, dtype=float)
            if D.shape != (n, n):
                raise StructuralError(f"distance matrix has shape {D.shape}, expected ({n}, {n})")
            object.__setattr__(self, "dist", D)
        if self.coords is not None:
            X = np.asarray(self.coords, dtype=float)
            if X.ndim != 2 or X.shape[0] != n:
                raise StructuralError("coordinate array does not match point count")
            if self.norm not in ("l1", "l2"):
                raise StructuralError(f"unknown norm {self.norm!r}")
            object.__setattr__(self, "coords", X)
        if self.factors is not None:
            X, Y, ix, iy = self.factors
            ix = np.asarray(ix, dtype=np.int64)
            iy = np.asarray(iy, dtype=np.int64)
            if len(ix) != n or len(iy) != n:
                raise StructuralError("product index arrays do not match point count")
            object.__setattr__(self, "factors", (X, Y, ix, iy))
        if len(set(self.points)) != n:
            raise StructuralError("point ids are not unique")
        if self.base not in self._index:
            raise StructuralError(f"base {self.base!r} is not a point")

    @cached_property
    def _index(self) -> dict:
        return {p: i for i, p in enumerate(self.points)}

    @property
    def n(self) -> int:
        return len(self.points)

    def index(self, pid) -> int:
        try:
            return self._index[pid]
        except KeyError:
            raise StructuralError(f"unknown point {pid!r}") from None

    @property
    def o(self) -> int:
        """Index of the base point."""
        return self._index[self.base]

    def d(self, i, j):
        """Vectorized distance between index arrays (broadcasting)."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if self.dist is not None:
            return self.dist[i, j]
        if self.coords is not None:
            diff = self.coords[i] - self.coords[j]
            if self.norm == "l1":
                return np.abs(diff).sum(axis=-1)
            return np.sqrt((diff * diff).sum(axis=-1))
        X, Y, ix, iy = self.factors
        return X.d(ix[i], ix[j]) + Y.d(iy[i], iy[j])

    def row(self, i: int) -> np.ndarray:
        return self.d(np.full(self.n, i), np.arange(self.n))

    def matrix(self, cap: int = 6000) -> np.ndarray:
        if self.dist is not None:
            return self.dist
        if self.n > cap:
            raise StructuralError(f"refusing to materialize a {self.n}-point matrix")
        idx = np.arange(self.n)
        return self.d(idx[:, None], idx[None, :])

    @cached_property
    def from_base(self) -> np.ndarray:
        return self.row(self.o)

    @property
    def radius(self) -> float:
        return float(self.from_base.max())

    @cached_property
    def diameter(self) -> float:
        if self.dist is not None:
            return float(self.dist.max())
        if self.factors is not None:
            return self.factors[0].diameter + self.factors[1].diameter
        # Any norm is convex, so the diameter is attained on hull vertices.
        pts = self.coords
        cand = np.arange(self.n)
        if self.n > 4 and pts.shape[1] == 2:
            from scipy.spatial import ConvexHull

            cand = ConvexHull(pts).vertices
        sub = self.d(cand[:, None], cand[None, :])
        return float(sub.max())

    def ball(self, radius: float) -> np.ndarray:
        """Indices of the closed ball about the base point."""
        return np.flatnonzero(self.from_base <= radius + TOL)


@dataclass(frozen=True)
class DiscretePath:
    """Point indices at parameters 0, h, 2h, ..., a. ``horizon`` marks a ray."""

    values: tuple
    step: float = 1.0
    lam: float = 1.0
    k: float = 0.0
    horizon: float | None = None

    def __post_init__(self):
        if len(self.values) == 0:
            raise StructuralError("empty path")
        if self.step <= 0:
            raise StructuralError("path step must be positive")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @property
    def is_ray(self) -> bool:
        return self.horizon is not None

    @property
    def kind(self):
        return "segment" if self.horizon is None else {"ray": self.horizon}

    @cached_property
    def arr(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def length(self) -> float:
        return (self.n - 1) * self.step

    @property
    def start(self) -> int:
        return self.values[0]

    @property
    def end(self) -> int:
        return self.values[-1]

    @property
    def params(self) -> np.ndarray:
        return np.arange(self.n) * self.step

    def index_at(self, t, mode: str = "floor"):
        x = np.asarray(t, dtype=float) / self.step
        if mode == "floor":
            idx = np.floor(x + TOL)
        else:
            idx = np.floor(x + 0.5)
        return np.clip(idx, 0, self.n - 1).astype(np.int64)

    def at(self, t, mode: str = "floor"):
        """Value at parameter t; past the end the path stays at its endpoint."""
        return self.arr[self.index_at(t, mode)]

    def reversed(self) -> "DiscretePath":
        return replace(self, values=self.values[::-1], horizon=None)

    def prefix(self, m: int) -> "DiscretePath":
        """The grid prefix with m+1 samples (domain [0, m h])."""
        return replace(self, values=self.values[: m + 1], horizon=None)

    def truncate(self, R: float) -> "DiscretePath":
        m = int(np.floor(R / self.step + TOL))
        if m > self.n - 1:
            raise StructuralError("path shorter than requested truncation")
        return replace(self, values=self.values[: m + 1], horizon=m * self.step)


@dataclass(frozen=True)
class Violation:
    kind: str
    witness: tuple
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list
    checked: int
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_metric(space: FiniteMetricSpace, sample: int = 200_000, seed: int = 0,
                    max_witnesses: int = 100) -> ValidationReport:
    """Diagonal, symmetry and triangle checks; exhaustive up to 200 points."""
    n = space.n
    pts = space.points
    out = []
    if n <= 200:
        D = space.matrix()
        for i in np.flatnonzero(np.abs(np.diag(D)) > TOL):
            out.append(Violation("diagonal", (pts[i],)))
        iu, ju = np.nonzero(np.triu(np.abs(D - D.T) > TOL, 1))
        for i, j in zip(iu, ju):
            out.append(Violation("symmetry", (pts[i], pts[j])))
        if (D < -TOL).any():
            i, j = np.argwhere(D < -TOL)[0]
            out.append(Violation("negative", (pts[i], pts[j])))
        for j in range(n):
            bad = D[:, j, None] + D[None, j, :] < D - TOL
            for i, k in np.argwhere(bad):
                if len(out) >= max_witnesses:
                    break
                out.append(Violation("triangle", (pts[i], pts[j], pts[k]),
                                     f"d={D[i, k]} > {D[i, j]}+{D[j, k]}"))
        return ValidationReport(out, n ** 3, True)
    rng = np.random.default_rng(seed)
    i, j, k = rng.integers(0, n, size=(3, sample))
    dik, dij, djk = space.d(i, k), space.d(i, j), space.d(j, k)
    for m in np.flatnonzero(dik > dij + djk + TOL)[:max_witnesses]:
        out.append(Violation("triangle", (pts[i[m]], pts[j[m]], pts[k[m]])))
    for m in np.flatnonzero(np.abs(space.d(i, j) - space.d(j, i)) > TOL)[:max_witnesses]:
        out.append(Violation("symmetry", (pts[i[m]], pts[j[m]])))
    return ValidationReport(out, sample, False)


def _pair_table(path: DiscretePath, space: FiniteMetricSpace):
    i, j = np.triu_indices(path.n, 1)
    dt = (j - i) * path.step
    d = space.d(path.arr[i], path.arr[j])
    return i, j, dt, d


def certify_quasi_geodesic(path: DiscretePath, space: FiniteMetricSpace,
                           lam: float | None = None, k: float | None = None):
    """Lexicographically minimal (lambda, k) with k within the declared bound.

    Returns a tuple ``(lam, k)`` or a :class:`Violation` whose witness is the
    parameter pair (t, s) that forces the declared bounds to fail.
    """
    lam_decl = path.lam if lam is None else lam
    k_decl = path.k if k is None else k
    if path.n == 1:
        return (1.0, 0.0)
    i, j, dt, d = _pair_table(path, space)
    denom = d + k_decl
    with np.errstate(divide="ignore"):
        lower = np.where(denom > TOL, dt / np.maximum(denom, TOL), np.inf)
    upper = (d - k_decl) / dt
    need = np.maximum(lower, upper)
    m = int(np.argmax(need))
    lam_min = max(1.0, float(need[m]))
    witness = (float(i[m] * path.step), float(j[m] * path.step))
    if not np.isfinite(lam_min):
        # Among the infinite entries take the widest parameter gap.
        inf = np.flatnonzero(~np.isfinite(need))
        m = inf[np.argmax(dt[inf])]
        witness = (float(i[m] * path.step), float(j[m] * path.step))
        return Violation("lower-bound", witness, "distance cannot grow with the parameter")
    if lam_min > lam_decl + TOL:
        return Violation("lambda", witness, f"needs lambda {lam_min:.6g} > {lam_decl:.6g}")
    k_min = max(0.0, float(np.max(d - lam_min * dt)), float(np.max(dt / lam_min - d)))
    return (lam_min, k_min)


@dataclass(frozen=True, eq=False)
class GeodesicSystem:
    """Segments (indexed by endpoints on demand) plus truncated rays at the base."""

    segments: tuple = ()
    rays: tuple = ()
    symmetric: bool = False
    prefix_closed: bool = False
    ray_info: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "rays", tuple(self.rays))
        info = tuple(self.ray_info) if self.ray_info else tuple({} for _ in self.rays)
        if len(info) != len(self.rays):
            raise StructuralError("ray_info does not match rays")
        object.__setattr__(self, "ray_info", info)

    @cached_property
    def by_endpoints(self) -> dict:
        out: dict = {}
        for sid, g in enumerate(self.segments):
            out.setdefault((g.start, g.end), []).append(sid)
        return out

    @cached_property
    def by_start(self) -> dict:
        out: dict = {}
        for sid, g in enumerate(self.segments):
            out.setdefault(g.start, []).append(sid)
        return out

    def between(self, a: int, b: int) -> list:
        return self.by_endpoints.get((a, b), [])

    def from_point(self, a: int) -> list:
        return self.by_start.get(a, [])

    @property
    def max_step(self) -> float:
        steps = [g.step for g in self.segments] + [r.step for r in self.rays]
        return max(steps) if steps else 1.0


def close_system(L: GeodesicSystem) -> GeodesicSystem:
    """Smallest superset closed under reversal and grid prefixes.

    Reversal plus prefixes generates every contiguous window in both
    directions, which is what gets enumerated here.
    """
    seen = set()
    out = []

    def add(g):
        key = (g.values, g.step)
        if key not in seen:
            seen.add(key)
            out.append(g)

    for g in L.segments:
        add(g)
    for g in L.segments:
        for a in range(g.n):
            for b in range(a, g.n):
                w = replace(g, values=g.values[a: b + 1], horizon=None)
                add(w)
                add(w.reversed())
    return replace(L, segments=tuple(out), symmetric=True, prefix_closed=True)


def step_ray(path: DiscretePath) -> DiscretePath:
    """Resample a ray at integer times with gamma(t) = gamma(floor t)."""
    if not path.is_ray:
        raise StructuralError("step_ray expects a truncated ray")
    R = int(np.floor(path.horizon + TOL))
    vals = path.at(np.arange(R + 1)) if path.step != 1.0 else path.arr[: R + 1]
    return DiscretePath(tuple(vals), 1.0, path.lam, path.lam + path.k, float(R))


def as_paths(values: Iterable, **kw) -> list:
    return [DiscretePath(tuple(v), **kw) for v in values]
