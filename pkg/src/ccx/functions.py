"""Slowly oscillating and Gromov functions, boundary extension, compactification radius."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryModel
from .convexity import ConstantTable
from .errors import PreconditionError, RepresentationError
from .metric import TOL, FiniteMetricSpace, GeodesicSystem
from .products import ProductEngine


@dataclass(frozen=True)
class ScalarField:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))

    @classmethod
    def from_callable(cls, space: FiniteMetricSpace, f, label: str = "") -> "ScalarField":
        return cls(np.array([f(i) for i in range(space.n)], dtype=complex), label)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.values + other.values, f"({self.label})+({other.label})")

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.values * other.values, f"({self.label})*({other.label})")

    def to_dict(self, space: FiniteMetricSpace) -> dict:
        return {str(p): [float(z.real), float(z.imag)] for p, z in zip(space.points, self.values)}


# ---------------------------------------------------------------- sample fields

def constant_field(space: FiniteMetricSpace, c: complex = 1.0) -> ScalarField:
    return ScalarField(np.full(space.n, c, dtype=complex), "constant")


def radius_field(space: FiniteMetricSpace) -> ScalarField:
    return ScalarField(space.from_base.astype(complex), "distance to base")


def direction_field(space: FiniteMetricSpace) -> ScalarField:
    """exp(i * direction angle) on a planar sample; the base point maps to 0."""
    if space.coords is None:
        raise PreconditionError("direction field needs coordinates")
    P = space.coords - space.coords[space.o]
    z = np.exp(1j * np.arctan2(P[:, 1], P[:, 0]))
    z[np.hypot(P[:, 0], P[:, 1]) == 0] = 0
    return ScalarField(z, "direction")


def pullback_field(model: BoundaryModel, g) -> ScalarField:
    """g(class) pulled back through the class of the nearest horizon sample."""
    space = model.space
    ends = np.array([r.values[-1] for r in model.rays])
    d = space.d(np.arange(space.n)[:, None], ends[None, :])
    cls = model.class_of[np.argmin(d, axis=1)]
    return ScalarField(np.array([g(int(c)) for c in cls], dtype=complex), "pullback")


# ---------------------------------------------------------------- classification

@dataclass
class Classification:
    mode: str
    passed: bool
    threshold: float | None
    checked: int
    bad_pairs: int
    eps_f: float
    R: float | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _close_pairs(space: FiniteMetricSpace, R: float, cap: int, rng) -> tuple:
    pts = np.arange(space.n)
    vs, ws = [], []
    for v in pts:
        near = pts[(space.d(int(v), pts) <= R + TOL) & (pts > v)]
        vs.append(np.full(len(near), v))
        ws.append(near)
    v, w = np.concatenate(vs), np.concatenate(ws)
    if len(v) > cap:
        keep = np.sort(rng.choice(len(v), cap, replace=False))
        v, w = v[keep], w[keep]
    return v, w


def classify_function(f: ScalarField, space: FiniteMetricSpace, mode: str, eps_f: float,
                      R: float = 1.0, engine: ProductEngine | None = None,
                      n_pairs: int = 200_000, seed: int = 0) -> Classification:
    """Find the exceptional ball (slowly oscillating) or product threshold (Gromov).

    slowly-oscillating: the smallest radius r with |f(v) - f(w)| < eps_f for
    all v, w outside B_r(O) with d(v, w) <= R; it passes when r leaves room
    for such pairs inside the sample. gromov: the smallest R_g with
    (v|w) > R_g forcing |f(v) - f(w)| < eps_f on sampled pairs; it passes
    when some sampled pair lies above R_g.
    """
    rng = np.random.default_rng(seed)
    if mode == "slowly-oscillating":
        v, w = _close_pairs(space, R, n_pairs, rng)
        bad = np.abs(f.values[v] - f.values[w]) >= eps_f
        r0 = space.from_base
        rad = float(np.minimum(r0[v], r0[w])[bad].max()) if bad.any() else 0.0
        passed = (not bad.any()) or rad < space.radius - R - TOL
        return Classification(mode, bool(passed), rad if bad.any() else 0.0, int(len(v)),
                              int(bad.sum()), eps_f, R, {"sample_radius": space.radius})
    if mode == "gromov":
        if engine is None:
            raise PreconditionError("gromov mode needs a product engine")
        pts = [p for p in range(space.n) if not engine.in_ball(p) and p in engine.reps]
        if len(pts) < 2:
            return Classification(mode, True, 0.0, 0, 0, eps_f)
        pts = np.array(pts)
        m = min(n_pairs, 4000)
        prods, diffs = [], []
        for i in range(m):
            v = int(pts[rng.integers(len(pts))])
            if i % 2:
                w = int(pts[rng.integers(len(pts))])
            else:
                near = pts[space.d(v, pts) <= max(1.0, rng.uniform(0, space.radius / 4))]
                w = int(rng.choice(near))
            if v == w:
                continue
            p, _ = engine.product(("point", v), ("point", w))
            prods.append(p)
            diffs.append(abs(f.values[v] - f.values[w]))
        prods, diffs = np.array(prods), np.array(diffs)
        bad = diffs >= eps_f
        Rg = float(prods[bad].max()) if bad.any() else 0.0
        passed = (not bad.any()) or bool((prods > Rg).any())
        return Classification(mode, bool(passed), Rg, int(len(prods)), int(bad.sum()), eps_f,
                              None, {"max_product": float(prods.max()) if len(prods) else 0.0})
    raise PreconditionError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------- extension

@dataclass
class Extension:
    values: dict
    spread: dict
    agreement: dict
    gaps: list

    def to_dict(self) -> dict:
        return {"values": {str(c): [v.real, v.imag] for c, v in self.values.items()},
                "spread": {str(c): s for c, s in self.spread.items()},
                "agreement": {str(c): s for c, s in self.agreement.items()},
                "gaps": self.gaps}


def extend_to_boundary(f: ScalarField, model: BoundaryModel) -> Extension:
    """Value of f at the horizon sample of each class's representative ray.

    spread: largest deviation from it among member rays' horizon samples;
    agreement: largest difference between any two member rays there.
    """
    values, spread, agree, gaps = {}, {}, {}, []
    for c, members in enumerate(model.classes):
        ends = [r for r in members if model.rays[r].horizon is not None
                and model.rays[r].horizon + TOL >= model.horizon]
        if not ends:
            gaps.append(c)
            continue
        z = f.values[[model.rays[r].values[-1] for r in ends]]
        rep = f.values[model.rays[min(ends)].values[-1]]
        values[c] = complex(rep)
        spread[c] = float(np.abs(z - rep).max())
        agree[c] = float(np.abs(z[:, None] - z[None, :]).max())
    return Extension(values, spread, agree, gaps)


# ---------------------------------------------------------------- compactification

@dataclass
class CompactificationReport:
    radius: float
    n: int
    R: float
    checked: int
    violations: int
    min_product: float | None
    vacuous: bool
    reading: str
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compactification_radius(table: ConstantTable, R: float, n: int) -> float:
    t = table
    return t.lam * n * t.E * (R + t.lam * float(t.theta(R)) + t.k) + t.k


def compactification_bound(space: FiniteMetricSpace, L: GeodesicSystem, table: ConstantTable,
                           R: float, n: int, max_pairs: int = 100_000, seed: int = 0,
                           engine: ProductEngine | None = None) -> CompactificationReport:
    """Outside B_d(O), points within R of each other have product at least n."""
    d = compactification_radius(table, R, n)
    eng = engine or ProductEngine(space, L, table)
    rng = np.random.default_rng(seed)
    far = np.flatnonzero(space.from_base > d + TOL)
    checked, bad, wit = 0, 0, []
    low = np.inf
    pairs = []
    for v in far:
        near = far[(space.d(int(v), far) <= R + TOL) & (far > v)]
        pairs += [(int(v), int(w)) for w in near]
    if len(pairs) > max_pairs:
        keep = np.sort(rng.choice(len(pairs), max_pairs, replace=False))
        pairs = [pairs[i] for i in keep]
    for v, w in pairs:
        try:
            p, _ = eng.product(("point", v), ("point", w))
        except RepresentationError:
            continue
        checked += 1
        low = min(low, p)
        if p < n - TOL:
            bad += 1
            wit.append((space.points[v], space.points[w], p))
    reading = "d = lam * n * E * (R + lam * theta(R) + k) + k"
    return CompactificationReport(d, n, R, checked, bad, None if not checked else float(low),
                                  checked == 0, reading, wit[:20])
