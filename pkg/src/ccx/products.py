"""Gromov products of paths, points and boundary classes, and audits of their laws."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .convexity import ConstantTable
from .errors import PreconditionError, RepresentationError
from .metric import TOL, DiscretePath, FiniteMetricSpace, GeodesicSystem


def ray_product(g: DiscretePath, e: DiscretePath, table: ConstantTable,
                space: FiniteMetricSpace) -> tuple:
    """(sup{t <= horizon : d(g(t), e(t)) <= D1}, saturated)."""
    if g.start != space.o or e.start != space.o:
        raise PreconditionError("rays must start at the base point")
    if g.step != e.step:
        raise PreconditionError("rays must share a parameter grid")
    m = min(g.n, e.n)
    trace = space.d(g.arr[:m], e.arr[:m])
    ok = np.flatnonzero(trace <= table.D1 + TOL)
    value = float(ok[-1] * g.step)
    return value, bool(ok[-1] == m - 1)


def pair_traces(space: FiniteMetricSpace, V: np.ndarray, threshold: float, chunk: int = 64):
    """Max pointwise distance and last time within threshold for all row pairs of V.

    V holds rays on a common integer grid, one per row. Returns (maxdist,
    last index with d <= threshold).
    """
    n, T = V.shape
    maxd = np.zeros((n, n))
    last = np.zeros((n, n), dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        tr = space.d(V[lo:hi, None, :], V[None, :, :])
        maxd[lo:hi] = tr.max(axis=2)
        ok = tr <= threshold + TOL
        last[lo:hi] = T - 1 - np.argmax(ok[:, :, ::-1], axis=2)
    return maxd, last


def path_product(space: FiniteMetricSpace, g: DiscretePath, e: DiscretePath, D1: float) -> tuple:
    """Product of two paths from the base over their common domain; (value, domain end)."""
    T = min(g.length, e.length)
    t = np.arange(0.0, T + TOL, 1.0)
    if t[-1] < T - TOL:
        t = np.append(t, T)
    tr = space.d(g.at(t), e.at(t))
    ok = np.flatnonzero(tr <= D1 + TOL)
    return float(t[ok[-1]]), T


@dataclass
class ProductTable:
    pairs: dict
    threshold: float
    horizon: float
    base: object

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entityA", "entityB", "value", "saturated"])
        for (a, b), (v, s) in sorted(self.pairs.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
            w.writerow([_label(a), _label(b), repr(float(v)), int(bool(s))])
        return buf.getvalue()


def _label(ent) -> str:
    return f"{ent[0]}:{ent[1]}"


class ProductEngine:
    """Entity products at one base point.

    Entities are ("point", index), ("class", id), ("ray", id) or
    ("segment", id). Suprema over representatives become maxima over the
    stored ones, at most ``reps`` segments per endpoint.
    """

    def __init__(self, space: FiniteMetricSpace, L: GeodesicSystem, table: ConstantTable,
                 model=None, reps: int = 4):
        self.space, self.L, self.table, self.model = space, L, table, model
        self.D1 = table.D1
        self.radius = table.ball_radius
        min_len = 2 * table.theta(0.0)
        self.reps: dict = {}
        for sid in L.from_point(space.o):
            g = L.segments[sid]
            if g.length + TOL >= min_len:
                lst = self.reps.setdefault(g.end, [])
                if len(lst) < reps:
                    lst.append(sid)
        self.horizon = model.horizon if model is not None else None
        self._cache: dict = {}

    def in_ball(self, v: int) -> bool:
        return bool(self.space.from_base[v] <= self.radius + TOL)

    def point_reps(self, v: int) -> list:
        sids = self.reps.get(v)
        if not sids:
            raise RepresentationError(f"no stored segment from the base to {self.space.points[v]!r}")
        return [self.L.segments[s] for s in sids]

    def _paths(self, ent) -> list:
        kind, x = ent
        if kind == "point":
            return self.point_reps(x)
        if kind == "segment":
            return [self.L.segments[x]]
        if kind == "ray":
            return [self.model.rays[x]]
        if kind == "class":
            return [self.model.rays[r] for r in self.model.classes[x]]
        raise PreconditionError(f"unknown entity kind {kind!r}")

    def product(self, p, q) -> tuple:
        """(value, saturated) for two entities."""
        key = (p, q) if (p, q) <= (q, p) else (q, p)
        if key in self._cache:
            return self._cache[key]
        out = self._product(p, q)
        self._cache[key] = out
        return out

    def _product(self, p, q) -> tuple:
        for kind, x in (p, q):
            if kind == "point" and self.in_ball(x):
                return 0.0, False
        if p[0] == "class" and q[0] == "class" and self.model is not None:
            return float(self.model.prod[p[1], q[1]]), bool(self.model.prod_sat[p[1], q[1]])
        best, sat = -1.0, False
        for g in self._paths(p):
            for e in self._paths(q):
                v, T = path_product(self.space, g, e, self.D1)
                s = g.is_ray and e.is_ray and v >= T - TOL
                if v > best or (v == best and s):
                    best, sat = v, s
        return best, sat

    def table_for(self, entities) -> ProductTable:
        pairs = {}
        for i, a in enumerate(entities):
            for b in entities[i:]:
                pairs[(a, b)] = self.product(a, b)
        return ProductTable(pairs, self.D1, self.horizon, self.space.base)


# ---------------------------------------------------------------- law audits

@dataclass
class LawResult:
    checked: int = 0
    skipped: int = 0
    violations: int = 0
    worst_ratio: float = np.inf
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"checked": self.checked, "skipped": self.skipped, "violations": self.violations,
                "worst_ratio": self.worst_ratio, "witnesses": self.witnesses[:20]}


@dataclass
class LawReport:
    laws: dict

    @property
    def ok(self) -> bool:
        return all(r.violations == 0 for r in self.laws.values())

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.laws.items()}


def _ultrametric(res: LawResult, vals, K: float, witness):
    """(x|z) >= min{(x|y), (y|z)} / K with saturation-aware skipping."""
    (xz, sxz), (xy, sxy), (yz, syz) = vals
    if sxz:
        res.checked += 1
        return
    m = min(xy, yz)
    arg_sat = sxy if xy <= yz else syz
    if arg_sat:
        res.skipped += 1
        return
    res.checked += 1
    if m <= 0:
        return
    ratio = xz / m
    res.worst_ratio = min(res.worst_ratio, ratio)
    if xz < m / K - TOL:
        res.violations += 1
        res.witnesses.append(witness)


def audit_product_laws(engine: ProductEngine, n_triples: int = 1000, n_points: int = 200,
                       seed: int = 0) -> LawReport:
    """Replay the product laws on sampled pairs and triples of the model."""
    t = engine.table
    model = engine.model
    space = engine.space
    rng = np.random.default_rng(seed)
    laws = {name: LawResult() for name in ("maximizer", "ultrametric_rays", "ultrametric_entities",
                                           "same_endpoint", "comparability", "perturbation")}
    nr = len(model.rays)
    R = model.horizon

    # (a) the trace at a non-saturated product value stays under D1 + 2 k1
    res = laws["maximizer"]
    for i in range(nr):
        for j in range(i + 1, nr):
            if model.ray_sat[i, j]:
                res.skipped += 1
                continue
            a = int(model.ray_prod[i, j])
            dist = float(space.d(model.rays[i].arr[a], model.rays[j].arr[a]))
            res.checked += 1
            if dist > t.D1 + 2 * t.k1 + TOL:
                res.violations += 1
                res.witnesses.append((i, j, a, dist))

    # (b) quasi-ultrametric on rays (D2) and on entities (D2 D3)
    res = laws["ultrametric_rays"]
    if nr:
        for x, y, z in rng.integers(0, nr, size=(n_triples, 3)):
            vals = [(model.ray_prod[a, b], model.ray_sat[a, b]) for a, b in ((x, z), (x, y), (y, z))]
            _ultrametric(res, vals, t.D2, (int(x), int(y), int(z)))
    pts = [v for v in range(space.n) if not engine.in_ball(v) and v in engine.reps]
    if len(pts) > n_points:
        pts = sorted(rng.choice(pts, size=n_points, replace=False).tolist())
    ents = [("class", c) for c in range(len(model.classes))] + [("point", int(v)) for v in pts]
    res = laws["ultrametric_entities"]
    if ents:
        for x, y, z in rng.integers(0, len(ents), size=(n_triples, 3)):
            a, b, c = ents[x], ents[y], ents[z]
            vals = [engine.product(p, q) for p, q in ((a, c), (a, b), (b, c))]
            _ultrametric(res, vals, t.D2 * t.D3, (a, b, c))

    # (c) segments from the base with a common endpoint
    res = laws["same_endpoint"]
    for v, sids in engine.reps.items():
        for i in range(len(sids)):
            for j in range(i + 1, len(sids)):
                g, e = engine.L.segments[sids[i]], engine.L.segments[sids[j]]
                val, _ = path_product(space, g, e, t.D1)
                need = min(g.length, e.length) / t.D2p
                res.checked += 1
                if need > 0:
                    res.worst_ratio = min(res.worst_ratio, val / need)
                if val < need - TOL:
                    res.violations += 1
                    res.witnesses.append((space.points[v], sids[i], sids[j], val, need))

    # (d) representative choices agree within D3
    res = laws["comparability"]
    for _ in range(min(n_triples, 4 * len(pts) ** 2) if len(pts) > 1 else 0):
        v, w = rng.choice(pts, 2, replace=False)
        gs, es = engine.point_reps(v), engine.point_reps(w)
        if len(gs) * len(es) < 2:
            continue
        vals = [path_product(space, g, e, t.D1)[0] for g in gs for e in es]
        lo, hi = min(vals), max(vals)
        res.checked += 1
        if lo > 0:
            res.worst_ratio = min(res.worst_ratio, lo * t.D3 / hi)
        if hi > t.D3 * lo + TOL:
            res.violations += 1
            res.witnesses.append((space.points[v], space.points[w], lo, hi))
    nc = len(model.classes)
    for x in range(nc):
        for y in range(x + 1, nc):
            sub = model.ray_prod[np.ix_(model.classes[x], model.classes[y])]
            sat = model.ray_sat[np.ix_(model.classes[x], model.classes[y])]
            if sat.any():
                res.skipped += 1
                continue
            lo, hi = float(sub.min()), float(sub.max())
            res.checked += 1
            if hi > t.D3 * lo + TOL:
                res.violations += 1
                res.witnesses.append(("class", x, y, lo, hi))

    # (e) perturbation law for adjacent points against classes
    res = laws["perturbation"]
    gate = 2 * t.D3 * t.theta(1.0)
    for _ in range(n_triples if len(pts) > 1 and nc else 0):
        v = pts[rng.integers(len(pts))]
        x = int(rng.integers(nc))
        pv, sv = engine.product(("point", v), ("class", x))
        if pv < gate:
            res.skipped += 1
            continue
        near = [w for w in pts if w != v and space.d(v, w) <= 1 + TOL]
        for w in near:
            pw, sw = engine.product(("point", w), ("class", x))
            res.checked += 1
            if not sw and pw < pv / (t.D3 * t.D4) - TOL:
                res.violations += 1
                res.witnesses.append((space.points[v], space.points[w], x, pv, pw))
    return LawReport(laws)

