"""Approximate ideal boundary: ray clusters, products, rho_eps and the chain metric."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import floyd_warshall

from .convexity import ConstantTable, base_rays
from .errors import HorizonError, PreconditionError
from .metric import TOL, DiscretePath, FiniteMetricSpace, GeodesicSystem, step_ray
from .products import ProductEngine, pair_traces, path_product


@dataclass
class BoundaryModel:
    space: FiniteMetricSpace
    rays: list
    ray_src: list
    ray_info: list
    classes: list
    class_of: np.ndarray
    maxdist: np.ndarray
    ray_prod: np.ndarray
    ray_sat: np.ndarray
    prod: np.ndarray
    prod_sat: np.ndarray
    rho: np.ndarray
    d_eps: np.ndarray
    epsilon: float
    table: ConstantTable
    base: object
    horizon: float
    caveats: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def engine(self, L: GeodesicSystem, reps: int = 4) -> ProductEngine:
        return ProductEngine(self.space, L, self.table, self, reps)

    def to_dict(self) -> dict:
        return {
            "base": self.base, "horizon": self.horizon, "epsilon": self.epsilon,
            "threshold": self.table.D, "K": self.table.K,
            "classes": [[int(self.ray_src[r]) for r in c] for c in self.classes],
            "rays": [list(r.values) for r in self.rays],
            "prod": self.prod.tolist(), "prod_sat": self.prod_sat.astype(int).tolist(),
            "rho": _finite(self.rho), "d_eps": _finite(self.d_eps),
            "caveats": self.caveats,
        }


def _finite(M: np.ndarray) -> list:
    return [[float(x) if np.isfinite(x) else None for x in row] for row in M]


# ---------------------------------------------------------------- extraction

def extract_limit_ray(seq, R: float, lam: float | None = None, k1: float | None = None):
    """Diagonal extraction of a ray from a sequence of segments at the base.

    At each integer time 0..R the surviving subsequence is cut down to the
    segments taking the most frequent value there; ties go to the value whose
    first holder has the smallest index. Returns the ray truncated at R and
    the surviving indices.
    """
    R = int(math.floor(R + TOL))
    alive = [i for i, g in enumerate(seq) if g.length + TOL >= R]
    if not alive:
        raise HorizonError(f"no segment reaches the horizon {R}")
    values = []
    for t in range(R + 1):
        at = {i: int(seq[i].at(float(t))) for i in alive}
        counts = Counter(at.values())
        top = max(counts.values())
        v = next(at[i] for i in alive if counts[at[i]] == top)
        values.append(v)
        alive = [i for i in alive if at[i] == v]
    g0 = seq[alive[0]]
    lam = g0.lam if lam is None else lam
    k1 = g0.lam + g0.k if k1 is None else k1
    return DiscretePath(tuple(values), 1.0, lam, k1, float(R)), alive


# ---------------------------------------------------------------- clustering

def cluster_rays(maxdist: np.ndarray, threshold: float) -> list:
    """Greedy complete-linkage clusters in ray order.

    Each ray joins the first existing class all of whose members stay within
    the threshold of it; otherwise it opens a new class.
    """
    classes: list = []
    close = maxdist <= threshold + TOL
    for r in range(maxdist.shape[0]):
        for c in classes:
            if close[r, c].all():
                c.append(r)
                break
        else:
            classes.append([r])
    return classes


def _chain_metric(rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    if n == 0:
        return rho.copy()
    W = rho.copy()
    np.fill_diagonal(W, 0.0)
    # zero and infinite entries count as missing edges
    out = floyd_warshall(W, directed=False)
    np.fill_diagonal(out, 0.0)
    return out


def _rho(prod: np.ndarray, epsilon: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        rho = np.where(prod > 0, np.power(np.maximum(prod, TOL), -epsilon), np.inf)
    np.fill_diagonal(rho, 0.0)
    return rho


def build_boundary(space: FiniteMetricSpace, L: GeodesicSystem, table: ConstantTable,
                   R: float | None = None, epsilon: float | None = None) -> BoundaryModel:
    """Cluster the stored rays at the base into boundary classes up to horizon R."""
    if epsilon is not None:
        table = table.with_epsilon(epsilon)
    if R is None:
        R = space.radius / 2
    R = float(math.floor(R + TOL))
    src = [i for i, r in enumerate(L.rays) if r.start == space.o
           and step_ray(r).horizon + TOL >= R]
    rays = base_rays(space, L, R)
    info = [L.ray_info[i] if i < len(L.ray_info) else {} for i in src]
    n = len(rays)
    if n == 0:
        z = np.zeros((0, 0))
        return BoundaryModel(space, [], [], [], [], np.zeros(0, dtype=np.int64), z, z, z.astype(bool),
                             z, z.astype(bool), z, z, table.epsilon, table, space.base, R,
                             ["no rays at the base reach the horizon"])
    V = np.stack([r.arr for r in rays])
    maxd, last = pair_traces(space, V, table.D1)
    ray_prod = last.astype(float)
    ray_sat = last == V.shape[1] - 1
    classes = cluster_rays(maxd, table.D)
    class_of = np.empty(n, dtype=np.int64)
    for c, members in enumerate(classes):
        class_of[members] = c
    m = len(classes)
    prod = np.full((m, m), R)
    prod_sat = np.ones((m, m), dtype=bool)
    for x in range(m):
        for y in range(x + 1, m):
            sub = ray_prod[np.ix_(classes[x], classes[y])]
            sat = ray_sat[np.ix_(classes[x], classes[y])]
            prod[x, y] = prod[y, x] = float(sub.max())
            prod_sat[x, y] = prod_sat[y, x] = bool(sat.any())
    rho = _rho(prod, table.epsilon)
    d_eps = _chain_metric(rho)
    model = BoundaryModel(space, rays, src, info, classes, class_of, maxd, ray_prod, ray_sat,
                          prod, prod_sat, rho, d_eps, table.epsilon, table, space.base, R)
    model.caveats = _caveats(model, V)
    return model


def _caveats(model: BoundaryModel, V: np.ndarray) -> list:
    out = []
    same = model.class_of[:, None] == model.class_of[None, :]
    close = model.maxdist <= model.table.D + TOL
    cross = int(np.triu(close & ~same, 1).sum())
    if cross:
        out.append(f"{cross} ray pairs in different classes stay within D up to the horizon")
    space = model.space
    growing = 0
    for c in model.classes:
        for i, a in enumerate(c):
            for b in c[i + 1:]:
                tr = space.d(V[a], V[b])
                if tr[-1] > 0 and tr[-1] >= tr.max() - TOL and tr[-1] > tr[0]:
                    growing += 1
    if growing:
        out.append(f"{growing} same-class ray pairs are still separating at the horizon;"
                   " they may split beyond it")
    return out


# ---------------------------------------------------------------- checks

@dataclass
class SandwichReport:
    ok: bool
    checked: int
    lower_worst: float
    upper_worst: float
    witnesses: list


def sandwich_check(model: BoundaryModel, tol: float = 1e-9) -> SandwichReport:
    """(1/2K) rho <= d_eps <= rho entrywise, plus the triangle inequality for d_eps."""
    rho, d, K = model.rho, model.d_eps, model.table.K
    n = rho.shape[0]
    wit, lo_w, hi_w = [], np.inf, np.inf
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            low = rho[x, y] / (2 * K)
            lo_w = min(lo_w, d[x, y] - low)
            hi_w = min(hi_w, rho[x, y] - d[x, y])
            if d[x, y] < low - tol or d[x, y] > rho[x, y] + tol:
                wit.append((x, y, float(rho[x, y]), float(d[x, y])))
    if n:
        tri = d[:, :, None] + d[None, :, :] - d[:, None, :].transpose(0, 2, 1)
        bad = np.argwhere(tri < -tol)
        wit += [("triangle",) + tuple(int(v) for v in b) for b in bad[:10]]
    return SandwichReport(not wit, n * (n - 1), float(lo_w), float(hi_w), wit[:50])


# ---------------------------------------------------------------- base change

@dataclass
class RebaseReport:
    mapping: dict
    unmatched: list
    C: float
    D_change: float
    pointwise_max: float
    pointwise_ok: bool
    product_checked: int
    product_worst: float
    product_ok: bool
    warnings: list

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def rebased_space(space: FiniteMetricSpace, base) -> FiniteMetricSpace:
    """The same space with another base point."""
    return replace(space, base=base, meta=dict(space.meta))


def segment_rays(L: GeodesicSystem, start: int, R: float) -> GeodesicSystem:
    """Add the segments from ``start`` of length at least R as rays truncated at R."""
    seen = {r.values for r in L.rays}
    rays, info = list(L.rays), list(L.ray_info) + [{}] * (len(L.rays) - len(L.ray_info))
    for sid in L.from_point(start):
        g = L.segments[sid]
        if g.length + TOL < R:
            continue
        r = replace(g, horizon=g.length).truncate(R)
        if r.values not in seen:
            seen.add(r.values)
            rays.append(r)
            info.append({"segment": sid})
    return replace(L, rays=tuple(rays), ray_info=tuple(info))


def rebase_constants(table: ConstantTable, dOO: float) -> tuple:
    """(C_OO', D_OO') for base points at distance dOO."""
    t = table
    C = t.E * (t.lam * t.theta_tilde(dOO) + dOO + t.D1 + 3 * t.k1) + 2 * t.D
    return C, t.E * (t.E * (t.D1 + 2 * t.k1) + t.D + 2 * C)


def rebase(model: BoundaryModel, L: GeodesicSystem, new_model: BoundaryModel) -> RebaseReport:
    """Correspond the classes at a new base O' to classes at O.

    For one ray per O'-class the segments from O to its grid points feed the
    limit extraction; the resulting O-ray is matched to the O-class nearest
    to it pointwise.
    """
    space, t = model.space, model.table
    o, o2 = space.o, space.index(new_model.base)
    dOO = float(space.d(o, o2))
    C, Dc = rebase_constants(t, dOO)
    mapping, unmatched, warnings, limits = {}, [], [], {}
    worst = 0.0
    for y, members in enumerate(new_model.classes):
        ray = new_model.rays[members[0]]
        seq = []
        for v in ray.values:
            sids = L.between(o, int(v))
            if sids:
                seq.append(L.segments[sids[0]])
        reach = max((g.length for g in seq), default=0.0)
        try:
            lim, _ = extract_limit_ray(seq, min(model.horizon, reach))
        except HorizonError:
            unmatched.append(y)
            continue
        limits[y] = lim
        m = min(lim.n, ray.n)
        worst = max(worst, float(space.d(lim.arr[:m], ray.arr[:m]).max()))
        best, bx = np.inf, None
        for x, cm in enumerate(model.classes):
            gap = min(float(space.d(lim.arr, model.rays[r].arr[:lim.n]).max()) for r in cm)
            if gap < best:
                best, bx = gap, x
        if best <= C + TOL:
            mapping[y] = bx
        else:
            unmatched.append(y)
    if unmatched:
        warnings.append(f"unmatched classes at the new base: {unmatched}")
    if len(set(mapping.values())) < len(mapping):
        warnings.append("correspondence is not injective at the sampled horizon")
    if len(set(mapping.values())) < model.n_classes:
        warnings.append("correspondence is not surjective at the sampled horizon")
    checked, pworst, bad = 0, np.inf, 0
    ys = sorted(limits)
    for i, a in enumerate(ys):
        for b in ys[i + 1:]:
            pa = new_model.prod[a, b]
            if new_model.prod_sat[a, b] or pa <= 0:
                continue
            po, _ = path_product(space, limits[a], limits[b], t.D1)
            checked += 1
            pworst = min(pworst, po * Dc / pa)
            if po < pa / Dc - TOL:
                bad += 1
    return RebaseReport(mapping, unmatched, C, Dc, worst, worst <= C + TOL, checked,
                        float(pworst), bad == 0, warnings)


# ---------------------------------------------------------------- diagnostics

@dataclass
class DiagnosticReport:
    mode: str
    ok: bool
    summary: dict
    rows: list

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ok": self.ok, "summary": self.summary}


def circle_anchor(theta: float, D1: float) -> float:
    """Product of two straight rays at angle theta, times sin(theta/2)."""
    s = math.sin(theta / 2)
    return (D1 / (2 * s)) * s


def diagnostics(model: BoundaryModel, mode: str, **kw) -> DiagnosticReport:
    if mode == "circle":
        return _circle(model)
    if mode == "join":
        return _join(model, kw["factors"])
    if mode == "entourage":
        return _entourage(model, kw["L"], kw.get("n", 1), kw.get("n_triples", 1000),
                          kw.get("seed", 0))
    raise PreconditionError(f"unknown diagnostic mode {mode!r}")


def _circle(model: BoundaryModel) -> DiagnosticReport:
    if not model.ray_info or any("angle" not in i for i in model.ray_info):
        raise PreconditionError("circle diagnostic needs rays with angles")
    ang = np.array([i["angle"] for i in model.ray_info])
    rows = []
    n = len(model.rays)
    for a in range(n):
        for b in range(a + 1, n):
            if model.ray_sat[a, b]:
                continue
            th = abs(ang[a] - ang[b]) % (2 * math.pi)
            th = min(th, 2 * math.pi - th)
            rows.append((float(th), float(model.ray_prod[a, b]),
                         float(model.ray_prod[a, b] * math.sin(th / 2))))
    vals = np.array([r[2] for r in rows]) if rows else np.zeros(0)
    D1 = model.table.D1
    anchors = {"pi": circle_anchor(math.pi, D1), "half_pi": circle_anchor(math.pi / 2, D1)}
    spread = float(vals.max() / vals.min()) if len(vals) and vals.min() > 0 else np.inf
    summary = {"pairs": len(rows), "min": float(vals.min()) if len(vals) else None,
               "max": float(vals.max()) if len(vals) else None, "spread": spread,
               "anchors": anchors, "target": D1 / 2}
    ok = bool(len(vals)) and spread <= 2 + TOL and \
        abs(anchors["pi"] - D1 / 2) <= 1e-12 and abs(anchors["half_pi"] - D1 / 2) <= 1e-12
    return DiagnosticReport("circle", ok, summary, rows)


def _join(model: BoundaryModel, factors) -> DiagnosticReport:
    """Map product classes to (class_X, class_Y, s) with the join identifications.

    At s = 0 the second coordinate is forgotten and at s = 1 the first; the
    map must send each class to a single such triple and distinct classes to
    distinct triples.
    """
    mx, my = factors
    if not model.ray_info or any("provenance" not in i for i in model.ray_info):
        raise PreconditionError("join diagnostic needs product rays with provenance")
    cx = {src: int(mx.class_of[i]) for i, src in enumerate(mx.ray_src)}
    cy = {src: int(my.class_of[i]) for i, src in enumerate(my.ray_src)}

    def triple(a, b, s):
        x, y = cx.get(a), cy.get(b)
        if s <= TOL:
            return (x, None, 0.0)
        if s >= 1 - TOL:
            return (None, y, 1.0)
        return (x, y, s)

    images, rows = [], []
    for members in model.classes:
        tri = set()
        for r in members:
            for a, b, s in model.ray_info[r]["provenance"]:
                tri.add(triple(a, b, s))
        images.append(tri)
        rows.append(sorted(tri, key=str))
    split = [c for c, tri in enumerate(images) if len(tri) > 1]
    owner: dict = {}
    for c, tri in enumerate(images):
        for z in tri:
            owner.setdefault(z, set()).add(c)
    collisions = [z for z, cs in owner.items() if len(cs) > 1]
    s_vals = sorted({z[2] for z in owner})
    expected = set()
    for s in s_vals:
        for x in range(mx.n_classes):
            for y in range(my.n_classes):
                expected.add(triple(mx.ray_src[mx.classes[x][0]], my.ray_src[my.classes[y][0]], s))
    misses = sorted(expected - set(owner), key=str)
    interior_split = [c for c in split if any(0 < z[2] < 1 for z in images[c])]
    summary = {"classes": model.n_classes, "triples": len(owner), "expected": len(expected),
               "split_classes": len(split), "interior_split": len(interior_split),
               "collisions": len(collisions), "misses": len(misses),
               "degenerate_s0": sum(1 for z in owner if z[2] == 0.0),
               "degenerate_s1": sum(1 for z in owner if z[2] == 1.0),
               "factor_classes": (mx.n_classes, my.n_classes)}
    ok = not split and not collisions and not misses
    return DiagnosticReport("join", ok, summary, rows)


def _entourage(model: BoundaryModel, L: GeodesicSystem, n: int, n_triples: int,
               seed: int) -> DiagnosticReport:
    """(p,q), (q,r) in V_m implies (p,r) in V_n at the composition scale m."""
    t = model.table
    eng = model.engine(L)
    space = model.space
    m = math.floor(t.D2 * t.D3 * t.D4 * (t.theta(1.0) + 1) * n) + 1
    pts = [v for v in range(space.n) if not eng.in_ball(v) and v in eng.reps]
    rng = np.random.default_rng(seed)
    if len(pts) > 200:
        pts = sorted(rng.choice(pts, 200, replace=False).tolist())
    ents = [("class", c) for c in range(model.n_classes)] + [("point", int(v)) for v in pts]

    def member(p, q, scale):
        if p[0] == "point" and q[0] == "point" and space.d(p[1], q[1]) < 1.0 / scale:
            return True
        if p == q:
            return True
        v, sat = eng.product(p, q)
        return sat or v > scale

    checked = premises = 0
    bad = []
    for _ in range(n_triples if ents else 0):
        p, q, r = (ents[i] for i in rng.integers(0, len(ents), 3))
        checked += 1
        if member(p, q, m) and member(q, r, m):
            premises += 1
            if not member(p, r, n):
                bad.append((p, q, r))
    summary = {"n": n, "m": m, "checked": checked, "premises": premises,
               "violations": len(bad)}
    return DiagnosticReport("entourage", not bad, summary, bad[:20])
