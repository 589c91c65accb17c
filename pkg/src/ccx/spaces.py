"""Sample spaces with their geodesic families, products and pushforwards."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import PushforwardError, RecipeError, ResourceError
from .metric import TOL, DiscretePath, FiniteMetricSpace, GeodesicSystem

POLICIES = {
    "euclidean_l2_disc": ("affine",),
    "grid_l1": ("staircase-all",),
    "tree": ("canonical",),
    "hyperbolic_disc": ("canonical",),
}

# Constants the continuum model satisfies: (lambda, k, E, C) with theta = id.
NOMINAL = {
    "euclidean_l2_disc": (1.0, 0.0, 1.0, 0.0),
    "tree": (1.0, 0.0, 1.0, 0.0),
}

ALL_PAIRS_LIMIT = 40_000


@dataclass(frozen=True)
class SpaceRecipe:
    kind: str
    size: int
    policy: str
    grid_step: float = 1.0
    directions: int = 64
    pair_budget: int = 2000
    seed: int = 0
    ray_bases: tuple = ()
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in POLICIES:
            raise RecipeError(f"unknown kind {self.kind!r}")
        if self.policy not in POLICIES[self.kind]:
            raise RecipeError(f"policy {self.policy!r} is not available for {self.kind}")
        if int(self.size) < 2:
            raise RecipeError("size must be at least 2")
        if self.grid_step <= 0:
            raise RecipeError("grid_step must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceRecipe":
        try:
            return cls(kind=d["kind"], size=int(d["size"]), policy=d["policy"],
                       grid_step=float(d.get("grid_step", 1.0)),
                       directions=int(d.get("directions", 64)),
                       pair_budget=int(d.get("pair_budget", 2000)),
                       seed=int(d.get("seed", 0)),
                       ray_bases=tuple(tuple(b) for b in d.get("ray_bases", ())))
        except KeyError as e:
            raise RecipeError(f"recipe is missing {e.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size, "policy": self.policy,
                "grid_step": self.grid_step, "directions": self.directions,
                "pair_budget": self.pair_budget, "seed": self.seed,
                "ray_bases": [list(b) for b in self.ray_bases]}


def gen_space(recipe: SpaceRecipe, grid_step: float | None = None):
    """Build the sampled space and its geodesic family for a recipe."""
    recipe.validate()
    h = recipe.grid_step if grid_step is None else grid_step
    if recipe.kind == "tree":
        X, L = binary_tree(recipe.size, recipe.pair_budget, recipe.seed)
    elif recipe.kind == "grid_l1":
        X, L = staircase_grid(recipe.size, h, recipe.pair_budget, recipe.seed)
    elif recipe.kind == "euclidean_l2_disc":
        X, L = euclidean_disc(recipe.size, h, recipe.directions, recipe.pair_budget,
                              recipe.seed, recipe.ray_bases)
    else:
        X, L = hyperbolic_disc(recipe.size, recipe.pair_budget, recipe.seed)
    X.meta["recipe"] = recipe.to_dict()
    if recipe.kind in NOMINAL:
        X.meta["nominal"] = NOMINAL[recipe.kind]
    return X, L


# ---------------------------------------------------------------- graphs

def _pair_plan(n: int, base: int, budget: int, rng) -> list:
    if n * n <= ALL_PAIRS_LIMIT:
        return [(i, j) for i in range(n) for j in range(n)]
    pairs = [(base, j) for j in range(n)]
    seen = set(pairs)
    m = max(2, int(math.isqrt(budget)))
    pick = np.sort(rng.choice(n, size=min(m, n), replace=False))
    for i in pick:
        for j in pick:
            if (i, j) not in seen:
                seen.add((int(i), int(j)))
                pairs.append((int(i), int(j)))
    return pairs


def _walk(pred: np.ndarray, i: int, j: int) -> tuple:
    out = [j]
    while out[-1] != i:
        out.append(int(pred[i, out[-1]]))
    return tuple(out[::-1])


def graph_space(n: int, edges, ids, base: int, label: str, budget: int = 2000,
                seed: int = 0, pairs=None):
    """Unit-edge graph with hop metric and canonical shortest paths."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    A = csr_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    D, pred = shortest_path(A, directed=False, unweighted=True, return_predecessors=True)
    if not np.isfinite(D).all():
        raise RecipeError("graph is disconnected")
    X = FiniteMetricSpace(tuple(ids), ids[base], label, dist=D)
    if pairs is None:
        pairs = _pair_plan(n, base, budget, np.random.default_rng(seed))
    segs = tuple(DiscretePath(_walk(pred, i, j)) for i, j in pairs)
    return X, GeodesicSystem(segs), pred


def binary_tree(depth: int, budget: int = 2000, seed: int = 0):
    """Binary tree of the given depth, rooted at the base; rays run to leaves."""
    n = 2 ** (depth + 1) - 1
    ids = ["r"]
    for lev in range(1, depth + 1):
        ids += ["r" + format(b, f"0{lev}b") for b in range(2 ** lev)]
    edges = [((c - 1) // 2, c) for c in range(1, n)]
    X, L, pred = graph_space(n, edges, ids, 0, f"binary tree depth {depth}", budget, seed)
    leaves = range(2 ** depth - 1, n)
    rays = tuple(DiscretePath(_walk(pred, 0, v), horizon=float(depth)) for v in leaves)
    info = tuple({"leaf": ids[v]} for v in leaves)
    return X, GeodesicSystem(L.segments, rays, ray_info=info)


def path_graph(n: int):
    """Path on n vertices based at one end; canonical geodesics, no rays."""
    edges = [(i, i + 1) for i in range(n - 1)]
    X, L, _ = graph_space(n, edges, list(range(n)), 0, f"path P{n}")
    return X, L


def tripod(arm: int):
    """Three arms of the given length glued at the base point."""
    ids = ["c"] + [f"{a}{i}" for a in "abc" for i in range(1, arm + 1)]
    edges = []
    for a in range(3):
        first = 1 + a * arm
        edges.append((0, first))
        edges += [(first + i, first + i + 1) for i in range(arm - 1)]
    X, L, pred = graph_space(len(ids), edges, ids, 0, f"tripod arm {arm}")
    rays = tuple(DiscretePath(_walk(pred, 0, (a + 1) * arm), horizon=float(arm)) for a in range(3))
    return X, GeodesicSystem(L.segments, rays)


def hyperbolic_disc(size: int, budget: int = 2000, seed: int = 0, spacing: float = 0.5):
    """Unit-ball graph over rings in the Poincare disc.

    Rings sit at hyperbolic radius j*spacing up to ``size``; each ring carries
    about one point per ``spacing`` of hyperbolic circumference.
    """
    radii, angles, ids = [0.0], [0.0], ["h0_0"]
    for j in range(1, int(round(size / spacing)) + 1):
        r = j * spacing
        m = max(3, int(math.ceil(2 * math.pi * math.sinh(r) / spacing)))
        for q in range(m):
            radii.append(r)
            angles.append(2 * math.pi * q / m)
            ids.append(f"h{j}_{q}")
    r = np.asarray(radii)
    a = np.asarray(angles)
    cosh_d = (np.cosh(r)[:, None] * np.cosh(r)[None, :]
              - np.sinh(r)[:, None] * np.sinh(r)[None, :] * np.cos(a[:, None] - a[None, :]))
    hd = np.arccosh(np.maximum(cosh_d, 1.0))
    iu, ju = np.nonzero(np.triu(hd <= 1.0 + TOL, 1))
    X, L, pred = graph_space(len(ids), np.column_stack([iu, ju]), ids, 0,
                             f"hyperbolic disc radius {size}", budget, seed)
    outer = np.flatnonzero(np.isclose(r, r.max()))
    R = float(X.dist[0, outer].min())
    rays = tuple(DiscretePath(_walk(pred, 0, int(v))).truncate(R) for v in outer)
    info = tuple({"angle": float(a[v])} for v in outer)
    X.meta["poincare"] = np.column_stack([np.tanh(r / 2) * np.cos(a), np.tanh(r / 2) * np.sin(a)])
    return X, _dedupe_rays(GeodesicSystem(L.segments, rays, ray_info=info))


def _dedupe_rays(L: GeodesicSystem) -> GeodesicSystem:
    seen = {}
    rays, info = [], []
    for g, inf in zip(L.rays, L.ray_info):
        if g.values in seen:
            prov = info[seen[g.values]].setdefault("merged", [])
            prov.append(inf)
            continue
        seen[g.values] = len(rays)
        rays.append(g)
        info.append(dict(inf))
    return GeodesicSystem(L.segments, tuple(rays), L.symmetric, L.prefix_closed, tuple(info), L.meta)


# ---------------------------------------------------------------- lattices

def _lattice_ids(P: np.ndarray) -> list:
    return [f"{int(x)},{int(y)}" for x, y in P]


def staircase_grid(size: int, h: float = 1.0, budget: int = 2000, seed: int = 0):
    """Square [-size, size]^2 lattice with l1 metric and L-shaped monotone paths.

    From the base every point gets its horizontal-first and vertical-first
    path; a seeded set of further point pairs gets both as well.
    """
    s = int(size)
    g = np.arange(-s, s + 1)
    P = np.array([(x, y) for x in g for y in g], dtype=np.int64)
    index = {(int(x), int(y)): i for i, (x, y) in enumerate(P)}
    X = FiniteMetricSpace(tuple(_lattice_ids(P)), "0,0", f"l1 grid radius {s}",
                          coords=P * h, norm="l1", meta={"grid_slack": 0.0, "lattice": P})

    def run(a, b, axis):
        if a == b:
            return []
        sgn = 1 if b > a else -1
        return list(range(a + sgn, b + sgn, sgn))

    def lpath(p, q, horizontal_first):
        (x0, y0), (x1, y1) = p, q
        pts = [(x0, y0)]
        if horizontal_first:
            pts += [(x, y0) for x in run(x0, x1, 0)]
            pts += [(x1, y) for y in run(y0, y1, 1)]
        else:
            pts += [(x0, y) for y in run(y0, y1, 1)]
            pts += [(x, y1) for x in run(x0, x1, 0)]
        return tuple(index[p] for p in pts)

    rng = np.random.default_rng(seed)
    pairs = [((0, 0), (int(x), int(y))) for x, y in P]
    m = max(2, int(math.isqrt(budget // 2)))
    pick = P[np.sort(rng.choice(len(P), size=min(m, len(P)), replace=False))]
    pairs += [(tuple(map(int, p)), tuple(map(int, q))) for p in pick for q in pick
              if tuple(p) != tuple(q)]
    seen, segs = set(), []
    for p, q in pairs:
        for hf in (True, False):
            v = lpath(p, q, hf)
            if v not in seen:
                seen.add(v)
                segs.append(DiscretePath(v, step=h))
    axes = [(s, 0), (0, s), (-s, 0), (0, -s)]
    rays = tuple(DiscretePath(lpath((0, 0), q, True), step=h, horizon=s * h) for q in axes)
    info = tuple({"angle": math.atan2(q[1], q[0])} for q in axes)
    return X, GeodesicSystem(tuple(segs), rays, ray_info=info)


def staircase(n: int, length: int, X: FiniteMetricSpace) -> DiscretePath:
    """The horizontal-then-vertical path gamma_n on [0, length] in a lattice space."""
    pts = [(t, 0) if t <= n else (n, t - n) for t in range(length + 1)]
    return DiscretePath(tuple(X.index(f"{x},{y}") for x, y in pts))


def snap(points: np.ndarray, h: float, inside=None) -> np.ndarray:
    """Nearest lattice point (spacing h); ties go to the lexicographically smallest."""
    z = np.asarray(points, dtype=float) / h
    f = np.floor(z)
    cands = [f + np.array(off) for off in ((0, 0), (0, 1), (1, 0), (1, 1))]
    best = np.full(len(z), np.inf)
    out = np.zeros_like(f)
    for c in cands:
        dist = np.round(np.sqrt(((c - z) ** 2).sum(axis=1)), 9)
        if inside is not None:
            dist = np.where(inside(c), dist, np.inf)
        take = dist < best
        best = np.where(take, dist, best)
        out[take] = c[take]
    return out.astype(np.int64)


def euclidean_disc(size: int, h: float = 1.0, directions: int = 64, budget: int = 2000,
                   seed: int = 0, ray_bases=()):
    """Lattice sample of the l2 disc with snapped straight segments and rays.

    Segments run from the base to every sample and between all ordered pairs
    of a seeded point subset; rays go from the base in ``directions``
    equally spaced directions up to the disc radius.
    """
    s = int(size)
    g = np.arange(-s, s + 1)
    P = np.array([(x, y) for x in g for y in g if x * x + y * y <= s * s], dtype=np.int64)
    index = {(int(x), int(y)): i for i, (x, y) in enumerate(P)}
    X = FiniteMetricSpace(tuple(_lattice_ids(P)), "0,0", f"l2 disc radius {s}",
                          coords=P * h, norm="l2",
                          meta={"grid_slack": math.sqrt(2) * h, "lattice": P})

    def inside(c):
        return (c ** 2).sum(axis=1) <= s * s + TOL

    def seg(p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        r = float(np.linalg.norm(q - p)) * h
        N = max(1, int(math.ceil(r / h - TOL))) if r > 0 else 0
        if N == 0:
            return DiscretePath((index[tuple(map(int, p))],), step=h)
        lam = np.arange(N + 1)[:, None] / N
        pts = snap((p + lam * (q - p)) * h, h, inside)
        pts[0], pts[-1] = p, q
        return DiscretePath(tuple(index[(int(x), int(y))] for x, y in pts), step=r / N)

    def ray(p, theta):
        u = np.array([math.cos(theta), math.sin(theta)])
        p = np.asarray(p, float)
        # largest t with p + t u inside the disc
        b = float(p @ u)
        tmax = -b + math.sqrt(max(b * b - (p @ p - s * s), 0.0))
        N = int(math.floor(tmax + TOL))
        pts = snap((p + np.arange(N + 1)[:, None] * u) * h, h, inside)
        return DiscretePath(tuple(index[(int(x), int(y))] for x, y in pts), step=h,
                            horizon=N * h)

    rng = np.random.default_rng(seed)
    segs = [seg((0, 0), q) for q in P]
    m = max(2, int(math.isqrt(budget)))
    pick = P[np.sort(rng.choice(len(P), size=min(m, len(P)), replace=False))]
    segs += [seg(p, q) for p in pick for q in pick if tuple(p) != tuple(q)]
    rays, info = [], []
    for b in [(0, 0)] + [tuple(b) for b in ray_bases]:
        for j in range(directions):
            theta = 2 * math.pi * j / directions
            rays.append(ray(b, theta))
            info.append({"angle": theta, "anchor": f"{b[0]},{b[1]}"})
    return X, GeodesicSystem(tuple(segs), tuple(rays), ray_info=tuple(info))


# ---------------------------------------------------------------- products

def _combine(g: DiscretePath, e: DiscretePath) -> tuple:
    """Values of (g(a t/(a+b)), e(b t/(a+b))) snapped to the product grid."""
    a, b = g.length, e.length
    unit = g.step == 1.0 and e.step == 1.0
    if a + b == 0:
        return (g.start, e.start), 1.0
    if unit:
        t = np.arange(int(round(a + b)) + 1)
        i = np.floor(a * t / (a + b) + 0.5).astype(np.int64)
        return (g.arr[i], e.arr[t - i]), 1.0
    h = min(g.step, e.step)
    N = int(math.ceil((a + b) / h - TOL))
    tau = np.arange(N + 1) * (a + b) / N
    return (g.at(a * tau / (a + b), "nearest"), e.at(b * tau / (a + b), "nearest")), (a + b) / N


def gen_product(X, LX, Y, LY, cap: int = 20_000, s_grid=(0.0, 0.25, 0.5, 0.75, 1.0),
                pair_budget: int = 20_000, seed: int = 0):
    """l1 product of two spaces with combined segments and rays.

    Segments: for every product point the combination of the first base
    segments of its coordinates, plus all (or a seeded sample of) segment
    pairs. Rays: (g((1-s)t), e(st)) for each pair of factor rays and s.
    """
    n = X.n * Y.n
    if n > cap:
        raise ResourceError(f"product has {n} points, cap is {cap}")
    ix = np.repeat(np.arange(X.n), Y.n)
    iy = np.tile(np.arange(Y.n), X.n)
    ids = tuple(f"{X.points[a]}|{Y.points[b]}" for a, b in zip(ix, iy))
    Z = FiniteMetricSpace(ids, f"{X.base}|{Y.base}", f"({X.label}) x ({Y.label})",
                          factors=(X, Y, ix, iy),
                          meta={"grid_slack": X.meta.get("grid_slack", 0.0) + Y.meta.get("grid_slack", 0.0)})

    def zid(a, b):
        return np.asarray(a) * Y.n + np.asarray(b)

    lam = max([g.lam for g in LX.segments] + [e.lam for e in LY.segments])
    kk = max(g.k for g in LX.segments) + max(e.k for e in LY.segments)
    seen, segs = set(), []

    def add(g, e):
        (va, vb), step = _combine(g, e)
        v = tuple(int(z) for z in np.atleast_1d(zid(va, vb)))
        if (v, step) not in seen:
            seen.add((v, step))
            segs.append(DiscretePath(v, step, lam, kk))

    firstX = {}
    for sid in LX.from_point(X.o)[::-1]:
        firstX[LX.segments[sid].end] = LX.segments[sid]
    firstY = {}
    for sid in LY.from_point(Y.o)[::-1]:
        firstY[LY.segments[sid].end] = LY.segments[sid]
    for a in range(X.n):
        for b in range(Y.n):
            if a in firstX and b in firstY:
                add(firstX[a], firstY[b])
    total = len(LX.segments) * len(LY.segments)
    if total <= pair_budget:
        for g in LX.segments:
            for e in LY.segments:
                add(g, e)
    else:
        rng = np.random.default_rng(seed)
        pick = rng.choice(total, size=pair_budget, replace=False)
        for p in np.sort(pick):
            add(LX.segments[p // len(LY.segments)], LY.segments[p % len(LY.segments)])

    from .metric import step_ray

    rx = [(a, step_ray(r)) for a, r in enumerate(LX.rays) if r.start == X.o]
    ry = [(b, step_ray(r)) for b, r in enumerate(LY.rays) if r.start == Y.o]
    rays, info, where = [], [], {}
    if rx and ry:
        R = int(min(min(r.horizon for _, r in rx), min(r.horizon for _, r in ry)))
        t = np.arange(R + 1)
        k1 = max(r.k for _, r in rx) + max(r.k for _, r in ry)
        for a, g in rx:
            for b, e in ry:
                for s in s_grid:
                    i = np.floor((1 - s) * t + 0.5).astype(np.int64)
                    v = tuple(int(z) for z in zid(g.arr[i], e.arr[t - i]))
                    prov = (a, b, float(s))
                    if v in where:
                        info[where[v]]["provenance"].append(prov)
                        continue
                    where[v] = len(rays)
                    rays.append(DiscretePath(v, 1.0, lam, k1, float(R)))
                    info.append({"provenance": [prov]})
    return Z, GeodesicSystem(tuple(segs), tuple(rays), ray_info=tuple(info))


# ---------------------------------------------------------------- pushforward

def check_quasi_isometry(f: np.ndarray, A: float, X: FiniteMetricSpace, Y: FiniteMetricSpace,
                         sample: int = 20_000, seed: int = 0):
    """Sampled check that f is an (A, A)-quasi-isometry with A-dense image."""
    f = np.asarray(f, dtype=np.int64)
    rng = np.random.default_rng(seed)
    if X.n * X.n <= sample:
        i, j = np.meshgrid(np.arange(X.n), np.arange(X.n), indexing="ij")
        i, j = i.ravel(), j.ravel()
    else:
        i, j = rng.integers(0, X.n, size=(2, sample))
    dx, dy = X.d(i, j), Y.d(f[i], f[j])
    if A == 0:
        bad = np.flatnonzero(np.abs(dx - dy) > TOL)
    else:
        bad = np.flatnonzero((dy > A * dx + A + TOL) | (dy < dx / A - A - TOL))
    if len(bad):
        m = bad[0]
        raise PushforwardError("embedding bound fails",
                               (X.points[i[m]], X.points[j[m]], float(dx[m]), float(dy[m])))
    img = np.unique(f)
    near = np.full(Y.n, np.inf)
    for chunk in np.array_split(img, max(1, len(img) // 256)):
        near = np.minimum(near, Y.d(np.arange(Y.n)[:, None], chunk[None, :]).min(axis=1))
    far = np.flatnonzero(near > A + TOL)
    if len(far):
        raise PushforwardError("image is not A-dense", (Y.points[far[0]], float(near[far[0]])))


def pushforward_system(f, A: float, LX: GeodesicSystem, X: FiniteMetricSpace,
                       Y: FiniteMetricSpace, check: bool = True) -> GeodesicSystem:
    """Push every member through f; members carry the (A lam, A(k+3)) bounds."""
    f = np.asarray(f, dtype=np.int64)
    if check:
        check_quasi_isometry(f, A, X, Y)

    def push(g):
        lam = max(1.0, A) * g.lam
        k = A * (g.k + 3) if A > 0 else g.k
        return DiscretePath(tuple(int(v) for v in f[g.arr]), g.step, lam, k, g.horizon)

    rays = [push(r) for r in LX.rays if r.start == X.o]
    return GeodesicSystem(tuple(push(g) for g in LX.segments), tuple(rays),
                          meta={"pushforward_A": A})


def nearest_map(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> np.ndarray:
    """Map each point of a coordinate space to its nearest point in another."""
    out = np.empty(X.n, dtype=np.int64)
    for lo in range(0, X.n, 512):
        idx = np.arange(lo, min(lo + 512, X.n))
        diff = X.coords[idx][:, None, :] - Y.coords[None, :, :]
        out[idx] = np.argmin(np.sqrt((diff ** 2).sum(-1)), axis=1)
    return out
