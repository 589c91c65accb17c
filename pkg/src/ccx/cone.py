"""Open cone over a boundary model, exponential and logarithmic maps, and their audits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryModel
from .errors import ContractionError, DomainError, HorizonError
from .metric import TOL


@dataclass(frozen=True)
class ConePoint:
    t: float
    cls: int | None = None

    @property
    def is_apex(self) -> bool:
        return self.t <= 0

    def __eq__(self, other):
        if not isinstance(other, ConePoint):
            return NotImplemented
        if self.is_apex and other.is_apex:
            return True
        return self.t == other.t and self.cls == other.cls

    def __hash__(self):
        return hash((0.0, None)) if self.is_apex else hash((self.t, self.cls))


def cone_distance(p: ConePoint, q: ConePoint, d_eps: np.ndarray) -> float:
    """|t - s| + min(t, s) d(x, y); the apex is a single point."""
    if p.is_apex or q.is_apex:
        return abs(p.t - q.t)
    return abs(p.t - q.t) + min(p.t, q.t) * float(d_eps[p.cls, q.cls])


def _cone_dist_arrays(t, x, s, y, d_eps):
    return np.abs(t - s) + np.minimum(t, s) * d_eps[x, y]


class ConeMaps:
    """exp_eps and log^eps for one boundary model.

    Each class is represented by its smallest ray id; log uses the smallest
    ray id passing through the point and the first time it gets there.
    """

    def __init__(self, model: BoundaryModel, epsilon: float | None = None):
        self.model = model
        self.space = model.space
        self.epsilon = model.epsilon if epsilon is None else epsilon
        self.reps = [min(c) for c in model.classes]
        self.R = model.horizon
        hit: dict = {}
        for r, ray in enumerate(model.rays):
            for i, v in enumerate(ray.values):
                if v not in hit:
                    hit[v] = (r, i)
        self.hit = hit
        self.rep_arr = np.stack([model.rays[r].arr for r in self.reps]) if self.reps else None

    @property
    def t_max(self) -> float:
        return self.R ** self.epsilon

    def radial(self, t, power: float | None = None):
        e = self.epsilon if power is None else power
        return np.power(np.asarray(t, dtype=float), 1.0 / e)

    def exp_index(self, t, cls, clamp: bool = False, power: float | None = None):
        """Vectorised exp: (point indices, clamped flags)."""
        u = np.atleast_1d(self.radial(t, power))
        cls = np.broadcast_to(np.atleast_1d(cls), u.shape)
        over = u > self.R + 1e-9
        if over.any() and not clamp:
            raise HorizonError(f"radial parameter {float(u[over][0])} beyond horizon {self.R}")
        idx = np.floor(np.minimum(u, self.R) + 1e-9).astype(np.int64)
        return self.rep_arr[cls, idx], over

    def exp(self, p: ConePoint, clamp: bool = False):
        if p.is_apex:
            return self.space.o
        v, _ = self.exp_index(p.t, p.cls, clamp)
        return int(v[0])

    def log(self, v: int) -> ConePoint:
        if v == self.space.o:
            return ConePoint(0.0)
        if v not in self.hit:
            raise DomainError(f"{self.space.points[v]!r} lies on no stored ray")
        r, i = self.hit[v]
        return ConePoint(float(i) ** self.epsilon, int(self.model.class_of[r]))

    def image_points(self) -> list:
        return sorted(self.hit)


# ---------------------------------------------------------------- audits

@dataclass
class AuditResult:
    name: str
    checked: int
    violations: int
    worst_slack: float
    bound: float | None = None
    vacuous: bool = False
    witnesses: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "checked": self.checked, "violations": self.violations,
                "worst_slack": self.worst_slack, "bound": self.bound, "vacuous": self.vacuous,
                "witnesses": self.witnesses[:20]}

    def bound_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "displacement", "bound"])
        for row in self.rows:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def pseudocontinuity_audit(maps: ConeMaps, n_t: int = 64) -> AuditResult:
    """Radial parts >= 1 and cone distance below (2K D3^eps)^-1 keep exp_1 images close.

    The radial coordinate is used directly as the ray time, as in the
    reduction to exp_1.
    """
    m = maps.model
    t = m.table
    r0 = 1.0 / (2 * t.K * t.D3 ** maps.epsilon)
    bound = t.E * (t.D1 + 2 * t.k1) + t.D + t.lam + t.k1
    grid = np.linspace(1.0, maps.R, n_t)
    nc = m.n_classes
    checked = bad = 0
    worst = np.inf
    wit = []
    for x in range(nc):
        for y in range(nc):
            dxy = m.d_eps[x, y]
            for a in grid:
                # s >= a with (s - a) + a d < r0
                room = r0 - a * dxy
                if room <= 0:
                    continue
                s = a + np.linspace(0.0, room, 4, endpoint=False)
                s = s[s <= maps.R]
                va, _ = maps.exp_index(a, x, power=1.0)
                vs, _ = maps.exp_index(s, y, power=1.0)
                dist = maps.space.d(int(va[0]), vs)
                checked += len(s)
                worst = min(worst, float((bound - dist).min()))
                over = dist > bound + TOL
                bad += int(over.sum())
                wit += [(float(a), x, float(ss), y, float(dd)) for ss, dd in zip(s[over], dist[over])]
    return AuditResult("pseudocontinuity", checked, bad, float(worst), bound, checked == 0, wit)


def log_modulus_audit(maps: ConeMaps, n_pairs: int = 2000, seed: int = 0,
                      adjacent: bool = True) -> AuditResult:
    """d_cone(log v, log w) against eps*theta~(d) + (E tau(d))^eps (or the T < 1 cap)."""
    m, t = maps.model, maps.model.table
    eps = maps.epsilon
    pts = np.array(maps.image_points())
    rng = np.random.default_rng(seed)
    pairs = []
    if adjacent:
        for i, v in enumerate(pts[:-1]):
            dv = maps.space.d(int(v), pts[i + 1:])
            pairs += [(int(v), int(w)) for w in pts[i + 1:][dv <= 1 + TOL]]
            if len(pairs) >= n_pairs:
                break
        pairs = pairs[:n_pairs]
    if len(pts) > 1:
        for a, b in rng.integers(0, len(pts), size=(n_pairs, 2)):
            if a != b:
                pairs.append((int(pts[a]), int(pts[b])))

    def tau(r):
        return t.E * (r + t.lam * t.theta_tilde(r) + t.k1) + t.D

    checked = bad = 0
    worst = np.inf
    wit = []
    for v, w in pairs:
        p, q = maps.log(v), maps.log(w)
        d = float(maps.space.d(v, w))
        tv = maps.hit.get(v, (0, 0))[1] if v != maps.space.o else 0
        tw = maps.hit.get(w, (0, 0))[1] if w != maps.space.o else 0
        if min(tv, tw) >= 1:
            bound = eps * float(t.theta_tilde(d)) + (t.E * tau(d)) ** eps
        else:
            bound = 1 + (1 + float(t.theta_tilde(d))) ** eps
        dist = cone_distance(p, q, m.d_eps)
        checked += 1
        worst = min(worst, bound - dist)
        if dist > bound + TOL:
            bad += 1
            wit.append((maps.space.points[v], maps.space.points[w], dist, bound))
    return AuditResult("log_modulus", checked, bad, float(worst), None, checked == 0, wit)


@dataclass
class RoundtripReport:
    exp_log: AuditResult
    log_exp: AuditResult

    @property
    def ok(self) -> bool:
        return self.exp_log.ok and self.log_exp.ok

    def to_dict(self) -> dict:
        return {"exp_log": self.exp_log.to_dict(), "log_exp": self.log_exp.to_dict()}


def log_exp_bound(maps: ConeMaps, u: float, t_v: float) -> float:
    """Closeness bound for log(exp(t x)) against t x at ray time u = t^(1/eps)."""
    tb = maps.model.table
    eps = maps.epsilon
    th0 = float(tb.theta_tilde(0.0))
    c = 1.0 / (tb.E ** 2 * (tb.lam * th0 + tb.k1) + tb.D * tb.E)
    a = min(u, t_v)
    if a >= th0 + 1:
        return eps * th0 + (u ** eps) * (u - th0) ** (-eps) * c ** (-eps)
    return 2 * (2 * th0 + 1) ** eps


def audit_roundtrips(maps: ConeMaps, u_grid=None) -> RoundtripReport:
    m = maps.model
    D = m.table.D
    # exp o log on every image point
    checked = bad = 0
    worst = np.inf
    wit = []
    for v in maps.image_points():
        p = maps.log(v)
        w = maps.exp(p)
        disp = float(maps.space.d(v, w))
        checked += 1
        worst = min(worst, D - disp)
        if disp > D + TOL:
            bad += 1
            wit.append((maps.space.points[v], maps.space.points[w], disp))
    el = AuditResult("exp_log", checked, bad, float(worst), D, checked == 0, wit)

    if u_grid is None:
        u_grid, u = [], 1
        while u <= m.horizon + TOL:
            u_grid.append(float(u))
            u *= 2
    checked = bad = 0
    worst = np.inf
    wit, rows = [], []
    for u in u_grid:
        t = u ** maps.epsilon
        for x in range(m.n_classes):
            v, over = maps.exp_index(t, x, clamp=True)
            if over[0]:
                continue
            q = maps.log(int(v[0]))
            disp = cone_distance(q, ConePoint(t, x), m.d_eps)
            t_v = q.t ** (1 / maps.epsilon) if not q.is_apex else 0.0
            bound = log_exp_bound(maps, u, t_v)
            checked += 1
            worst = min(worst, bound - disp)
            rows.append((t, disp, bound))
            if disp > bound + TOL:
                bad += 1
                wit.append((u, x, disp, bound))
    le = AuditResult("log_exp", checked, bad, float(worst), None, checked == 0, wit, rows)
    return RoundtripReport(el, le)


# ---------------------------------------------------------------- contraction

@dataclass(frozen=True)
class RadialContraction:
    breaks: tuple
    values: tuple
    bound: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        b, v = np.asarray(self.breaks), np.asarray(self.values)
        inside = np.interp(t, b, v)
        # beyond the last break r continues with unit slope, so it stays unbounded
        return np.where(t > b[-1], v[-1] + (t - b[-1]), inside)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breaks)

    def to_dict(self) -> dict:
        return {"breaks": list(self.breaks), "values": list(self.values), "bound": self.bound}


def _window_ok(maps: ConeMaps, ts: np.ndarray, rs: np.ndarray, j: int, bound: float):
    """Check new column j against earlier columns within cone distance 1."""
    m = maps.model
    nc = m.n_classes
    lo = np.searchsorted(ts, ts[j] - 1.0 - TOL)
    cols = np.arange(lo, j + 1)
    X, Y = np.meshgrid(np.arange(nc), np.arange(nc), indexing="ij")
    worst = 0.0
    for i in cols:
        dc = _cone_dist_arrays(ts[j], X, ts[i], Y, m.d_eps)
        mask = dc <= 1.0 + TOL
        if not mask.any():
            continue
        va, _ = maps.exp_index(np.full(nc, rs[j]), np.arange(nc), clamp=True)
        vb, _ = maps.exp_index(np.full(nc, rs[i]), np.arange(nc), clamp=True)
        dist = maps.space.d(va[X[mask]], vb[Y[mask]])
        k = int(np.argmax(dist))
        if dist[k] > worst:
            worst = float(dist[k])
        if dist[k] > bound + TOL:
            return False, (float(ts[j]), int(X[mask][k]), float(ts[i]), int(Y[mask][k]), float(dist[k]))
    return True, worst


def build_radial_contraction(maps: ConeMaps, bound: float | None = None, step: float | None = None,
                             max_steps: int = 4000) -> RadialContraction:
    """Greedy 1-Lipschitz radial contraction with plateaus.

    The domain is scanned on a uniform grid. Each step first tries unit slope;
    if some pair of cone points within distance 1 then maps to images further
    apart than ``bound`` the step is taken flat instead. The scan stops once r
    reaches the top of the represented cone range.
    """
    t = maps.model.table
    if bound is None:
        bound = 4 * (t.E * (t.D1 + 2 * t.k1) + t.D)
    top = maps.t_max
    if maps.model.n_classes <= 1:
        return RadialContraction((0.0, top), (0.0, top), bound)
    h = top / 64 if step is None else step
    ts, rs = [0.0], [0.0]
    for _ in range(max_steps):
        if rs[-1] >= top - TOL:
            break
        tn = ts[-1] + h
        for slope in (1.0, 0.0):
            rn = min(top, rs[-1] + slope * h)
            ok, info = _window_ok(maps, np.array(ts + [tn]), np.array(rs + [rn]), len(ts), bound)
            if ok:
                ts.append(tn)
                rs.append(rn)
                break
        else:
            raise ContractionError(f"no 1-Lipschitz step keeps images within {bound}",
                                   witness=info)
    else:
        raise ContractionError(f"contraction did not reach the cone top within {max_steps} steps")
    return RadialContraction(tuple(ts), tuple(rs), bound)


def contraction_audit(maps: ConeMaps, r: RadialContraction, n_pairs: int = 1000,
                      seed: int = 0) -> AuditResult:
    """d_cone(p, q) <= 1 implies d(exp r p, exp r q) <= bound on sampled pairs."""
    m = maps.model
    rng = np.random.default_rng(seed)
    T = r.breaks[-1]
    checked = bad = 0
    worst = np.inf
    wit = []
    nc = m.n_classes
    for _ in range(n_pairs):
        a = rng.uniform(0, T)
        b = min(T, max(0.0, a + rng.uniform(-1, 1)))
        x, y = (int(z) for z in rng.integers(0, nc, 2))
        if cone_distance(ConePoint(a, x), ConePoint(b, y), m.d_eps) > 1:
            continue
        va, _ = maps.exp_index(r(a), x, clamp=True)
        vb, _ = maps.exp_index(r(b), y, clamp=True)
        dist = float(maps.space.d(int(va[0]), int(vb[0])))
        checked += 1
        worst = min(worst, r.bound - dist)
        if dist > r.bound + TOL:
            bad += 1
            wit.append((a, x, b, y, dist))
    return AuditResult("contraction", checked, bad, float(worst), r.bound, checked == 0, wit)
