"""Contraction schedule onto the exp image, its homotopy tracks, and bicombings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cone import ConeMaps
from .convexity import ConstantTable
from .errors import CoverageError
from .metric import TOL, DiscretePath, FiniteMetricSpace, GeodesicSystem


def _min_dist_to(space: FiniteMetricSpace, targets: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(space.n)
    allp = np.arange(space.n)
    for lo in range(0, space.n, chunk):
        rows = allp[lo:lo + chunk]
        out[lo:lo + chunk] = space.d(rows[:, None], targets[None, :]).min(axis=1)
    return out


def greedy_net(space: FiniteMetricSpace, order) -> np.ndarray:
    """Maximal 1-discrete subset, scanning points in the given order."""
    covered = np.zeros(space.n, dtype=bool)
    net = []
    allp = np.arange(space.n)
    for v in order:
        if covered[v]:
            continue
        net.append(int(v))
        covered |= space.d(int(v), allp) < 1 - TOL
    return np.array(net, dtype=np.int64)


@dataclass
class ContractionSchedule:
    space: FiniteMetricSpace
    table: ConstantTable
    image: np.ndarray
    in_Y: np.ndarray
    net: np.ndarray
    iota: np.ndarray
    seg: dict
    T: dict
    s: dict
    saturated: dict
    l: dict
    ni: list
    breaks: list
    gaps: list = field(default_factory=list)

    def chi(self, t):
        return np.searchsorted(np.asarray(self.breaks, dtype=float), np.asarray(t, dtype=float) + TOL,
                               side="right").astype(float)

    def to_dict(self) -> dict:
        pid = self.space.points
        return {
            "net": [pid[v] for v in self.net],
            "T": {pid[v]: self.T[v] for v in self.net},
            "s": {pid[v]: self.s[v] for v in self.net},
            "l": {str(n): v for n, v in sorted(self.l.items())},
            "empty_levels": self.gaps, "ni": self.ni, "chi_breaks": self.breaks,
            "D5": self.table.D5, "D6": self.table.D6,
        }


def build_schedule(space: FiniteMetricSpace, L: GeodesicSystem, maps: ConeMaps) -> ContractionSchedule:
    """Net, iota, T_v, s_v, l(n), the subsequence n_i and chi.

    Levels start at n = 0 so that every net point has a level below the
    first selected one; empty levels are recorded rather than filled in.
    """
    table = maps.model.table
    o = space.o
    image = np.unique(np.concatenate([maps.rep_arr.ravel(), [o]])) if maps.reps else np.array([o])
    to_image = _min_dist_to(space, image)
    in_Y = to_image <= table.D6 + TOL
    order = np.concatenate([np.flatnonzero(in_Y), np.flatnonzero(~in_Y)])
    net = greedy_net(space, order)
    net_Y = net[in_Y[net]]
    iota = np.empty(space.n, dtype=np.int64)
    for lo in range(0, space.n, 2048):
        rows = np.arange(lo, min(space.n, lo + 2048))
        dn = space.d(rows[:, None], net[None, :])
        iota[rows] = net[np.argmin(dn, axis=1)]
        yr = rows[in_Y[rows]]
        if len(yr) and len(net_Y):
            dy = space.d(yr[:, None], net_Y[None, :])
            iota[yr] = net_Y[np.argmin(dy, axis=1)]
    seg, T, s, sat = {}, {}, {}, {}
    missing = []
    for v in net:
        v = int(v)
        sids = L.between(o, v)
        if not sids:
            missing.append(space.points[v])
            continue
        g = L.segments[sids[0]]
        seg[v] = g
        T[v] = g.length
        ok = np.flatnonzero(to_image[g.arr] <= table.D5 + TOL)
        s[v] = float(ok[-1] * g.step)
        sat[v] = bool(ok[-1] == g.n - 1)
    if missing:
        raise CoverageError(f"{len(missing)} net points have no stored segment from the base",
                            witness=missing[:20])
    l: dict = {}
    for v in seg:
        n = int(math.floor(s[v] + TOL))
        l[n] = max(l.get(n, 0.0), T[v])
    top = max(l)
    gaps = [n for n in range(top + 1) if n not in l]
    ni, breaks = [], []
    running = -np.inf
    for n in range(top + 1):
        if n not in l:
            continue
        val = l[n]
        if n >= 1 and val > running:
            first_ok = not ni and val > 1
            next_ok = ni and val - breaks[-1] > 1
            if first_ok or next_ok:
                ni.append(n)
                breaks.append(val)
        running = max(running, val)
    return ContractionSchedule(space, table, image, in_Y, net, iota, seg, T, s, sat, l, ni, breaks, gaps)


def phi(schedule: ContractionSchedule, v: int) -> int:
    """gamma_v(chi(T_v)) for a net point v."""
    g = schedule.seg[v]
    return int(g.at(float(schedule.chi(schedule.T[v]))))


def phi_and_track(schedule: ContractionSchedule, v: int, t_grid=None) -> tuple:
    """phi(iota(v)) and the track H(v, t) = gamma(T - t + chi(t)) over [0, T]."""
    w = int(schedule.iota[v])
    g = schedule.seg[w]
    T = schedule.T[w]
    if t_grid is None:
        t_grid = np.arange(0.0, math.floor(T + TOL) + 1.0)
        if t_grid[-1] < T - TOL:
            t_grid = np.append(t_grid, T)
    t_grid = np.asarray(t_grid, dtype=float)
    arg = np.clip(T - t_grid + schedule.chi(t_grid), 0.0, T)
    track = [int(x) for x in g.at(arg)]
    return phi(schedule, w), track, t_grid


# ---------------------------------------------------------------- audits

@dataclass
class ScheduleAudit:
    endpoints_checked: int
    endpoint_failures: list
    chi_le_t: bool
    chi_lipschitz: bool
    lemma_511_checked: int
    lemma_511_failures: list
    phi_in_Y_failures: list
    T_bornologous: dict
    H_modulus: dict

    @property
    def ok(self) -> bool:
        return (not self.endpoint_failures and self.chi_le_t and self.chi_lipschitz
                and not self.lemma_511_failures and not self.phi_in_Y_failures
                and self.T_bornologous["violations"] == 0 and self.H_modulus["violations"] == 0)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ok"] = self.ok
        return d


def audit_schedule(schedule: ContractionSchedule, n_pairs: int = 1000, seed: int = 0) -> ScheduleAudit:
    sc, t = schedule, schedule.table
    space = sc.space
    rng = np.random.default_rng(seed)
    # endpoint identities for every net point
    fails = []
    for v in sc.net:
        v = int(v)
        p, track, _ = phi_and_track(sc, v)
        if track[0] != int(sc.iota[v]) or track[-1] != p:
            fails.append(space.points[v])
    # chi on the full grid
    tmax = max(sc.T.values())
    grid = np.unique(np.concatenate([np.arange(0.0, tmax + 0.25, 0.25), sc.breaks,
                                     np.asarray(sc.breaks) - 1e-6]))
    grid = grid[grid >= 0]
    c = sc.chi(grid)
    le = bool((c <= grid + TOL).all())
    lip = bool((np.abs(c[:, None] - c[None, :]) <= np.abs(grid[:, None] - grid[None, :]) + 1 + TOL).all())
    # l(n_i) <= T_v implies n_i <= s_v
    checked, l_fail = 0, []
    for v in sc.seg:
        for n, lv in zip(sc.ni, sc.breaks):
            checked += 1
            if lv <= sc.T[v] and not n <= sc.s[v] + TOL:
                l_fail.append((space.points[v], n))
    y_fail = [space.points[v] for v in sc.seg if not sc.in_Y[phi(sc, v)]]
    # v -> T_iota(v) and the homotopy H on sampled close pairs
    pts = np.arange(space.n)
    pairs = []
    for _ in range(n_pairs):
        v = int(rng.integers(space.n))
        near = pts[space.d(v, pts) <= 2 + TOL]
        pairs.append((v, int(rng.choice(near))))
    tb = {"checked": 0, "violations": 0, "worst_slack": np.inf}
    hm = {"checked": 0, "violations": 0, "worst_slack": np.inf, "witnesses": []}
    for v, w in pairs:
        d = float(space.d(v, w))
        Tv, Tw = sc.T[int(sc.iota[v])], sc.T[int(sc.iota[w])]
        bound = float(t.theta(d + 4) + t.theta(0.0))
        tb["checked"] += 1
        tb["worst_slack"] = min(tb["worst_slack"], bound - abs(Tv - Tw))
        if abs(Tv - Tw) > bound + TOL:
            tb["violations"] += 1
        dd = d + 4
        hb = (t.E * (t.E * (dd + t.lam * t.theta_tilde(dd) + t.k1) + t.D) + t.C
              + t.lam * (t.theta(dd) + 1) + t.k)
        grid = np.arange(0.0, math.floor(min(Tv, Tw) + TOL) + 1.0)
        _, hv, _ = phi_and_track(sc, v, grid)
        _, hw, _ = phi_and_track(sc, w, grid)
        gap = float(space.d(np.array(hv), np.array(hw)).max())
        hm["checked"] += 1
        hm["worst_slack"] = min(hm["worst_slack"], float(hb) - gap)
        if gap > hb + TOL:
            hm["violations"] += 1
            hm["witnesses"].append((space.points[v], space.points[w], gap, float(hb)))
    return ScheduleAudit(len(sc.net), fails[:20], le, lip, checked, l_fail[:20], y_fail[:20], tb, hm)


# ---------------------------------------------------------------- bicombing

@dataclass
class BicombingReport:
    k1_emp: float
    k2_emp: float
    k1_bound: float
    k2_bound: float
    checked: int
    violations: int
    worst_slack: float
    coverage: float
    witnesses: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.k1_emp <= self.k1_bound + TOL

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ok"] = self.ok
        return d


class Bicombing:
    """The stored segment of each ordered pair, read on the integer grid."""

    def __init__(self, space: FiniteMetricSpace, L: GeodesicSystem):
        self.space, self.L = space, L

    def path(self, x: int, y: int) -> DiscretePath:
        sids = self.L.between(x, y)
        if not sids:
            raise CoverageError(f"no stored segment from {self.space.points[x]!r} to {self.space.points[y]!r}")
        return self.L.segments[sids[0]]

    def sample(self, x: int, y: int, T: int) -> np.ndarray:
        return self.path(x, y).at(np.arange(T + 1, dtype=float))

    def pairs(self) -> list:
        return sorted(self.L.by_endpoints)


def fit_bicombing_constants(gaps: np.ndarray, disp: np.ndarray, k2_bound: float) -> tuple:
    """Least slope s >= 0 with max(disp - s gaps) <= k2_bound, and that maximum."""
    gaps, disp = np.asarray(gaps, float), np.asarray(disp, float)
    if not len(gaps):
        return 0.0, 0.0

    def k2(s):
        return float((disp - s * gaps).max())

    if k2(0.0) <= k2_bound + TOL:
        return 0.0, k2(0.0)
    pos = gaps > 0
    # candidate slopes where a constraint becomes tight
    cand = np.unique(np.maximum((disp[pos] - k2_bound) / gaps[pos], 0.0))
    for s in cand:
        if k2(s) <= k2_bound + TOL:
            return float(s), k2(s)
    s = float(cand.max()) if len(cand) else 0.0
    return s, k2(s)


def extract_bicombing(space: FiniteMetricSpace, L: GeodesicSystem, lam: float, k: float,
                      E: float, C: float, A: float, B: float, n_quads: int = 1000,
                      near: float = 3.0, seed: int = 0) -> BicombingReport:
    """Sample quadruples (x, y, x', y') and measure the bicombing against its bound.

    Each quadruple is checked against E(lam A + 1)(d(x,x') + d(y,y')) +
    E(lam B + k) + C; the empirical constants come from the max-gap fit.
    """
    bc = Bicombing(space, L)
    avail = bc.pairs()
    have = set(avail)
    rng = np.random.default_rng(seed)
    K1 = E * (lam * A + 1)
    K2 = E * (lam * B + k) + C
    pts = np.arange(space.n)
    quads = []
    tries = 0
    while len(quads) < n_quads and tries < 50 * n_quads:
        tries += 1
        x, y = avail[int(rng.integers(len(avail)))]
        if len(quads) % 4 == 3:
            x2, y2 = avail[int(rng.integers(len(avail)))]
        else:
            nx = pts[space.d(x, pts) <= near + TOL]
            ny = pts[space.d(y, pts) <= near + TOL]
            x2, y2 = int(rng.choice(nx)), int(rng.choice(ny))
            if (x2, y2) not in have:
                x2 = x
                if (x2, y2) not in have:
                    continue
        quads.append((x, y, x2, y2))
    gaps, disp, wit = [], [], []
    bad = 0
    worst = np.inf
    for x, y, x2, y2 in quads:
        g, e = bc.path(x, y), bc.path(x2, y2)
        T = int(math.ceil(max(g.length, e.length) - TOL))
        dd = float(space.d(bc.sample(x, y, T), bc.sample(x2, y2, T)).max())
        a, b = float(space.d(x, x2)), float(space.d(y, y2))
        gaps.append(max(a, b))
        disp.append(dd)
        bound = K1 * (a + b) + K2
        worst = min(worst, bound - dd)
        if dd > bound + TOL:
            bad += 1
            wit.append((space.points[x], space.points[y], space.points[x2], space.points[y2], dd, bound))
    k1e, k2e = fit_bicombing_constants(np.array(gaps), np.array(disp), K2)
    n = space.n
    return BicombingReport(k1e, k2e, K1, K2, len(quads), bad, float(worst),
                           len(have) / float(n * n), wit[:20])
