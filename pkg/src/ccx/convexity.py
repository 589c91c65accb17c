"""Fit and audit the coarse convexity constants, and derive the constant table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .errors import ParameterError, PreconditionError, StructuralError
from .metric import TOL, DiscretePath, FiniteMetricSpace, GeodesicSystem, step_ray

C_GRID = tuple(np.arange(17) / 16)


# ---------------------------------------------------------------- theta

@dataclass(frozen=True)
class Theta:
    """Non-decreasing step table; past the last break the affine majorant takes over."""

    breaks: tuple = ()
    values: tuple = ()
    affine: tuple | None = None

    @classmethod
    def identity(cls) -> "Theta":
        return cls((), (), (1.0, 0.0))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if not self.breaks:
            A, B = self.affine or (0.0, 0.0)
            out = A * r + B
        else:
            br = np.asarray(self.breaks)
            vals = np.asarray(self.values)
            pos = np.searchsorted(br, r + TOL, side="right") - 1
            out = np.where(pos >= 0, vals[np.clip(pos, 0, None)], 0.0)
            if self.affine is not None:
                A, B = self.affine
                out = np.where(r > br[-1] + TOL, np.maximum(vals[-1], A * r + B), out)
        return float(out) if out.ndim == 0 else out

    def tilde(self, t):
        return self(np.asarray(t, dtype=float) + 1.0) + 1.0

    def to_dict(self) -> dict:
        d = {"breaks": list(self.breaks), "values": list(self.values)}
        if self.affine is not None:
            d["affine"] = list(self.affine)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Theta":
        aff = d.get("affine")
        return cls(tuple(d.get("breaks", ())), tuple(d.get("values", ())),
                   tuple(aff) if aff is not None else None)


def affine_majorant(breaks, values) -> tuple:
    """Smallest-area line A r + B >= theta on the sampled range (A, B >= 0).

    Minimizing the area under the line on [0, r_max] keeps the slope honest;
    minimizing only its maximum would always pick the flat line.
    """
    r = np.asarray(breaks, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(r) == 0:
        return (0.0, 0.0)
    rmax = max(float(r.max()), 1.0)
    res = linprog(c=[rmax * rmax / 2, rmax], A_ub=-np.column_stack([r, np.ones_like(r)]),
                  b_ub=-v, bounds=[(0, None), (0, None)], method="highs")
    A, B = (float(x) for x in res.x)
    # LP tolerances can leave the line a hair under a sample.
    B += max(0.0, float(np.max(v - (A * r + B))))
    return (A, B)


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class ConstantTable:
    lam: float
    k: float
    E: float
    C: float
    theta: Theta
    k1: float
    D: float
    D1: float
    D2: float
    D2p: float
    D3: float
    D4: float
    D4_table: float
    D4_cor: float
    D5: float
    D6: float
    eps_max: float
    epsilon: float
    K: float
    ball_radius: float

    def theta_tilde(self, t):
        return self.theta.tilde(t)

    def with_epsilon(self, epsilon: float) -> "ConstantTable":
        if epsilon <= 0 or epsilon > self.eps_max + 1e-15:
            raise ParameterError(f"epsilon {epsilon} outside (0, {self.eps_max}]")
        return replace(self, epsilon=epsilon, K=(self.D2 * self.D3) ** epsilon)

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "theta"}
        d["theta"] = self.theta.to_dict()
        d["D2D3"] = self.D2 * self.D3
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantTable":
        t = derive_constants(d["lam"], d["k"], d["E"], d["C"], Theta.from_dict(d["theta"]))
        return t.with_epsilon(d["epsilon"])


def derive_constants(lam, k=None, E=None, C=None, theta: Theta | None = None,
                     epsilon: float | None = None) -> ConstantTable:
    """Evaluate the constant calculus. Accepts a certificate or raw constants."""
    if isinstance(lam, ConvexityCertificate):
        cert = lam
        lam, k, E, C, theta = cert.lam, cert.k, cert.E, cert.C, cert.theta
    theta = theta or Theta.identity()
    k1 = lam + k
    D = 2 * (1 + E) * k1 + C
    D1 = 2 * D + 2
    D2 = E * (D1 + 2 * k1)
    D2p = max(1.0, E * (lam * theta(0.0) + k))
    D3 = 2 * D2p * D2 ** 2
    tt1 = theta.tilde(1.0)
    D4_table = 2 * E * (E * (1 + lam * tt1 + 2 * k1) + D1)
    D4_cor = 2 * E * (E * (1 + lam * tt1 + k1) + D1 + D + 2 * k1)
    D5 = 2 * D1 + 2 * k1
    D6 = E * D5 + D
    eps_max = math.log(2) / math.log(D2 * D3)
    eps = min(0.05, eps_max) if epsilon is None else epsilon
    table = ConstantTable(lam, k, E, C, theta, k1, D, D1, D2, D2p, D3, max(D4_table, D4_cor),
                          D4_table, D4_cor, D5, D6, eps_max, eps, 1.0,
                          lam * 2 * theta(0.0) + k)
    return table.with_epsilon(eps)


# ---------------------------------------------------------------- tuples

def grid_slack(space: FiniteMetricSpace, L: GeodesicSystem, lam: float, k: float) -> float:
    """Tolerance absorbing parameter rounding and snapping on a sampled grid."""
    return lam * L.max_step + 2 * k + 2 * space.meta.get("grid_slack", 0.0)


def _stride(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(np.int64))


def sample_pairs(L: GeodesicSystem, n_pairs: int, rng) -> list:
    """All ordered segment pairs if few, else a stratified seeded sample.

    Strata: uniform pairs, pairs sharing a start point, pairs sharing an end
    point. The latter two carry the tuples where convexity is tightest.
    """
    m = len(L.segments)
    if m == 0:
        raise StructuralError("empty geodesic system")
    if m * m <= n_pairs:
        return [(i, j) for i in range(m) for j in range(m)]
    pairs = set()
    third = n_pairs // 3
    a, b = rng.integers(0, m, size=(2, n_pairs - 2 * third))
    pairs.update(zip(a.tolist(), b.tolist()))
    for groups in (list(L.by_start.values()), _by_end(L)):
        groups = [g for g in groups if len(g) > 1]
        if not groups:
            continue
        gi = rng.integers(0, len(groups), size=third)
        for g in gi:
            grp = groups[g]
            i, j = rng.integers(0, len(grp), size=2)
            pairs.add((grp[i], grp[j]))
    return sorted(pairs)


def _by_end(L: GeodesicSystem) -> list:
    out: dict = {}
    for sid, g in enumerate(L.segments):
        out.setdefault(g.end, []).append(sid)
    return list(out.values())


def _frontier(u: np.ndarray, v: np.ndarray):
    """Points not dominated by one with smaller-or-equal u and larger-or-equal v."""
    if len(u) == 0:
        return u, v
    order = np.lexsort((-v, u))
    u, v = u[order], v[order]
    prev = np.concatenate([[-np.inf], np.maximum.accumulate(v)[:-1]])
    keep = v > prev + 1e-12
    return u[keep], v[keep]


@dataclass
class TupleScan:
    """Reduced record of a sampled tuple scan."""

    conv_u: np.ndarray
    conv_L: np.ndarray
    theta_r: np.ndarray
    theta_v: np.ndarray
    bins: dict
    n_tuples: int
    n_pairs: int
    seed: int


def scan_tuples(space: FiniteMetricSpace, L: GeodesicSystem, sample_budget: int = 1_000_000,
                seed: int = 0, c_grid=None, grid_cap: int = 16) -> TupleScan:
    """Evaluate the convexity and reparameterization data over sampled tuples."""
    rng = np.random.default_rng(seed)
    cs = np.asarray(sorted(set(c_grid or C_GRID) | {0.5, 0.25, 1 / 3, 1 / 6, 0.125}))
    lens = np.array([min(g.n, grid_cap) for g in L.segments], dtype=float)
    per_pair = max(1.0, float(np.mean(lens)) ** 2 * len(cs))
    segs = L.segments
    pairs = sample_pairs(L, max(1, int(sample_budget / per_pair)), rng)
    cu, cL, tr, tv = [], [], [], []
    bins: dict = {}
    total = 0
    for i, j in pairs:
        g, e = segs[i], segs[j]
        ia, ib = _stride(g.n, grid_cap), _stride(e.n, grid_cap)
        tg, te = ia * g.step, ib * e.step
        d0 = float(space.d(g.start, e.start))
        dts = space.d(g.arr[ia][:, None], e.arr[ib][None, :])
        r = (d0 + dts).ravel()
        v = np.abs(tg[:, None] - te[None, :]).ravel()
        r, v = _frontier(r, v)
        tr.append(r)
        tv.append(v)
        scale = np.maximum(tg[:, None], te[None, :])
        for c in cs:
            lhs = space.d(g.at(c * tg, "nearest")[:, None], e.at(c * te, "nearest")[None, :])
            u = c * dts + (1 - c) * d0
            gap = lhs - u
            total += gap.size
            pos = gap > 0
            if pos.any():
                uu, LL = _frontier(u[pos], lhs[pos])
                cu.append(uu)
                cL.append(LL)
                b = np.floor(np.log2(scale + 1)).astype(int)
                m = int(np.argmax(gap))
                a, bb = np.unravel_index(m, gap.shape)
                key = int(b[a, bb])
                if gap[a, bb] > bins.get(key, (-np.inf,))[0]:
                    bins[key] = (float(gap[a, bb]), {"pair": (int(i), int(j)), "t": float(tg[a]),
                                                     "s": float(te[bb]), "c": float(c)})
        if len(cu) > 64:
            u_, L_ = _frontier(np.concatenate(cu), np.concatenate(cL))
            cu, cL = [u_], [L_]
            r_, v_ = _frontier(np.concatenate(tr), np.concatenate(tv))
            tr, tv = [r_], [v_]
    u_, L_ = _frontier(np.concatenate(cu) if cu else np.zeros(0), np.concatenate(cL) if cL else np.zeros(0))
    r_, v_ = _frontier(np.concatenate(tr), np.concatenate(tv))
    return TupleScan(u_, L_, r_, v_, bins, total, len(pairs), seed)


def convexity_gap(space: FiniteMetricSpace, g: DiscretePath, e: DiscretePath,
                  t: float, s: float, c: float, E: float = 1.0) -> float:
    """d(g(ct), e(cs)) - cE d(g(t), e(s)) - (1-c)E d(g(0), e(0)) at one tuple."""
    lhs = float(space.d(g.at(c * t, "nearest"), e.at(c * s, "nearest")))
    mid = float(space.d(g.at(t, "nearest"), e.at(s, "nearest")))
    d0 = float(space.d(g.start, e.start))
    return lhs - c * E * mid - (1 - c) * E * d0


# ---------------------------------------------------------------- fitting

@dataclass
class ConvexityCertificate:
    lam: float
    k: float
    E: float
    C: float
    theta: Theta
    affine_theta: tuple | None
    slack: float
    raw_C: float
    seed: int
    n_tuples: int
    binding: tuple | None = None
    derived: ConstantTable | None = None

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "k": self.k, "E": self.E, "C": self.C,
                "theta": self.theta.to_dict(),
                "affine_theta": list(self.affine_theta) if self.affine_theta else None,
                "slack": self.slack, "raw_C": self.raw_C, "seed": self.seed,
                "n_tuples": self.n_tuples,
                "derived": self.derived.to_dict() if self.derived else None}


@dataclass
class ViolationCurve:
    """Largest convexity gap (at E = 1) per parameter-scale bin, with witnesses."""

    scales: list
    gaps: list
    witnesses: list
    best_C: float
    cap: float
    E_cap: float
    seed: int

    def to_dict(self) -> dict:
        return {"scales": self.scales, "gaps": self.gaps, "witnesses": self.witnesses,
                "best_C": self.best_C, "cap": self.cap, "E_cap": self.E_cap, "seed": self.seed}


def _C_of_E(scan: TupleScan, E: float) -> tuple:
    if len(scan.conv_u) == 0:
        return 0.0, None
    vals = scan.conv_L - E * scan.conv_u
    m = int(np.argmax(vals))
    return max(0.0, float(vals[m])), (float(scan.conv_u[m]), float(scan.conv_L[m]))


def fit_theta(space: FiniteMetricSpace, L: GeodesicSystem, sample_budget: int = 1_000_000,
              seed: int = 0, scan: TupleScan | None = None):
    """Monotone step table for theta plus its affine majorant (A, B)."""
    scan = scan or scan_tuples(space, L, sample_budget, seed)
    r, v = scan.theta_r, scan.theta_v
    A, B = affine_majorant(r, v)
    return Theta(tuple(float(x) for x in r), tuple(float(x) for x in v), (A, B)), (A, B)


def fit_convexity(space: FiniteMetricSpace, L: GeodesicSystem, lam: float = 1.0, k: float = 0.0,
                  sample_budget: int = 1_000_000, seed: int = 0, E_cap: float = 8.0,
                  cap_fraction: float = 0.25, slack: float | None = None):
    """Smallest E >= 1 whose C stays under the cap, then the smallest such C.

    C(E) = max over tuples of lhs - E u is convex and non-increasing, so the
    smallest admissible E is either 1 or the root of C(E) = cap. C is
    reported net of the grid slack. When even E_cap needs C above the cap,
    a :class:`ViolationCurve` is returned instead.
    """
    scan = scan_tuples(space, L, sample_budget, seed)
    sl = grid_slack(space, L, lam, k) if slack is None else slack
    cap = cap_fraction * space.diameter
    theta, aff = fit_theta(space, L, scan=scan)

    def net(E):
        c, w = _C_of_E(scan, E)
        return max(0.0, c - sl), c, w

    C1 = net(1.0)
    if C1[0] <= cap:
        E = 1.0
    elif net(E_cap)[0] > cap:
        keys = sorted(scan.bins)
        return ViolationCurve([2.0 ** b for b in keys], [scan.bins[b][0] for b in keys],
                              [scan.bins[b][1] for b in keys], net(E_cap)[0], cap, E_cap, seed)
    else:
        lo, hi = 1.0, E_cap
        for _ in range(80):
            mid = (lo + hi) / 2
            lo, hi = (lo, mid) if net(mid)[0] <= cap else (mid, hi)
        E = hi
    Cn, raw, w = net(E)
    cert = ConvexityCertificate(lam, k, E, Cn, theta, aff, sl, raw, seed, scan.n_tuples, w)
    cert.derived = derive_constants(cert)
    return cert


def nominal_certificate(lam=1.0, k=0.0, E=1.0, C=0.0, theta: Theta | None = None) -> ConvexityCertificate:
    theta = theta or Theta.identity()
    cert = ConvexityCertificate(lam, k, E, C, theta, theta.affine, 0.0, C, 0, 0)
    cert.derived = derive_constants(cert)
    return cert


# ---------------------------------------------------------------- audits

@dataclass
class AuditReport:
    mode: str
    checked: int
    violations: list = field(default_factory=list)
    max_excess: float = -np.inf
    tolerance: float = 0.0
    n_violations: int = 0

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return {"mode": self.mode, "checked": self.checked, "violations": self.violations[:50],
                "n_violations": self.n_violations, "max_excess": self.max_excess,
                "tolerance": self.tolerance}


def _record(rep: AuditReport, excess: np.ndarray, make_witness, limit: int = 50):
    rep.checked += excess.size
    if excess.size:
        rep.max_excess = max(rep.max_excess, float(excess.max()))
    bad = np.argwhere(excess > rep.tolerance + TOL)
    rep.n_violations += len(bad)
    for idx in bad[:max(0, limit - len(rep.violations))]:
        rep.violations.append(make_witness(tuple(int(x) for x in idx)))


def base_rays(space: FiniteMetricSpace, L: GeodesicSystem, R: float | None = None) -> list:
    """Rays anchored at the base, resampled on the integer grid and truncated to R."""
    out = []
    for r in L.rays:
        if r.start != space.o:
            continue
        s = step_ray(r)
        if R is not None:
            if s.horizon + TOL < R:
                continue
            s = s.truncate(R)
        out.append(s)
    return out


def verify_convexity(space: FiniteMetricSpace, L: GeodesicSystem, table: ConstantTable,
                     mode: str = "segments", sample_budget: int = 300_000, seed: int = 0,
                     slack: float | None = None, c_grid=C_GRID) -> AuditReport:
    """Replay the convexity inequality in segment, ray or two-sided interval form."""
    E, C = table.E, table.C
    cs = np.asarray(c_grid)
    rng = np.random.default_rng(seed)
    if mode == "rays":
        rays = base_rays(space, L)
        rep = AuditReport("rays", 0, tolerance=0.0)
        for a, g in enumerate(rays):
            for b, e in enumerate(rays):
                t = np.arange(g.n, dtype=float)
                s = np.arange(e.n, dtype=float)
                dts = space.d(g.arr[:, None], e.arr[None, :])
                for c in cs:
                    lhs = space.d(g.at(c * t)[:, None], e.at(c * s)[None, :])
                    exc = lhs - (c * E * dts + table.D)
                    _record(rep, exc, lambda ix, a=a, b=b, c=c: {"rays": (a, b), "t": ix[0],
                                                                   "s": ix[1], "c": float(c)})
        return rep
    sl = grid_slack(space, L, table.lam, table.k) if slack is None else slack
    if mode == "interval" and not (L.symmetric and L.prefix_closed):
        raise PreconditionError("interval mode needs a symmetric prefix-closed system")
    if mode not in ("segments", "interval"):
        raise PreconditionError(f"unknown mode {mode!r}")
    rep = AuditReport(mode, 0, tolerance=sl)
    segs = L.segments
    cap = 24 if mode == "segments" else 8
    per = cap * cap * len(cs) * (1 if mode == "segments" else cap * cap)
    pairs = sample_pairs(L, max(1, sample_budget // per), rng)
    for i, j in pairs:
        g, e = segs[i], segs[j]
        ia, ib = _stride(g.n, cap), _stride(e.n, cap)
        tg, te = ia * g.step, ib * e.step
        if mode == "segments":
            d0 = float(space.d(g.start, e.start))
            dts = space.d(g.arr[ia][:, None], e.arr[ib][None, :])
            for c in cs:
                lhs = space.d(g.at(c * tg, "nearest")[:, None], e.at(c * te, "nearest")[None, :])
                exc = lhs - (c * E * dts + (1 - c) * E * d0 + C)
                _record(rep, exc, lambda ix, i=i, j=j, c=c: {"pair": (i, j), "t": float(tg[ix[0]]),
                                                             "s": float(te[ix[1]]), "c": float(c)})
        else:
            dd = space.d(g.arr[ia][:, None], e.arr[ib][None, :])
            for c in cs:
                T = c * tg[None, :] + (1 - c) * tg[:, None]
                S = c * te[None, :] + (1 - c) * te[:, None]
                lhs = space.d(g.at(T, "nearest")[:, :, None, None], e.at(S, "nearest")[None, None, :, :])
                rhs = c * E * dd[None, :, None, :] + (1 - c) * E * dd[:, None, :, None] + C
                exc = lhs - rhs
                # only t1 <= t2 and s1 <= s2
                mask = (tg[:, None] <= tg[None, :])[:, :, None, None] & (te[:, None] <= te[None, :])[None, None]
                exc = np.where(mask, exc, -np.inf)
                _record(rep, exc, lambda ix, i=i, j=j, c=c: {"pair": (i, j), "index": ix, "c": float(c)})
    return rep


def lemma44_audit(space: FiniteMetricSpace, L: GeodesicSystem, table: ConstantTable,
                  n_pairs: int = 2000, seed: int = 0, slack: float | None = None) -> AuditReport:
    """Same-origin segment pairs stay within the endpoint-controlled bound."""
    sl = grid_slack(space, L, table.lam, table.k) if slack is None else slack
    rep = AuditReport("lemma44", 0, tolerance=sl)
    groups = [g for g in L.by_start.values() if len(g) > 1]
    rng = np.random.default_rng(seed)
    for _ in range(n_pairs if groups else 0):
        grp = groups[rng.integers(len(groups))]
        i, j = rng.choice(grp, 2)
        g, e = L.segments[i], L.segments[j]
        T = min(g.length, e.length)
        t = np.arange(0, T + TOL, min(g.step, e.step))
        dab = float(space.d(g.end, e.end))
        bound = table.E * (dab + table.lam * table.theta_tilde(dab) + table.k1) + table.D
        exc = space.d(g.at(t), e.at(t)) - bound
        _record(rep, exc, lambda ix, i=i, j=j: {"pair": (int(i), int(j)), "t": float(t[ix[0]])})
    return rep
