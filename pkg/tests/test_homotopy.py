from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccx.boundary import build_boundary
from ccx.cone import ConeMaps
from ccx.homotopy import (Bicombing, ContractionSchedule, audit_schedule, build_schedule,
                          extract_bicombing, fit_bicombing_constants, greedy_net, phi,
                          phi_and_track)
from ccx.spaces import binary_tree


@pytest.fixture(scope="module")
def tree_schedule(tree6):
    X, L, m = tree6
    return build_schedule(X, L, ConeMaps(m))


def test_chi_example():
    sc = SimpleNamespace(breaks=[5.0, 9.0])
    chi = ContractionSchedule.chi
    assert chi(sc, 4.0) == 0
    assert chi(sc, 5.0) == 1
    assert chi(sc, 8.99) == 1
    assert chi(sc, 9.0) == 2


@pytest.mark.parametrize("fixture", ["tree6", "disc32"])
def test_net_is_discrete_and_dense(fixture, request):
    X = request.getfixturevalue(fixture)[0]
    order = np.random.default_rng(1).permutation(X.n)
    net = greedy_net(X, order)
    D = X.d(net[:, None], net[None, :])
    assert (D[~np.eye(len(net), dtype=bool)] >= 1).all()
    assert (X.d(np.arange(X.n)[:, None], net[None, :]).min(axis=1) <= 2).all()


def test_iota_stays_close(tree_schedule):
    sc = tree_schedule
    allp = np.arange(sc.space.n)
    assert (sc.space.d(allp, sc.iota) <= 2).all()


def test_base_point_track_is_constant(tree_schedule):
    sc = tree_schedule
    o = sc.space.o
    p, track, _ = phi_and_track(sc, o)
    assert sc.T[int(sc.iota[o])] == 0
    assert track == [int(sc.iota[o])] and p == int(sc.iota[o])


def test_track_endpoints(tree_schedule):
    sc = tree_schedule
    for v in sc.net:
        v = int(v)
        p, track, _ = phi_and_track(sc, v)
        assert track[0] == sc.iota[v]
        assert track[-1] == p == phi(sc, v)


def test_chi_is_sub_identity(tree_schedule):
    sc = tree_schedule
    t = np.linspace(0, max(sc.T.values()), 400)
    c = sc.chi(t)
    assert (c <= t + 1e-9).all()
    assert (np.diff(c) >= 0).all()


def test_levels_are_increasing(tree_schedule):
    sc = tree_schedule
    assert sc.ni == sorted(sc.ni)
    assert all(b - a > 1 for a, b in zip(sc.breaks, sc.breaks[1:]))


def test_level_implication_replay(tree_schedule):
    sc = tree_schedule
    for v in sc.seg:
        for n, lv in zip(sc.ni, sc.breaks):
            if lv <= sc.T[v]:
                assert n <= sc.s[v]


@pytest.mark.parametrize("fixture", ["tree6", "disc32"])
def test_schedule_audit(fixture, request):
    X, L, m = request.getfixturevalue(fixture)
    au = audit_schedule(build_schedule(X, L, ConeMaps(m)), n_pairs=300)
    assert au.ok, au.to_dict()


def test_tree_image_one_branch_levels(nominal):
    # image = one branch; a point leaving it at depth b has s_v >= b
    X, L = binary_tree(6)
    from ccx.metric import GeodesicSystem
    m = build_boundary(X, GeodesicSystem(L.segments, L.rays[:1]), nominal, 6)
    sc = build_schedule(X, L, ConeMaps(m))
    branch = set(L.rays[0].values)
    for v in sc.seg:
        g = sc.seg[v]
        b = max(i for i, x in enumerate(g.values) if x in branch)
        # every vertex of a depth-6 tree lies within 6 < D5 = 22 of the branch
        assert sc.s[v] == g.length
        assert b <= sc.s[v]


def test_fit_constants_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        gaps = rng.integers(0, 6, 20).astype(float)
        disp = rng.uniform(0, 10, 20)
        K2 = 3.0
        s, k2 = fit_bicombing_constants(gaps, disp, K2)
        grid = np.linspace(0, 20, 20001)
        ok = [x for x in grid if (disp - x * gaps).max() <= K2 + 1e-9]
        if ok:
            assert s == pytest.approx(ok[0], abs=1e-3)
            assert k2 <= K2 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.floats(0, 10)), min_size=1, max_size=15))
def test_fit_constants_cover_data(rows):
    gaps = np.array([r[0] for r in rows], float)
    disp = np.array([r[1] for r in rows])
    s, k2 = fit_bicombing_constants(gaps, disp, 2.0)
    assert (disp <= s * gaps + k2 + 1e-9).all()


def test_same_endpoints_have_zero_displacement(tree6):
    X, L, _ = tree6
    bc = Bicombing(X, L)
    x, y = bc.pairs()[5]
    T = 8
    assert X.d(bc.sample(x, y, T), bc.sample(x, y, T)).max() == 0


def test_tree_bicombing():
    X, L = binary_tree(5)
    rep = extract_bicombing(X, L, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0)
    assert rep.checked >= 1000 and rep.violations == 0
    assert rep.k1_emp <= 2 and rep.k1_bound == 2


def test_disc_bicombing(disc32):
    X, L, _ = disc32
    rep = extract_bicombing(X, L, 1.0, X.meta["grid_slack"], 1.0, 0.0, 1.0, 0.0)
    assert rep.ok and rep.checked >= 1000
