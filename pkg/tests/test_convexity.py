import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccx.convexity import (Theta, affine_majorant, convexity_gap, derive_constants, fit_convexity,
                           fit_theta, nominal_certificate, scan_tuples, verify_convexity)
from ccx.errors import ParameterError
from ccx.spaces import binary_tree, euclidean_disc, staircase, staircase_grid


def oracle_constants(lam, k, E, C):
    # second implementation with exact rationals, theta = id
    lam, k, E, C = (Fraction(x) for x in (lam, k, E, C))
    k1 = lam + k
    D = 2 * (1 + E) * k1 + C
    D1 = 2 * D + 2
    D2 = E * (D1 + 2 * k1)
    D2p = max(Fraction(1), E * (lam * 0 + k))
    D3 = 2 * D2p * D2 * D2
    return dict(k1=k1, D=D, D1=D1, D2=D2, D2p=D2p, D3=D3)


def test_nominal_table():
    t = derive_constants(1.0, 0.0, 1.0, 0.0)
    assert (t.k1, t.D, t.D1, t.D2, t.D2p, t.D3) == (1, 4, 10, 12, 1, 288)
    assert t.D2 * t.D3 == 3456
    assert t.eps_max == pytest.approx(math.log(2) / math.log(3456), abs=1e-12)
    assert t.D5 == 22 and t.D6 == 26


def test_K_is_two_at_eps_max():
    t = derive_constants(1.0, 0.0, 1.0, 0.0)
    assert t.with_epsilon(t.eps_max).K == pytest.approx(2.0)


def test_second_parameter_set_against_oracle():
    t = derive_constants(2.0, 1.0, 3.0, 5.0)
    want = oracle_constants(2, 1, 3, 5)
    assert (t.k1, t.D, t.D1, t.D2) == (3, 29, 60, 198)
    for key, v in want.items():
        assert getattr(t, key) == float(v)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(1, 4), st.integers(0, 6))
def test_constants_match_rational_oracle(lam, k, E, C):
    t = derive_constants(float(lam), float(k), float(E), float(C))
    for key, v in oracle_constants(lam, k, E, C).items():
        assert getattr(t, key) == pytest.approx(float(v), rel=1e-12)
    assert (t.D2 * t.D3) ** t.eps_max == pytest.approx(2.0)


def test_epsilon_above_max_rejected():
    t = derive_constants(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ParameterError):
        t.with_epsilon(0.2)


def test_theta_identity_and_tilde():
    th = Theta.identity()
    assert th(3.0) == 3.0
    assert th.tilde(0.0) == 2.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=1, max_size=20))
def test_affine_majorant_dominates(pts):
    r = [p[0] for p in pts]
    v = [p[1] for p in pts]
    A, B = affine_majorant(r, v)
    assert A >= 0 and B >= 0
    assert all(A * x + B >= y - 1e-9 for x, y in zip(r, v))


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_staircase_gap_is_n(n):
    X, _ = staircase_grid(2 * n + 1)
    g, e = staircase(0, 2 * n, X), staircase(n, 2 * n, X)
    assert convexity_gap(X, g, e, 2 * n, 2 * n, 0.5, 1.0) == n


def test_staircase_gap_scales_with_E():
    # witness t = 2 E n at c = 1/(2E) keeps the gap at n
    X, _ = staircase_grid(24)
    for E in (1, 2, 3):
        n = 4
        g, e = staircase(0, 2 * E * n, X), staircase(n, 2 * E * n, X)
        assert convexity_gap(X, g, e, 2 * E * n, 2 * E * n, 1 / (2 * E), E) == n


def test_endpoint_cases_have_no_gap():
    X, _ = staircase_grid(6)
    g, e = staircase(0, 6, X), staircase(3, 6, X)
    assert convexity_gap(X, g, e, 6, 6, 1.0, 1.0) <= 0
    assert convexity_gap(X, g, e, 6, 6, 0.0, 1.0) <= 0


def test_tree_fit_is_exact():
    X, L = binary_tree(6)
    cert = fit_convexity(X, L, sample_budget=200_000)
    assert cert.E == 1.0
    assert cert.C <= cert.slack + 1e-9


def test_tree_theta_is_dominated_by_identity():
    X, L = binary_tree(5)
    th, (A, B) = fit_theta(X, L, sample_budget=100_000)
    assert all(v <= r + 1e-9 for r, v in zip(th.breaks, th.values))


def test_disc_fit_has_unit_E():
    X, L = euclidean_disc(16, budget=400)
    cert = fit_convexity(X, L, sample_budget=200_000)
    assert cert.E == 1.0
    assert cert.C <= 4.0


def test_staircase_scan_gaps_grow_with_scale():
    X, L = staircase_grid(32, budget=400)
    scan = scan_tuples(X, L, 400_000, seed=1)
    keys = sorted(scan.bins)
    gaps = [scan.bins[b][0] for b in keys]
    assert gaps[-1] >= 4 * gaps[0]


def test_tree_rays_pass_ray_audit():
    X, L = binary_tree(6)
    rep = verify_convexity(X, L, nominal_certificate().derived, "rays")
    assert rep.ok and rep.checked > 0


def test_segment_audit_on_tree():
    X, L = binary_tree(5)
    rep = verify_convexity(X, L, nominal_certificate().derived, "segments", sample_budget=100_000)
    assert rep.ok


def test_staircase_segments_fail_at_nominal_constants():
    X, L = staircase_grid(16, budget=400)
    rep = verify_convexity(X, L, nominal_certificate().derived, "segments", sample_budget=200_000)
    assert not rep.ok
    assert np.isfinite(rep.max_excess)
