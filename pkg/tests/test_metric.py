import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccx.errors import StructuralError
from ccx.metric import (DiscretePath, FiniteMetricSpace, GeodesicSystem, Violation,
                        certify_quasi_geodesic, close_system, step_ray, validate_metric)
from ccx.spaces import path_graph


def line(n):
    P = np.arange(n, dtype=float)[:, None]
    return FiniteMetricSpace(tuple(range(n)), 0, coords=P, norm="l1")


def test_one_backend_required():
    with pytest.raises(StructuralError):
        FiniteMetricSpace((0, 1), 0)
    with pytest.raises(StructuralError):
        FiniteMetricSpace((0, 1), 0, dist=np.zeros((3, 3)))


def test_duplicate_ids_rejected():
    with pytest.raises(StructuralError):
        FiniteMetricSpace((0, 0), 0, dist=np.zeros((2, 2)))


def test_validate_metric_finds_triangle_failure():
    D = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    rep = validate_metric(FiniteMetricSpace(("a", "b", "c"), "a", dist=D))
    assert not rep.ok
    assert rep.violations[0].kind == "triangle"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=2, max_size=25,
                unique=True), st.sampled_from(["l1", "l2"]))
def test_coordinate_spaces_are_metric(pts, norm):
    X = FiniteMetricSpace(tuple(range(len(pts))), 0, coords=np.array(pts, float), norm=norm)
    assert validate_metric(X).ok


def test_geodesic_certifies_as_one_zero():
    X = line(10)
    g = DiscretePath(tuple(range(10)))
    assert certify_quasi_geodesic(g, X) == (1.0, 0.0)


def test_stalling_path_is_rejected_with_witness():
    X = line(5)
    g = DiscretePath((0, 1, 1, 1, 1), lam=1.0, k=0.0)
    out = certify_quasi_geodesic(g, X)
    assert isinstance(out, Violation)


def test_doubled_speed_needs_lambda_two():
    X = line(9)
    g = DiscretePath((0, 2, 4, 6, 8), lam=3.0, k=0.0)
    lam, k = certify_quasi_geodesic(g, X)
    assert lam == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=2, max_size=10))
def test_certified_constants_hold_pairwise(vals):
    # brute force over all parameter pairs
    X = line(13)
    g = DiscretePath(tuple(vals), lam=50.0, k=50.0)
    out = certify_quasi_geodesic(g, X)
    if isinstance(out, Violation):
        return
    lam, k = out
    for i in range(len(vals)):
        for j in range(len(vals)):
            d, dt = abs(vals[i] - vals[j]), abs(i - j)
            assert dt / lam - k - 1e-9 <= d <= lam * dt + k + 1e-9


def test_close_system_is_idempotent():
    X, L = path_graph(6)
    C = close_system(L)
    CC = close_system(C)
    assert {g.values for g in C.segments} == {g.values for g in CC.segments}
    assert C.symmetric and C.prefix_closed


def test_close_system_contains_reversals():
    X, L = path_graph(4)
    vals = {g.values for g in close_system(L).segments}
    for v in list(vals):
        assert tuple(reversed(v)) in vals


def test_step_ray_resamples_on_integers():
    r = DiscretePath(tuple(range(9)), step=0.5, horizon=4.0)
    s = step_ray(r)
    assert s.values == (0, 2, 4, 6, 8)
    assert s.horizon == 4.0


def test_system_indexes_by_endpoints():
    g = DiscretePath((0, 1, 2))
    L = GeodesicSystem((g,))
    assert L.between(0, 2) == [0]
    assert L.between(2, 0) == []
