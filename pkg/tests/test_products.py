import math

import numpy as np
import pytest

from ccx.errors import PreconditionError
from ccx.metric import DiscretePath
from ccx.products import ProductEngine, audit_product_laws, path_product, ray_product


def leaf_ray(X, L, bits):
    return next(r for r, i in zip(L.rays, L.ray_info) if i["leaf"] == "r" + bits)


@pytest.mark.parametrize("b", [0, 1, 2, 3])
def test_tree_ray_product_is_branch_depth_plus_five(tree6, nominal, b):
    X, L, _ = tree6
    # leaves agree on the first b bits and differ at bit b+1
    a = "0" * 6
    c = "0" * b + "1" + "0" * (5 - b)
    v, sat = ray_product(leaf_ray(X, L, a), leaf_ray(X, L, c), nominal, X)
    assert v == min(b + 5, 6)
    assert sat == (b + 5 >= 6)


def test_tree_ray_product_against_trace_scan(tree6, nominal):
    # replay: last t with 2(t - b) <= D1
    X, L, _ = tree6
    rays = L.rays
    for i in range(0, len(rays), 7):
        for j in range(0, len(rays), 5):
            tr = [X.d(rays[i].values[t], rays[j].values[t]) for t in range(7)]
            want = max(t for t in range(7) if tr[t] <= nominal.D1)
            assert ray_product(rays[i], rays[j], nominal, X)[0] == want


def test_identical_rays_saturate(tree6, nominal):
    X, L, _ = tree6
    assert ray_product(L.rays[3], L.rays[3], nominal, X) == (6.0, True)


def test_rays_must_start_at_base(tree6, nominal):
    X, L, _ = tree6
    off = DiscretePath(L.rays[0].values[1:], horizon=5.0)
    with pytest.raises(PreconditionError):
        ray_product(off, L.rays[0], nominal, X)


def test_antipodal_disc_rays(disc32, nominal):
    X, L, m = disc32
    ang = np.array([i["angle"] for i in m.ray_info])
    vals = []
    for a in range(len(ang)):
        for b in range(a + 1, len(ang)):
            gap = abs(ang[a] - ang[b]) % (2 * math.pi)
            if abs(gap - math.pi) < 1e-9:
                vals.append(m.ray_prod[a, b])
    # continuum value 5; snapping moves the trace by at most one grid step
    assert vals and all(4 <= v <= 6 for v in vals)


def test_point_in_ball_has_zero_product(disc32, nominal):
    X, L, m = disc32
    eng = m.engine(L)
    far = int(np.argmax(X.from_base))
    assert eng.product(("point", X.o), ("point", far)) == (0.0, False)


def test_entity_product_is_max_over_stored_pairs(disc32, nominal):
    X, L, m = disc32
    eng = m.engine(L)
    rng = np.random.default_rng(3)
    pts = [v for v in eng.reps if not eng.in_ball(v)]
    for _ in range(20):
        v, w = (int(x) for x in rng.choice(pts, 2, replace=False))
        got, _ = eng.product(("point", v), ("point", w))
        brute = max(path_product(X, L.segments[i], L.segments[j], nominal.D1)[0]
                    for i in eng.reps[v] for j in eng.reps[w])
        assert got == brute


def test_class_product_is_member_max(tree6):
    X, L, m = tree6
    eng = m.engine(L)
    for x in range(m.n_classes):
        for y in range(x + 1, m.n_classes):
            sub = m.ray_prod[np.ix_(m.classes[x], m.classes[y])]
            assert eng.product(("class", x), ("class", y))[0] == sub.max()


def test_degenerate_triple_holds(tree6):
    X, L, m = tree6
    eng = m.engine(L)
    v = eng.product(("class", 0), ("class", 0))[0]
    assert v >= v / (m.table.D2 * m.table.D3)


def test_tree_laws(tree6):
    X, L, m = tree6
    rep = audit_product_laws(m.engine(L), n_triples=1000, seed=0)
    assert rep.ok
    assert rep.laws["ultrametric_rays"].checked + rep.laws["ultrametric_rays"].skipped > 0


def test_disc_laws(disc32):
    X, L, m = disc32
    rep = audit_product_laws(m.engine(L), n_triples=1000, seed=0)
    assert rep.laws["ultrametric_entities"].checked >= 1000
    assert rep.laws["ultrametric_entities"].violations == 0


def test_product_table_csv(tree6):
    X, L, m = tree6
    t = m.engine(L).table_for([("class", 0), ("class", 1)])
    lines = t.to_csv().splitlines()
    assert lines[0] == "entityA,entityB,value,saturated"
    assert len(lines) == 4
