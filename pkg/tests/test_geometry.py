import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpsmesh import geometry as geo
from mpsmesh.errors import CollinearInput, DegenerateSimplex, NonPlanarInput

import oracles

coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def pt2(rng, scale=1.0):
    return tuple(rng.uniform(-scale, scale, 2))


# ---------------------------------------------------------------------------
# exact predicates vs the rational oracle
# ---------------------------------------------------------------------------

def test_orient2d_anchors():
    assert geo.orient2d((0, 0), (1, 0), (0, 1)) == 1
    assert geo.orient2d((0, 0), (0, 1), (1, 0)) == -1
    assert geo.orient2d((0, 0), (1, 1), (2, 2)) == 0
    # collinear by construction but not by float arithmetic accident
    a, b = (0.1, 0.1), (0.7, 0.7)
    assert geo.orient2d(a, b, (0.4, 0.4)) == 0


def test_incircle_anchor_unit_circle():
    a, b, c = (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)  # CCW on the unit circle
    assert geo.orient2d(a, b, c) == 1
    assert geo.incircle2d(a, b, c, (0.0, 0.0)) == 1       # center: inside
    assert geo.incircle2d(a, b, c, (5.0, 5.0)) == -1      # far away: outside
    assert geo.incircle2d(a, b, c, (0.0, -1.0)) == 0      # cocircular


def test_insphere_anchor_unit_sphere():
    a, b, c, d = (1., 0., 0.), (0., 1., 0.), (0., 0., 1.), (-1., 0., 0.)
    s = geo.orient3d(a, b, c, d)
    assert s != 0
    assert geo.insphere3d(a, b, c, d, (0., 0., 0.)) * s == 1
    assert geo.insphere3d(a, b, c, d, (5., 5., 5.)) * s == -1
    assert geo.insphere3d(a, b, c, d, (0., -1., 0.)) == 0


@given(st.lists(coord, min_size=6, max_size=6))
def test_orient2d_matches_oracle(vals):
    a, b, c = (vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5])
    assert geo.orient2d(a, b, c) == oracles.orient2d_oracle(a, b, c)


@given(st.lists(coord, min_size=8, max_size=8))
def test_incircle2d_matches_oracle(vals):
    pts = [(vals[2 * i], vals[2 * i + 1]) for i in range(4)]
    assert geo.incircle2d(*pts) == oracles.incircle2d_oracle(*pts)


@given(st.lists(coord, min_size=12, max_size=12))
def test_orient3d_matches_oracle(vals):
    pts = [tuple(vals[3 * i:3 * i + 3]) for i in range(4)]
    assert geo.orient3d(*pts) == oracles.orient3d_oracle(*pts)


@settings(max_examples=60)
@given(st.lists(coord, min_size=15, max_size=15))
def test_insphere3d_matches_oracle(vals):
    pts = [tuple(vals[3 * i:3 * i + 3]) for i in range(5)]
    assert geo.insphere3d(*pts) == oracles.insphere3d_oracle(*pts)


def test_predicates_near_degenerate_sweep():
    # Points on a line, then nudged by single ulps: the float determinant is
    # pure rounding noise there, so only the exact fallback can get it right.
    rng = np.random.default_rng(42)
    for _ in range(300):
        a = rng.uniform(-1, 1, 2)
        d = rng.uniform(-1, 1, 2)
        t1, t2 = rng.uniform(0.1, 3.0, 2)
        b = a + t1 * d
        c = a + t2 * d
        for _ in range(3):
            cc = c.copy()
            k = rng.integers(2)
            cc[k] = np.nextafter(cc[k], rng.choice([-1e9, 1e9]))
            got = geo.orient2d(tuple(a), tuple(b), tuple(cc))
            want = oracles.orient2d_oracle(tuple(a), tuple(b), tuple(cc))
            assert got == want


def test_incircle_near_cocircular_sweep():
    rng = np.random.default_rng(7)
    for _ in range(150):
        cx, cy, r = rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 2)
        th = np.sort(rng.uniform(0, 2 * np.pi, 4))
        pts = [(cx + r * math.cos(t), cy + r * math.sin(t)) for t in th]
        got = geo.incircle2d(*pts)
        assert got == oracles.incircle2d_oracle(*pts)


def test_vectorized_predicates_match_scalar():
    rng = np.random.default_rng(11)
    q2 = rng.standard_normal((300, 4, 2))
    many = geo.incircle2d_many(q2[:, 0], q2[:, 1], q2[:, 2], q2[:, 3])
    single = [geo.incircle2d(*q2[i]) for i in range(len(q2))]
    assert (many == np.array(single)).all()

    q3 = rng.standard_normal((200, 5, 3))
    many3 = geo.insphere3d_many(q3[:, 0], q3[:, 1], q3[:, 2], q3[:, 3], q3[:, 4])
    single3 = [geo.insphere3d(*q3[i]) for i in range(len(q3))]
    assert (many3 == np.array(single3)).all()

    # exercise the exact-fallback branch with cospherical rows
    sph = np.array([[1., 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0], [0, -1, 0]])
    assert geo.insphere3d_many(*(sph[None, i] for i in range(5)))[0] == 0


def test_diametral_sign():
    a, b = (0.0, 0.0), (2.0, 0.0)
    assert geo.diametral_sign((1.0, 0.5), a, b) == -1   # inside
    assert geo.diametral_sign((1.0, 1.0), a, b) == 0    # on the circle
    assert geo.diametral_sign((1.0, 1.5), a, b) == 1    # outside
    assert geo.diametral_sign((0.0, 0.0), a, b) == 0    # endpoint
    # 3D
    assert geo.diametral_sign((1., 0., 0.9), (0., 0., 0.), (2., 0., 0.)) == -1


# ---------------------------------------------------------------------------
# circumcenters
# ---------------------------------------------------------------------------

def test_circumcircle_basic():
    c, r = geo.circumcircle2d((0., 0.), (1., 0.), (0., 1.))
    assert np.allclose(c, [0.5, 0.5])
    assert r == pytest.approx(math.sqrt(2) / 2)


def test_circumcircle_collinear_raises():
    with pytest.raises(DegenerateSimplex):
        geo.circumcircle2d((0., 0.), (1., 1.), (2., 2.))


def test_circumsphere_regular_tet():
    reg = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    c, r = geo.circumsphere3d(*reg)
    assert np.allclose(c, 0.0, atol=1e-12)
    assert r == pytest.approx(math.sqrt(3))
    with pytest.raises(DegenerateSimplex):
        geo.circumsphere3d((0., 0., 0.), (1., 0., 0.), (0., 1., 0.), (1., 1., 0.))


def test_batch_circumcenters_equidistant():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, (30, 2))
    tris = rng.choice(30, size=(40, 3), replace=True)
    ok = np.array([geo.orient2d(pts[t[0]], pts[t[1]], pts[t[2]]) != 0 for t in tris])
    tris = tris[ok]
    centers, r2 = geo.circumcenters2d(pts, tris)
    for t, ctr, rr in zip(tris, centers, r2):
        d = np.linalg.norm(pts[t] - ctr, axis=1)
        assert np.allclose(d ** 2, rr, rtol=1e-8)

    pts3 = rng.uniform(0, 1, (30, 3))
    tets = rng.choice(30, size=(25, 4), replace=True)
    ok = np.array([geo.orient3d(*pts3[t]) != 0 for t in tets])
    centers3, r23 = geo.circumcenters3d(pts3, tets[ok])
    for t, ctr, rr in zip(tets[ok], centers3, r23):
        d = np.linalg.norm(pts3[t] - ctr, axis=1)
        assert np.allclose(d ** 2, rr, rtol=1e-8)


# ---------------------------------------------------------------------------
# distances, segments, polygons
# ---------------------------------------------------------------------------

def test_point_segment_distance():
    assert geo.point_segment_distance((0, 1), (-1, 0), (1, 0)) == pytest.approx(1.0)
    assert geo.point_segment_distance((5, 1), (-1, 0), (1, 0)) == pytest.approx(math.hypot(4, 1))
    assert geo.point_segment_distance((0, 0, 3), (0, 0, 0), (0, 0, 0)) == pytest.approx(3.0)
    assert geo.point_segment_distance((1, 1, 1), (0, 0, 0), (2, 2, 2)) == pytest.approx(0.0)


def test_segment_crossing():
    hit = geo.segment_crossing_2d((0, 0), (2, 2), (0, 2), (2, 0))
    assert hit is not None
    t, u = hit
    assert t == pytest.approx(0.5) and u == pytest.approx(0.5)
    # touching at an endpoint is not a proper crossing
    assert geo.segment_crossing_2d((0, 0), (1, 1), (1, 1), (2, 0)) is None
    # T-junction: endpoint interior to the other segment
    assert geo.segment_crossing_2d((0, 0), (2, 0), (1, 0), (1, 5)) is None
    # parallel / collinear overlap
    assert geo.segment_crossing_2d((0, 0), (1, 0), (0, 1), (1, 1)) is None
    assert geo.segment_crossing_2d((0, 0), (2, 0), (1, 0), (3, 0)) is None


def test_polygon_tester_boundary_inclusive():
    sq = [[0, 0], [1, 0], [1, 1], [0, 1]]
    t = geo.PolygonTester(sq)
    for p in [(0.5, 0.5), (0, 0), (1, 1), (1, 0.5), (0.5, 0), (0.5, 1.0), (0, 0.25)]:
        assert t.contains(*p), p
    for p in [(1 + 1e-9, 0.5), (-1e-9, 0.5), (0.5, -1e-15), (2, 2)]:
        assert not t.contains(*p), p
    assert geo.point_in_polygon((0.5, 1.0), sq)


@settings(max_examples=40)
@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=30))
def test_polygon_tester_matches_oracle(points):
    poly = [[0, 0], [2, 0], [2, 1], [1, 2], [0, 1]]
    t = geo.PolygonTester(poly)
    pts = np.array(points, float)
    got = t.contains_many(pts)
    for p, g in zip(points, got):
        assert t.contains(*p) == g
        assert g == oracles.point_in_polygon_oracle(p, poly)


def test_polygon_tester_near_edge_adversarial():
    poly = [[0, 0], [1, 0], [1, 1], [0.5, 1.5], [0, 1]]
    t = geo.PolygonTester(poly)
    rng = np.random.default_rng(3)
    pts = []
    for _ in range(1500):
        i = rng.integers(5)
        a = np.array(poly[i], float)
        b = np.array(poly[(i + 1) % 5], float)
        p = a + rng.uniform(0, 1) * (b - a)
        p += rng.choice([0.0, 1e-17, -1e-17, 1e-13, -1e-13]) * rng.standard_normal(2)
        pts.append(p)
    pts = np.array(pts)
    got = t.contains_many(pts)
    for p, g in zip(pts, got):
        assert g == oracles.point_in_polygon_oracle(p, poly)


def test_polygon_signed_area():
    assert geo.polygon_signed_area([[0, 0], [2, 0], [2, 1], [0, 1]]) == pytest.approx(2.0)
    assert geo.polygon_signed_area([[0, 0], [0, 1], [2, 1], [2, 0]]) == pytest.approx(-2.0)


# ---------------------------------------------------------------------------
# plane frames
# ---------------------------------------------------------------------------

def test_frame_axis_aligned_rectangle():
    v = np.array([[0, 0, 0], [2, 0, 0], [2, 1, 0], [0, 1, 0]], float)
    fr = geo.build_local_frame(v)
    assert np.allclose(fr.origin, v[0])
    assert np.allclose(fr.u, [1, 0, 0])    # longest edge, first on ties
    loc = fr.to_local(v)
    assert geo.polygon_signed_area(loc) == pytest.approx(2.0)  # CCW in-frame
    assert np.abs(fr.to_world(loc) - v).max() < 1e-12


def test_frame_tie_takes_first_longest_edge():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)  # square
    fr = geo.build_local_frame(v)
    assert np.allclose(fr.origin, [0, 0, 0])
    assert np.allclose(fr.u, [1, 0, 0])


def test_frame_rotated_roundtrip():
    rng = np.random.default_rng(7)
    base = np.array([[0, 0, 0], [3, 0, 0], [4, 2, 0], [1, 3, 0]], float)
    for _ in range(10):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        shift = rng.uniform(-5, 5, 3)
        w = base @ q.T + shift
        fr = geo.build_local_frame(w)
        loc = fr.to_local(w)
        assert geo.polygon_signed_area(loc) > 0
        assert np.abs(fr.to_world(loc) - w).max() < 1e-9
        # frame is orthonormal and right-handed
        assert abs(np.dot(fr.u, fr.v)) < 1e-12
        assert np.allclose(np.cross(fr.u, fr.v), fr.normal, atol=1e-12)


def test_frame_rejects_collinear_and_nonplanar():
    line = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2]], float)
    with pytest.raises(CollinearInput):
        geo.build_local_frame(line)
    bent = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.3], [0, 1, 0]], float)
    with pytest.raises(NonPlanarInput):
        geo.build_local_frame(bent)
    # ... but a generous explicit tolerance accepts it
    fr = geo.build_local_frame(bent, tol=0.5)
    assert fr is not None


def test_point_polygon_distance_3d():
    sq = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    fr = geo.build_local_frame(sq)
    local = fr.to_local(sq)
    queries = np.array([
        [0.5, 0.5, 2.0],   # above the interior
        [2.0, 0.5, 0.0],   # beyond an edge, in-plane
        [2.0, 0.5, 1.0],   # beyond an edge, off-plane
        [0.25, 0.75, 0.0], # inside, in-plane
    ])
    d = geo.point_polygon_distance_3d(queries, fr, local)
    assert d == pytest.approx([2.0, 1.0, math.sqrt(2), 0.0], abs=1e-12)


# ---------------------------------------------------------------------------
# simplex quality
# ---------------------------------------------------------------------------

def test_equilateral_triangle_quality():
    tq = geo.tri_quality((0., 0.), (1., 0.), (0.5, math.sqrt(3) / 2))
    assert np.allclose(tq.angles, 60.0)
    assert tq.aspect == pytest.approx(1.0)


def test_right_triangle_quality():
    tq = geo.tri_quality((0., 0.), (1., 0.), (0., 1.))
    assert np.allclose(np.sort(tq.angles), [45.0, 45.0, 90.0])
    # r_in = (a + b - hyp)/2 = 1 - sqrt(2)/2, r_circ = hyp/2 = sqrt(2)/2:
    # ratio 2*r_in/r_circ = 2*sqrt(2) - 2
    assert tq.aspect == pytest.approx(2 * math.sqrt(2) - 2)


def test_degenerate_triangle_aspect_zero():
    tq = geo.tri_quality((0., 0.), (1., 0.), (2., 0.))
    assert tq.aspect == pytest.approx(0.0)


def test_regular_tet_quality():
    reg = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    q = geo.tet_quality(*reg)
    assert np.allclose(q.dihedrals, math.degrees(math.acos(1.0 / 3.0)))
    assert q.aspect == pytest.approx(1.0)


def test_flat_sliver_tet_quality():
    # Nearly-flat tet: tiny min dihedral, near-180 max, tiny aspect.
    h = 1e-3
    tet = np.array([[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, 0.5, h]], float)
    q = geo.tet_quality(*tet)
    assert q.dihedrals.min() < 1.0
    assert q.dihedrals.max() > 170.0
    assert q.aspect < 0.01


def test_tet_quality_invariant_under_rigid_motion():
    rng = np.random.default_rng(13)
    tet = rng.standard_normal((4, 3))
    q0 = geo.tet_quality(*tet)
    r, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = tet @ r.T + rng.uniform(-10, 10, 3)
    q1 = geo.tet_quality(*moved)
    assert np.allclose(np.sort(q0.dihedrals), np.sort(q1.dihedrals), atol=1e-8)
    assert q0.aspect == pytest.approx(q1.aspect, abs=1e-10)


def test_batch_quality_matches_scalar():
    rng = np.random.default_rng(17)
    pts = rng.standard_normal((40, 3))
    tets = rng.choice(40, size=(30, 4), replace=True)
    tets = tets[[geo.orient3d(*pts[t]) != 0 for t in tets]]
    dih = geo.tet_dihedral_angles(pts, tets)
    asp = geo.tet_aspect(pts, tets)
    for i, t in enumerate(tets):
        q = geo.tet_quality(*pts[t])
        assert np.allclose(np.sort(dih[i]), q.dihedrals, atol=1e-9)
        assert asp[i] == pytest.approx(q.aspect)


def test_max_edge_lengths():
    pts = np.array([[0, 0, 0], [3, 0, 0], [0, 4, 0], [0, 0, 12]], float)
    tri = np.array([[0, 1, 2]])
    assert geo.max_edge_lengths(pts, tri)[0] == pytest.approx(5.0)
    tet = np.array([[0, 1, 2, 3]])
    assert geo.max_edge_lengths(pts, tet)[0] == pytest.approx(math.hypot(4, 12))
