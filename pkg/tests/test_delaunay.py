"""Triangulation tests: exactness oracles, goldens, conformity, slivers."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mpsmesh import delaunay as D
from mpsmesh import sampler as S
from mpsmesh.errors import (
    AllCollinear,
    AllCoplanar,
    ConformityError,
    DuplicatePoints,
    InvalidParams,
    SegmentEndpointMissing,
)
from mpsmesh.geometry import circumcircle2d, point_in_polygon, tet_quality
from mpsmesh.radius_field import RadiusParams, UniformField3D
from mpsmesh.streams import DEFAULT_SEED, FRACTURE, stream

UNIT = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
TRACES = [
    ((0.15, 0.30), (0.85, 0.30)),
    ((0.30, 0.15), (0.30, 0.85)),
    ((0.15, 0.72), (0.85, 0.58)),
]


# -- 2D ---------------------------------------------------------------------


def test_square_two_triangles():
    sq = np.asarray(UNIT, dtype=float)
    m = D.delaunay2d(sq)
    assert m.cells.tolist() == [[0, 1, 2], [0, 2, 3]]
    _c, r = circumcircle2d(sq[0], sq[1], sq[2])
    assert r == pytest.approx(np.sqrt(2) / 2)


def test_cocircular_tie_is_canonical():
    # all four points on the unit circle: both diagonals are Delaunay.
    # the tie must resolve the same way every run.
    diamond = np.array([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
    m = D.delaunay2d(diamond)
    assert m.cells.tolist() == [[0, 1, 2], [0, 2, 3]]
    again = D.delaunay2d(diamond)
    assert np.array_equal(m.cells, again.cells)


def test_random_cloud_2d_golden_and_oracle():
    pts = np.random.default_rng(3).random((200, 2))
    m = D.delaunay2d(pts)
    assert len(m.cells) == 389
    nviol, _ = oracles.delaunay_violations(pts, m.cells)
    assert nviol == 0


def test_cells_sorted_canonically():
    pts = np.random.default_rng(11).random((60, 2))
    m = D.delaunay2d(pts)
    rows = m.cells.tolist()
    assert all(r == sorted(r) for r in rows)
    assert rows == sorted(rows)


def test_quality_attached_to_mesh():
    pts = np.random.default_rng(5).random((50, 2))
    m = D.delaunay2d(pts)
    q = m.quality
    assert set(q) == {"min_angle", "max_angle", "aspect"}
    assert all(len(v) == len(m.cells) for v in q.values())
    assert (q["min_angle"] > 0).all() and (q["max_angle"] < 180).all()
    assert (0 < q["aspect"]).all() and (q["aspect"] <= 1).all()


def test_degenerate_2d_inputs():
    with pytest.raises(AllCollinear):
        D.delaunay2d([(0, 0), (1, 1), (2, 2), (3, 3)])
    with pytest.raises(AllCollinear):
        D.delaunay2d([(0, 0), (1, 1)])
    with pytest.raises(DuplicatePoints):
        D.delaunay2d([(0, 0), (1, 0), (0, 1), (1e-13, 0)])


@settings(deadline=None, max_examples=25)
@given(st.lists(st.tuples(st.integers(0, 400), st.integers(0, 400)),
                min_size=5, max_size=40, unique=True))
def test_delaunay2d_empty_circles_property(grid_pts):
    # integer grid coordinates: duplicates excluded by construction, and
    # cocircular quadruples are common -- exactly what the tie rule must
    # survive.
    pts = np.asarray(grid_pts, dtype=float) / 400.0
    try:
        m = D.delaunay2d(pts)
    except AllCollinear:
        return
    nviol, _ = oracles.delaunay_violations(pts, m.cells)
    assert nviol == 0


# -- 3D ---------------------------------------------------------------------


def test_cube_golden():
    cube = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    m = D.delaunay3d(cube)
    assert m.cells.tolist() == [
        [0, 1, 3, 4], [0, 2, 3, 4], [1, 3, 4, 5],
        [2, 3, 4, 6], [3, 4, 5, 7], [3, 4, 6, 7],
    ]
    # every circumsphere passes through all 8 corners; the oracle must
    # examine those cospherical points exactly and find no violation.
    nviol, nexact = oracles.delaunay_violations(cube, m.cells)
    assert (nviol, nexact) == (0, 24)


def test_cube_with_center():
    cube = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
    pts = np.vstack([cube, [[0.5, 0.5, 0.5]]])
    m = D.delaunay3d(pts)
    assert len(m.cells) == 12
    assert all(8 in row for row in m.cells.tolist())
    assert oracles.delaunay_violations(pts, m.cells) == (0, 12)


def test_random_cloud_3d_golden_and_oracle():
    pts = np.random.default_rng(3).random((300, 3))
    m = D.delaunay3d(pts)
    assert len(m.cells) == 1754
    nviol, _ = oracles.delaunay_violations(pts, m.cells)
    assert nviol == 0


def test_degenerate_3d_inputs():
    with pytest.raises(AllCoplanar):
        D.delaunay3d([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (2, 3, 0)])
    with pytest.raises(DuplicatePoints):
        D.delaunay3d([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
                      (0, 0, 1 + 1e-14)])


@settings(deadline=None, max_examples=15)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20),
                          st.integers(0, 20)),
                min_size=6, max_size=25, unique=True))
def test_delaunay3d_empty_spheres_property(grid_pts):
    pts = np.asarray(grid_pts, dtype=float) / 20.0
    try:
        m = D.delaunay3d(pts)
    except AllCoplanar:
        return
    nviol, _ = oracles.delaunay_violations(pts, m.cells)
    assert nviol == 0


# -- conformity -------------------------------------------------------------

# square corners, three nodes on the feature segment y=0.5, and one node
# placed inside the diametral circle of the (0.2,0.5)-(0.5,0.5) pair.
CONF_PTS = np.array([
    (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0),
    (0.2, 0.5), (0.5, 0.5), (0.8, 0.5),
    (0.35, 0.52),
])
CONF_SEG = [((0.2, 0.5), (0.8, 0.5))]


def test_make_conforming_excavates_offender():
    unconstrained = D.delaunay2d(CONF_PTS)
    assert (4, 5) not in unconstrained.edge_set()

    pruned, mesh = D.make_conforming(CONF_PTS, CONF_SEG)
    assert len(pruned) == 7  # exactly the offender is gone
    assert mesh.constrained_edges == [(4, 5), (5, 6)]
    edges = mesh.edge_set()
    assert all(e in edges for e in mesh.constrained_edges)


def test_make_conforming_no_offender_keeps_all():
    pts = CONF_PTS[:7]
    pruned, mesh = D.make_conforming(pts, CONF_SEG)
    assert len(pruned) == 7
    assert mesh.constrained_edges == [(4, 5), (5, 6)]


def test_make_conforming_missing_endpoint():
    with pytest.raises(SegmentEndpointMissing):
        D.make_conforming(CONF_PTS, [((0.21, 0.5), (0.8, 0.5))])


# -- sliver detection -------------------------------------------------------


def test_flat_tet_is_sliver():
    flat = [(0, 0, 0), (1, 0, 0), (0.5, 0.87, 0), (0.5, 0.29, 0.001)]
    q = tet_quality(*flat)
    assert q.dihedrals[0] == pytest.approx(0.1975708704166845)
    assert q.aspect == pytest.approx(8.958736060859703e-06)
    m = D.delaunay3d(np.asarray(flat, dtype=float))
    assert D.detect_slivers(m, D.SliverThresholds()).tolist() == [0]


def test_regular_tet_not_sliver():
    s2 = 1 / np.sqrt(2)
    reg = np.array([(1, 0, -s2), (-1, 0, -s2), (0, 1, s2), (0, -1, s2)],
                   dtype=float)
    q = tet_quality(*reg)
    assert q.dihedrals[0] == pytest.approx(70.52877936550931)
    assert q.dihedrals[-1] == pytest.approx(70.52877936550931)
    assert q.aspect == pytest.approx(1.0)
    m = D.delaunay3d(reg)
    assert len(D.detect_slivers(m, D.SliverThresholds())) == 0


def test_thresholds_validation():
    with pytest.raises(InvalidParams):
        D.SliverThresholds(0, 180, 0)
    with pytest.raises(InvalidParams):
        D.SliverThresholds(10, 10, 0.2)
    with pytest.raises(InvalidParams):
        D.SliverThresholds(8, 170, 1.5)
    # open-interval limits are the closest legal stand-in for "accept
    # everything", and they must flag nothing.
    vac = D.SliverThresholds(1e-300, 179.9999999999999, 1e-300)
    flat = np.array([(0, 0, 0), (1, 0, 0), (0.5, 0.87, 0),
                     (0.5, 0.29, 0.001)])
    assert len(D.detect_slivers(D.delaunay3d(flat), vac)) == 0


# -- sampled-mesh quality ---------------------------------------------------


def test_graded_sample_mesh_quality():
    # variable-radius sample over the traced square, then its Delaunay:
    # dual-route check of mesh exactness plus the interior-angle guarantee.
    params = RadiusParams(h=0.05, a=0.1, f=1.0, r=40.0)
    smp, eng = S.sample_polygon(UNIT, TRACES, params, 80,
                                stream(DEFAULT_SEED, FRACTURE, 0), rounds=0)
    eps = S.measure_epsilon_2d(smp, eng.grid, eng.field, eng.tester)
    m = D.delaunay2d(smp.points)
    assert len(smp) == 806
    assert len(m.cells) == 1525
    assert eps == 0.0
    q = m.quality
    assert float(q["min_angle"].min()) == pytest.approx(29.507762727878482)
    assert float(q["max_angle"].max()) == pytest.approx(117.61092707485167)
    assert float(q["aspect"].min()) == pytest.approx(0.4946255120814552)

    nviol, _ = oracles.delaunay_violations(smp.points, m.cells)
    assert nviol == 0

    # interior-circumcenter cells must clear the derived angle bound
    # arcsin((1 - L - eps L) / (2 + 2 eps)) with L = 0.1.
    poly = np.asarray(UNIT)
    bound = np.degrees(np.arcsin((1 - 0.1 - eps * 0.1) / (2 + 2 * eps)))
    inside = np.array([
        point_in_polygon(circumcircle2d(*smp.points[c])[0], poly)
        for c in m.cells
    ])
    assert inside.all()
    assert float(q["min_angle"].min()) > bound


# -- sliver removal loop ----------------------------------------------------


def _small_box_run(seed):
    lo, hi = np.zeros(3), np.ones(3)
    params = RadiusParams(h=0.14, a=0.1, f=1.0, r=0.0, rho_max=0.07)
    field = UniformField3D(params)
    smp, _eng = S.sample_volume_3d(None, lo, hi, field, params, 30, seed)
    refill = S.refill_resampler(lo, hi, field, params, 30, seed)
    return smp, D.sliver_removal_loop(smp, refill, D.SliverThresholds())


def test_sliver_loop_clean_mesh_is_identity():
    pts = np.vstack([np.array(list(itertools.product((0.0, 1.0), repeat=3))),
                     [[0.5, 0.5, 0.5]]])
    smp = S.Sample(points=pts, rho=np.full(9, 0.5),
                   tags=np.full(9, S.VOLUME, dtype=np.int32),
                   prov=np.zeros((9, 2), dtype=np.int64), counters={})

    def no_refill(survivors, iteration, removed):  # pragma: no cover
        raise AssertionError("clean mesh must not trigger a refill")

    out, mesh, log = D.sliver_removal_loop(smp, no_refill,
                                           D.SliverThresholds())
    assert log["status"] == "converged"
    assert log["iterations"] == []
    assert np.array_equal(out.points, pts)
    assert len(mesh.cells) == 12


def test_sliver_loop_small_box_converges():
    initial, (out, mesh, log) = _small_box_run(DEFAULT_SEED)
    assert len(initial) == 2181
    assert log["status"] == "converged"
    assert [it["removed"] for it in log["iterations"]] == \
        [215, 117, 66, 42, 20, 8, 9, 6, 8]
    assert len(out) == 2275
    assert len(D.detect_slivers(mesh, D.SliverThresholds())) == 0
    q = mesh.quality
    assert float(q["min_dihedral"].min()) == pytest.approx(9.649633154894913)
    assert float(q["aspect"].min()) >= 0.2

    # every refilled volume node keeps half its radius clear of the walls
    vol = out.tags == S.VOLUME
    dfaces = np.minimum(out.points[vol].min(axis=1),
                        (1 - out.points[vol]).min(axis=1))
    assert float((dfaces / (out.rho[vol] / 2)).min()) >= 1.0

    diag = D.boundary_circumradius_diagnostic(mesh, np.zeros(3), np.ones(3),
                                              0.07)
    assert diag["outside_centers"] == 282
    assert diag["max_circumradius"] == pytest.approx(0.0897644, abs=1e-4)
    assert diag["max_ratio"] > 0


def test_sliver_loop_deterministic():
    _, (out1, mesh1, log1) = _small_box_run(DEFAULT_SEED)
    _, (out2, mesh2, log2) = _small_box_run(DEFAULT_SEED)
    assert np.array_equal(out1.points, out2.points)
    assert np.array_equal(mesh1.cells, mesh2.cells)
    assert log1["iterations"] == log2["iterations"]


def test_boundary_diagnostic_all_inside():
    pts = np.vstack([np.array(list(itertools.product((0.0, 1.0), repeat=3))),
                     [[0.5, 0.5, 0.5]]])
    m = D.delaunay3d(pts)
    # circumcenters coincide with the box center: nothing outside
    diag = D.boundary_circumradius_diagnostic(m, np.zeros(3) - 1,
                                              np.ones(3) + 1, 0.5)
    assert diag["outside_centers"] == 0
    assert diag["max_ratio"] == 0.0


# -- quality report ---------------------------------------------------------


def test_quality_report_equilateral():
    tri = np.array([(0.0, 0.0), (1.0, 0.0), (0.5, np.sqrt(3) / 2)])
    rep = D.quality_report(D.delaunay2d(tri))
    assert set(rep) == {"min_angle", "max_angle", "aspect"}
    for name in ("min_angle", "max_angle"):
        assert rep[name]["min"] == pytest.approx(60.0)
        assert rep[name]["max"] == pytest.approx(60.0)
        assert rep[name]["n"] == 1
    assert rep["aspect"]["min"] == pytest.approx(1.0)


def test_quality_report_bins_sum_to_n():
    pts = np.random.default_rng(7).random((120, 2))
    rep = D.quality_report(D.delaunay2d(pts))
    for name, block in rep.items():
        assert sum(c for _lo, _hi, c in block["bins"]) == block["n"]
        lows = [b[0] for b in block["bins"]]
        assert lows == sorted(lows)
        assert block["bins"][0][0] <= block["min"]
        assert block["bins"][-1][1] >= block["max"]
