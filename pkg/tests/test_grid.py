import math

import numpy as np
import pytest

from mpsmesh.errors import DuplicatePoints, InvalidParams
from mpsmesh.geometry import PolygonTester
from mpsmesh.grid import AccelGrid


def make2d(h=0.01, rho_ceiling=0.045, a=0.1, lo=(0, 0), hi=(1, 1)):
    return AccelGrid(lo, hi, h=h, dim=2, rho_ceiling=rho_ceiling, lipschitz_a=a)


def test_cell_side_and_dims_2d():
    g = make2d()
    assert g.side == pytest.approx(0.01 / (2 * math.sqrt(2)))
    assert g.side == pytest.approx(0.0035355339, abs=1e-9)
    assert tuple(g.dims) == (283, 283)
    # diameter constraint: the whole point of the sizing
    assert g.side * math.sqrt(2) <= 0.01 / 2 + 1e-15


def test_cell_side_3d():
    g = AccelGrid((0, 0, 0), (1, 1, 1), h=1.0, dim=3, rho_ceiling=1.0, lipschitz_a=0.1)
    assert g.side == pytest.approx(1 / (2 * math.sqrt(3)))
    assert g.side == pytest.approx(0.28868, abs=1e-5)
    assert tuple(g.dims) == (4, 4, 4)


def test_tiny_bbox_clamps_to_one_cell():
    g = AccelGrid((0, 0), (0.001, 0.001), h=1.0, dim=2, rho_ceiling=0.5, lipschitz_a=0.1)
    assert tuple(g.dims) == (1, 1)


def test_invalid_construction():
    with pytest.raises(InvalidParams):
        AccelGrid((0, 0), (1, 1), h=0, dim=2, rho_ceiling=1, lipschitz_a=0.1)
    with pytest.raises(InvalidParams):
        AccelGrid((0, 0), (1, 1), h=1, dim=4, rho_ceiling=1, lipschitz_a=0.1)
    with pytest.raises(InvalidParams):
        AccelGrid((1, 1), (0, 0), h=1, dim=2, rho_ceiling=1, lipschitz_a=0.1)


def test_out_of_box_points_land_in_blocked_pad():
    g = make2d()
    for p in [(-0.5, 0.5), (1.5, 0.5), (0.5, -0.5), (2, 2), (-1, -1)]:
        assert g.is_blocked(g.cell_of(p))
    assert not g.is_blocked(g.cell_of((0.5, 0.5)))


def test_plus_stencil_shape():
    g = make2d()
    # radius of one cell side: must contain the 3x3 block, may extend to 5x5
    off = set(map(int, g.plus_offsets(g.side)))
    s0, s1 = int(g.strides[0]), int(g.strides[1])
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            assert dx * s0 + dy * s1 in off
    span = 2 * math.ceil(g.side / g.side) + 3
    assert len(off) <= span ** 2
    for rho in (0.004, 0.0123, 0.045):
        n = len(g.plus_offsets(rho))
        bound = (2 * math.ceil(rho / g.side) + 3) ** 2
        assert n <= bound


def test_plus_stencil_superset_bruteforce():
    # every cell whose min distance to the home cell is <= rho appears
    g = make2d()
    rho = 0.0123
    off = set(map(int, g.plus_offsets(rho)))
    reach = math.ceil(rho / g.side) + 2
    for dx in range(-reach, reach + 1):
        for dy in range(-reach, reach + 1):
            gap = math.hypot(max(0, abs(dx) - 1), max(0, abs(dy) - 1)) * g.side
            if gap <= rho:
                assert dx * int(g.strides[0]) + dy * int(g.strides[1]) in off


def test_covered_cells_within_conflict_ball():
    # every covered cell lies entirely inside the open ball of radius
    # rho/(1+A) around the node, corners included
    rng = np.random.default_rng(7)
    g = make2d()
    for _ in range(100):
        x = rng.uniform(0.2, 0.8, 2)
        rho = rng.uniform(0.005, 0.045)
        lim = rho / (1.0 + g.a)
        cells = g.covered_cells(x, rho)
        assert len(cells) > 0  # exact stencil always swallows the home cell
        centers = g.cell_centers(cells)
        for sx in (-0.5, 0.5):
            for sy in (-0.5, 0.5):
                corners = centers + np.array([sx, sy]) * g.side
                d = np.linalg.norm(corners - x, axis=1)
                assert np.all(d < lim)


def test_covered_cells_soundness_bruteforce():
    # any point inside a covered cell conflicts with the node: its distance
    # stays below rho/(1+A), which the Lipschitz field turns into a
    # guaranteed empty-disk violation
    rng = np.random.default_rng(2)
    g = make2d()
    for _ in range(200):
        x = rng.uniform(0.2, 0.8, 2)
        rho = rng.uniform(0.005, 0.045)
        cells = g.covered_cells(x, rho)
        pick = rng.choice(cells, size=min(10, len(cells)))
        centers = g.cell_centers(pick)
        for center in centers:
            # 50 random points inside that cell
            pts = center + rng.uniform(-0.5, 0.5, (50, 2)) * g.side
            d = np.linalg.norm(pts - x, axis=1)
            assert np.all(d <= rho / (1.0 + g.a) + 1e-12)


def test_covered_cells_exactness_bruteforce():
    # conversely, no cell fully inside the ball is missed
    rng = np.random.default_rng(11)
    g = make2d()
    for _ in range(30):
        x = rng.uniform(0.3, 0.7, 2)
        rho = rng.uniform(0.005, 0.045)
        lim = rho / (1.0 + g.a)
        got = set(map(int, g.covered_cells(x, rho)))
        interior = g.interior_flat()
        centers = g.cell_centers(interior)
        near = np.linalg.norm(centers - x, axis=1) < lim + g.side
        for cell, center in zip(interior[near], centers[near]):
            far = 0.0
            for sx in (-0.5, 0.5):
                for sy in (-0.5, 0.5):
                    far = max(far, float(np.linalg.norm(center + np.array([sx, sy]) * g.side - x)))
            if far < lim:
                assert int(cell) in got


def test_conflict_scan_matches_bruteforce():
    # accept/reject decisions using the stencil == full O(n^2) scan
    rng = np.random.default_rng(8)
    g = make2d()
    pts, rho = [], []
    # accept greedily to build a valid sample
    for _ in range(4000):
        p = rng.uniform(0, 1, 2)
        r = float(np.clip(0.005 + 0.04 * p[0], 0.005, 0.045))
        home = g.cell_of(p)
        if g.is_blocked(home):
            continue
        ids = g.candidate_node_ids(home, r)
        ok = True
        if len(ids):
            d = np.linalg.norm(np.asarray(pts)[ids] - p, axis=1)
            rr = np.minimum(np.asarray(rho)[ids], r)
            ok = bool(np.all(d >= rr))
        if ok:
            g.mark(len(pts), p, r)
            pts.append(p)
            rho.append(r)
    assert len(pts) > 50
    pts_a, rho_a = np.asarray(pts), np.asarray(rho)

    nchecked = 0
    for _ in range(3000):
        p = rng.uniform(0, 1, 2)
        r = float(np.clip(0.005 + 0.04 * p[0], 0.005, 0.045))
        # brute force over every accepted node
        d = np.linalg.norm(pts_a - p, axis=1)
        brute_ok = bool(np.all(d >= np.minimum(rho_a, r)))
        # stencil-restricted scan
        ids = g.candidate_node_ids(g.cell_of(p), r)
        if len(ids):
            ds = np.linalg.norm(pts_a[ids] - p, axis=1)
            sten_ok = bool(np.all(ds >= np.minimum(rho_a[ids], r)))
        else:
            sten_ok = True
        assert sten_ok == brute_ok
        nchecked += 1
    assert nchecked == 3000


def test_blocked_cells_are_sound():
    # a candidate in any occupied (non-pad) cell really does conflict
    rng = np.random.default_rng(11)
    g = make2d()
    pts, rho = [], []
    for _ in range(2000):
        p = rng.uniform(0, 1, 2)
        r = float(rng.uniform(0.005, 0.045))
        home = g.cell_of(p)
        if g.is_blocked(home):
            continue
        ids = g.candidate_node_ids(home, r)
        if len(ids):
            d = np.linalg.norm(np.asarray(pts)[ids] - p, axis=1)
            if not np.all(d >= np.minimum(np.asarray(rho)[ids], r)):
                continue
        g.mark(len(pts), p, r)
        pts.append(p)
        rho.append(r)
    pts_a, rho_a = np.asarray(pts), np.asarray(rho)
    interior = g.interior_flat()
    occ = interior[g.occupied[interior]]
    # sample random occupied interior cells; points there must conflict
    for cell in rng.choice(occ, size=min(300, len(occ)), replace=False):
        center = g.cell_centers([cell])[0]
        probes = center + rng.uniform(-0.5, 0.5, (20, 2)) * g.side
        d = np.linalg.norm(probes[:, None, :] - pts_a[None, :, :], axis=2)
        # conflict radius needs the probe's rho; use the covering node's rho
        # lower bound rho_node/(1+A) <= rho(probe) from the Lipschitz field
        viol = d < np.minimum(rho_a[None, :] / (1 + g.a), rho_a[None, :])
        assert viol.any(axis=1).all()


def test_mark_bookkeeping_and_unmarked_cells():
    g = make2d(lo=(0, 0), hi=(0.1, 0.1))
    tester = PolygonTester([[0, 0], [0.1, 0], [0.1, 0.1], [0, 0.1]])
    g.set_domain_polygon(tester)
    all_domain = g.unmarked_domain_cells()
    assert len(all_domain) == g.domain_mask.sum()
    assert len(all_domain) > 0

    g.mark(0, (0.05, 0.05), 0.045)
    after = g.unmarked_domain_cells()
    covered = len(all_domain) - len(after)
    assert covered >= 1  # at least the home cell left the pool
    assert g.is_blocked(g.cell_of((0.05, 0.05)))

    with pytest.raises(DuplicatePoints):
        g.mark(1, (0.0501, 0.0501), 0.045)  # same cell as node 0


def test_domain_polygon_mask_covers_polygon_cells():
    g = make2d(lo=(0, 0), hi=(1, 1))
    poly = [[0.1, 0.1], [0.9, 0.2], [0.7, 0.9], [0.2, 0.8]]
    g.set_domain_polygon(PolygonTester(poly))
    rng = np.random.default_rng(4)
    # any point inside the polygon must lie in a domain cell
    tester = PolygonTester(poly)
    pts = rng.uniform(0, 1, (3000, 2))
    inside = tester.contains_many(pts)
    cells = g.cells_of(pts[inside])
    assert g.domain_mask[cells].all()


def test_cell_centers_roundtrip():
    g = make2d()
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, (200, 2))
    flats = g.cells_of(pts)
    centers = g.cell_centers(flats)
    assert np.abs(centers - pts).max() <= g.side * 0.5 * math.sqrt(2) + 1e-12
    # scalar and vector indexing agree
    for p, f in zip(pts[:40], flats[:40]):
        assert g.cell_of(p) == f


def test_minus_offsets_tiny_rho_home_only_or_empty():
    g = make2d()
    # rho/(1+A) below the cell diameter: nothing can be fully swallowed
    offs = g.minus_offsets(0.005)
    assert len(offs) <= 1
    if len(offs):
        assert offs[0] == 0


def test_minus_offsets_sound_for_any_position_in_home_cell():
    # every stencil cell must be within rho/(1+A) of EVERY point of the home
    # cell, checked by corner-pair enumeration
    g = make2d(a=0.0)
    rng = np.random.default_rng(11)
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]]) * g.side
    for rho in rng.uniform(0.005, 0.045, 25):
        offs = g.minus_offsets(float(rho))
        r = rho / (1 + g.a)
        for off in offs.tolist():
            d0, d1 = divmod(off, g.strides[0])
            if d1 > g.shape[1] // 2:
                d1 -= g.shape[1]
                d0 += 1
            cell = np.array([d0, d1]) * g.side
            pair = corners[:, None, :] + cell[None, None, :] - corners[None, :, :]
            assert np.linalg.norm(pair, axis=2).max() <= r + 1e-12


def test_minus_offsets_four_diameter_block_matches_enumeration():
    # with A=0 and rho = 4 cell diameters the stencil equals the brute-force
    # enumeration over farthest corner pairs
    g = make2d(a=0.0, rho_ceiling=0.1)
    rho = 4 * g.side * math.sqrt(2)
    offs = set(g.minus_offsets(rho).tolist())
    expect = set()
    reach = 8
    for d0 in range(-reach, reach + 1):
        for d1 in range(-reach, reach + 1):
            far = math.hypot((abs(d0) + 1) * g.side, (abs(d1) + 1) * g.side)
            if far <= rho:
                expect.add(d0 * int(g.strides[0]) + d1)
    assert offs == expect
    assert 0 in offs  # home swallowed at this size


def test_quantized_layer_is_coarser_than_exact_layer():
    g = make2d()
    rng = np.random.default_rng(12)
    for _ in range(40):
        p = rng.uniform(0.3, 0.7, 2)
        rho = float(rng.uniform(0.006, 0.045))
        home = g.cell_of(p)
        cov = set(g.covered_cells(p, rho).tolist()) | {home}
        quant = set((home + g.minus_offsets(rho)).tolist()) | {home}
        assert quant <= cov


def test_mark_updates_both_layers():
    g = make2d(lo=(0, 0), hi=(0.2, 0.2))
    tester = PolygonTester([[0, 0], [0.2, 0], [0.2, 0.2], [0, 0.2]])
    g.set_domain_polygon(tester)
    before_q = len(g.unmarked_domain_cells())
    before_x = len(g.uncovered_domain_cells())
    g.mark(0, (0.1, 0.1), 0.045)
    gone_q = before_q - len(g.unmarked_domain_cells())
    gone_x = before_x - len(g.uncovered_domain_cells())
    assert gone_q >= 1
    # exact layer swallows strictly more cells at this radius
    assert gone_x > gone_q
