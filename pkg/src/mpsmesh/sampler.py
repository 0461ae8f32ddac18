"""Variable-radius maximal Poisson-disk sampling in 2D and 3D.

The 2D engine covers one fracture: seed nodes along the polygon boundary and
the intersection traces, then grow the sample by drawing candidate batches
on annuli around each accepted node, and finally resample still-uncovered
grid cells.  The 3D engine is the volume analog with spherical shells and a
standoff rule keeping volume nodes away from fractures and box faces.

The per-candidate accept path is deliberately scalar Python with almost no
per-batch fixed cost: the common case (candidate lands in an occupied cell)
costs one multiply-add per axis plus a grid lookup, which is what makes
wall time scale almost linearly in both node count and candidate budget k.

Boundary spacing
----------------
Consecutive 1D nodes must respect the empty-disk inequality (gap at least
the min of their radii) while staying close enough that boundary cell
centers remain covered (gap at most sqrt(2)/(1+A) times that min).  Both
hold when each step is drawn uniformly from [1, sqrt(2)/(1+A+sqrt(2) A))
times the radius at the step's start: the A-Lipschitz field cannot bend the
radius fast enough along the step to break either side.  Edge tails are
closed by an even split of the remainder; when an edge is too short to
admit any compliant split, the inhibition side wins and the coverage excess
is only counted (it weakens a worst-case angle bound, never the sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InfeasibleEdge, InvalidDomain, InvalidParams
from .geometry import PolygonTester, point_polygon_distance_3d, segment_crossing_2d
from .grid import AccelGrid
from .radius_field import RadiusField2D, RadiusParams
from .streams import BOX_EDGE, BOX_FACE, VOLUME as VOLUME_STREAM, stream

# node provenance tags
POLYGON_VERTEX = 1
BOUNDARY = 2
INTERSECTION = 3
INTERIOR = 4
MATRIX_BOUNDARY = 5
VOLUME = 6

FRACTURE_TAGS = (POLYGON_VERTEX, BOUNDARY, INTERSECTION, INTERIOR)

TAG_NAMES = {
    POLYGON_VERTEX: "polygon_vertex",
    BOUNDARY: "boundary",
    INTERSECTION: "intersection",
    INTERIOR: "interior",
    MATRIX_BOUNDARY: "matrix_boundary",
    VOLUME: "volume",
}

_SQRT2 = math.sqrt(2.0)
_TWO_PI = 2.0 * math.pi


@dataclass
class Sample:
    """An accepted node set: positions, per-node radius, tags, provenance."""

    points: np.ndarray            # (n, 2) local or (n, 3) world
    rho: np.ndarray               # (n,)
    tags: np.ndarray              # (n,) uint8
    prov: np.ndarray              # (n, 2) int64 (entity id, index) pairs
    counters: dict = dc_field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)


def step_window(a: float) -> tuple[float, float]:
    """Safe 1D step range [lo, hi) in units of the local radius.

    hi solves u (1 + A + sqrt(2) A) = sqrt(2): steps below it keep the gap
    under sqrt(2) min(rho)/(1+A) even if the field shrinks at full slope A
    over the step; steps at or above 1 keep the gap at or above min(rho)
    even if it grows.  If A is large enough to close the window, fall back
    to bare inhibition steps and give up the coverage-side guarantee.
    """
    hi = _SQRT2 / (1.0 + a + _SQRT2 * a)
    if hi <= 1.02:
        return 1.0, 1.0
    return 1.005, hi - 0.005


def walk_segment_1d(length: float, rho_fn, params: RadiusParams, rng,
                    counters: dict | None = None) -> np.ndarray:
    """1D node positions strictly inside [0, length] with forced endpoints.

    ``rho_fn(s)`` gives the field radius at arclength s.  Returns interior
    positions only (the caller owns the endpoints).  The tail is closed by
    splitting the remainder evenly into the largest node count that still
    respects the inhibition floor against the locally evaluated radii.
    """
    if length < 0.5 * params.h:
        raise InfeasibleEdge(
            f"edge of length {length:.6g} is shorter than h/2 = {0.5 * params.h:.6g}"
        )
    lo, hi = step_window(params.a)
    pos = 0.0
    rho_here = float(rho_fn(0.0))
    out: list[float] = []
    while True:
        rem = length - pos
        # 5.2 local radii is the depth from which an even split can always
        # land every gap inside (or a hair above) the compliant window
        if rem <= 5.2 * rho_here:
            break
        u = lo if hi == lo else lo + (hi - lo) * rng.random()
        pos += u * rho_here
        out.append(pos)
        rho_here = float(rho_fn(pos))

    # close out the remainder with an even split
    rem = length - pos
    rho_end = float(rho_fn(length))
    n = max(1, int(round(rem / (1.14 * (0.5 * (rho_here + rho_end))))))
    while True:
        ts = pos + rem * np.arange(1, n + 1) / n  # last entry == length
        rr = np.array([rho_here] + [float(rho_fn(t)) for t in ts])
        gaps = np.diff(np.concatenate([[pos], ts]))
        pairmin = np.minimum(rr[:-1], rr[1:])
        if n == 1 or bool(np.all(gaps >= pairmin * (1.0 - 1e-12))):
            break
        n -= 1
    if counters is not None:
        over = gaps > _SQRT2 * pairmin / (1.0 + params.a) * (1.0 + 1e-9)
        counters["coverage_misses"] = counters.get("coverage_misses", 0) + int(over.sum())
        if n == 1 and rem < min(rho_here, rho_end):
            counters["short_closures"] = counters.get("short_closures", 0) + 1
    return np.asarray(out + list(pos + rem * np.arange(1, n) / n))


def cap_rho_to_clearance(points, rho) -> tuple[np.ndarray, int]:
    """Lower per-node radii so a seed set satisfies the empty-disk rule.

    Forced seeds (corners, crossing points, feature junctions) can sit
    closer together than their field radii allow; their stored radii are
    capped to just under the realized clearance so every pair obeys
    |x_i - x_j| >= min(rho_i, rho_j).  Returns the capped array and the
    number of nodes touched.
    """
    pts = np.asarray(points, dtype=float)
    r = np.asarray(rho, dtype=float).copy()
    if len(pts) < 2:
        return r, 0
    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=float(r.max()), output_type="ndarray")
    touched: set[int] = set()
    if len(pairs):
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        for (i, j), dist in zip(pairs, d):
            if dist < min(r[i], r[j]):
                capped = dist * (1.0 - 1e-12)
                if r[i] > capped:
                    r[i] = capped
                    touched.add(int(i))
                if r[j] > capped:
                    r[j] = capped
                    touched.add(int(j))
    return r, len(touched)


def annulus_radii(rho: float, a: float) -> tuple[float, float]:
    """Candidate annulus [rho/(1+A), 2 rho/(1-A)] around a node."""
    return rho / (1.0 + a), 2.0 * rho / (1.0 - a)


def annulus_points(cx: float, cy: float, rho: float, k: int, a: float, rng,
                   law: str = "area") -> tuple[np.ndarray, np.ndarray]:
    """k random points on the candidate annulus around (cx, cy)."""
    r_in, r_out = annulus_radii(rho, a)
    u = rng.random(k)
    if law == "area":
        rad = np.sqrt(u * (r_out * r_out - r_in * r_in) + r_in * r_in)
    else:
        rad = r_in + u * (r_out - r_in)
    theta = rng.random(k) * _TWO_PI
    return cx + rad * np.cos(theta), cy + rad * np.sin(theta)


def shell_points(center, rho: float, k: int, a: float, rng,
                 law: str = "area") -> np.ndarray:
    """k random points in the candidate spherical shell around ``center``."""
    r_in, r_out = annulus_radii(rho, a)
    u = rng.random(k)
    if law == "area":
        rad = np.cbrt(u * (r_out ** 3 - r_in ** 3) + r_in ** 3)
    else:
        rad = r_in + u * (r_out - r_in)
    v = rng.standard_normal((k, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return np.asarray(center) + rad[:, None] * v


def _fresh_counters() -> dict:
    return {
        "candidates": 0,
        "fast_rejects": 0,
        "outside_domain": 0,
        "distance_rejects": 0,
        "standoff_rejects": 0,
        "accepts": 0,
        "batches": 0,
        "resample_added": [],
        "coverage_misses": 0,
        "short_closures": 0,
        "capped_seeds": 0,
    }


class PoissonDisk2D:
    """Sampling engine for one fracture's 2D point set.

    Seeds (boundary + intersection nodes, already in local coordinates) are
    supplied by the caller; the engine caps their radii to the realized
    clearance, marks them on the acceleration grid, then runs the
    batch-sampling main loop followed by up to ``rounds`` empty-cell
    resampling passes.  Every node — seed, accepted, or resampled — serves
    as a batch center exactly once; the main loop simply resumes where it
    left off after each resampling pass.
    """

    def __init__(self, polygon, field, params: RadiusParams, k: int, rng,
                 seeds_points, seeds_rho, seeds_tags, seeds_prov,
                 rounds: int = 3, prov_entity: int = 0,
                 annulus_law: str = "area", fast_reject: bool = True):
        self.polygon = np.asarray(polygon, dtype=float)
        self.tester = PolygonTester(self.polygon)
        self.field = field
        self.params = params
        self.k = int(k)
        self.rng = rng
        self.rounds = int(rounds)
        self.prov_entity = int(prov_entity)
        self.annulus_law = annulus_law
        self.fast_reject = bool(fast_reject)
        self.counters = _fresh_counters()
        # flat per-edge tuples for the scalar point-in-polygon test
        closed = np.vstack([self.polygon, self.polygon[:1]])
        self._edges_py = [
            (float(x0), float(y0), float(x1), float(y1))
            for (x0, y0), (x1, y1) in zip(closed[:-1], closed[1:])
        ]
        self._ubuf: list[float] = []
        self._upos = 0

        n0 = len(seeds_points)
        cap = max(256, 2 * n0)
        self._pts = np.empty((cap, 2))
        self._rho = np.empty(cap)
        self._tags = np.empty(cap, dtype=np.uint8)
        self._prov = np.empty((cap, 2), dtype=np.int64)
        self._n = 0
        self._append_block(seeds_points, seeds_rho, seeds_tags, seeds_prov)
        if n0:
            self._rho[:n0], ncapped = cap_rho_to_clearance(
                self._pts[:n0], self._rho[:n0]
            )
            self.counters["capped_seeds"] = ncapped

        lo = self.polygon.min(axis=0)
        hi = self.polygon.max(axis=0)
        self.grid = AccelGrid(lo, hi, params.h, 2, params.cap, params.a)
        self.grid.set_domain_polygon(self.tester)
        for i in range(n0):
            self.grid.mark(i, self._pts[i], self._rho[i])
        # byte mirror of grid.occupied: scalar reads in the hot loop are
        # several times faster than numpy bool indexing, while the shared
        # frombuffer view lets covered-cell batches be written at C speed
        self._occ = bytearray(bytes(self.grid.occupied))
        self._occ_np = np.frombuffer(self._occ, dtype=np.uint8)

    def _mark_node(self, i: int, point, rho: float):
        home, cov = self.grid.mark(i, point, rho)
        self._occ[home] = 1
        self._occ_np[cov] = 1

    # -- storage -------------------------------------------------------------

    def _grow(self, need: int):
        cap = len(self._pts)
        while cap < need:
            cap *= 2
        for name in ("_pts", "_rho", "_tags", "_prov"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def _append_block(self, pts, rho, tags, prov):
        m = len(pts)
        if m == 0:
            return
        if self._n + m > len(self._pts):
            self._grow(self._n + m)
        s = slice(self._n, self._n + m)
        self._pts[s] = np.asarray(pts, dtype=float).reshape(m, -1)
        self._rho[s] = rho
        self._tags[s] = tags
        self._prov[s] = prov
        self._n += m

    def _append_one(self, x, y, rho) -> int:
        if self._n + 1 > len(self._pts):
            self._grow(self._n + 1)
        i = self._n
        self._pts[i, 0] = x
        self._pts[i, 1] = y
        self._rho[i] = rho
        self._tags[i] = INTERIOR
        self._prov[i, 0] = self.prov_entity
        self._prov[i, 1] = i
        self._n += 1
        return i

    # -- acceptance tests ----------------------------------------------------

    def _contains_fast(self, px: float, py: float) -> bool:
        """Scalar even-odd crossing test over the precomputed edge tuples."""
        inside = False
        for x0, y0, x1, y1 in self._edges_py:
            if (y0 > py) != (y1 > py):
                if px < x0 + (py - y0) * (x1 - x0) / (y1 - y0):
                    inside = not inside
        return inside

    def _try_accept(self, px: float, py: float) -> bool:
        """Reference accept path; updates sample + grid when it passes."""
        c = self.counters
        grid = self.grid
        home = grid.cell_of((px, py))
        if self.fast_reject:
            if self._occ[home]:
                c["fast_rejects"] += 1
                return False
        elif grid.node_id[home] >= 0:
            # a node already lives here, so it is closer than any radius
            c["distance_rejects"] += 1
            return False
        if not self._contains_fast(px, py):
            c["outside_domain"] += 1
            return False
        prho = self.field.rho_at(px, py)
        ids = grid.node_id[home + grid.plus_offsets(prho)]
        ids = ids[ids >= 0]
        if len(ids):
            d = self._pts[ids]
            dx = d[:, 0] - px
            dy = d[:, 1] - py
            d2 = dx * dx + dy * dy
            rr = np.minimum(self._rho[ids], prho)
            if bool((d2 < rr * rr).any()):
                c["distance_rejects"] += 1
                return False
        i = self._append_one(px, py, prho)
        self._mark_node(i, (px, py), prho)
        c["accepts"] += 1
        return True

    # -- main loop -----------------------------------------------------------

    def _run_centers(self, start: int) -> int:
        """Serve nodes [start, n) as batch centers; returns the next start."""
        c = self.counters
        k = self.k
        a = self.params.a
        area_law = self.annulus_law == "area"
        rng = self.rng
        grid = self.grid
        occ = self._occ
        occ_np = self._occ_np
        node_id = grid.node_id
        plus_offsets = grid.plus_offsets
        ox = float(grid.origin[0])
        oy = float(grid.origin[1])
        inv_side = 1.0 / grid.side
        pad = grid.pad
        s0 = int(grid.strides[0])
        max0 = int(grid.shape[0]) - 1
        max1 = int(grid.shape[1]) - 1
        fast = self.fast_reject
        contains = self._contains_fast
        rho_at = self.field.rho_at
        sqrt = math.sqrt
        cos = math.cos
        sin = math.sin
        ubuf = self._ubuf
        upos = self._upos
        nbuf = len(ubuf)

        n_cand = 0
        n_fr = 0
        n_od = 0
        n_dr = 0
        n_ac = 0
        n_batch = 0

        i = start
        while i < self._n:
            cx = float(self._pts[i, 0])
            cy = float(self._pts[i, 1])
            crho = float(self._rho[i])
            r_in = crho / (1.0 + a)
            r_out = 2.0 * crho / (1.0 - a)
            ri2 = r_in * r_in
            dr2 = r_out * r_out - ri2
            dr = r_out - r_in
            served = 0
            while True:
                if upos + 2 * k > nbuf:
                    ubuf = rng.random(max(8192, 4 * k)).tolist()
                    nbuf = len(ubuf)
                    upos = 0
                n_batch += 1
                n_cand += k
                accepts = 0
                for _ in range(k):
                    if area_law:
                        rad = sqrt(ubuf[upos] * dr2 + ri2)
                    else:
                        rad = r_in + ubuf[upos] * dr
                    t = _TWO_PI * ubuf[upos + 1]
                    upos += 2
                    px = cx + rad * cos(t)
                    py = cy + rad * sin(t)
                    c0 = int((px - ox) * inv_side) + pad
                    if c0 < 0:
                        c0 = 0
                    elif c0 > max0:
                        c0 = max0
                    c1 = int((py - oy) * inv_side) + pad
                    if c1 < 0:
                        c1 = 0
                    elif c1 > max1:
                        c1 = max1
                    flat = c0 * s0 + c1
                    if fast:
                        if occ[flat]:
                            n_fr += 1
                            continue
                    elif node_id[flat] >= 0:
                        n_dr += 1
                        continue
                    if not contains(px, py):
                        n_od += 1
                        continue
                    prho = rho_at(px, py)
                    ids = node_id[flat + plus_offsets(prho)]
                    ids = ids[ids >= 0]
                    if len(ids):
                        dpts = self._pts[ids]
                        ddx = dpts[:, 0] - px
                        ddy = dpts[:, 1] - py
                        d2 = ddx * ddx + ddy * ddy
                        rr = np.minimum(self._rho[ids], prho)
                        if bool((d2 < rr * rr).any()):
                            n_dr += 1
                            continue
                    j = self._append_one(px, py, prho)
                    home2, cov = grid.mark(j, (px, py), prho)
                    occ[home2] = 1
                    occ_np[cov] = 1
                    n_ac += 1
                    accepts += 1
                served += k
                if accepts == 0 or served > 1_000_000:
                    break
            i += 1
        c["candidates"] += n_cand
        c["fast_rejects"] += n_fr
        c["outside_domain"] += n_od
        c["distance_rejects"] += n_dr
        c["accepts"] += n_ac
        c["batches"] += n_batch
        self._ubuf = ubuf
        self._upos = upos
        return i

    def _resample_pass(self) -> int:
        """One uniform candidate per unmarked domain cell."""
        cells = self.grid.unmarked_domain_cells()
        if len(cells) == 0:
            self.counters["resample_added"].append(0)
            return 0
        centers = self.grid.cell_centers(cells)
        offs = (self.rng.random((len(cells), 2)) - 0.5) * self.grid.side
        cand = centers + offs
        self.counters["candidates"] += len(cand)
        # certain-reject prefilter: nearest node already inside the mutual
        # radius; the survivors go through the full accept path
        tree = cKDTree(self._pts[: self._n])
        d, idx = tree.query(cand)
        rho_c = self.field.rho(cand)
        keep = d < np.minimum(self._rho[idx], rho_c)
        self.counters["distance_rejects"] += int(keep.sum())
        added = 0
        for (px, py) in cand[~keep]:
            if self._try_accept(float(px), float(py)):
                added += 1
        self.counters["resample_added"].append(added)
        return added

    def run(self) -> Sample:
        nxt = self._run_centers(0)
        for _ in range(self.rounds):
            added = self._resample_pass()
            nxt = self._run_centers(nxt)
            if added == 0:
                break
        return Sample(
            points=self._pts[: self._n].copy(),
            rho=self._rho[: self._n].copy(),
            tags=self._tags[: self._n].copy(),
            prov=self._prov[: self._n].copy(),
            counters=self.counters,
        )


def measure_epsilon_2d(sample: Sample, grid: AccelGrid, field, tester) -> float:
    """Largest empty-circle excess over the local radius, as a ratio.

    Probes the centers of uncovered domain cells that lie inside the
    polygon: epsilon = max(dist to nearest node / rho(center) - 1, 0).
    Cells fully covered by an accepted node's ball are provably within the
    local radius already and need no probing.
    """
    cells = grid.uncovered_domain_cells()
    if len(cells) == 0:
        return 0.0
    centers = grid.cell_centers(cells)
    inside = tester.contains_many(centers)
    centers = centers[inside]
    if len(centers) == 0:
        return 0.0
    tree = cKDTree(sample.points)
    d, _ = tree.query(centers)
    rho_c = field.rho(centers)
    return float(max(0.0, np.max(d / rho_c - 1.0)))


def split_segments_at_crossings(segments):
    """Split feature segments at their mutual (proper) crossing points.

    Returns ``(pieces, crossings)`` where crossings is the list of crossing
    points and each piece is ``(seg_index, t0, t1, c0, c1)``: a parameter
    subinterval of the original segment whose ends are either crossing ids
    or -1 for the segment's own endpoints.
    """
    segs = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
            for a, b in segments]
    cuts: list[list] = [[] for _ in segs]
    crossings: list[np.ndarray] = []
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            res = segment_crossing_2d(segs[i][0], segs[i][1], segs[j][0], segs[j][1])
            if res is not None:
                t, u = res
                cid = len(crossings)
                crossings.append(segs[i][0] + t * (segs[i][1] - segs[i][0]))
                cuts[i].append((t, cid))
                cuts[j].append((u, cid))
    pieces = []
    for i in range(len(segs)):
        bounds = [(0.0, -1)] + sorted(cuts[i]) + [(1.0, -1)]
        for (t0, c0), (t1, c1) in zip(bounds[:-1], bounds[1:]):
            pieces.append((i, t0, t1, c0, c1))
    return pieces, crossings


# seed-provenance entity bases used by the standalone polygon pipeline
_ENT_INTERIOR = 0
_ENT_EDGE = 10_000
_ENT_SEGMENT = 20_000
_ENT_CROSSING = 30_000
_ENT_VERTEX = 40_000


def sample_polygon(polygon, segments, params: RadiusParams, k: int, rng,
                   rounds: int = 3, annulus_law: str = "area",
                   fast_reject: bool = True) -> tuple[Sample, PoissonDisk2D]:
    """Full 2D pipeline for a single polygon with feature segments.

    Seeds the polygon vertices and boundary walks, splits the feature
    segments at crossings and seeds them (crossing points become forced
    nodes), then runs the batch sampler.  Returns the sample and the engine
    (whose grid/field/tester expose the coverage state for inspection).
    """
    poly = np.asarray(polygon, dtype=float)
    field = RadiusField2D(params, segments if segments is not None and len(segments) else None)
    counters = _fresh_counters()

    pts: list = []
    rho: list[float] = []
    tags: list[int] = []
    prov: list[tuple[int, int]] = []

    def add(p, r, tag, ent, idx):
        pts.append((float(p[0]), float(p[1])))
        rho.append(float(r))
        tags.append(tag)
        prov.append((ent, idx))

    m = len(poly)
    for v in range(m):
        add(poly[v], field.rho_at(poly[v][0], poly[v][1]),
            POLYGON_VERTEX, _ENT_VERTEX + v, 0)
    for e in range(m):
        a = poly[e]
        b = poly[(e + 1) % m]
        length = float(np.hypot(*(b - a)))
        direction = (b - a) / length

        def rho_on_edge(s, a=a, d=direction):
            return field.rho_at(a[0] + d[0] * s, a[1] + d[1] * s)

        for q, s in enumerate(walk_segment_1d(length, rho_on_edge, params,
                                              rng, counters)):
            p = a + direction * s
            add(p, rho_on_edge(s), BOUNDARY, _ENT_EDGE + e, q)

    if segments is not None and len(segments):
        pieces, crossings = split_segments_at_crossings(segments)
        # feature points sit on their own segment, so their radius is the floor
        for cid, p in enumerate(crossings):
            add(p, params.rho_min, INTERSECTION, _ENT_CROSSING + cid, 0)
        for sidx, (a, b) in enumerate(segments):
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            add(a, params.rho_min, INTERSECTION, _ENT_SEGMENT + sidx, 0)
            add(b, params.rho_min, INTERSECTION, _ENT_SEGMENT + sidx, 1)
        nseg_nodes = [2] * len(segments)
        for (sidx, t0, t1, _c0, _c1) in pieces:
            a = np.asarray(segments[sidx][0], dtype=float)
            b = np.asarray(segments[sidx][1], dtype=float)
            p0 = a + t0 * (b - a)
            p1 = a + t1 * (b - a)
            length = float(np.hypot(*(p1 - p0)))
            direction = (p1 - p0) / length
            for s in walk_segment_1d(length, lambda _s: params.rho_min,
                                     params, rng, counters):
                q = nseg_nodes[sidx]
                nseg_nodes[sidx] += 1
                add(p0 + direction * s, params.rho_min, INTERSECTION,
                    _ENT_SEGMENT + sidx, q)

    engine = PoissonDisk2D(
        poly, field, params, k, rng,
        np.asarray(pts, dtype=float).reshape(-1, 2),
        np.asarray(rho, dtype=float),
        np.asarray(tags, dtype=np.uint8),
        np.asarray(prov, dtype=np.int64).reshape(-1, 2),
        rounds=rounds, prov_entity=_ENT_INTERIOR,
        annulus_law=annulus_law, fast_reject=fast_reject,
    )
    for key in ("coverage_misses", "short_closures"):
        engine.counters[key] += counters[key]
    sample = engine.run()
    return sample, engine


class PoissonDisk3D:
    """Volume sampler: spherical-shell candidates with feature standoff.

    Seeds are the merged fracture sample plus the box-boundary sample, all
    in world coordinates.  Volume candidates are additionally rejected when
    they come within rho(p)/2 of a box face or of any fracture polygon; the
    polygon-distance test is prefiltered with the distance to the nearest
    fracture-sample node, since a covered fracture surface cannot be much
    farther from a query point than that node.
    """

    def __init__(self, box_lo, box_hi, field, params: RadiusParams, k: int,
                 rng, seeds_points, seeds_rho, seeds_tags, seeds_prov,
                 fracture_geoms=(), prov_entity: int = 0,
                 annulus_law: str = "area", fast_reject: bool = True,
                 standoff_margin: float | None = None, center_mask=None):
        self.lo = np.asarray(box_lo, dtype=float)
        self.hi = np.asarray(box_hi, dtype=float)
        if not np.all(self.hi > self.lo):
            raise InvalidDomain("domain box is empty")
        pts = np.asarray(seeds_points, dtype=float).reshape(-1, 3)
        if len(pts) and (np.any(pts < self.lo - 1e-9) or np.any(pts > self.hi + 1e-9)):
            raise InvalidDomain("seed nodes fall outside the domain box")
        self.field = field
        self.params = params
        self.rho_max = params.require_rho_max()
        self.k = int(k)
        self.rng = rng
        self.prov_entity = int(prov_entity)
        self.annulus_law = annulus_law
        self.fast_reject = bool(fast_reject)
        # geometry for the exact standoff test: (frame, local_polygon, bbox)
        self.fracture_geoms = list(fracture_geoms)
        # optional per-seed opt-out: masked-off seeds still inhibit and fill
        # the grid but are not served as batch centers (refill runs restrict
        # candidate generation to the neighbourhoods that actually changed);
        # nodes accepted during the run are always served.
        if center_mask is not None:
            center_mask = np.asarray(center_mask, dtype=bool)
            if center_mask.shape != (len(pts),):
                raise InvalidParams("center_mask length must match seed count")
        self.center_mask = center_mask
        self.counters = _fresh_counters()
        if standoff_margin is None:
            # worst-case gap between a fracture surface point and its
            # nearest sample node, from the per-node radii
            fr = [float(seeds_rho[i]) for i in range(len(pts))
                  if seeds_tags[i] in FRACTURE_TAGS]
            standoff_margin = 1.3 * (max(fr) if fr else 0.0)
        self.standoff_margin = float(standoff_margin)

        n0 = len(pts)
        capn = max(1024, 2 * n0)
        self._pts = np.empty((capn, 3))
        self._rho = np.empty(capn)
        self._tags = np.empty(capn, dtype=np.uint8)
        self._prov = np.empty((capn, 2), dtype=np.int64)
        self._n = 0
        self._append_block(pts, seeds_rho, seeds_tags, seeds_prov)
        if n0:
            self._rho[:n0], ncapped = cap_rho_to_clearance(pts, self._rho[:n0])
            self.counters["capped_seeds"] = ncapped

        self.grid = AccelGrid(self.lo, self.hi, params.h, 3, self.rho_max, params.a)
        self.grid.set_domain_all()
        for i in range(n0):
            self.grid.mark(i, self._pts[i], self._rho[i])
        self._occ = bytearray(bytes(self.grid.occupied))
        self._occ_np = np.frombuffer(self._occ, dtype=np.uint8)

    _grow = PoissonDisk2D._grow
    _append_block = PoissonDisk2D._append_block

    def _append_one3(self, p, rho) -> int:
        if self._n + 1 > len(self._pts):
            self._grow(self._n + 1)
        i = self._n
        self._pts[i] = p
        self._rho[i] = rho
        self._tags[i] = VOLUME
        self._prov[i, 0] = self.prov_entity
        self._prov[i, 1] = i
        self._n += 1
        return i

    def _face_distance(self, p) -> float:
        return float(min((p - self.lo).min(), (self.hi - p).min()))

    def _fracture_standoff_violated(self, p, need: float) -> bool:
        """Exact check: is p within ``need`` of some fracture polygon?"""
        for frame, local_poly, (blo, bhi) in self.fracture_geoms:
            if np.any(p < blo - need) or np.any(p > bhi + need):
                continue
            d = point_polygon_distance_3d(p[None, :], frame, local_poly)[0]
            if d < need:
                return True
        return False

    def _run_centers(self, start: int) -> int:
        c = self.counters
        grid = self.grid
        occ = self._occ
        occ_np = self._occ_np
        k = self.k
        a = self.params.a
        rng = self.rng
        lo = self.lo
        hi = self.hi
        mask = self.center_mask
        i = start
        while i < self._n:
            if mask is not None and i < len(mask) and not mask[i]:
                i += 1
                continue
            center = self._pts[i].copy()
            crho = float(self._rho[i])
            served = 0
            while True:
                cand = shell_points(center, crho, k, a, rng, self.annulus_law)
                c["batches"] += 1
                c["candidates"] += k
                cells = grid.cells_of(cand)
                rho_c, d_nn = self.field.rho_and_dist(cand)
                accepts = 0
                for j in range(k):
                    flat = int(cells[j])
                    if self.fast_reject:
                        if occ[flat]:
                            c["fast_rejects"] += 1
                            continue
                    elif grid.node_id[flat] >= 0:
                        c["distance_rejects"] += 1
                        continue
                    p = cand[j]
                    if (p[0] <= lo[0] or p[1] <= lo[1] or p[2] <= lo[2]
                            or p[0] >= hi[0] or p[1] >= hi[1] or p[2] >= hi[2]):
                        c["outside_domain"] += 1
                        continue
                    prho = float(rho_c[j])
                    need = 0.5 * prho
                    if self._face_distance(p) < need:
                        c["standoff_rejects"] += 1
                        continue
                    if d_nn is not None and d_nn[j] - self.standoff_margin < need:
                        if self._fracture_standoff_violated(p, need):
                            c["standoff_rejects"] += 1
                            continue
                    ids = grid.node_id[flat + grid.plus_offsets(prho)]
                    ids = ids[ids >= 0]
                    if len(ids):
                        diff = self._pts[ids] - p
                        d2 = np.einsum("ij,ij->i", diff, diff)
                        rr = np.minimum(self._rho[ids], prho)
                        if bool((d2 < rr * rr).any()):
                            c["distance_rejects"] += 1
                            continue
                    idx = self._append_one3(p, prho)
                    home2, cov = grid.mark(idx, p, prho)
                    occ[home2] = 1
                    occ_np[cov] = 1
                    c["accepts"] += 1
                    accepts += 1
                served += k
                if accepts == 0 or served > 1_000_000:
                    break
            i += 1
        return i

    def run(self) -> Sample:
        self._run_centers(0)
        return Sample(
            points=self._pts[: self._n].copy(),
            rho=self._rho[: self._n].copy(),
            tags=self._tags[: self._n].copy(),
            prov=self._prov[: self._n].copy(),
            counters=self.counters,
        )


# provenance entity bases for domain-box features and volume accepts
_ENT_BOX_CORNER = 50_000
_ENT_BOX_EDGE = 51_000
_ENT_BOX_FACE = 52_000
_ENT_VOLUME = 60_000

# corner index = 4*ix + 2*iy + iz over the lo/hi flags; edges join corners
# that differ in exactly one flag
_BOX_EDGES = [(0, 1), (0, 2), (0, 4), (1, 3), (1, 5), (2, 3),
              (2, 6), (3, 7), (4, 5), (4, 6), (5, 7), (6, 7)]
# face index = 2*axis + (0 for the lo side, 1 for the hi side)
_BOX_FACES = [(axis, side) for axis in range(3) for side in (0, 1)]


def box_boundary_sample(box_lo, box_hi, params: RadiusParams, k: int,
                        rng_seed: int, rounds: int = 1,
                        annulus_law: str = "area",
                        fast_reject: bool = True) -> Sample:
    """Sample the 6 domain-box faces at the uniform volume cap radius.

    Corners are forced, the 12 edges are walked once each, and every face
    reuses its edges' nodes as seeds, so adjacent faces agree bit-exactly on
    their shared edge.  All nodes are tagged as matrix boundary; the face
    interior runs use the 2D engine on a constant field equal to the volume
    radius ceiling.
    """
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    if not np.all(hi > lo):
        raise InvalidDomain("domain box is empty")
    rho_b = params.require_rho_max()
    # constant-field parameters: floor == cap == rho_b
    pface = RadiusParams(h=2.0 * rho_b, a=params.a, f=params.f, r=0.0)
    counters = _fresh_counters()

    flags = [(ix, iy, iz) for ix in (0, 1) for iy in (0, 1) for iz in (0, 1)]
    corners = np.array([[hi[d] if f[d] else lo[d] for d in range(3)]
                        for f in flags])
    pts = [corners]
    rho = [np.full(8, rho_b)]
    tags = [np.full(8, MATRIX_BOUNDARY, dtype=np.uint8)]
    prov = [np.array([[_ENT_BOX_CORNER, c] for c in range(8)], dtype=np.int64)]

    edge_nodes = []
    for ei, (a, b) in enumerate(_BOX_EDGES):
        pa, pb = corners[a], corners[b]
        length = float(np.linalg.norm(pb - pa))
        s_pos = walk_segment_1d(length, lambda s: rho_b, params,
                                stream(rng_seed, BOX_EDGE, ei), counters)
        nodes = pa + np.outer(s_pos, (pb - pa) / length)
        edge_nodes.append(nodes)
        pts.append(nodes)
        rho.append(np.full(len(nodes), rho_b))
        tags.append(np.full(len(nodes), MATRIX_BOUNDARY, dtype=np.uint8))
        prov.append(np.array([[_ENT_BOX_EDGE + ei, q]
                              for q in range(len(nodes))], dtype=np.int64))

    for fi, (axis, side) in enumerate(_BOX_FACES):
        val = (hi if side else lo)[axis]
        other = [d for d in range(3) if d != axis]
        rect = np.array([(lo[other[0]], lo[other[1]]),
                         (hi[other[0]], lo[other[1]]),
                         (hi[other[0]], hi[other[1]]),
                         (lo[other[0]], hi[other[1]])])
        seed_uv = [corners[[c for c in range(8)
                            if flags[c][axis] == side]][:, other]]
        for ei, (a, b) in enumerate(_BOX_EDGES):
            if flags[a][axis] == side and flags[b][axis] == side:
                seed_uv.append(edge_nodes[ei][:, other])
        sp = np.concatenate(seed_uv)
        n0 = len(sp)
        engine = PoissonDisk2D(
            rect, RadiusField2D(pface, None), pface, k,
            stream(rng_seed, BOX_FACE, fi),
            sp, np.full(n0, rho_b),
            np.full(n0, MATRIX_BOUNDARY, dtype=np.uint8),
            np.zeros((n0, 2), dtype=np.int64),
            rounds=rounds, prov_entity=_ENT_BOX_FACE + fi,
            annulus_law=annulus_law, fast_reject=fast_reject,
        )
        smp = engine.run()
        accepted = smp.points[n0:]
        world = np.empty((len(accepted), 3))
        world[:, axis] = val
        world[:, other[0]] = accepted[:, 0]
        world[:, other[1]] = accepted[:, 1]
        pts.append(world)
        rho.append(smp.rho[n0:].copy())
        tags.append(np.full(len(accepted), MATRIX_BOUNDARY, dtype=np.uint8))
        prov.append(smp.prov[n0:].copy())
        for key, val_ in smp.counters.items():
            counters[key] = counters.get(key, 0) + val_

    return Sample(
        points=np.concatenate(pts),
        rho=np.concatenate(rho),
        tags=np.concatenate(tags),
        prov=np.concatenate(prov).reshape(-1, 2),
        counters=counters,
    )


def sample_volume_3d(dfn_sample: Sample | None, box_lo, box_hi, field3d,
                     params: RadiusParams, k: int, rng_seed: int,
                     rounds: int = 1, fracture_geoms=(),
                     annulus_law: str = "area", fast_reject: bool = True,
                     ) -> tuple[Sample, "PoissonDisk3D"]:
    """Fill the domain box around the fracture sample with volume nodes.

    Seeds are the box-boundary sample (uniform cap radius) plus the merged
    fracture sample in world coordinates; candidates respect the empty-disk
    inequality and keep rho/2 clear of every fracture polygon and box face.
    """
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    for frame, local_poly, (blo, bhi) in fracture_geoms:
        if np.any(blo < lo - 1e-9) or np.any(bhi > hi + 1e-9):
            raise InvalidDomain("fracture extends outside the domain box")
    boundary = box_boundary_sample(lo, hi, params, k, rng_seed, rounds=rounds,
                                   annulus_law=annulus_law,
                                   fast_reject=fast_reject)
    if dfn_sample is not None and len(dfn_sample):
        seeds_points = np.concatenate([boundary.points, dfn_sample.points])
        seeds_rho = np.concatenate([boundary.rho, dfn_sample.rho])
        seeds_tags = np.concatenate([boundary.tags, dfn_sample.tags])
        seeds_prov = np.concatenate([boundary.prov, dfn_sample.prov])
    else:
        seeds_points = boundary.points
        seeds_rho = boundary.rho
        seeds_tags = boundary.tags
        seeds_prov = boundary.prov
    engine = PoissonDisk3D(
        lo, hi, field3d, params, k, stream(rng_seed, VOLUME_STREAM, 0),
        seeds_points, seeds_rho, seeds_tags, seeds_prov,
        fracture_geoms=fracture_geoms, prov_entity=_ENT_VOLUME,
        annulus_law=annulus_law, fast_reject=fast_reject,
    )
    for key in ("coverage_misses", "short_closures"):
        engine.counters[key] += boundary.counters.get(key, 0)
    engine.boundary_sample = boundary
    sample = engine.run()
    return sample, engine


def refill_resampler(box_lo, box_hi, field3d, params: RadiusParams, k: int,
                     rng_seed: int, fracture_geoms=(),
                     annulus_law: str = "area", fast_reject: bool = True):
    """Closure that refills holes left by sliver-node removal.

    Returns ``resampler(survivors, iteration, removed_points) -> Sample``:
    the volume engine reruns with the survivors as seeds, a fresh stream per
    iteration, and batch centers restricted to survivors near a removed
    node.  The restriction is what makes the removal loop converge — an
    unrestricted rerun keeps densifying far-away regions with every fresh
    stream, and each densification wave spawns new slivers.
    """
    rho_max = params.require_rho_max()
    reach = (1.0 + params.a) * 2.0 * rho_max

    def resampler(survivors: Sample, iteration: int,
                  removed_points) -> Sample:
        removed = np.asarray(removed_points, dtype=float).reshape(-1, 3)
        mask = np.zeros(len(survivors), dtype=bool)
        if len(removed):
            tree = cKDTree(survivors.points)
            for lst in tree.query_ball_point(removed, reach):
                mask[lst] = True
        engine = PoissonDisk3D(
            box_lo, box_hi, field3d, params, k,
            stream(rng_seed, VOLUME_STREAM, iteration + 1),
            survivors.points, survivors.rho, survivors.tags, survivors.prov,
            fracture_geoms=fracture_geoms, prov_entity=_ENT_VOLUME,
            annulus_law=annulus_law, fast_reject=fast_reject,
            center_mask=mask,
        )
        return engine.run()

    return resampler
