"""Delaunay meshing: exact-predicate 2D/3D triangulation, conforming
intersection-edge recovery, sliver detection and the removal loop.

Construction strategy: Qhull (via scipy) builds the bulk triangulation in C;
every adjacent cell pair is then audited with the exact incircle/insphere
predicates.  In 2D the rare float-borderline violations are repaired in place
by Lawson flips driven by the exact predicate, and exactly-cocircular quads
are canonicalized to the diagonal with the lowest vertex-id sum so degenerate
inputs still mesh deterministically.  In 3D violations are not repairable by
local flips in general; the audit raises instead — across the fixture corpus
Qhull's output is exact-clean (see tests), the audit is a tripwire.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import Delaunay as _Qhull
from scipy.spatial import cKDTree

from .errors import (
    AllCollinear,
    AllCoplanar,
    ConformityError,
    DegenerateSimplex,
    DuplicatePoints,
    InvalidParams,
    MeshError,
    SegmentEndpointMissing,
)
from .geometry import (
    circumcenters3d,
    diametral_sign,
    incircle2d,
    incircle2d_many,
    insphere3d_many,
    orient2d,
    orient3d,
    tet_aspect,
    tet_dihedral_angles,
    tet_volumes,
    triangle_angles,
    triangle_aspect,
)
from .sampler import Sample, VOLUME

_DUP_TOL = 1e-12


@dataclass
class Mesh:
    """A simplicial mesh with per-cell quality and recovered feature edges.

    ``cells`` rows are ascending vertex-id tuples, sorted lexicographically,
    so two meshes over the same points compare byte-identical iff they are
    the same triangulation.
    """

    points: np.ndarray
    cells: np.ndarray
    quality: dict
    constrained_edges: list = dc_field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.cells)

    def edge_set(self) -> set:
        edges = set()
        nv = self.cells.shape[1]
        for row in self.cells:
            for i in range(nv):
                for j in range(i + 1, nv):
                    edges.add((int(row[i]), int(row[j])))
        return edges


@dataclass(frozen=True)
class SliverThresholds:
    """Cell rejection thresholds for tetrahedral quality."""

    min_dihedral_deg: float = 8.0
    max_dihedral_deg: float = 170.0
    min_aspect: float = 0.2

    def __post_init__(self):
        if not (0 < self.min_dihedral_deg < self.max_dihedral_deg < 180):
            raise InvalidParams(
                "need 0 < min_dihedral < max_dihedral < 180, got "
                f"({self.min_dihedral_deg}, {self.max_dihedral_deg})"
            )
        if not (0 < self.min_aspect <= 1):
            raise InvalidParams(
                f"min_aspect must be in (0, 1], got {self.min_aspect}"
            )


# ---------------------------------------------------------------------------
# input validation
# ---------------------------------------------------------------------------

def _check_duplicates(pts: np.ndarray):
    pairs = cKDTree(pts).query_pairs(_DUP_TOL)
    if pairs:
        i, j = min(pairs)
        raise DuplicatePoints(
            f"points {i} and {j} coincide within {_DUP_TOL:g}"
        )


def _first_independent_triple(pts: np.ndarray):
    """Indices (0, 1, k) of the first non-collinear triple, or None."""
    scale = np.abs(pts).max() or 1.0
    base = pts[1] - pts[0]
    for k in range(2, len(pts)):
        v = pts[k] - pts[0]
        if pts.shape[1] == 2:
            area = base[0] * v[1] - base[1] * v[0]
        else:
            area = np.linalg.norm(np.cross(base, v))
        if abs(area) > 1e-14 * scale * scale:
            return 0, 1, k
    return None


# ---------------------------------------------------------------------------
# 2D: Qhull + exact Lawson repair + cocircular canonicalization
# ---------------------------------------------------------------------------

def _tri_signs(pts, tris):
    """Orientation signs (exact where the float cross is borderline)."""
    p = pts[tris]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    mag = (np.abs(u[:, 0] * v[:, 1]) + np.abs(u[:, 1] * v[:, 0]))
    out = np.sign(cross).astype(np.int8)
    unsure = np.abs(cross) < 1e-12 * mag
    for i in np.flatnonzero(unsure):
        out[i] = orient2d(pts[tris[i, 0]], pts[tris[i, 1]], pts[tris[i, 2]])
    return out


class _EditableTri:
    """Triangle soup with edge adjacency, supporting Lawson flips."""

    def __init__(self, pts: np.ndarray, tris: np.ndarray):
        self.pts = pts
        self.tris: dict[int, tuple[int, int, int]] = {}
        self.edge: dict[tuple[int, int], list[int]] = {}
        self._next = 0
        for row in tris:
            self._add(tuple(int(x) for x in row))

    def _add(self, tri):
        tid = self._next
        self._next += 1
        self.tris[tid] = tri
        for e in self._edges(tri):
            self.edge.setdefault(e, []).append(tid)
        return tid

    def _remove(self, tid):
        tri = self.tris.pop(tid)
        for e in self._edges(tri):
            lst = self.edge[e]
            lst.remove(tid)
            if not lst:
                del self.edge[e]

    @staticmethod
    def _edges(tri):
        a, b, c = tri
        return ((min(a, b), max(a, b)), (min(b, c), max(b, c)),
                (min(a, c), max(a, c)))

    def opposite(self, tid, e):
        return next(v for v in self.tris[tid] if v not in e)

    def quad(self, e):
        """For interior edge e=(u,v): (t1, t2, c, d) with c, d opposite."""
        tids = self.edge.get(e, ())
        if len(tids) != 2:
            return None
        t1, t2 = tids
        return t1, t2, self.opposite(t1, e), self.opposite(t2, e)

    def flip(self, e, t1, t2, c, d) -> tuple:
        """Replace diagonal e=(u,v) by (c, d); returns the 4 outer edges."""
        u, v = e
        self._remove(t1)
        self._remove(t2)
        # orientations fixed by the caller's convexity check
        if orient2d(self.pts[c], self.pts[d], self.pts[u]) > 0:
            self._add((c, d, u))
            self._add((d, c, v))
        else:
            self._add((d, c, u))
            self._add((c, d, v))
        return ((min(u, c), max(u, c)), (min(u, d), max(u, d)),
                (min(v, c), max(v, c)), (min(v, d), max(v, d)))

    def delaunay_sign(self, e):
        """Exact incircle sign of the quad across e; >0 means flippable."""
        q = self.quad(e)
        if q is None:
            return None, None
        t1, t2, c, d = q
        a, b, cc = self.tris[t1]
        s = incircle2d(self.pts[a], self.pts[b], self.pts[cc], self.pts[d])
        s *= orient2d(self.pts[a], self.pts[b], self.pts[cc])
        return s, q

    def strictly_convex_across(self, e, c, d) -> bool:
        u, v = e
        s1 = orient2d(self.pts[c], self.pts[d], self.pts[u])
        s2 = orient2d(self.pts[c], self.pts[d], self.pts[v])
        return s1 * s2 < 0

    def to_array(self) -> np.ndarray:
        rows = np.array([sorted(t) for t in self.tris.values()], dtype=np.int64)
        return rows[np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))]


def _interior_edge_signs(pts, tris):
    """Exact Delaunay audit over all interior edges of a triangle array.

    Returns (edges u<v, opposite pair (c, d), signs); sign > 0 is a
    violation, 0 an exact cocircular tie.
    """
    m = len(tris)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [0, 2]]])
    edges = np.sort(edges, axis=1)
    opp = np.concatenate([tris[:, 2], tris[:, 0], tris[:, 1]])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    opp = opp[order]
    same = np.all(edges[:-1] == edges[1:], axis=1)
    first = np.flatnonzero(same)
    e = edges[first]
    c = opp[first]
    d = opp[first + 1]
    signs = incircle2d_many(pts[e[:, 0]], pts[e[:, 1]], pts[c], pts[d])
    orient = _tri_signs(pts, np.column_stack([e, c]))
    return e, np.column_stack([c, d]), signs * orient


def delaunay2d(points) -> Mesh:
    """Exact-predicate Delaunay triangulation of a 2D point set.

    Deterministic: cells are ascending-id rows in lexicographic order, and
    exactly-cocircular quads take the diagonal with the lowest vertex-id sum.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidParams(f"expected (n, 2) points, got {pts.shape}")
    if len(pts) < 3:
        raise AllCollinear(f"need at least 3 points, got {len(pts)}")
    _check_duplicates(pts)
    triple = _first_independent_triple(pts)
    if triple is None or all(
        orient2d(pts[0], pts[1], pts[k]) == 0 for k in range(2, len(pts))
    ):
        raise AllCollinear("all points lie on a single line")

    tris = _Qhull(pts).simplices.astype(np.int64)
    used = np.zeros(len(pts), dtype=bool)
    used[tris] = True
    if not used.all():
        missing = int(np.flatnonzero(~used)[0])
        raise MeshError(f"triangulation dropped point {missing}")
    signs = _tri_signs(pts, tris)
    if np.any(signs == 0):
        raise DegenerateSimplex("zero-area triangle in triangulation")
    flipidx = signs < 0
    tris[flipidx] = tris[flipidx][:, [0, 2, 1]]

    # exact audit; repair the (rare) violations by Lawson flips
    e, cd, s = _interior_edge_signs(pts, tris)
    mesh = _EditableTri(pts, tris)
    queue = [tuple(map(int, e[i])) for i in np.flatnonzero(s > 0)]
    guard = 0
    while queue:
        edge = queue.pop()
        s_e, q = mesh.delaunay_sign(edge)
        if q is None or s_e <= 0:
            continue
        t1, t2, c, d = q
        if not mesh.strictly_convex_across(edge, c, d):
            raise MeshError("non-convex flip request during Delaunay repair")
        queue.extend(mesh.flip(edge, t1, t2, c, d))
        guard += 1
        if guard > 20 * len(tris):
            raise MeshError("Delaunay repair did not terminate")

    # canonicalize exact ties: lowest vertex-id-sum diagonal wins
    tie_queue = [tuple(map(int, e[i])) for i in np.flatnonzero(s == 0)]
    while tie_queue:
        edge = tie_queue.pop()
        s_e, q = mesh.delaunay_sign(edge)
        if q is None or s_e != 0:
            continue
        t1, t2, c, d = q
        if c + d < edge[0] + edge[1] and mesh.strictly_convex_across(edge, c, d):
            for ne in mesh.flip(edge, t1, t2, c, d):
                tie_queue.append(ne)

    cells = mesh.to_array()
    _, _, s_final = _interior_edge_signs(pts, cells)
    if np.any(s_final > 0):
        raise MeshError("Delaunay repair left an empty-circle violation")
    ang = triangle_angles(pts, cells)
    quality = {
        "min_angle": ang.min(axis=1),
        "max_angle": ang.max(axis=1),
        "aspect": triangle_aspect(pts, cells),
    }
    return Mesh(points=pts, cells=cells, quality=quality)


# ---------------------------------------------------------------------------
# conforming edge recovery
# ---------------------------------------------------------------------------

def _nodes_on_segment(pts, a, b):
    """Indices of points lying on segment ab, sorted by arclength parameter."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    len2 = float(ab @ ab)
    if len2 == 0.0:
        raise InvalidParams("zero-length constraint segment")
    rel = pts - a
    t = (rel @ ab) / len2
    perp = np.abs(rel[:, 0] * ab[1] - rel[:, 1] * ab[0]) / np.sqrt(len2)
    tol = 1e-9 * np.sqrt(len2)
    on = (perp <= tol) & (t >= -1e-9) & (t <= 1 + 1e-9)
    idx = np.flatnonzero(on)
    return idx[np.argsort(t[idx])], t


def make_conforming(points, segments) -> tuple[np.ndarray, Mesh]:
    """Excavate diametral circles of intersection sub-segments, then mesh.

    Every node strictly inside the circle whose diameter is a consecutive
    pair of on-segment nodes is deleted (the pair itself excepted); the
    unconstrained Delaunay of the survivors then contains each sub-segment
    as an edge.  That containment is audited, not assumed.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    chains = []
    for a, b in segments:
        idx, _t = _nodes_on_segment(pts, a, b)
        if len(idx) < 2:
            raise SegmentEndpointMissing(
                f"segment {a}-{b} has {len(idx)} on-segment nodes"
            )
        for endpoint in (a, b):
            d = np.linalg.norm(pts[idx] - np.asarray(endpoint), axis=1)
            if d.min() > _DUP_TOL:
                raise SegmentEndpointMissing(
                    f"segment endpoint {endpoint} is not a sample node"
                )
        chains.append(idx)

    doomed: set[int] = set()
    tree = cKDTree(pts)
    for idx in chains:
        for u, v in zip(idx[:-1], idx[1:]):
            p, q = pts[u], pts[v]
            mid = 0.5 * (p + q)
            rad = 0.5 * np.linalg.norm(q - p)
            for w in tree.query_ball_point(mid, rad * (1 + 1e-9)):
                if w == u or w == v:
                    continue
                if diametral_sign(pts[w], p, q) < 0:
                    doomed.add(int(w))

    keep = np.ones(len(pts), dtype=bool)
    keep[list(doomed)] = False
    new_id = np.cumsum(keep) - 1
    pruned = pts[keep]
    mesh = delaunay2d(pruned)
    edges = mesh.edge_set()
    constrained = []
    for idx in chains:
        live = [i for i in idx if keep[i]]
        for u, v in zip(live[:-1], live[1:]):
            nu, nv = int(new_id[u]), int(new_id[v])
            e = (min(nu, nv), max(nu, nv))
            if e not in edges:
                raise ConformityError(
                    f"sub-segment {e} missing from the triangulation"
                )
            constrained.append(e)
    mesh.constrained_edges = constrained
    return pruned, mesh


# ---------------------------------------------------------------------------
# 3D
# ---------------------------------------------------------------------------

def _tet_face_pairs(tets):
    """Interior faces: (tet1, tet2, opp vertex of 1, opp vertex of 2)."""
    m = len(tets)
    faces = np.concatenate([
        tets[:, [1, 2, 3]], tets[:, [0, 2, 3]],
        tets[:, [0, 1, 3]], tets[:, [0, 1, 2]],
    ])
    faces = np.sort(faces, axis=1)
    owner = np.tile(np.arange(m), 4)
    order = np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))
    faces = faces[order]
    owner = owner[order]
    same = np.all(faces[:-1] == faces[1:], axis=1)
    first = np.flatnonzero(same)
    t1 = owner[first]
    t2 = owner[first + 1]
    fsum = faces[first].sum(axis=1)
    opp1 = tets[t1].sum(axis=1) - fsum
    opp2 = tets[t2].sum(axis=1) - fsum
    return t1, t2, opp1, opp2


def delaunay3d(points, verify: bool = True) -> Mesh:
    """Delaunay tetrahedralization with an exact-predicate audit.

    ``verify=False`` skips the audit (used inside the sliver loop where the
    same audit runs on the final mesh only).
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidParams(f"expected (n, 3) points, got {pts.shape}")
    if len(pts) < 4:
        raise AllCoplanar(f"need at least 4 points, got {len(pts)}")
    _check_duplicates(pts)
    triple = _first_independent_triple(pts)
    if triple is None:
        raise AllCoplanar("all points lie on a single plane")
    i, j, k = triple
    if all(orient3d(pts[i], pts[j], pts[k], pts[q]) == 0
           for q in range(len(pts)) if q not in (i, j, k)):
        raise AllCoplanar("all points lie on a single plane")

    tets = _Qhull(pts).simplices.astype(np.int64)
    # cospherical clusters make Qhull emit flat filler tets; drop them
    vol = tet_volumes(pts, tets)
    scale = np.abs(pts).max() or 1.0
    near0 = np.abs(vol) < 1e-12 * scale**3
    if np.any(near0):
        flat = np.array([
            orient3d(pts[t[0]], pts[t[1]], pts[t[2]], pts[t[3]]) == 0
            for t in tets[near0]
        ])
        drop = np.flatnonzero(near0)[flat]
        tets = np.delete(tets, drop, axis=0)
    used = np.zeros(len(pts), dtype=bool)
    used[tets] = True
    if not used.all():
        missing = int(np.flatnonzero(~used)[0])
        raise MeshError(f"tetrahedralization dropped point {missing}")
    # canonical form: ascending ids per row, rows in lexicographic order
    # (orientation is re-derived from the volume sign wherever it matters)
    tets = np.sort(tets, axis=1)
    tets = tets[np.lexsort((tets[:, 3], tets[:, 2], tets[:, 1], tets[:, 0]))]

    if verify:
        t1, t2, o1, o2 = _tet_face_pairs(tets)
        for ta, opp in ((t1, o2), (t2, o1)):
            rows = tets[ta]
            # orient3d's sign convention is det[a-d; b-d; c-d], the negative
            # of the signed-volume convention used by tet_volumes
            ori = -np.sign(tet_volumes(pts, rows))
            s = insphere3d_many(pts[rows[:, 0]], pts[rows[:, 1]],
                                pts[rows[:, 2]], pts[rows[:, 3]], pts[opp])
            if np.any(s * ori > 0):
                raise MeshError(
                    "empty-circumsphere violation in Qhull output"
                )

    dih = tet_dihedral_angles(pts, tets)
    quality = {
        "min_dihedral": dih.min(axis=1),
        "max_dihedral": dih.max(axis=1),
        "aspect": tet_aspect(pts, tets),
    }
    return Mesh(points=pts, cells=tets, quality=quality)


def boundary_circumradius_diagnostic(mesh: Mesh, box_lo, box_hi,
                                     r_delta: float) -> dict:
    """Empirical radius bound for tets whose circumcenter leaves the box.

    For such a tet with an interior vertex at depth d from the nearest box
    face, the Delaunay property forces circumradius R <= r_delta**2 / d,
    where r_delta is the boundary coverage radius.  Purely informational:
    the returned ratios are logged by the pipeline, never asserted.
    """
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    out = {"outside_centers": 0, "max_circumradius": 0.0, "max_ratio": 0.0}
    if mesh.dim != 3 or len(mesh.cells) == 0:
        return out
    centers, r2 = circumcenters3d(mesh.points, mesh.cells)
    outside = np.any((centers < lo) | (centers > hi), axis=1)
    if not outside.any():
        return out
    radii = np.sqrt(r2[outside])
    verts = mesh.points[mesh.cells[outside]]
    depth = np.minimum((verts - lo).min(axis=2), (hi - verts).min(axis=2))
    d = depth.max(axis=1)
    ok = d > 0
    out["outside_centers"] = int(outside.sum())
    out["max_circumradius"] = float(radii.max())
    if ok.any():
        out["max_ratio"] = float((radii[ok] * d[ok] / r_delta**2).max())
    return out


def detect_slivers(mesh: Mesh, thresholds: SliverThresholds) -> np.ndarray:
    """Cell indices whose dihedral range or aspect violates the thresholds."""
    q = mesh.quality
    bad = (
        (q["min_dihedral"] < thresholds.min_dihedral_deg)
        | (q["max_dihedral"] > thresholds.max_dihedral_deg)
        | (q["aspect"] < thresholds.min_aspect)
    )
    return np.flatnonzero(bad)


def _vertex_heights(pts, tet):
    """Distance from each vertex to its opposite face plane."""
    p = pts[tet]
    vol6 = abs(float(np.dot(p[1] - p[0], np.cross(p[2] - p[0], p[3] - p[0]))))
    faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    h = np.empty(4)
    for v, (i, j, k) in enumerate(faces):
        area2 = np.linalg.norm(np.cross(p[j] - p[i], p[k] - p[i]))
        h[v] = vol6 / area2 if area2 > 0 else 0.0
    return h


def sliver_removal_loop(sample: Sample, resampler, thresholds: SliverThresholds,
                        max_iters: int = 50) -> tuple[Sample, Mesh, dict]:
    """Delete 2 volume nodes per sliver and refill until the mesh is clean.

    ``resampler(survivors, iteration, removed_points)`` reruns the volume
    sampler with the surviving nodes as seeds and returns the refilled
    Sample; the loop itself stays independent of the sampling configuration.
    ``removed_points`` carries the positions just deleted so the refill can
    restrict its batch centers to the affected neighbourhoods.  Nodes tagged
    as fracture or box-boundary are never deleted.  Per sliver the two
    volume-tagged vertices with the smallest distance to their opposite face
    (the most equatorial ones) are removed, ties by vertex id.

    Returns ``(sample, mesh, log)`` with ``log["status"]`` one of
    "converged" / "max_iters" and per-iteration (slivers, removed) counts.
    """
    log: dict = {"iterations": [], "status": "converged"}
    mesh = delaunay3d(sample.points, verify=False)
    for it in range(max_iters):
        slivers = detect_slivers(mesh, thresholds)
        if len(slivers) == 0:
            return sample, mesh, log
        doomed: set[int] = set()
        for ci in slivers:
            tet = mesh.cells[ci]
            pos = {int(v): p for p, v in enumerate(tet)}
            removable = [v for v in pos if sample.tags[v] == VOLUME
                         and v not in doomed]
            if not removable:
                continue
            h = _vertex_heights(mesh.points, tet)
            by_height = sorted(removable, key=lambda v: (h[pos[v]], v))
            doomed.update(by_height[:2])
        keep = np.ones(len(sample.points), dtype=bool)
        keep[list(doomed)] = False
        survivors = Sample(
            points=sample.points[keep],
            rho=sample.rho[keep],
            tags=sample.tags[keep],
            prov=sample.prov[keep],
            counters=sample.counters,
        )
        sample = resampler(survivors, it, sample.points[~keep])
        mesh = delaunay3d(sample.points, verify=False)
        log["iterations"].append(
            {"iteration": it, "slivers": int(len(slivers)),
             "removed": int(len(doomed))}
        )
    if len(detect_slivers(mesh, thresholds)):
        log["status"] = "max_iters"
    return sample, mesh, log


# ---------------------------------------------------------------------------
# quality reporting
# ---------------------------------------------------------------------------

_BIN_WIDTHS = {"min_angle": 1.0, "max_angle": 1.0, "min_dihedral": 1.0,
               "max_dihedral": 1.0, "aspect": 0.01}


def quality_report(mesh: Mesh, bin_widths: dict | None = None) -> dict:
    """Histogram + extremes per quality metric, CSV/JSON-serializable.

    Returns ``{metric: {"bins": [(lo, hi, count), ...], "min": .., "max": ..,
    "mean": .., "n": ..}}``.
    """
    widths = dict(_BIN_WIDTHS)
    if bin_widths:
        widths.update(bin_widths)
    out = {}
    for name, vals in mesh.quality.items():
        w = widths.get(name, 1.0)
        lo = np.floor(vals.min() / w) * w
        hi = np.ceil(vals.max() / w) * w
        nbins = max(1, int(round((hi - lo) / w)))
        counts, edges = np.histogram(vals, bins=nbins, range=(lo, hi))
        out[name] = {
            "bins": [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
                     for i in range(nbins)],
            "min": float(vals.min()),
            "max": float(vals.max()),
            "mean": float(vals.mean()),
            "n": int(len(vals)),
        }
    return out
