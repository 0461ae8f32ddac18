"""Fracture-network assembly: ingestion, decomposition, merging, export.

A network is a set of planar polygons (fractures) in a domain box, plus the
line segments where pairs of fractures meet.  Sampling happens per fracture
in local 2D coordinates, but everything the fractures must agree on — the
nodes along shared intersection segments and their crossing points — is
computed once in world coordinates and injected into both owners' seed
sets.  World coordinates are canonical throughout: local coordinates are
derived views, and the merge step restores the canonical world positions for
shared nodes instead of round-tripping them through either owner's frame.

Provenance pairs (entity id, index) are globally unique across a network:

=============================  =============================================
entity id                      meaning
=============================  =============================================
50_000 .. 60_000               domain-box corners/edges/faces, volume accepts
                               (bases owned by :mod:`mpsmesh.sampler`)
1_000_000 + f                  interior accepts of fracture ``f``
2_000_000 + f                  polygon vertices of fracture ``f``
3_000_000 + f                  boundary-walk nodes of fracture ``f``
4_000_000 + g                  nodes of intersection ``g`` (0, 1 = endpoints)
5_000_000 + c                  crossing point ``c`` of two intersections
=============================  =============================================
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from .delaunay import Mesh, delaunay2d, make_conforming
from .errors import (
    CollinearInput,
    IoError,
    NonPlanarInput,
    ParseError,
    ValidationError,
)
from .geometry import (
    PlaneFrame,
    build_local_frame,
    max_edge_lengths,
    point_polygon_distance_3d,
    segment_crossing_2d,
)
from .radius_field import RadiusField2D, RadiusField3D, RadiusParams, UniformField3D
from .sampler import (
    BOUNDARY,
    FRACTURE_TAGS,
    INTERSECTION,
    POLYGON_VERTEX,
    PoissonDisk2D,
    Sample,
    TAG_NAMES,
    _fresh_counters,
    walk_segment_1d,
)
from .streams import BOUNDARY as STREAM_BOUNDARY
from .streams import FRACTURE as STREAM_FRACTURE
from .streams import INTERSECT as STREAM_INTERSECT
from .streams import stream

ENT_FRACTURE_INTERIOR = 1_000_000
ENT_FRACTURE_VERTEX = 2_000_000
ENT_FRACTURE_BOUNDARY = 3_000_000
ENT_INTERSECTION = 4_000_000
ENT_CROSSING = 5_000_000
MAX_FRACTURES = 1_000_000

_TAG_OF_NAME = {name: tag for tag, name in TAG_NAMES.items()}


# ---------------------------------------------------------------------------
# description + ingestion
# ---------------------------------------------------------------------------


@dataclass
class Intersection:
    """One fracture-fracture trace segment, endpoints in world coordinates."""

    i: int
    j: int
    p1: np.ndarray
    p2: np.ndarray


@dataclass
class DFNDescription:
    fractures: list
    intersections: list
    box_lo: np.ndarray
    box_hi: np.ndarray

    @property
    def tau_plane(self) -> float:
        return 1e-9 * float(np.linalg.norm(self.box_hi - self.box_lo))


def _as_point3(value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ParseError(f"{what} must be a finite [x, y, z] triple")
    return arr


def _parse_json_dfn(doc) -> DFNDescription:
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object")
    try:
        domain = doc["domain"]
        raw_fractures = doc["fractures"]
    except KeyError as exc:
        raise ParseError(f"missing required key {exc.args[0]!r}") from None
    if not isinstance(domain, dict) or "min" not in domain or "max" not in domain:
        raise ParseError("domain must be an object with 'min' and 'max'")
    box_lo = _as_point3(domain["min"], "domain.min")
    box_hi = _as_point3(domain["max"], "domain.max")
    if not isinstance(raw_fractures, list) or not raw_fractures:
        raise ParseError("fractures must be a non-empty list of vertex loops")
    fractures = []
    for fi, loop in enumerate(raw_fractures):
        arr = np.asarray(loop, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or not np.all(np.isfinite(arr)):
            raise ParseError(f"fracture {fi} is not a list of [x, y, z] vertices")
        fractures.append(arr)
    intersections = []
    for ti, rec in enumerate(doc.get("intersections", [])):
        if not isinstance(rec, dict):
            raise ParseError(f"intersection {ti} must be an object")
        try:
            i = int(rec["i"])
            j = int(rec["j"])
            p1 = _as_point3(rec["p1"], f"intersection {ti} p1")
            p2 = _as_point3(rec["p2"], f"intersection {ti} p2")
        except KeyError as exc:
            raise ParseError(
                f"intersection {ti} missing key {exc.args[0]!r}"
            ) from None
        intersections.append(Intersection(i, j, p1, p2))
    return DFNDescription(fractures, intersections, box_lo, box_hi)


def _parse_text_dfn(text: str) -> DFNDescription:
    """Whitespace polygon interchange: a box line, then blank-separated loops."""
    box = None
    fractures: list = []
    current: list = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                fractures.append(np.asarray(current, dtype=float))
                current = []
            continue
        parts = line.split()
        if box is None:
            if parts[0].lower() != "box" or len(parts) != 7:
                raise ParseError(
                    f"line {ln}: expected 'box xmin ymin zmin xmax ymax zmax'"
                )
            try:
                vals = [float(v) for v in parts[1:]]
            except ValueError:
                raise ParseError(f"line {ln}: malformed box coordinates") from None
            box = (np.asarray(vals[:3]), np.asarray(vals[3:]))
            continue
        if len(parts) != 3:
            raise ParseError(f"line {ln}: expected 'x y z'")
        try:
            current.append([float(v) for v in parts])
        except ValueError:
            raise ParseError(f"line {ln}: malformed vertex coordinates") from None
    if current:
        fractures.append(np.asarray(current, dtype=float))
    if box is None:
        raise ParseError("missing 'box' line")
    if not fractures:
        raise ParseError("no polygon blocks found")
    return DFNDescription(fractures, [], box[0], box[1])


def load_dfn(path) -> DFNDescription:
    """Read and validate a network description (JSON or whitespace format)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    stripped = text.lstrip()
    if str(path).endswith(".json") or stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from None
        dfn = _parse_json_dfn(doc)
    else:
        dfn = _parse_text_dfn(text)
    validate_dfn(dfn)
    return dfn


def validate_dfn(dfn: DFNDescription) -> None:
    """Check every description invariant; raise ValidationError with indices."""
    if not np.all(dfn.box_hi > dfn.box_lo):
        raise ValidationError("domain box is empty (max must exceed min)")
    if len(dfn.fractures) > MAX_FRACTURES:
        raise ValidationError(f"more than {MAX_FRACTURES} fractures")
    tau = dfn.tau_plane
    frames = []
    for fi, poly in enumerate(dfn.fractures):
        arr = np.asarray(poly, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 3:
            raise ValidationError(f"fracture {fi}: needs at least 3 x,y,z vertices")
        try:
            frame = build_local_frame(arr, tol=tau)
        except (CollinearInput, NonPlanarInput) as exc:
            raise ValidationError(f"fracture {fi}: {exc}") from None
        frames.append(frame)
        if np.any(arr < dfn.box_lo - tau) or np.any(arr > dfn.box_hi + tau):
            raise ValidationError(f"fracture {fi}: vertices outside the domain box")
    nf = len(dfn.fractures)
    for ti, rec in enumerate(dfn.intersections):
        if not (0 <= rec.i < nf and 0 <= rec.j < nf):
            raise ValidationError(
                f"intersection {ti}: fracture index out of range"
            )
        if rec.i >= rec.j:
            raise ValidationError(f"intersection {ti}: requires i < j")
        if np.linalg.norm(rec.p2 - rec.p1) <= tau:
            raise ValidationError(f"intersection {ti}: degenerate segment")
        for owner in (rec.i, rec.j):
            local_poly = frames[owner].to_local(dfn.fractures[owner])
            for pname, p in (("p1", rec.p1), ("p2", rec.p2)):
                d = point_polygon_distance_3d(p[None, :], frames[owner], local_poly)[0]
                if d > tau:
                    raise ValidationError(
                        f"intersection {ti}: endpoint {pname} lies off "
                        f"fracture {owner} (distance {d:.3e})"
                    )


# ---------------------------------------------------------------------------
# decomposition with shared world-space samplings
# ---------------------------------------------------------------------------


@dataclass
class FracturePlan:
    """Everything one fracture's 2D sampling run needs, in local coordinates."""

    index: int
    frame: PlaneFrame
    local_polygon: np.ndarray
    local_segments: np.ndarray
    incident: list
    field: RadiusField2D
    seeds_points: np.ndarray
    seeds_rho: np.ndarray
    seeds_tags: np.ndarray
    seeds_prov: np.ndarray
    walk_counters: dict = dc_field(default_factory=dict)


@dataclass
class DecomposedNetwork:
    plans: list
    world_nodes: dict
    counters: dict


def decompose(dfn: DFNDescription, params: RadiusParams,
              rng_seed: int) -> DecomposedNetwork:
    """Build per-fracture sampling plans with shared intersection samplings.

    Each intersection segment is discretized exactly once, in world
    coordinates, with an RNG stream keyed by its global index; crossings of
    two intersections are located on the plane of the fracture the pair has
    in common.  Both owning fractures receive the identical node set, so the
    merged network agrees on shared nodes bit-for-bit.
    """
    counters = _fresh_counters()
    frames = [build_local_frame(np.asarray(p, dtype=float))
              for p in dfn.fractures]
    local_polys = [frames[f].to_local(dfn.fractures[f])
                   for f in range(len(dfn.fractures))]
    incident: list = [[] for _ in dfn.fractures]
    for g, rec in enumerate(dfn.intersections):
        incident[rec.i].append(g)
        incident[rec.j].append(g)

    # crossings, found on the owner the two intersections share
    world_nodes: dict = {}
    cross_of_pair: dict = {}
    cuts: list = [[] for _ in dfn.intersections]
    fracture_crossings: list = [[] for _ in dfn.fractures]
    for f in range(len(dfn.fractures)):
        segs_local = {
            g: (frames[f].to_local(dfn.intersections[g].p1),
                frames[f].to_local(dfn.intersections[g].p2))
            for g in incident[f]
        }
        for ai in range(len(incident[f])):
            for bi in range(ai + 1, len(incident[f])):
                ga, gb = incident[f][ai], incident[f][bi]
                if (ga, gb) in cross_of_pair:
                    continue
                res = segment_crossing_2d(*segs_local[ga], *segs_local[gb])
                if res is None:
                    continue
                t, u = res
                a, b = segs_local[ga]
                cid = len(cross_of_pair)
                world = frames[f].to_world(a + t * (b - a))
                cross_of_pair[(ga, gb)] = cid
                world_nodes[(ENT_CROSSING + cid, 0)] = world
                cuts[ga].append((t, cid))
                cuts[gb].append((u, cid))
                fracture_crossings[f].append(cid)
    counters["crossings"] = len(cross_of_pair)

    # one walk per intersection, split at its crossings, world-canonical
    nodes_of: list = [[] for _ in dfn.intersections]
    for g, rec in enumerate(dfn.intersections):
        p1, p2 = rec.p1, rec.p2
        world_nodes[(ENT_INTERSECTION + g, 0)] = p1
        world_nodes[(ENT_INTERSECTION + g, 1)] = p2
        nodes_of[g] = [(0, p1), (1, p2)]
        bounds = [(0.0, None)] + sorted(cuts[g]) + [(1.0, None)]
        rng = stream(rng_seed, STREAM_INTERSECT, g)
        nxt = 2
        for (t0, _c0), (t1, _c1) in zip(bounds[:-1], bounds[1:]):
            if t1 - t0 <= 1e-12:
                continue
            w0 = p1 + t0 * (p2 - p1)
            w1 = p1 + t1 * (p2 - p1)
            length = float(np.linalg.norm(w1 - w0))
            direction = (w1 - w0) / length
            for s in walk_segment_1d(length, lambda _s: params.rho_min,
                                     params, rng, counters):
                node = w0 + direction * s
                world_nodes[(ENT_INTERSECTION + g, nxt)] = node
                nodes_of[g].append((nxt, node))
                nxt += 1

    plans = []
    for f in range(len(dfn.fractures)):
        poly = local_polys[f]
        segs = np.array([
            [frames[f].to_local(dfn.intersections[g].p1),
             frames[f].to_local(dfn.intersections[g].p2)]
            for g in incident[f]
        ]).reshape(-1, 2, 2)
        field = RadiusField2D(params, segs if len(segs) else None)
        walk_counters = _fresh_counters()

        pts: list = []
        rho: list = []
        tags: list = []
        prov: list = []

        def add(p, r, tag, ent, idx):
            pts.append((float(p[0]), float(p[1])))
            rho.append(float(r))
            tags.append(tag)
            prov.append((ent, idx))

        injected: list = []
        for g in incident[f]:
            for idx, world in nodes_of[g]:
                injected.append((ENT_INTERSECTION + g, idx,
                                 frames[f].to_local(world)))
        for cid in fracture_crossings[f]:
            world = world_nodes[(ENT_CROSSING + cid, 0)]
            injected.append((ENT_CROSSING + cid, 0,
                             frames[f].to_local(world)))

        m = len(poly)
        tau = dfn.tau_plane
        for v in range(m):
            add(poly[v], field.rho_at(poly[v][0], poly[v][1]),
                POLYGON_VERTEX, ENT_FRACTURE_VERTEX + f, v)
        rng_b = stream(rng_seed, STREAM_BOUNDARY, f)
        nb = 0
        for e in range(m):
            a = poly[e]
            b = poly[(e + 1) % m]
            length = float(np.hypot(*(b - a)))
            direction = (b - a) / length
            # intersections commonly terminate on the fracture boundary;
            # such on-edge nodes must anchor the walk, or a walk node could
            # land arbitrarily close to them
            tcuts = []
            for _ent, _idx, q in injected:
                t = float(np.dot(q - a, direction))
                if t <= tau or t >= length - tau:
                    continue
                if float(np.hypot(*(q - (a + direction * t)))) <= tau:
                    tcuts.append(t)
            tcuts.sort()
            t0 = 0.0
            for t1 in tcuts + [length]:
                sub = t1 - t0
                if sub > tau:
                    def rho_on_edge(s, a=a, d=direction, off=t0):
                        return field.rho_at(a[0] + d[0] * (off + s),
                                            a[1] + d[1] * (off + s))

                    for s in walk_segment_1d(sub, rho_on_edge, params, rng_b,
                                             walk_counters):
                        add(a + direction * (t0 + s), rho_on_edge(s),
                            BOUNDARY, ENT_FRACTURE_BOUNDARY + f, nb)
                        nb += 1
                t0 = t1
        for ent, idx, q in injected:
            add(q, params.rho_min, INTERSECTION, ent, idx)

        seeds_points = np.asarray(pts, dtype=float).reshape(-1, 2)
        seeds_rho = np.asarray(rho, dtype=float)
        seeds_tags = np.asarray(tags, dtype=np.uint8)
        seeds_prov = np.asarray(prov, dtype=np.int64).reshape(-1, 2)
        # exact-duplicate seeds (touching intersection endpoints, vertices on
        # a trace) would cap each other's radii to zero; keep the first copy
        keep = np.ones(len(seeds_points), dtype=bool)
        seen: dict = {}
        for i, row in enumerate(seeds_points):
            key = row.tobytes()
            if key in seen:
                keep[i] = False
            else:
                seen[key] = i
        dropped = int((~keep).sum())
        if dropped:
            walk_counters["duplicate_seeds_dropped"] = dropped
        seeds_points = seeds_points[keep]
        seeds_rho = seeds_rho[keep]
        seeds_tags = seeds_tags[keep]
        seeds_prov = seeds_prov[keep]

        # the accel grid holds one node per cell, so seeds closer than h/2
        # are structurally unacceptable; resolve leftovers by priority:
        # intersection nodes anchor conformity across fractures, polygon
        # vertices anchor the domain shape, walk nodes are pure coverage
        prio = {INTERSECTION: 2, POLYGON_VERTEX: 1, BOUNDARY: 0}
        alive = np.ones(len(seeds_points), dtype=bool)
        pairs = cKDTree(seeds_points).query_pairs(
            0.5 * params.h, output_type="ndarray")
        if len(pairs):
            d = np.linalg.norm(seeds_points[pairs[:, 0]]
                               - seeds_points[pairs[:, 1]], axis=1)
            for pi in np.lexsort((pairs[:, 1], pairs[:, 0], d)):
                i, j = int(pairs[pi, 0]), int(pairs[pi, 1])
                if not (alive[i] and alive[j]):
                    continue
                pri, prj = prio[int(seeds_tags[i])], prio[int(seeds_tags[j])]
                if pri == prj == 2:
                    continue  # both required; pathology surfaces downstream
                alive[i if (pri, -i) < (prj, -j) else j] = False
        near = int((~alive).sum())
        if near:
            walk_counters["near_seed_drops"] = near
        plans.append(FracturePlan(
            index=f, frame=frames[f], local_polygon=poly, local_segments=segs,
            incident=list(incident[f]), field=field,
            seeds_points=seeds_points[alive], seeds_rho=seeds_rho[alive],
            seeds_tags=seeds_tags[alive], seeds_prov=seeds_prov[alive],
            walk_counters=walk_counters,
        ))
    return DecomposedNetwork(plans=plans, world_nodes=world_nodes,
                             counters=counters)


# ---------------------------------------------------------------------------
# per-fracture sampling + conforming mesh
# ---------------------------------------------------------------------------


def sample_fracture(plan: FracturePlan, params: RadiusParams, k: int,
                    rng_seed: int, rounds: int = 1,
                    annulus_law: str = "area",
                    fast_reject: bool = True) -> Sample:
    """Run the 2D engine for one fracture plan (jobs-safe: no shared state)."""
    engine = PoissonDisk2D(
        plan.local_polygon, plan.field, params, k,
        stream(rng_seed, STREAM_FRACTURE, plan.index),
        plan.seeds_points, plan.seeds_rho, plan.seeds_tags, plan.seeds_prov,
        rounds=rounds, prov_entity=ENT_FRACTURE_INTERIOR + plan.index,
        annulus_law=annulus_law, fast_reject=fast_reject,
    )
    for key, val in plan.walk_counters.items():
        engine.counters[key] = engine.counters.get(key, 0) + val
    return engine.run()


def conform_and_mesh(sample: Sample, plan: FracturePlan) -> tuple[Sample, Mesh]:
    """Excavate diametral circles, mesh, and slice the sample to survivors."""
    if len(plan.local_segments) == 0:
        mesh = delaunay2d(sample.points)
        return sample, mesh
    pruned_pts, mesh = make_conforming(sample.points, plan.local_segments)
    index_of = {sample.points[i].tobytes(): i for i in range(len(sample))}
    kept = np.array([index_of[row.tobytes()] for row in pruned_pts],
                    dtype=np.int64)
    counters = dict(sample.counters)
    counters["conformity_pruned"] = len(sample) - len(kept)
    return Sample(
        points=sample.points[kept],
        rho=sample.rho[kept],
        tags=sample.tags[kept],
        prov=sample.prov[kept],
        counters=counters,
    ), mesh


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------


def fracture_of(prov: np.ndarray) -> np.ndarray:
    """Owning fracture per node from provenance (-1 for matrix/box nodes)."""
    ent = prov[:, 0]
    out = np.full(len(ent), -1, dtype=np.int64)
    for base in (ENT_FRACTURE_INTERIOR, ENT_FRACTURE_VERTEX,
                 ENT_FRACTURE_BOUNDARY):
        sel = (ent >= base) & (ent < base + MAX_FRACTURES)
        out[sel] = ent[sel] - base
    return out


def merge_samples(samples, plans, world_nodes) -> Sample:
    """World-space union of the per-fracture samples.

    Shared intersection/crossing nodes collapse to one copy at their
    canonical world position with the minimum radius any owner assigned
    (owners cap seed radii independently near crossings).  Remaining
    cross-fracture conflicts — distinct nodes closer than their mutual
    radius, possible where fractures nearly touch — are resolved by deleting
    the non-intersection node of the higher-index fracture.
    """
    world_parts = []
    rho_parts = []
    tag_parts = []
    prov_parts = []
    frac_parts = []
    for plan, smp in zip(plans, samples):
        world = plan.frame.to_world(smp.points)
        for i in range(len(smp)):
            key = (int(smp.prov[i, 0]), int(smp.prov[i, 1]))
            if key in world_nodes:
                world[i] = world_nodes[key]
        world_parts.append(world)
        rho_parts.append(smp.rho)
        tag_parts.append(smp.tags)
        prov_parts.append(smp.prov)
        frac_parts.append(np.full(len(smp), plan.index, dtype=np.int64))
    pts = np.concatenate(world_parts)
    rho = np.concatenate(rho_parts).copy()
    tags = np.concatenate(tag_parts)
    prov = np.concatenate(prov_parts)
    frac = np.concatenate(frac_parts)

    counters = {"shared_deduped": 0, "conflicts_deleted": 0,
                "conflicts_unresolvable": 0}
    alive = np.ones(len(pts), dtype=bool)
    first_of: dict = {}
    for i in range(len(pts)):
        key = (int(prov[i, 0]), int(prov[i, 1]))
        if key not in world_nodes:
            continue
        if key in first_of:
            keeper = first_of[key]
            rho[keeper] = min(rho[keeper], rho[i])
            alive[i] = False
            counters["shared_deduped"] += 1
        else:
            first_of[key] = i

    if alive.sum() > 1:
        idx = np.flatnonzero(alive)
        tree = cKDTree(pts[idx])
        pairs = tree.query_pairs(float(rho[idx].max()), output_type="ndarray")
        if len(pairs):
            u = idx[pairs[:, 0]]
            v = idx[pairs[:, 1]]
            d = np.linalg.norm(pts[u] - pts[v], axis=1)
            mind = np.minimum(rho[u], rho[v])
            bad = (frac[u] != frac[v]) & (d < mind * (1.0 - 1e-12))
            order = np.lexsort((v[bad], u[bad]))
            for a, b in zip(u[bad][order], v[bad][order]):
                if not (alive[a] and alive[b]):
                    continue
                cand = [w for w in (a, b) if tags[w] != INTERSECTION]
                if not cand:
                    counters["conflicts_unresolvable"] += 1
                    continue
                victim = max(cand, key=lambda w: (frac[w], w))
                alive[victim] = False
                counters["conflicts_deleted"] += 1

    return Sample(
        points=pts[alive],
        rho=rho[alive],
        tags=tags[alive],
        prov=prov[alive],
        counters=counters,
    )


def build_field3d(merged: Sample, params: RadiusParams):
    """Volume sizing field grown from the merged fracture sample."""
    mask = np.isin(merged.tags, FRACTURE_TAGS)
    if mask.any():
        return RadiusField3D(params, merged.points[mask], merged.rho[mask])
    return UniformField3D(params)


def fracture_geometries(dfn: DFNDescription, plans) -> list:
    """(frame, local polygon, world bbox) triples for the standoff test."""
    geoms = []
    for plan in plans:
        verts = np.asarray(dfn.fractures[plan.index], dtype=float)
        geoms.append((plan.frame, plan.local_polygon,
                      (verts.min(axis=0), verts.max(axis=0))))
    return geoms


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------


def _points3(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    return pts


def export_vtk(mesh: Mesh, path, title: str = "mpsmesh") -> None:
    """Legacy ASCII unstructured grid with a max-edge-length cell scalar."""
    pts = _points3(mesh.points)
    cells = np.asarray(mesh.cells)
    nv = cells.shape[1] if len(cells) else 3
    ctype = 5 if nv == 3 else 10
    edge = max_edge_lengths(np.asarray(mesh.points, dtype=float), cells) \
        if len(cells) else np.zeros(0)
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"{title}\n")
            fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {len(pts)} double\n")
            for row in pts:
                fh.write("%.17g %.17g %.17g\n" % tuple(row))
            fh.write(f"CELLS {len(cells)} {len(cells) * (1 + nv)}\n")
            for row in cells:
                fh.write(" ".join([str(nv)] + [str(int(c)) for c in row]) + "\n")
            fh.write(f"CELL_TYPES {len(cells)}\n")
            for _ in range(len(cells)):
                fh.write(f"{ctype}\n")
            fh.write(f"CELL_DATA {len(cells)}\n")
            fh.write("SCALARS max_edge_length double 1\nLOOKUP_TABLE default\n")
            for val in edge:
                fh.write("%.17g\n" % val)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def export_points_csv(sample: Sample, path) -> None:
    """Node dump: x,y,z,rho,tag with tags spelled out."""
    pts = _points3(sample.points)
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("x,y,z,rho,tag\n")
            for row, r, tag in zip(pts, sample.rho, sample.tags):
                fh.write("%.17g,%.17g,%.17g,%.17g,%s\n"
                         % (row[0], row[1], row[2], r, TAG_NAMES[int(tag)]))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def read_points_csv(path) -> Sample:
    """Inverse of :func:`export_points_csv`."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    if not lines or lines[0] != "x,y,z,rho,tag":
        raise ParseError(f"{path}: expected header x,y,z,rho,tag")
    pts = []
    rho = []
    tags = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5 or parts[4] not in _TAG_OF_NAME:
            raise ParseError(f"{path}:{ln}: malformed row")
        try:
            pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
            rho.append(float(parts[3]))
        except ValueError:
            raise ParseError(f"{path}:{ln}: malformed number") from None
        tags.append(_TAG_OF_NAME[parts[4]])
    n = len(pts)
    return Sample(
        points=np.asarray(pts, dtype=float).reshape(n, 3),
        rho=np.asarray(rho, dtype=float),
        tags=np.asarray(tags, dtype=np.uint8),
        prov=np.zeros((n, 2), dtype=np.int64),
        counters={},
    )


def read_vtk(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse points and cells back out of a legacy ASCII unstructured grid."""
    try:
        with open(path, "r", encoding="ascii", errors="replace") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    tokens = text.split()
    pos = 0

    def need(what: str) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"{path}: truncated before {what}")
        tok = tokens[pos]
        pos += 1
        return tok

    def need_int(what: str) -> int:
        tok = need(what)
        try:
            return int(tok)
        except ValueError:
            raise ParseError(f"{path}: expected integer for {what}, "
                             f"got {tok!r}") from None

    def need_float(what: str) -> float:
        tok = need(what)
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"{path}: expected number for {what}, "
                             f"got {tok!r}") from None

    while pos < len(tokens) and tokens[pos].upper() != "DATASET":
        pos += 1
    if need("DATASET keyword").upper() != "DATASET" or \
            need("dataset type").upper() != "UNSTRUCTURED_GRID":
        raise ParseError(f"{path}: not an unstructured-grid VTK file")
    if need("POINTS keyword").upper() != "POINTS":
        raise ParseError(f"{path}: POINTS section missing")
    npts = need_int("point count")
    need("point scalar type")
    pts = np.empty((npts, 3))
    for i in range(npts):
        for d in range(3):
            pts[i, d] = need_float("point coordinate")
    if need("CELLS keyword").upper() != "CELLS":
        raise ParseError(f"{path}: CELLS section missing")
    ncells = need_int("cell count")
    need_int("cell list size")
    rows = []
    nv = None
    for _ in range(ncells):
        this_nv = need_int("cell vertex count")
        if this_nv not in (3, 4) or (nv is not None and this_nv != nv):
            raise ParseError(f"{path}: only homogeneous triangle or "
                             "tetrahedron cells are supported")
        nv = this_nv
        row = [need_int("cell vertex id") for _ in range(this_nv)]
        if any(c < 0 or c >= npts for c in row):
            raise ParseError(f"{path}: cell vertex id out of range")
        rows.append(row)
    cells = (np.asarray(rows, dtype=np.int64)
             if rows else np.zeros((0, 3), dtype=np.int64))
    return pts, cells
