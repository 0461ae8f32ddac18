"""Geometric primitives: exact predicates, frames, circumspheres, quality.

The orientation/in-circle/in-sphere predicates return exact signs for any
float input.  Each one evaluates the determinant in ordinary floating point
and compares against a forward error bound; only when the computed value is
too close to zero to be trusted is the determinant re-evaluated in exact
rational arithmetic (`fractions.Fraction` represents every float exactly, so
the fallback is slow but never wrong).  Tolerance-based signs are *not* used
anywhere a topological decision is made.

Sign conventions
----------------
``orient2d(a, b, c) > 0``   : a, b, c in counter-clockwise order.
``incircle2d(a, b, c, d)``  : for CCW (a, b, c), positive means d strictly
                              inside the circumcircle.
``orient3d(a, b, c, d) > 0``: d on the negative side of plane (a, b, c),
                              i.e. (a-d, b-d, c-d) form a positive basis.
``insphere3d(a, ..., e)``   : for a positively oriented (a, b, c, d),
                              positive means e strictly inside the
                              circumsphere.  Multiply by the orientation
                              sign for orientation-independent queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import CollinearInput, DegenerateSimplex, NonPlanarInput

_EPS = 2.0 ** -53
# Shewchuk's "A" stage error bounds.
_CCW_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_O3D_BOUND = (7.0 + 56.0 * _EPS) * _EPS
_ICC_BOUND = (10.0 + 96.0 * _EPS) * _EPS
_ISP_BOUND = (16.0 + 224.0 * _EPS) * _EPS
# Loose bound for the 2-term / 3-term dot products used by diametral tests.
_DOT_BOUND = 16.0 * _EPS
# Below this magnitude-sum the intermediate products may have underflowed,
# which voids the relative-error model behind the bounds: go exact instead.
_UFLOW = 1e-300


def _sign(x) -> int:
    return int(x > 0) - int(x < 0)


# ---------------------------------------------------------------------------
# orientation predicates
# ---------------------------------------------------------------------------

def orient2d(a, b, c) -> int:
    """Exact sign of the signed parallelogram area of (a, b, c)."""
    detleft = (a[0] - c[0]) * (b[1] - c[1])
    detright = (a[1] - c[1]) * (b[0] - c[0])
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if abs(det) >= _CCW_BOUND * detsum and detsum >= _UFLOW:
        return _sign(det)
    return _orient2d_exact(a, b, c)


def _orient2d_exact(a, b, c) -> int:
    ax, ay = Fraction(a[0]), Fraction(a[1])
    bx, by = Fraction(b[0]), Fraction(b[1])
    cx, cy = Fraction(c[0]), Fraction(c[1])
    det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return _sign(det)


def orient3d(a, b, c, d) -> int:
    """Exact sign of det[a-d; b-d; c-d] (positive: positively oriented tet)."""
    adx, ady, adz = a[0] - d[0], a[1] - d[1], a[2] - d[2]
    bdx, bdy, bdz = b[0] - d[0], b[1] - d[1], b[2] - d[2]
    cdx, cdy, cdz = c[0] - d[0], c[1] - d[1], c[2] - d[2]

    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    cdxady = cdx * ady
    adxcdy = adx * cdy
    adxbdy = adx * bdy
    bdxady = bdx * ady

    det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * abs(adz)
        + (abs(cdxady) + abs(adxcdy)) * abs(bdz)
        + (abs(adxbdy) + abs(bdxady)) * abs(cdz)
    )
    if abs(det) >= _O3D_BOUND * permanent and permanent >= _UFLOW:
        return _sign(det)
    return _orient3d_exact(a, b, c, d)


def _orient3d_exact(a, b, c, d) -> int:
    av = [Fraction(a[i]) - Fraction(d[i]) for i in range(3)]
    bv = [Fraction(b[i]) - Fraction(d[i]) for i in range(3)]
    cv = [Fraction(c[i]) - Fraction(d[i]) for i in range(3)]
    det = (
        av[2] * (bv[0] * cv[1] - cv[0] * bv[1])
        + bv[2] * (cv[0] * av[1] - av[0] * cv[1])
        + cv[2] * (av[0] * bv[1] - bv[0] * av[1])
    )
    return _sign(det)


# ---------------------------------------------------------------------------
# in-circle / in-sphere
# ---------------------------------------------------------------------------

def incircle2d(a, b, c, d) -> int:
    """Exact in-circumcircle sign (positive: d strictly inside, for CCW abc)."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]

    bdxcdy = bdx * cdy
    cdxbdy = cdx * bdy
    alift = adx * adx + ady * ady
    cdxady = cdx * ady
    adxcdy = adx * cdy
    blift = bdx * bdx + bdy * bdy
    adxbdy = adx * bdy
    bdxady = bdx * ady
    clift = cdx * cdx + cdy * cdy

    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    if abs(det) >= _ICC_BOUND * permanent and permanent >= _UFLOW:
        return _sign(det)
    return _incircle2d_exact(a, b, c, d)


def _incircle2d_exact(a, b, c, d) -> int:
    dx, dy = Fraction(d[0]), Fraction(d[1])
    adx, ady = Fraction(a[0]) - dx, Fraction(a[1]) - dy
    bdx, bdy = Fraction(b[0]) - dx, Fraction(b[1]) - dy
    cdx, cdy = Fraction(c[0]) - dx, Fraction(c[1]) - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (
        alift * (bdx * cdy - cdx * bdy)
        + blift * (cdx * ady - adx * cdy)
        + clift * (adx * bdy - bdx * ady)
    )
    return _sign(det)


def insphere3d(a, b, c, d, e) -> int:
    """Exact in-circumsphere sign (positive: e inside, for positive abcd)."""
    aex, aey, aez = a[0] - e[0], a[1] - e[1], a[2] - e[2]
    bex, bey, bez = b[0] - e[0], b[1] - e[1], b[2] - e[2]
    cex, cey, cez = c[0] - e[0], c[1] - e[1], c[2] - e[2]
    dex, dey, dez = d[0] - e[0], d[1] - e[1], d[2] - e[2]

    aexbey = aex * bey
    bexaey = bex * aey
    ab = aexbey - bexaey
    bexcey = bex * cey
    cexbey = cex * bey
    bc = bexcey - cexbey
    cexdey = cex * dey
    dexcey = dex * cey
    cd = cexdey - dexcey
    dexaey = dex * aey
    aexdey = aex * dey
    da = dexaey - aexdey
    aexcey = aex * cey
    cexaey = cex * aey
    ac = aexcey - cexaey
    bexdey = bex * dey
    dexbey = dex * bey
    bd = bexdey - dexbey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezplus, bezplus, cezplus, dezplus = abs(aez), abs(bez), abs(cez), abs(dez)
    permanent = (
        ((abs(cexdey) + abs(dexcey)) * bezplus
         + (abs(dexbey) + abs(bexdey)) * cezplus
         + (abs(bexcey) + abs(cexbey)) * dezplus) * alift
        + ((abs(dexaey) + abs(aexdey)) * cezplus
           + (abs(aexcey) + abs(cexaey)) * dezplus
           + (abs(cexdey) + abs(dexcey)) * aezplus) * blift
        + ((abs(aexbey) + abs(bexaey)) * dezplus
           + (abs(bexdey) + abs(dexbey)) * aezplus
           + (abs(dexaey) + abs(aexdey)) * bezplus) * clift
        + ((abs(bexcey) + abs(cexbey)) * aezplus
           + (abs(cexaey) + abs(aexcey)) * bezplus
           + (abs(aexbey) + abs(bexaey)) * cezplus) * dlift
    )
    if abs(det) >= _ISP_BOUND * permanent and permanent >= _UFLOW:
        return _sign(det)
    return _insphere3d_exact(a, b, c, d, e)


def _insphere3d_exact(a, b, c, d, e) -> int:
    ev = [Fraction(e[i]) for i in range(3)]
    rows = []
    for p in (a, b, c, d):
        px = Fraction(p[0]) - ev[0]
        py = Fraction(p[1]) - ev[1]
        pz = Fraction(p[2]) - ev[2]
        rows.append((px, py, pz, px * px + py * py + pz * pz))

    def det3(r0, r1, r2):
        return (
            r0[0] * (r1[1] * r2[2] - r2[1] * r1[2])
            - r0[1] * (r1[0] * r2[2] - r2[0] * r1[2])
            + r0[2] * (r1[0] * r2[1] - r2[0] * r1[1])
        )

    a_, b_, c_, d_ = rows
    det = (
        -a_[3] * det3(b_[:3], c_[:3], d_[:3])
        + b_[3] * det3(a_[:3], c_[:3], d_[:3])
        - c_[3] * det3(a_[:3], b_[:3], d_[:3])
        + d_[3] * det3(a_[:3], b_[:3], c_[:3])
    )
    return _sign(det)


def diametral_sign(p, a, b) -> int:
    """Exact sign of (a-p).(b-p); negative means p strictly inside the circle
    with diameter ab.  Works for 2D and 3D points."""
    terms = []
    for i in range(len(a)):
        terms.append((a[i] - p[i]) * (b[i] - p[i]))
    dot = math.fsum(terms)
    magsum = sum(abs(t) for t in terms)
    if abs(dot) >= _DOT_BOUND * magsum and magsum >= _UFLOW:
        return _sign(dot)
    pv = [Fraction(x) for x in p]
    dot_exact = sum(
        (Fraction(a[i]) - pv[i]) * (Fraction(b[i]) - pv[i]) for i in range(len(a))
    )
    return _sign(dot_exact)


# ---------------------------------------------------------------------------
# vectorized filtered predicates (exact resolution of near-ties only)
# ---------------------------------------------------------------------------

def incircle2d_many(a, b, c, d) -> np.ndarray:
    """Exact incircle signs for stacked point quadruples, shape (m, 2) each."""
    ad = a - d
    bd = b - d
    cd = c - d
    bdxcdy = bd[:, 0] * cd[:, 1]
    cdxbdy = cd[:, 0] * bd[:, 1]
    cdxady = cd[:, 0] * ad[:, 1]
    adxcdy = ad[:, 0] * cd[:, 1]
    adxbdy = ad[:, 0] * bd[:, 1]
    bdxady = bd[:, 0] * ad[:, 1]
    alift = np.einsum("ij,ij->i", ad, ad)
    blift = np.einsum("ij,ij->i", bd, bd)
    clift = np.einsum("ij,ij->i", cd, cd)
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (np.abs(bdxcdy) + np.abs(cdxbdy)) * alift
        + (np.abs(cdxady) + np.abs(adxcdy)) * blift
        + (np.abs(adxbdy) + np.abs(bdxady)) * clift
    )
    out = np.sign(det).astype(np.int8)
    unsure = (np.abs(det) < _ICC_BOUND * permanent) | (permanent < _UFLOW)
    for i in np.flatnonzero(unsure):
        out[i] = _incircle2d_exact(a[i], b[i], c[i], d[i])
    return out


def insphere3d_many(a, b, c, d, e) -> np.ndarray:
    """Exact insphere signs for stacked point quintuples, shape (m, 3) each."""
    m = a.shape[0]
    out = np.empty(m, dtype=np.int8)
    pts = np.stack([a, b, c, d], axis=1) - e[:, None, :]
    lifts = np.einsum("mij,mij->mi", pts, pts)
    # 4x4 determinant by cofactor expansion along the lift column.
    det = np.zeros(m)
    signrow = (-1.0, 1.0, -1.0, 1.0)
    idx = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    for row in range(4):
        i, j, k = idx[row]
        r0, r1, r2 = pts[:, i, :], pts[:, j, :], pts[:, k, :]
        d3 = (
            r0[:, 0] * (r1[:, 1] * r2[:, 2] - r2[:, 1] * r1[:, 2])
            - r0[:, 1] * (r1[:, 0] * r2[:, 2] - r2[:, 0] * r1[:, 2])
            + r0[:, 2] * (r1[:, 0] * r2[:, 1] - r2[:, 0] * r1[:, 1])
        )
        det += signrow[row] * lifts[:, row] * d3
    # Conservative componentwise error bound (looser than the scalar one).
    mags = np.abs(pts)
    lmax = np.abs(lifts).max(axis=1)
    scale = (mags.max(axis=(1, 2)) ** 3) * lmax
    bound = 1536.0 * _EPS * scale
    out[:] = np.sign(det)
    unsure = (np.abs(det) < bound) | (scale < _UFLOW)
    for i in np.flatnonzero(unsure):
        out[i] = _insphere3d_exact(a[i], b[i], c[i], d[i], e[i])
    return out


# ---------------------------------------------------------------------------
# circumcenters
# ---------------------------------------------------------------------------

def circumcircle2d(a, b, c):
    """Circumcenter and radius of triangle (a, b, c).

    Raises
    ------
    DegenerateSimplex
        If the three points are exactly collinear.
    """
    if orient2d(a, b, c) == 0:
        raise DegenerateSimplex("collinear triangle has no circumcircle")
    bax, bay = b[0] - a[0], b[1] - a[1]
    cax, cay = c[0] - a[0], c[1] - a[1]
    b2 = bax * bax + bay * bay
    c2 = cax * cax + cay * cay
    d = 2.0 * (bax * cay - bay * cax)
    ux = (cay * b2 - bay * c2) / d
    uy = (bax * c2 - cax * b2) / d
    center = np.array([a[0] + ux, a[1] + uy])
    return center, math.hypot(ux, uy)


def circumsphere3d(a, b, c, d):
    """Circumcenter and radius of tetrahedron (a, b, c, d).

    Raises
    ------
    DegenerateSimplex
        If the four points are exactly coplanar.
    """
    if orient3d(a, b, c, d) == 0:
        raise DegenerateSimplex("coplanar tetrahedron has no circumsphere")
    a = np.asarray(a, dtype=float)
    rows = np.array([np.asarray(p, dtype=float) - a for p in (b, c, d)])
    rhs = 0.5 * np.einsum("ij,ij->i", rows, rows)
    offset = np.linalg.solve(rows, rhs)
    return a + offset, float(np.linalg.norm(offset))


def circumcenters2d(points, tris):
    """Vectorized circumcenters and squared radii for triangle rows."""
    a = points[tris[:, 0]]
    b = points[tris[:, 1]]
    c = points[tris[:, 2]]
    ba = b - a
    ca = c - a
    b2 = np.einsum("ij,ij->i", ba, ba)
    c2 = np.einsum("ij,ij->i", ca, ca)
    d = 2.0 * (ba[:, 0] * ca[:, 1] - ba[:, 1] * ca[:, 0])
    ux = (ca[:, 1] * b2 - ba[:, 1] * c2) / d
    uy = (ba[:, 0] * c2 - ca[:, 0] * b2) / d
    centers = a + np.stack([ux, uy], axis=1)
    return centers, ux * ux + uy * uy


def circumcenters3d(points, tets):
    """Vectorized circumcenters and squared radii for tetrahedron rows."""
    a = points[tets[:, 0]]
    rows = np.stack([points[tets[:, i]] - a for i in (1, 2, 3)], axis=1)
    rhs = 0.5 * np.einsum("mij,mij->mi", rows, rows)
    offset = np.linalg.solve(rows, rhs[:, :, None])[:, :, 0]
    centers = a + offset
    return centers, np.einsum("ij,ij->i", offset, offset)


# ---------------------------------------------------------------------------
# distances / containment
# ---------------------------------------------------------------------------

def point_segment_distance(p, a, b) -> float:
    """Euclidean distance from p to closed segment [a, b] (any dimension)."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.dot(p - a, ab)) / denom
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(a + t * ab - p))


def segment_crossing_2d(a, b, c, d):
    """Proper-crossing test for open segments ab and cd.

    Returns the crossing parameter pair ``(t, u)`` with the crossing point at
    ``a + t (b - a)``, or None when the segments do not properly cross
    (shared endpoints, touching, and collinear overlap all count as no).
    Signs are decided exactly; the parameters themselves are float.
    """
    o1 = orient2d(a, b, c)
    o2 = orient2d(a, b, d)
    o3 = orient2d(c, d, a)
    o4 = orient2d(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        rx, ry = b[0] - a[0], b[1] - a[1]
        sx, sy = d[0] - c[0], d[1] - c[1]
        denom = rx * sy - ry * sx
        t = ((c[0] - a[0]) * sy - (c[1] - a[1]) * sx) / denom
        u = ((c[0] - a[0]) * ry - (c[1] - a[1]) * rx) / denom
        return t, u
    return None


class PolygonTester:
    """Boundary-inclusive point-in-polygon queries for a simple polygon.

    The bulk query is a vectorized crossing-number ray cast; points that land
    within floating-point reach of an edge are resolved with the exact
    orientation predicate, so "on the boundary" reliably counts as inside.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 two-dimensional vertices")
        self.vertices = v
        self.ax = v[:, 0]
        self.ay = v[:, 1]
        self.bx = np.roll(v[:, 0], -1)
        self.by = np.roll(v[:, 1], -1)
        self.xmin, self.ymin = v.min(axis=0)
        self.xmax, self.ymax = v.max(axis=0)
        scale = max(self.xmax - self.xmin, self.ymax - self.ymin, 1.0)
        self._edge_tol = 1e-12 * scale

    def _on_boundary(self, x, y) -> bool:
        p = (x, y)
        tol = self._edge_tol
        for i in range(len(self.ax)):
            a = (self.ax[i], self.ay[i])
            b = (self.bx[i], self.by[i])
            if (min(a[0], b[0]) - tol <= x <= max(a[0], b[0]) + tol
                    and min(a[1], b[1]) - tol <= y <= max(a[1], b[1]) + tol):
                if orient2d(a, b, p) == 0:
                    return True
        return False

    def contains(self, x: float, y: float) -> bool:
        if not (self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax):
            return False
        # Half-open crossing rule.  Edges whose ray intercept lands within
        # float reach of x are re-decided with the exact orientation sign, so
        # the answer matches exact rational evaluation for every input.
        cond = (self.ay > y) != (self.by > y)
        ia = np.flatnonzero(cond)
        if len(ia) == 0:
            return self._on_boundary(x, y)
        t = (y - self.ay[ia]) / (self.by[ia] - self.ay[ia])
        xs = self.ax[ia] + t * (self.bx[ia] - self.ax[ia])
        dx = xs - x
        count = int(np.count_nonzero(dx > self._edge_tol))
        for i in ia[np.abs(dx) <= self._edge_tol]:
            a = (self.ax[i], self.ay[i])
            b = (self.bx[i], self.by[i])
            s = orient2d(a, b, (x, y))
            if s == 0:
                # On the edge's line within its y-range: on the segment.
                return True
            # The ray to +x crosses an upward edge iff the point lies
            # strictly left of it (and mirrored for downward edges).
            if (s > 0) == (b[1] > a[1]):
                count += 1
        if count % 2 == 1:
            return True
        return self._on_boundary(x, y)

    def _edge_dist2(self, pts) -> np.ndarray:
        """Squared distance to the nearest boundary edge, vectorized."""
        a = np.stack([self.ax, self.ay], axis=1)
        b = np.stack([self.bx, self.by], axis=1)
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        ap = pts[:, None, :] - a[None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.einsum("nej,ej->ne", ap, ab) / denom[None, :]
        t = np.clip(np.nan_to_num(t), 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        return np.sum((pts[:, None, :] - closest) ** 2, axis=2).min(axis=1)

    def contains_many(self, points) -> np.ndarray:
        """Vectorized containment for an (n, 2) array of points.

        Agrees with :meth:`contains` for every point: the float crossing
        count is only trusted away from the boundary, and every point within
        float reach of an edge goes through the exact scalar path.
        """
        pts = np.asarray(points, dtype=float)
        x = pts[:, 0]
        y = pts[:, 1]
        inb = (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        cond = (self.ay[None, :] > y[:, None]) != (self.by[None, :] > y[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (y[:, None] - self.ay[None, :]) / (self.by[None, :] - self.ay[None, :])
            xs = self.ax[None, :] + t * (self.bx[None, :] - self.ax[None, :])
        dx = np.nan_to_num(xs - x[:, None], nan=-np.inf)
        crossing = cond & (dx > self._edge_tol)
        inside = (np.count_nonzero(crossing, axis=1) % 2) == 1
        inside &= inb
        near_any = (cond & (np.abs(dx) <= self._edge_tol)).any(axis=1)
        # Points the parity count cannot certify: near a crossing intercept,
        # or counted outside (they may sit on a horizontal edge).
        check = np.flatnonzero(inb & (near_any | ~inside))
        if len(check):
            d2 = self._edge_dist2(pts[check])
            tol2 = (2.0 * self._edge_tol) ** 2
            for i in check[(d2 <= tol2) | near_any[check]]:
                inside[i] = self.contains(x[i], y[i])
        return inside


def point_in_polygon(p, vertices) -> bool:
    """One-shot boundary-inclusive containment test (see PolygonTester)."""
    return PolygonTester(vertices).contains(float(p[0]), float(p[1]))


def polygon_signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---------------------------------------------------------------------------
# plane frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneFrame:
    """Orthonormal in-plane coordinate frame for a planar polygon in 3D."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray

    def to_local(self, points):
        p = np.asarray(points, dtype=float)
        d = p - self.origin
        if p.ndim == 1:
            return np.array([float(np.dot(d, self.u)), float(np.dot(d, self.v))])
        return np.stack([d @ self.u, d @ self.v], axis=1)

    def to_world(self, points2d):
        p = np.asarray(points2d, dtype=float)
        if p.ndim == 1:
            return self.origin + p[0] * self.u + p[1] * self.v
        return self.origin + np.outer(p[:, 0], self.u) + np.outer(p[:, 1], self.v)


def build_local_frame(vertices, tol: float | None = None) -> PlaneFrame:
    """Deterministic plane frame for a 3D polygon.

    The u axis is aligned with the polygon's longest boundary edge (first one
    in traversal order on ties) and the origin is that edge's start vertex.
    The normal comes from Newell's formula, so v = n x u completes a
    right-handed frame in which the polygon winds counter-clockwise.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Polygon vertices in traversal order, n >= 3.
    tol : float, optional
        Max allowed out-of-plane residual; defaults to 1e-9 times the
        bounding-box diagonal.

    Raises
    ------
    CollinearInput
        All vertices on one line (no plane).
    NonPlanarInput
        Out-of-plane residual exceeds ``tol``.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
        raise ValueError("need at least 3 vertices of dimension 3")
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    if tol is None:
        tol = 1e-9 * max(diag, 1.0)

    nxt = np.roll(v, -1, axis=0)
    edges = nxt - v
    lengths = np.linalg.norm(edges, axis=1)
    # Newell normal: robust for (near-)planar polygons of any convexity.
    n = np.array([
        float(np.sum((v[:, 1] - nxt[:, 1]) * (v[:, 2] + nxt[:, 2]))),
        float(np.sum((v[:, 2] - nxt[:, 2]) * (v[:, 0] + nxt[:, 0]))),
        float(np.sum((v[:, 0] - nxt[:, 0]) * (v[:, 1] + nxt[:, 1]))),
    ])
    nlen = float(np.linalg.norm(n))
    if nlen <= tol * max(diag, 1.0):
        raise CollinearInput("polygon vertices are collinear")
    n /= nlen

    k = int(np.argmax(lengths))  # argmax takes the first maximum: tie rule
    origin = v[k].copy()
    u = edges[k] / lengths[k]
    u = u - np.dot(u, n) * n
    u /= np.linalg.norm(u)
    frame = PlaneFrame(origin=origin, u=u, v=np.cross(n, u), normal=n)

    residual = np.abs((v - origin) @ n)
    if float(residual.max()) > tol:
        raise NonPlanarInput(
            f"polygon deviates from plane by {residual.max():.3e} (tol {tol:.3e})"
        )
    return frame


def point_polygon_distance_3d(points, frame: PlaneFrame, local_polygon) -> np.ndarray:
    """Distances from 3D points to a planar polygon (as a closed 2D region).

    ``local_polygon`` holds the polygon's vertices in ``frame`` coordinates.
    For projections falling inside the polygon the distance is the plane
    offset; otherwise it is the true distance to the nearest boundary edge.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    tester = PolygonTester(local_polygon)
    d = p - frame.origin
    lx = d @ frame.u
    ly = d @ frame.v
    h = d @ frame.normal
    out = np.abs(h)
    inside = tester.contains_many(np.stack([lx, ly], axis=1))
    if not inside.all():
        misses = np.flatnonzero(~inside)
        poly = np.asarray(local_polygon, dtype=float)
        a2 = poly
        b2 = np.roll(poly, -1, axis=0)
        q = np.stack([lx[misses], ly[misses]], axis=1)
        ab = b2 - a2
        denom = np.einsum("ij,ij->i", ab, ab)
        ap = q[:, None, :] - a2[None, :, :]
        t = np.clip(np.einsum("mej,ej->me", ap, ab) / denom[None, :], 0.0, 1.0)
        closest = a2[None, :, :] + t[:, :, None] * ab[None, :, :]
        dist2_in_plane = np.sum((q[:, None, :] - closest) ** 2, axis=2).min(axis=1)
        out[misses] = np.sqrt(dist2_in_plane + h[misses] ** 2)
    return out if np.asarray(points).ndim == 2 else out[:1]


# ---------------------------------------------------------------------------
# simplex quality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriQuality:
    angles: np.ndarray  # degrees, ascending
    aspect: float       # 2 r_in / r_circ, 1.0 for equilateral


@dataclass(frozen=True)
class TetQuality:
    dihedrals: np.ndarray  # degrees, 6 values, ascending
    aspect: float          # 3 r_in / r_circ, 1.0 for regular


def tri_quality(a, b, c) -> TriQuality:
    pts = np.array([a, b, c], dtype=float)
    tris = np.array([[0, 1, 2]])
    ang = triangle_angles(pts, tris)[0]
    asp = float(triangle_aspect(pts, tris)[0])
    return TriQuality(angles=np.sort(ang), aspect=asp)


def tet_quality(a, b, c, d) -> TetQuality:
    pts = np.array([a, b, c, d], dtype=float)
    tets = np.array([[0, 1, 2, 3]])
    dih = tet_dihedral_angles(pts, tets)[0]
    asp = float(tet_aspect(pts, tets)[0])
    return TetQuality(dihedrals=np.sort(dih), aspect=asp)


def triangle_angles(points, tris) -> np.ndarray:
    """Interior angles in degrees, one row of three per triangle."""
    p = points[tris]  # (m, 3, 2 or 3)
    out = np.empty((len(tris), 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        cosang = np.einsum("ij,ij->i", u, v) / (nu * nv)
        out[:, i] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


def triangle_aspect(points, tris) -> np.ndarray:
    """Normalized aspect ratio 2 r_in / r_circ (equilateral -> 1)."""
    p = points[tris]
    ea = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    eb = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    ec = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    s = 0.5 * (ea + eb + ec)
    area2 = s * (s - ea) * (s - eb) * (s - ec)
    area = np.sqrt(np.maximum(area2, 0.0))
    # 2 * (area/s) / (abc / (4 area)) = 8 area^2 / (s a b c)
    with np.errstate(divide="ignore", invalid="ignore"):
        asp = 8.0 * area * area / (s * ea * eb * ec)
    return np.nan_to_num(asp, nan=0.0)


_TET_EDGES = ((0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2),
              (1, 2, 0, 3), (1, 3, 0, 2), (2, 3, 0, 1))


def tet_dihedral_angles(points, tets) -> np.ndarray:
    """Dihedral angles in degrees along each of the 6 edges of every tet.

    For edge (i, j) with opposite vertices (k, l), the angle between faces
    ijk and ijl is measured through the interior of the tetrahedron; a
    regular tetrahedron gives arccos(1/3) = 70.5288 on all six edges.
    """
    p = points[tets]  # (m, 4, 3)
    out = np.empty((len(tets), 6))
    for e, (i, j, k, l) in enumerate(_TET_EDGES):
        t = p[:, j] - p[:, i]
        n1 = np.cross(t, p[:, k] - p[:, i])
        n2 = np.cross(t, p[:, l] - p[:, i])
        dot = np.einsum("ij,ij->i", n1, n2)
        norm = np.linalg.norm(n1, axis=1) * np.linalg.norm(n2, axis=1)
        with np.errstate(invalid="ignore"):
            cosang = np.clip(dot / norm, -1.0, 1.0)
        # The angle between t x (face vector) pairs equals the angle between
        # the in-face components perpendicular to the shared edge, which is
        # the interior dihedral itself.
        out[:, e] = np.degrees(np.arccos(cosang))
    return out


def tet_volumes(points, tets) -> np.ndarray:
    p = points[tets]
    r = p[:, 1:] - p[:, 0:1]
    return np.einsum("ij,ij->i", r[:, 0], np.cross(r[:, 1], r[:, 2])) / 6.0


def tet_aspect(points, tets) -> np.ndarray:
    """Normalized aspect ratio 3 r_in / r_circ (regular tet -> 1)."""
    p = points[tets]
    vol = np.abs(tet_volumes(points, tets))
    faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    area_sum = np.zeros(len(tets))
    for (i, j, k) in faces:
        area_sum += 0.5 * np.linalg.norm(
            np.cross(p[:, j] - p[:, i], p[:, k] - p[:, i]), axis=1
        )
    _, r2 = circumcenters3d(points, np.asarray(tets))
    with np.errstate(divide="ignore", invalid="ignore"):
        r_in = 3.0 * vol / area_sum
        asp = 3.0 * r_in / np.sqrt(r2)
    return np.nan_to_num(asp, nan=0.0)


def max_edge_lengths(points, cells) -> np.ndarray:
    """Longest edge of each simplex row (triangles or tetrahedra)."""
    p = points[cells]
    nvert = cells.shape[1]
    best = np.zeros(len(cells))
    for i in range(nvert):
        for j in range(i + 1, nvert):
            np.maximum(best, np.linalg.norm(p[:, i] - p[:, j], axis=1), out=best)
    return best
