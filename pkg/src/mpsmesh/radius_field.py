"""Piecewise-linear inhibition-radius fields.

The node spacing a sample must respect is governed by a sizing field
``rho``: small (H/2) in a flat band around the features that need
resolution, growing linearly with slope A outside it, and capped.  On a
fracture the driving distance is to the nearest intersection segment; in
the volume it is to the nearest node of the merged fracture sample, whose
own 2D radius seeds the growth.  Both fields are Lipschitz with constant A,
which is what the downstream angle guarantees lean on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyField, InvalidParams


@dataclass(frozen=True)
class RadiusParams:
    """Sizing-field parameters (H, A, F, R, rho_max).

    H is the minimal node spacing scale (the radius floor is H/2), A the
    dimensionless growth slope, F the flat-band width factor (band FH in 2D,
    F*rho2 in 3D), R the cap factor giving the 2D ceiling (A*R + 1/2)*H, and
    rho_max the 3D ceiling (only needed for volume sampling).
    """

    h: float
    a: float = 0.1
    f: float = 1.0
    r: float = 40.0
    rho_max: float | None = None

    def __post_init__(self):
        if not (self.h > 0):
            raise InvalidParams(f"h must be positive, got {self.h}")
        if not (0 < self.a < 1):
            raise InvalidParams(f"a must be in (0, 1), got {self.a}")
        if self.f < 0:
            raise InvalidParams(f"f must be non-negative, got {self.f}")
        if self.r < 0:
            raise InvalidParams(f"r must be non-negative, got {self.r}")
        if self.rho_max is not None and not (self.rho_max >= self.h / 2):
            raise InvalidParams(
                f"rho_max must be at least h/2 = {self.h / 2}, got {self.rho_max}"
            )

    @property
    def rho_min(self) -> float:
        return 0.5 * self.h

    @property
    def cap(self) -> float:
        """The 2D radius ceiling (A R + 1/2) H."""
        return (self.a * self.r + 0.5) * self.h

    def require_rho_max(self) -> float:
        if self.rho_max is None:
            raise InvalidParams("rho_max is required for volume sampling")
        return self.rho_max


def rho2d(d, params: RadiusParams):
    """Radius at feature-distance ``d``: flat, linear ramp, then capped.

    Accepts scalars or arrays; +inf distances land on the cap.
    """
    d = np.asarray(d, dtype=float)
    out = np.minimum(
        params.cap,
        params.rho_min + params.a * np.maximum(0.0, d - params.f * params.h),
    )
    return float(out) if out.ndim == 0 else out


def pair_radius(rho_x, rho_y):
    """Mutual inhibition radius of two nodes: min of their field radii."""
    return np.minimum(rho_x, rho_y)


class RadiusField2D:
    """Sizing field on one fracture, driven by its intersection traces.

    ``segments`` is an (m, 2, 2) array of intersection segments in the
    fracture's local frame; with no segments the distance is +inf and the
    field is the cap everywhere.
    """

    def __init__(self, params: RadiusParams, segments=None):
        self.params = params
        if segments is None:
            segments = np.zeros((0, 2, 2))
        seg = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
        self.segments = seg
        self._a = seg[:, 0, :]
        ab = seg[:, 1, :] - seg[:, 0, :]
        self._ab = ab
        self._len2 = np.einsum("ij,ij->i", ab, ab)
        # Guard degenerate (point) segments: treat as points via t=0.
        self._inv_len2 = np.where(self._len2 > 0, 1.0 / np.where(self._len2 > 0, self._len2, 1.0), 0.0)

    @property
    def has_features(self) -> bool:
        return len(self.segments) > 0

    def distance(self, pts) -> np.ndarray:
        """Exact distance from each point to the nearest intersection segment."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.has_features:
            return np.full(len(p), np.inf)
        ap = p[:, None, :] - self._a[None, :, :]
        t = np.einsum("nmj,mj->nm", ap, self._ab) * self._inv_len2[None, :]
        t = np.clip(t, 0.0, 1.0)
        diff = ap - t[:, :, None] * self._ab[None, :, :]
        d2 = np.einsum("nmj,nmj->nm", diff, diff)
        return np.sqrt(d2.min(axis=1))

    def distance_at(self, x: float, y: float) -> float:
        """Scalar fast path for the per-candidate accept loop."""
        if not self.has_features:
            return np.inf
        best = np.inf
        for i in range(len(self._a)):
            apx = x - self._a[i, 0]
            apy = y - self._a[i, 1]
            t = (apx * self._ab[i, 0] + apy * self._ab[i, 1]) * self._inv_len2[i]
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            dx = apx - t * self._ab[i, 0]
            dy = apy - t * self._ab[i, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        return best ** 0.5

    def rho(self, pts) -> np.ndarray:
        return rho2d(self.distance(pts), self.params)

    def rho_at(self, x: float, y: float) -> float:
        p = self.params
        d = self.distance_at(x, y)
        v = p.rho_min + p.a * (d - p.f * p.h)
        cap = p.cap
        if v > cap:
            return cap
        floor = p.rho_min
        return v if v > floor else floor


class RadiusField3D:
    """Volume sizing field driven by the merged fracture-surface sample.

    Each query point grows its radius away from the nearest fracture node
    ``x_p``, starting from that node's own 2D radius: flat at rho2(x_p)
    within F*rho2(x_p), then slope A, clamped at rho_max.
    """

    def __init__(self, params: RadiusParams, dfn_points, dfn_rho2):
        pts = np.asarray(dfn_points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise EmptyField("3D field needs at least one fracture sample point")
        self.params = params
        self.rho_max = params.require_rho_max()
        self.points = pts
        self.rho2 = np.asarray(dfn_rho2, dtype=float)
        if len(self.rho2) != len(pts):
            raise InvalidParams("dfn_points and dfn_rho2 lengths differ")
        self.tree = cKDTree(pts)

    def rho(self, pts, workers: int = 1) -> np.ndarray:
        return self.rho_and_dist(pts, workers=workers)[0]

    def rho_and_dist(self, pts, workers: int = 1):
        """Radii plus the nearest fracture-node distances used to get them."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        d, idx = self.tree.query(p, workers=workers)
        r2 = self.rho2[idx]
        a = self.params.a
        f = self.params.f
        rho = np.minimum(self.rho_max, r2 + a * np.maximum(0.0, d - f * r2))
        return rho, d

    def rho_at(self, p) -> float:
        return float(self.rho(np.asarray(p, dtype=float)[None, :])[0])


class UniformField3D:
    """Constant-radius stand-in used when the network has no fractures."""

    def __init__(self, params: RadiusParams):
        self.params = params
        self.rho_max = params.require_rho_max()

    def rho(self, pts, workers: int = 1) -> np.ndarray:
        return np.full(len(np.atleast_2d(pts)), self.rho_max)

    def rho_and_dist(self, pts, workers: int = 1):
        return self.rho(pts), None

    def rho_at(self, p) -> float:
        return self.rho_max
