"""Uniform acceleration grid with occupied-cell bookkeeping.

Cells are sized so their diameter is at most H/2; since accepted nodes are
always at least H/2 apart, a cell can hold at most one node.  The grid
answers three questions fast: which node ids might conflict with a
candidate (a superset neighborhood N+), which cells are fully covered by an
accepted node so candidates there die without any distance checks (a subset
neighborhood N-, the occupied set), and which domain cells are still
uncovered (the resampling targets).

The live arrays are padded on every side by a ring of permanently occupied
cells.  Points outside the bounding box clip into that ring, so the cheap
blocked-cell test also disposes of out-of-bounds candidates, and
neighborhood stamps never need boundary clamping.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DuplicatePoints, InvalidParams


def _offsets_within(dim: int, reach: int, accept) -> np.ndarray:
    """Integer offset tuples d with |d_i| <= reach passing ``accept(d)``."""
    rng = np.arange(-reach, reach + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    d = np.stack([g.ravel() for g in grids], axis=1)
    return d[accept(np.abs(d))]


class AccelGrid:
    """Dense uniform cell grid over an axis-aligned box.

    Parameters
    ----------
    bbox_min, bbox_max : array_like
        Domain bounding box (the fracture polygon's box in 2D).
    h : float
        Spacing scale; the cell side is h/(2 sqrt(dim)).
    dim : int
        2 or 3.
    rho_ceiling : float
        Largest radius the sizing field can return; fixes the pad width and
        bounds the cached neighborhood stencils.
    lipschitz_a : float
        The field's Lipschitz constant A, used by the covered-cell stencil
        radius rho/(1+A).
    """

    def __init__(self, bbox_min, bbox_max, h, dim, rho_ceiling, lipschitz_a):
        if dim not in (2, 3):
            raise InvalidParams(f"dim must be 2 or 3, got {dim}")
        if not (h > 0) or not (rho_ceiling > 0):
            raise InvalidParams("h and rho_ceiling must be positive")
        lo = np.asarray(bbox_min, dtype=float)
        hi = np.asarray(bbox_max, dtype=float)
        if lo.shape != (dim,) or hi.shape != (dim,) or not np.all(hi >= lo):
            raise InvalidParams("empty or mismatched bounding box")
        self.dim = dim
        self.h = h
        self.a = float(lipschitz_a)
        self.side = h / (2.0 * math.sqrt(dim))
        self.origin = lo
        ext = hi - lo
        self.dims = np.maximum(1, np.ceil(ext / self.side - 1e-12).astype(int))
        self.pad = int(math.ceil(rho_ceiling / self.side)) + 2
        self.shape = self.dims + 2 * self.pad
        self.strides = np.ones(dim, dtype=np.int64)
        for i in range(dim - 2, -1, -1):
            self.strides[i] = self.strides[i + 1] * self.shape[i + 1]
        self.ncells = int(self.shape.prod())

        self.occupied = np.zeros(self.ncells, dtype=bool)
        # Second bookkeeping layer: cells whose *entire* extent is within the
        # inhibition diameter of the home cell (position-independent stencil).
        # Coarser than `occupied`, it drives resampling: a dart lands in every
        # domain cell this layer has not swallowed, which is what lets one
        # resampling round recover the low-k density deficit.
        self.occupied_q = np.zeros(self.ncells, dtype=bool)
        self.node_id = np.full(self.ncells, -1, dtype=np.int64)
        self._mask_pad_ring()
        self.domain_mask = np.zeros(self.ncells, dtype=bool)
        self._interior_flat = None  # lazy cache
        self._plus_cache: dict[int, np.ndarray] = {}
        self._minus_cache: dict[int, np.ndarray] = {}

    # -- construction helpers ------------------------------------------------

    def _mask_pad_ring(self):
        grid = self.occupied.reshape(self.shape)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = slice(0, self.pad)
            grid[tuple(sl)] = True
            sl[ax] = slice(self.shape[ax] - self.pad, self.shape[ax])
            grid[tuple(sl)] = True

    def interior_flat(self) -> np.ndarray:
        """Flat indices of all non-pad cells."""
        if self._interior_flat is None:
            axes = [np.arange(self.pad, self.pad + self.dims[i]) for i in range(self.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            flat = np.zeros(mesh[0].shape, dtype=np.int64)
            for i in range(self.dim):
                flat += mesh[i] * self.strides[i]
            self._interior_flat = flat.ravel()
        return self._interior_flat

    def set_domain_all(self):
        """Mark every interior cell as a domain cell (3D box domains)."""
        self.domain_mask[self.interior_flat()] = True

    def set_domain_polygon(self, tester):
        """Mark interior cells that may intersect the polygon as domain cells.

        Conservative: a cell counts when its center lies inside the polygon
        or within the cell half-diagonal of its boundary.  Candidates drawn
        in such cells are still point-in-polygon filtered, so a superset
        only costs a few wasted draws, never correctness.
        """
        flat = self.interior_flat()
        centers = self.cell_centers(flat)
        inside = tester.contains_many(centers)
        near = ~inside
        if near.any():
            d2 = tester._edge_dist2(centers[near])
            halfdiag = 0.5 * self.side * math.sqrt(self.dim)
            inside[np.flatnonzero(near)[d2 <= halfdiag * halfdiag]] = True
        self.domain_mask[flat[inside]] = True

    # -- indexing ------------------------------------------------------------

    def cell_of(self, point) -> int:
        """Flat cell index of a point; out-of-box points land in the pad ring."""
        flat = 0
        for i in range(self.dim):
            c = int((point[i] - self.origin[i]) / self.side) + self.pad
            if c < 0:
                c = 0
            elif c >= self.shape[i]:
                c = self.shape[i] - 1
            flat += c * self.strides[i]
        return flat

    def cells_of(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        c = ((p - self.origin) / self.side).astype(np.int64) + self.pad
        np.clip(c, 0, self.shape - 1, out=c)
        return c @ self.strides

    def cell_centers(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        out = np.empty((len(flat), self.dim))
        rem = flat.copy()
        for i in range(self.dim):
            c = rem // self.strides[i]
            rem = rem - c * self.strides[i]
            out[:, i] = self.origin[i] + (c - self.pad + 0.5) * self.side
        return out

    # -- neighborhood stencils ----------------------------------------------

    def plus_offsets(self, rho: float) -> np.ndarray:
        """Flat-index offsets of every cell within dist rho of the home cell.

        Quantized up to whole cells, so the stencil is a superset for any
        radius up to its key; no conflicting node can sit outside it.
        """
        key = int(math.ceil(rho / self.side))
        cached = self._plus_cache.get(key)
        if cached is None:
            k2 = key * key
            # min gap between cells offset by d is (|d_i|-1)+ sides per axis
            cached = _offsets_within(
                self.dim, key + 1,
                lambda ad: (np.maximum(ad - 1, 0) ** 2).sum(axis=1) <= k2,
            ) @ self.strides
            self._plus_cache[key] = cached
        return cached

    def minus_offsets(self, rho: float) -> np.ndarray:
        """Offsets of cells g with diam(g ∪ home) ≤ rho/(1+A).

        Position-independent and quantized to whole cells: any point of a
        returned cell is within rho/(1+A) of any point of the home cell, so
        (by the Lipschitz bound) within the mutual inhibition radius of a
        node anywhere in the home cell.  The home cell itself qualifies only
        when its own diameter fits; callers mark it regardless because it
        holds the node.  Much coarser than ``covered_cells``: for
        rho < 2.33 rho_min it returns nothing beyond (at most) the home
        cell, which is exactly why the resampling layer uses it.
        """
        r = rho / ((1.0 + self.a) * self.side)
        key2 = int(r * r)
        cached = self._minus_cache.get(key2)
        if cached is None:
            reach = int(r) + 1
            cached = _offsets_within(
                self.dim, reach,
                lambda ad: ((ad + 1) ** 2).sum(axis=1) <= key2,
            ) @ self.strides
            self._minus_cache[key2] = cached
        return cached

    def covered_cells(self, point, rho: float) -> np.ndarray:
        """Absolute flat indices of cells the node at ``point`` fully covers.

        A cell is covered when its farthest corner from the node is inside
        the open ball of radius rho/(1+A): every point y there has
        |x-y| < rho(x), and by the field's Lipschitz property also
        |x-y| < rho(y), so any candidate in the cell is a certain conflict.
        Computed from the actual node position (per-axis separable corner
        distances), which blocks far more cells than a position-independent
        stencil when rho is only a few cell sides.
        """
        r = rho / (1.0 + self.a)
        r2 = r * r
        reach = int(r / self.side) + 1
        axis_d2 = []
        axis_flat = []
        for ax in range(self.dim):
            x = float(point[ax])
            c = int((x - self.origin[ax]) / self.side) + self.pad
            if c < 0:
                c = 0
            elif c >= self.shape[ax]:
                c = self.shape[ax] - 1
            d = np.arange(max(0, c - reach), min(self.shape[ax], c + reach + 1))
            lo = self.origin[ax] + (d - self.pad) * self.side
            far = np.maximum(np.abs(x - lo), np.abs(x - (lo + self.side)))
            axis_d2.append(far * far)
            axis_flat.append(d * self.strides[ax])
        if self.dim == 2:
            f2 = axis_d2[0][:, None] + axis_d2[1][None, :]
            flat = axis_flat[0][:, None] + axis_flat[1][None, :]
        else:
            f2 = (axis_d2[0][:, None, None] + axis_d2[1][None, :, None]
                  + axis_d2[2][None, None, :])
            flat = (axis_flat[0][:, None, None] + axis_flat[1][None, :, None]
                    + axis_flat[2][None, None, :])
        return flat[f2 < r2]

    # -- accept-path queries -------------------------------------------------

    def is_blocked(self, flat: int) -> bool:
        return bool(self.occupied[flat])

    def candidate_node_ids(self, flat: int, rho: float) -> np.ndarray:
        """Ids of accepted nodes near enough to possibly conflict."""
        ids = self.node_id[flat + self.plus_offsets(rho)]
        return ids[ids >= 0]

    def mark(self, node_id: int, point, rho: float) -> tuple[int, np.ndarray]:
        """Record an accepted node: home cell + fully-covered neighborhood.

        Returns the home cell and the covered-cell indices so callers can
        maintain derived occupancy structures.
        """
        home = self.cell_of(point)
        if self.node_id[home] >= 0:
            raise DuplicatePoints(
                f"two nodes in one grid cell (ids {self.node_id[home]} and "
                f"{node_id}); input features are closer than h/2"
            )
        self.node_id[home] = node_id
        self.occupied[home] = True
        cov = self.covered_cells(point, rho)
        if len(cov):
            self.occupied[cov] = True
        self.occupied_q[home] = True
        mq = self.minus_offsets(rho)
        if len(mq):
            self.occupied_q[home + mq] = True
        return home, cov

    def unmarked_domain_cells(self) -> np.ndarray:
        """Domain cells the coarse bookkeeping layer has not swallowed.

        These are the resampling targets: one candidate dart per returned
        cell.  Deliberately coarser than the fast-reject layer so darts also
        probe the fringe where packing can still tighten.
        """
        return np.flatnonzero(self.domain_mask & ~self.occupied_q)

    def uncovered_domain_cells(self) -> np.ndarray:
        """Domain cells not fully covered by any accepted node's ball.

        Every point of a cell absent from this set is a certain conflict, so
        the set supports the maximality probe: any remaining empty-circle
        center lies in one of these cells.
        """
        return np.flatnonzero(self.domain_mask & ~self.occupied)
