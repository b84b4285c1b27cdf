"""Linearized, 2:1-balanced octree over the voxel lattice.

Leaves are axis-aligned cubes stored as flat arrays (anchor, level) kept
strictly sorted by the Morton code of the anchor, so point location is a
binary search and a split is a splice (the 8 children occupy exactly the
parent's Morton range). Anchors are integer triples in finest-lattice
(voxel) units; the root spans ``2**max_level`` voxels per axis.

Refinement is single-level: the leaf enclosing a target voxel splits into
its 8 children, 2:1 balance (across faces, edges and corners) is
re-established, and the process repeats until that leaf sits at the voxel
level. Leaves are never coarsened. Leaves carrying printed voxels are
"active"; everything else is inactive padding around the growing part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = ["MeshError", "Octant", "OctreeMesh", "MeshSnapshot", "morton_encode"]

# Child anchor offsets, x fastest: local child index equals the Morton rank.
CHILD_OFFSETS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [0, 1, 0],
        [1, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ],
    dtype=np.int64,
)

# All 26 face/edge/corner direction vectors.
_DIRS26 = np.array(
    [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
    dtype=np.int64,
)

_LEVEL_BITS = 6  # level field packed into the low bits of the composite key


class MeshError(ValueError):
    """Octree structural or consistency failure."""


def morton_encode(coords, max_level: int) -> np.ndarray:
    """Interleave (x, y, z) lattice coordinates, x in the lowest bit."""
    c = np.asarray(coords, dtype=np.uint64)
    x, y, z = c[..., 0], c[..., 1], c[..., 2]
    key = np.zeros(x.shape, dtype=np.uint64)
    for b in range(max_level):
        bit = np.uint64(b)
        key |= ((x >> bit) & np.uint64(1)) << np.uint64(3 * b)
        key |= ((y >> bit) & np.uint64(1)) << np.uint64(3 * b + 1)
        key |= ((z >> bit) & np.uint64(1)) << np.uint64(3 * b + 2)
    return key


@dataclass(frozen=True)
class Octant:
    """Read-only view of one leaf."""

    anchor: tuple[int, int, int]
    level: int
    size: int
    morton_key: int
    active: bool

    def voxel_range(self) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        """Inclusive (id_min, id_max) range of finest-lattice cells covered."""
        a = self.anchor
        s = self.size
        return a, (a[0] + s - 1, a[1] + s - 1, a[2] + s - 1)


class MeshSnapshot(NamedTuple):
    """Immutable view of mesh geometry for solution transfer."""

    max_level: int
    anchors: np.ndarray
    levels: np.ndarray
    keys: np.ndarray
    node_coords: np.ndarray
    leaf_nodes: np.ndarray


class OctreeMesh:
    """Mutable linearized octree; single writer, no coarsening."""

    def __init__(self, max_level: int, base_level: int = 2):
        if max_level < 0 or max_level > 19:
            raise MeshError(f"max_level must be in [0, 19], got {max_level}")
        if not (0 <= base_level <= max_level):
            raise MeshError(
                f"base_level must be in [0, max_level={max_level}], got {base_level}"
            )
        self.max_level = int(max_level)
        self.base_level = int(base_level)
        self.root_extent = 1 << self.max_level
        self.version = 0
        self.printed: set[tuple[int, int, int]] = set()

        n_side = 1 << base_level
        size = self.root_extent >> base_level
        ax = np.arange(n_side, dtype=np.int64) * size
        gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
        anchors = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        keys = morton_encode(anchors, self.max_level)
        order = np.argsort(keys, kind="stable")
        self.anchors = anchors[order]
        self.levels = np.full(len(anchors), base_level, dtype=np.int64)
        self.keys = keys[order]
        self.active = np.zeros(len(anchors), dtype=bool)
        self._node_cache: tuple[int, np.ndarray, np.ndarray] | None = None

    @classmethod
    def from_grid(cls, grid, base_level: int = 2, max_level: int | None = None) -> "OctreeMesh":
        """Tight power-of-two bounding cube of the voxel grid."""
        need = grid.octree_level
        if max_level is None:
            max_level = need
        elif max_level < need:
            raise MeshError(
                f"max_level {max_level} cannot hold grid {grid.dims} (needs {need})"
            )
        return cls(max_level=max_level, base_level=base_level)

    # --- basic queries ------------------------------------------------------

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def leaf_count(self) -> int:
        return len(self.levels)

    def leaf_sizes(self) -> np.ndarray:
        return (self.root_extent >> self.levels).astype(np.int64)

    def octant(self, idx: int) -> Octant:
        lvl = int(self.levels[idx])
        return Octant(
            anchor=tuple(int(c) for c in self.anchors[idx]),
            level=lvl,
            size=self.root_extent >> lvl,
            morton_key=(int(self.keys[idx]) << _LEVEL_BITS) | lvl,
            active=bool(self.active[idx]),
        )

    def find_leaf(self, cell) -> int:
        """Index of the leaf containing a finest-lattice cell."""
        c = np.asarray(cell, dtype=np.int64)
        if np.any(c < 0) or np.any(c >= self.root_extent):
            raise MeshError(f"cell {tuple(int(x) for x in c)} outside root cube")
        key = morton_encode(c, self.max_level)
        return int(np.searchsorted(self.keys, key, side="right")) - 1

    def _find_leaves(self, cells: np.ndarray) -> np.ndarray:
        keys = morton_encode(cells, self.max_level)
        return np.searchsorted(self.keys, keys, side="right") - 1

    # --- mutation -----------------------------------------------------------

    def _split(self, mask: np.ndarray) -> None:
        """Replace each flagged leaf by its 8 children, preserving sort order."""
        if self.active[mask].any():
            raise MeshError("attempted to split an active (voxel-level) leaf")
        if np.any(self.levels[mask] >= self.max_level):
            raise MeshError("attempted to split below the voxel level")
        reps = np.where(mask, 8, 1)
        parent = np.repeat(np.arange(len(self.levels)), reps)
        starts = np.concatenate(([0], np.cumsum(reps)))[:-1]
        local = np.arange(len(parent)) - starts[parent]

        anchors = self.anchors[parent].copy()
        levels = self.levels[parent].copy()
        active = self.active[parent].copy()
        is_child = mask[parent]
        levels[is_child] += 1
        child_size = (self.root_extent >> levels[is_child]).astype(np.int64)
        anchors[is_child] += CHILD_OFFSETS[local[is_child]] * child_size[:, None]

        self.anchors = anchors
        self.levels = levels
        self.active = active
        self.keys = morton_encode(anchors, self.max_level)
        self.version += 1
        self._node_cache = None

    def enforce_balance(self) -> bool:
        """Split coarse leaves until no two touching leaves differ by 2+ levels."""
        changed = False
        while True:
            sizes = self.leaf_sizes()
            ghosts = self.anchors[:, None, :] + _DIRS26[None, :, :] * sizes[:, None, None]
            flat = ghosts.reshape(-1, 3)
            valid = np.all((flat >= 0) & (flat < self.root_extent), axis=1)
            holders = np.full(len(flat), -1, dtype=np.int64)
            holders[valid] = self._find_leaves(flat[valid])
            holders = holders.reshape(len(self.levels), 26)
            lvl = self.levels[:, None]
            viol = valid.reshape(len(self.levels), 26) & (
                self.levels[np.clip(holders, 0, None)] <= lvl - 2
            )
            to_split = np.unique(holders[viol])
            if len(to_split) == 0:
                return changed
            mask = np.zeros(len(self.levels), dtype=bool)
            mask[to_split] = True
            self._split(mask)
            changed = True

    def refine_to_voxel(self, voxel) -> bool:
        """Single-level splits until the leaf holding ``voxel`` is voxel-sized.

        Each pass flags exactly the enclosing leaf (levels below the voxel
        level only), splits it, and re-establishes 2:1 balance. Idempotent.
        """
        changed = False
        while True:
            idx = self.find_leaf(voxel)
            if self.levels[idx] >= self.max_level:
                return changed
            mask = np.zeros(len(self.levels), dtype=bool)
            mask[idx] = True
            self._split(mask)
            self.enforce_balance()
            changed = True

    def classify(self, printed) -> np.ndarray:
        """Mark leaves holding printed voxels active; return active indices.

        The printed set only grows. A printed voxel whose leaf is coarser
        than the voxel level is a consistency error (refine first).
        """
        for v in printed:
            t = (int(v[0]), int(v[1]), int(v[2]))
            if t in self.printed:
                continue
            idx = self.find_leaf(t)
            if self.levels[idx] != self.max_level:
                raise MeshError(
                    f"printed voxel {t} sits in a level-{int(self.levels[idx])} leaf; "
                    f"expected level {self.max_level}"
                )
            self.active[idx] = True
            self.printed.add(t)
        return np.flatnonzero(self.active)

    # --- nodes and constraints ------------------------------------------------

    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        if self._node_cache is not None and self._node_cache[0] == self.version:
            return self._node_cache[1], self._node_cache[2]
        sizes = self.leaf_sizes()
        corners = (
            self.anchors[:, None, :] + CHILD_OFFSETS[None, :, :] * sizes[:, None, None]
        )
        flat = corners.reshape(-1, 3)
        node_coords, inverse = np.unique(flat, axis=0, return_inverse=True)
        leaf_nodes = inverse.reshape(-1, 8).astype(np.int64)
        self._node_cache = (self.version, node_coords, leaf_nodes)
        return node_coords, leaf_nodes

    @property
    def node_coords(self) -> np.ndarray:
        """(m, 3) unique corner nodes of all leaves, lexicographically sorted."""
        return self._nodes()[0]

    @property
    def leaf_nodes(self) -> np.ndarray:
        """(n, 8) node indices per leaf, x-fastest corner order."""
        return self._nodes()[1]

    def active_node_mask(self) -> np.ndarray:
        coords, leaf_nodes = self._nodes()
        mask = np.zeros(len(coords), dtype=bool)
        if self.active.any():
            mask[np.unique(leaf_nodes[self.active])] = True
        return mask

    def hanging_constraints(self, active_only: bool = False) -> dict[int, list[tuple[int, float]]]:
        """Constraint records: hanging node -> [(master node, weight), ...].

        A node lying strictly inside a coarser leaf's edge (face) is the
        average of that edge's 2 (face's 4) corner nodes. Chains are resolved
        so every master is itself unconstrained; weights stay convex. With
        ``active_only`` only active leaves may act as constraining masters.
        """
        # Midpoints of voxel-level leaves are not lattice points, so only
        # coarser leaves can constrain; skip the node index when none qualify.
        cand = self.levels < self.max_level
        if active_only:
            cand = cand & self.active
        cand_idx = np.flatnonzero(cand)
        if len(cand_idx) == 0:
            return {}
        coords, leaf_nodes = self._nodes()
        index = {tuple(c): i for i, c in enumerate(coords.tolist())}

        raw: dict[int, list[tuple[int, float]]] = {}
        order = cand_idx[np.argsort(self.levels[cand_idx], kind="stable")]
        for li in order:
            lvl = int(self.levels[li])
            a = self.anchors[li]
            s = self.root_extent >> lvl
            h = s // 2
            nodes = leaf_nodes[li]
            # 12 edge midpoints: one half-coordinate; masters are the edge ends.
            for axis in range(3):
                for u in (0, 1):
                    for v in (0, 1):
                        mid = a.copy()
                        mid[axis] += h
                        mid[(axis + 1) % 3] += u * s
                        mid[(axis + 2) % 3] += v * s
                        nid = index.get(tuple(int(c) for c in mid))
                        if nid is None or nid in raw:
                            continue
                        lo = np.zeros(3, dtype=np.int64)
                        lo[(axis + 1) % 3] = u
                        lo[(axis + 2) % 3] = v
                        hi = lo.copy()
                        hi[axis] = 1
                        c_lo = int(nodes[lo[0] + 2 * lo[1] + 4 * lo[2]])
                        c_hi = int(nodes[hi[0] + 2 * hi[1] + 4 * hi[2]])
                        raw[nid] = [(c_lo, 0.5), (c_hi, 0.5)]
            # 6 face centers: two half-coordinates; masters are the face corners.
            for axis in range(3):
                for w in (0, 1):
                    ctr = a.copy()
                    ctr[axis] += w * s
                    ctr[(axis + 1) % 3] += h
                    ctr[(axis + 2) % 3] += h
                    nid = index.get(tuple(int(c) for c in ctr))
                    if nid is None or nid in raw:
                        continue
                    masters = []
                    for u in (0, 1):
                        for v in (0, 1):
                            loc = np.zeros(3, dtype=np.int64)
                            loc[axis] = w
                            loc[(axis + 1) % 3] = u
                            loc[(axis + 2) % 3] = v
                            masters.append(
                                (int(nodes[loc[0] + 2 * loc[1] + 4 * loc[2]]), 0.25)
                            )
                    raw[nid] = masters

        # Resolve chains: substitute until every master is unconstrained.
        resolved: dict[int, list[tuple[int, float]]] = {}
        for slave, masters in raw.items():
            for _ in range(self.max_level + 2):
                if not any(m in raw for m, _ in masters):
                    break
                nxt: dict[int, float] = {}
                for m, w in masters:
                    for mm, ww in raw.get(m, [(m, 1.0)]):
                        nxt[mm] = nxt.get(mm, 0.0) + w * ww
                masters = list(nxt.items())
            else:  # pragma: no cover - levels strictly decrease along chains
                raise MeshError(f"unresolvable hanging-node chain at node {slave}")
            resolved[slave] = masters
        return resolved

    # --- neighbors, snapshots, checks ----------------------------------------

    def leaf_neighbors(self, idx: int) -> np.ndarray:
        """Indices of all leaves sharing a face, edge or corner with leaf idx."""
        a = self.anchors[idx]
        s = int(self.root_extent >> self.levels[idx])
        lo = np.maximum(a - 1, 0)
        hi = np.minimum(a + s, self.root_extent - 1)
        axes = [np.arange(lo[d], hi[d] + 1, dtype=np.int64) for d in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        cells = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        inner = np.all((cells >= a) & (cells < a + s), axis=1)
        cells = cells[~inner]
        if len(cells) == 0:
            return np.empty(0, dtype=np.int64)
        return np.unique(self._find_leaves(cells))

    def snapshot(self) -> MeshSnapshot:
        coords, leaf_nodes = self._nodes()
        return MeshSnapshot(
            max_level=self.max_level,
            anchors=self.anchors,
            levels=self.levels,
            keys=self.keys,
            node_coords=coords,
            leaf_nodes=leaf_nodes,
        )

    def dump(self) -> str:
        """One line per leaf: ``morton_key level ai aj ak active``."""
        lines = []
        for i in range(len(self.levels)):
            lvl = int(self.levels[i])
            key = (int(self.keys[i]) << _LEVEL_BITS) | lvl
            a = self.anchors[i]
            lines.append(
                f"{key} {lvl} {int(a[0])} {int(a[1])} {int(a[2])} {int(self.active[i])}"
            )
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        """Exact structural invariants: alignment, sortedness, tiling, levels."""
        sizes = self.leaf_sizes()
        if np.any(self.anchors % sizes[:, None] != 0):
            raise MeshError("anchor not aligned to its level lattice")
        if np.any((self.levels < 0) | (self.levels > self.max_level)):
            raise MeshError("leaf level out of range")
        if np.any(self.keys[1:] <= self.keys[:-1]):
            raise MeshError("leaves not strictly Morton-sorted")
        spans = (np.uint64(1) << (np.uint64(3) * (self.max_level - self.levels).astype(np.uint64)))
        ends = self.keys + spans
        if int(self.keys[0]) != 0 or int(ends[-1]) != 8**self.max_level:
            raise MeshError("leaf Morton ranges do not span the root cube")
        if np.any(self.keys[1:] != ends[:-1]):
            raise MeshError("gap or overlap in leaf Morton ranges")
        if np.any(self.active & (self.levels != self.max_level)):
            raise MeshError("active leaf not at voxel level")
