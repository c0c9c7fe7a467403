"""Affordance regions and the region-adjacency graph that orders reconstruction.

Regions are connected same-class components of an affordance mask. Edges of
the graph record the shared 4-adjacent pixel pairs between two regions and
whether depth is continuous across them, which later decides between plain
global optimization and plane fitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import connected_components
from .images import BoundaryMap, CONTAIN, SUPPORT, WRAP_GRASP

CONTINUOUS = "continuous"
DISCONTINUOUS = "discontinuous"

# Depth continuity of adjacent affordance pairs: a cavity rim separates
# contain from its neighbors, while wrap-grasp and support meet at the base.
LOOKUP_CONTINUITY = {
    frozenset((CONTAIN, WRAP_GRASP)): DISCONTINUOUS,
    frozenset((WRAP_GRASP, SUPPORT)): CONTINUOUS,
    frozenset((CONTAIN, SUPPORT)): DISCONTINUOUS,
}

DEFAULT_MIN_AREA = 25
DEFAULT_MIN_CONTACT_PIXELS = 5


@dataclass
class Region:
    """One connected affordance component."""

    class_id: int
    pixels: np.ndarray  # (K, 2) row, col
    boundary: np.ndarray  # (M, 2) pixels with an in-image neighbor outside
    mask: np.ndarray  # (H, W) bool

    @property
    def area(self) -> int:
        return len(self.pixels)

    def centroid(self) -> np.ndarray:
        return self.pixels.mean(axis=0)


@dataclass
class RegionEdge:
    """Adjacency between two regions with its shared pixel pairs."""

    i: int
    j: int
    pixels_i: np.ndarray  # (K, 2) pixels on region i's side of each pair
    pixels_j: np.ndarray  # (K, 2) matching pixels on region j's side
    continuity: str = DISCONTINUOUS

    def other(self, node: int) -> int:
        return self.j if node == self.i else self.i

    def side(self, node: int) -> np.ndarray:
        return self.pixels_i if node == self.i else self.pixels_j


@dataclass
class RegionGraph:
    nodes: list
    edges: list
    has_contact_edge: list

    def neighbors(self, node: int):
        for e in self.edges:
            if node in (e.i, e.j):
                yield e.other(node), e


def _boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Pixels of ``mask`` with at least one in-image 4-neighbor outside it."""
    interior = mask.copy()
    interior[1:, :] &= mask[:-1, :]
    interior[:-1, :] &= mask[1:, :]
    interior[:, 1:] &= mask[:, :-1]
    interior[:, :-1] &= mask[:, 1:]
    return np.column_stack(np.nonzero(mask & ~interior)).astype(np.int64)


def extract_regions(mask: np.ndarray, min_area: int = DEFAULT_MIN_AREA,
                    connectivity: int = 4) -> list:
    """Connected components per affordance class, small speckles dropped.

    Boundaries always use 4-connectivity regardless of the component
    connectivity.
    """
    mask = np.asarray(mask)
    regions = []
    for class_id, pixels in connected_components(mask, connectivity):
        if len(pixels) < min_area:
            continue
        rmask = np.zeros(mask.shape, dtype=bool)
        rmask[pixels[:, 0], pixels[:, 1]] = True
        regions.append(Region(class_id, pixels, _boundary_pixels(rmask), rmask))
    return regions


def _adjacent_pairs(region_map: np.ndarray):
    """Yield (id_a, id_b, pix_a, pix_b) for 4-adjacent pixels of distinct
    regions; region ids are indices into the regions list, -1 = none."""
    pairs = {}
    for axis, (sl_a, sl_b) in ((0, (np.s_[:-1, :], np.s_[1:, :])),
                               (1, (np.s_[:, :-1], np.s_[:, 1:]))):
        a = region_map[sl_a]
        b = region_map[sl_b]
        hit = (a >= 0) & (b >= 0) & (a != b)
        ra, ca = np.nonzero(hit)
        if axis == 1:
            rb, cb = ra, ca + 1
        else:
            rb, cb = ra + 1, ca
        ids_a = a[ra, ca]
        ids_b = region_map[rb, cb]
        lo = np.minimum(ids_a, ids_b)
        hi = np.maximum(ids_a, ids_b)
        swap = ids_a != lo
        pa = np.where(swap[:, None], np.column_stack((rb, cb)), np.column_stack((ra, ca)))
        pb = np.where(swap[:, None], np.column_stack((ra, ca)), np.column_stack((rb, cb)))
        for k in range(len(lo)):
            pairs.setdefault((int(lo[k]), int(hi[k])), ([], []))
            pairs[(int(lo[k]), int(hi[k]))][0].append(pa[k])
            pairs[(int(lo[k]), int(hi[k]))][1].append(pb[k])
    for (i, j), (pa, pb) in sorted(pairs.items()):
        yield i, j, np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64)


def build_region_graph(regions: list, boundary: BoundaryMap,
                       contact_threshold: float = 0.5,
                       continuity_policy: str = "lookup",
                       min_contact_pixels: int = DEFAULT_MIN_CONTACT_PIXELS) -> RegionGraph:
    """Assemble the region graph used for multi-step planning.

    A region gets ``has_contact_edge`` when at least ``min_contact_pixels``
    of its boundary pixels carry contact probability >= the threshold.
    Edge continuity comes from the affordance-pair lookup table, or, with
    ``continuity_policy="boundary"``, from the occlusion channel: an edge is
    discontinuous iff at least half of its shared pixel pairs have occlusion
    probability >= 0.5 (taking each pair's maximum over its two pixels).
    """
    if continuity_policy not in ("lookup", "boundary"):
        raise InvalidInputError("continuity_policy must be 'lookup' or 'boundary'")
    if regions and boundary.shape != regions[0].mask.shape:
        raise InvalidInputError("boundary map shape does not match regions")

    has_contact = []
    for reg in regions:
        bp = reg.boundary
        n_contact = int((boundary.contact[bp[:, 0], bp[:, 1]] >= contact_threshold).sum()) \
            if len(bp) else 0
        has_contact.append(n_contact >= min_contact_pixels)

    if not regions:
        return RegionGraph([], [], [])

    region_map = np.full(regions[0].mask.shape, -1, dtype=np.int32)
    for idx, reg in enumerate(regions):
        region_map[reg.mask] = idx

    edges = []
    occ = boundary.occlusion
    for i, j, pix_i, pix_j in _adjacent_pairs(region_map):
        if continuity_policy == "lookup":
            key = frozenset((regions[i].class_id, regions[j].class_id))
            continuity = LOOKUP_CONTINUITY.get(key, DISCONTINUOUS)
        else:
            pair_occ = np.maximum(occ[pix_i[:, 0], pix_i[:, 1]],
                                  occ[pix_j[:, 0], pix_j[:, 1]])
            frac = (pair_occ >= 0.5).mean()
            continuity = DISCONTINUOUS if frac >= 0.5 else CONTINUOUS
        edges.append(RegionEdge(i, j, pix_i, pix_j, continuity))

    return RegionGraph(list(regions), edges, has_contact)
