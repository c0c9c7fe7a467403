import numpy as np
import pytest

from affdepth.images import BoundaryMap, CONTAIN, SUPPORT, WRAP_GRASP
from affdepth.regions import (CONTINUOUS, DISCONTINUOUS, build_region_graph,
                              extract_regions)
from oracles import flood_fill_components


def _boundary(shape, contact_pixels=(), occlusion_pixels=()):
    probs = np.zeros(shape + (3,))
    probs[..., 0] = 1.0
    for v, u in contact_pixels:
        probs[v, u] = (0.0, 0.0, 1.0)
    for v, u in occlusion_pixels:
        probs[v, u] = (0.0, 1.0, 0.0)
    return BoundaryMap(probs)


def upright_cup_mask(h=16, w=16):
    """Contain blob enclosed by a wrap ring, wrap touching the bottom rows."""
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[2:13, 3:13] = WRAP_GRASP
    mask[4:9, 5:11] = CONTAIN
    return mask


class TestExtractRegions:
    def test_upright_cup_two_regions(self):
        regions = extract_regions(upright_cup_mask(), min_area=5)
        assert len(regions) == 2
        assert {r.class_id for r in regions} == {CONTAIN, WRAP_GRASP}

    def test_min_area_drops_speckles(self):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[1, 1] = 1
        mask[1, 2] = 1
        mask[5, 5] = 1
        assert extract_regions(mask, min_area=5) == []
        assert len(extract_regions(mask, min_area=1)) == 2

    def test_partition_matches_flood_fill(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            mask = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
            regions = extract_regions(mask, min_area=1)
            got = {frozenset(map(tuple, r.pixels)) for r in regions}
            assert got == flood_fill_components(mask, 4)

    def test_boundary_is_subset_with_outside_neighbor(self):
        regions = extract_regions(upright_cup_mask(), min_area=5)
        for reg in regions:
            pixset = set(map(tuple, reg.pixels))
            bset = set(map(tuple, reg.boundary))
            assert bset <= pixset
            for v, u in bset:
                neighbors = [(v + 1, u), (v - 1, u), (v, u + 1), (v, u - 1)]
                in_img = [p for p in neighbors if 0 <= p[0] < 16 and 0 <= p[1] < 16]
                assert any(p not in pixset for p in in_img)


class TestRegionGraph:
    def test_upright_cup_graph(self):
        mask = upright_cup_mask()
        contact = [(12, u) for u in range(3, 13)]  # bottom row of the wrap ring
        boundary = _boundary(mask.shape, contact_pixels=contact)
        regions = extract_regions(mask, min_area=5)
        graph = build_region_graph(regions, boundary)
        by_class = {graph.nodes[i].class_id: i for i in range(len(graph.nodes))}
        assert graph.has_contact_edge[by_class[WRAP_GRASP]]
        assert not graph.has_contact_edge[by_class[CONTAIN]]
        assert len(graph.edges) == 1
        assert graph.edges[0].continuity == DISCONTINUOUS

    def test_tilted_cup_wrap_support_continuous(self):
        mask = np.zeros((12, 12), dtype=np.uint8)
        mask[2:10, 2:6] = WRAP_GRASP
        mask[2:10, 6:10] = SUPPORT
        boundary = _boundary(mask.shape, contact_pixels=[(9, u) for u in range(2, 10)])
        regions = extract_regions(mask, min_area=5)
        graph = build_region_graph(regions, boundary)
        assert len(graph.edges) == 1
        assert graph.edges[0].continuity == CONTINUOUS

    def test_non_adjacent_regions_no_edge(self):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[1:3, 1:3] = CONTAIN
        mask[7:9, 7:9] = WRAP_GRASP
        regions = extract_regions(mask, min_area=1)
        graph = build_region_graph(regions, _boundary(mask.shape))
        assert graph.edges == []

    def test_edges_cover_every_shared_pair_once(self):
        mask = upright_cup_mask()
        regions = extract_regions(mask, min_area=5)
        graph = build_region_graph(regions, _boundary(mask.shape))
        edge = graph.edges[0]
        got = {frozenset((a, b)) for a, b in
               zip(map(tuple, edge.pixels_i), map(tuple, edge.pixels_j))}
        assert len(got) == len(edge.pixels_i)  # no duplicates
        contain = next(r for r in regions if r.class_id == CONTAIN)
        wrap = next(r for r in regions if r.class_id == WRAP_GRASP)
        wset = set(map(tuple, wrap.pixels))
        expected = set()
        for v, u in map(tuple, contain.pixels):
            for nb in ((v + 1, u), (v - 1, u), (v, u + 1), (v, u - 1)):
                if nb in wset:
                    expected.add(frozenset(((v, u), nb)))
        assert got == expected

    def test_boundary_continuity_policy(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[2:6, 2:4] = CONTAIN
        mask[2:6, 4:6] = WRAP_GRASP
        # all shared pairs occluded -> discontinuous under the boundary rule
        occl = [(v, 3) for v in range(2, 6)] + [(v, 4) for v in range(2, 6)]
        boundary = _boundary(mask.shape, occlusion_pixels=occl)
        regions = extract_regions(mask, min_area=1)
        g1 = build_region_graph(regions, boundary, continuity_policy="boundary")
        assert g1.edges[0].continuity == DISCONTINUOUS
        g2 = build_region_graph(regions, _boundary(mask.shape),
                                continuity_policy="boundary")
        assert g2.edges[0].continuity == CONTINUOUS

    def test_deterministic(self):
        mask = upright_cup_mask()
        regions = extract_regions(mask, min_area=5)
        b = _boundary(mask.shape)
        g1 = build_region_graph(regions, b)
        g2 = build_region_graph(regions, b)
        assert [e.continuity for e in g1.edges] == [e.continuity for e in g2.edges]
        np.testing.assert_array_equal(g1.edges[0].pixels_i, g2.edges[0].pixels_i)
