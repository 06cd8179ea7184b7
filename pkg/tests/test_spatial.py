import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatialcp.errors import DegenerateExtent, EmptyInput
from spatialcp.spatial import build_index, grid_bin, knn, knn_batch

from .oracles import brute_knn


class TestBuildIndex:
    def test_single_site(self):
        idx = build_index(np.array([[0.3, 0.7]]))
        for q in ([0, 0], [5, -2]):
            ns = knn(idx, q, 3)
            assert ns.indices.tolist() == [0]

    def test_empty(self):
        with pytest.raises(EmptyInput):
            build_index(np.empty((0, 2)))

    def test_hundred_sites_center(self, rng):
        pts = rng.uniform(size=(100, 2))
        ns = knn(build_index(pts), [0.5, 0.5], 5)
        want, dist = brute_knn(pts, [0.5, 0.5], 5)
        assert ns.indices.tolist() == want
        np.testing.assert_allclose(ns.distances, dist, rtol=0, atol=1e-15)

    def test_duplicates_before_farther(self):
        pts = np.array([[0, 0], [1, 0], [0.2, 0], [0.2, 0]], dtype=float)
        ns = knn(build_index(pts), [0.25, 0], 3)
        assert ns.indices.tolist() == [2, 3, 0]


class TestKnn:
    def test_self_exclusion(self):
        pts = np.array([[0, 0], [1, 0], [2, 0]], dtype=float)
        assert knn(build_index(pts), [0, 0], 2, exclude=0).indices.tolist() == [1, 2]

    def test_tie_lower_index_first(self):
        pts = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
        assert knn(build_index(pts), [0, 0], 4).indices.tolist() == [0, 1, 2, 3]

    def test_ties_beyond_fetch_window(self):
        # 40 points on a circle: every one ties, far more than k + padding
        t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
        pts = np.column_stack([np.cos(t), np.sin(t)])
        pts = np.round(pts * 2**20) / 2**20
        idx = build_index(pts)
        got = knn(idx, [0.0, 0.0], 3).indices.tolist()
        assert got == brute_knn(pts, [0.0, 0.0], 3)[0]

    def test_k_clipped(self):
        pts = np.array([[0, 0], [1, 1]], dtype=float)
        assert len(knn(build_index(pts), [0, 0], 10).indices) == 2
        assert len(knn(build_index(pts), [0, 0], 10, exclude=1).indices) == 1

    def test_random_500_k10(self, rng):
        pts = rng.uniform(size=(500, 2))
        index = build_index(pts)
        for q in rng.uniform(size=(20, 2)):
            assert knn(index, q, 10).indices.tolist() == brute_knn(pts, q, 10)[0]

    def test_linear_scan_200_cases(self, rng):
        # oracle equivalence over 200 random (point set, query, k, exclude) cases,
        # with coordinates on a coarse lattice so ties are common
        for _ in range(200):
            n = int(rng.integers(1, 60))
            pts = rng.integers(0, 6, size=(n, 2)).astype(float)
            q = rng.integers(0, 6, size=2).astype(float)
            k = int(rng.integers(1, 12))
            ex = int(rng.integers(-1, n))
            ex = None if ex < 0 else ex
            want, wd = brute_knn(pts, q, k, ex)
            ns = knn(build_index(pts), q, k, ex)
            assert ns.indices.tolist() == want
            np.testing.assert_allclose(ns.distances, wd, atol=1e-12)

    def test_batch_exclude_self(self, rng):
        pts = rng.uniform(size=(50, 2))
        idx, _ = knn_batch(build_index(pts), pts, 5, exclude=np.arange(50))
        assert not (idx == np.arange(50)[:, None]).any()

    @given(k=st.integers(1, 15), seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_distances_extend_monotonically(self, k, seed):
        g = np.random.default_rng(seed)
        pts = g.uniform(size=(30, 2))
        index = build_index(pts)
        q = g.uniform(size=2)
        a = knn(index, q, k)
        b = knn(index, q, k + 1)
        assert np.array_equal(b.indices[:len(a.indices)], a.indices)
        assert np.all(np.diff(b.distances) >= 0)


class TestGridBin:
    def test_corner_cells(self):
        b = grid_bin(np.array([[0.05, 0.05], [1.0, 1.0], [0.0, 0.0]]), 10, ((0, 0), (1, 1)))
        assert b.cells.tolist() == [[0, 0], [9, 9], [0, 0]]

    def test_interior_boundary_goes_up(self):
        # floor rule: a point on an interior cell edge belongs to the upper cell
        b = grid_bin(np.array([[0.5, 0.25]]), 4, ((0, 0), (1, 1)))
        assert b.cells.tolist() == [[2, 1]]

    def test_degenerate(self):
        with pytest.raises(DegenerateExtent):
            grid_bin(np.array([[0.1, 0.2], [0.1, 0.5]]), 10)

    def test_uniform_counts_multinomial(self, rng):
        pts = rng.uniform(size=(10000, 2))
        c = grid_bin(pts, 10, ((0, 0), (1, 1))).counts()
        assert c.sum() == 10000
        sd = np.sqrt(10000 * 0.01 * 0.99)
        assert np.all(np.abs(c - 100) <= 3 * sd)

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=60),
           st.integers(1, 12))
    @settings(max_examples=60, deadline=None)
    def test_counts_partition(self, pts, G):
        pts = np.array(pts)
        if np.any(pts.max(axis=0) <= pts.min(axis=0)):
            return
        b = grid_bin(pts, G)
        assert b.counts().sum() == len(pts)
        assert b.cells.min() >= 0 and b.cells.max() <= G - 1
