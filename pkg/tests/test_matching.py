import numpy as np
import pytest

from semloc.detect import Keypoint
from semloc.errors import InsufficientMatchesError
from semloc.matching import (
    DescriptorSet,
    MatchSet,
    apply_homography,
    fit_homography_dlt,
    mnn_match,
    normalize_rows,
    ransac_homography,
    sample_descriptors,
    symmetric_transfer_errors,
)


def make_set(descriptors, coords=None):
    descriptors = normalize_rows(np.asarray(descriptors, dtype=np.float64))
    n = len(descriptors)
    if coords is None:
        coords = [(float(i), 0.0) for i in range(n)]
    kps = [Keypoint(x=c[0], y=c[1], score=1.0) for c in coords]
    return DescriptorSet(keypoints=kps, descriptors=descriptors, width=128, height=128)


def brute_force_mnn(da, db):
    """O(n^2) double-argmin oracle, scanning indices in order for tie-breaks."""
    na, nb = len(da), len(db)
    pairs = []
    for i in range(na):
        best_j, best_d = None, np.inf
        for j in range(nb):
            d = float(np.linalg.norm(da[i] - db[j]))
            if d < best_d:
                best_j, best_d = j, d
        back_i, back_d = None, np.inf
        for i2 in range(na):
            d = float(np.linalg.norm(da[i2] - db[best_j]))
            if d < back_d:
                back_i, back_d = i2, d
        if back_i == i:
            pairs.append((i, best_j, best_d))
    return pairs


class TestSampleDescriptors:
    def test_grid_node_exact_column(self):
        rng = np.random.default_rng(3)
        desc_map = rng.normal(size=(8, 4, 4))
        kp = Keypoint(x=8.0, y=4.0, score=1.0)  # (x/f, y/f) = (2, 1), a node
        ds = sample_descriptors(desc_map, [kp], downsample=4)
        expected = desc_map[:, 1, 2]
        np.testing.assert_allclose(ds.descriptors[0], expected / np.linalg.norm(expected))

    def test_constant_map_identical_descriptors(self):
        desc_map = np.full((6, 3, 3), 0.5)
        kps = [Keypoint(x, y, 1.0) for x, y in [(0.0, 0.0), (5.0, 7.0), (11.0, 3.0)]]
        ds = sample_descriptors(desc_map, kps, downsample=4)
        assert np.ptp(ds.descriptors, axis=0).max() == 0.0

    def test_midpoint_average(self):
        desc_map = np.zeros((2, 1, 2))
        desc_map[:, 0, 0] = [1.0, 0.0]
        desc_map[:, 0, 1] = [0.0, 1.0]
        kp = Keypoint(x=2.0, y=0.0, score=1.0)  # map coord (0.5, 0)
        ds = sample_descriptors(desc_map, [kp], downsample=4)
        avg = np.array([0.5, 0.5])
        np.testing.assert_allclose(ds.descriptors[0], avg / np.linalg.norm(avg))

    def test_zero_vector_becomes_uniform(self):
        desc_map = np.zeros((4, 2, 2))
        ds = sample_descriptors(desc_map, [Keypoint(0.0, 0.0, 1.0)], downsample=4)
        np.testing.assert_allclose(ds.descriptors[0], 0.5)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(IndexError):
            sample_descriptors(np.zeros((2, 2, 2)), [Keypoint(99.0, 0.0, 1.0)], downsample=4)

    def test_unit_norm_invariant(self):
        rng = np.random.default_rng(8)
        desc_map = rng.normal(size=(16, 6, 6))
        kps = [Keypoint(float(x), float(y), 1.0) for x, y in rng.uniform(0, 23, size=(20, 2))]
        ds = sample_descriptors(desc_map, kps, downsample=4)
        np.testing.assert_allclose(np.linalg.norm(ds.descriptors, axis=1), 1.0, atol=1e-6)


class TestMnnMatch:
    def test_permutation_recovery(self):
        rng = np.random.default_rng(11)
        base = rng.normal(size=(10, 8))
        perm = rng.permutation(10)
        a = make_set(base)
        b = make_set(base[perm])
        ms = mnn_match(a, b)
        assert len(ms) == 10
        for i, j, d in ms.pairs:
            assert perm[j] == i
            assert d < 1e-12

    def test_duplicate_rows_tie_rule(self):
        a = make_set([[1.0, 0.0], [1.0, 0.0]])
        b = make_set([[1.0, 0.0]])
        ms = mnn_match(a, b)
        assert ms.pairs == [(0, 0, 0.0)]

    def test_empty_set(self):
        a = make_set(np.ones((1, 4)))
        empty = DescriptorSet(keypoints=[], descriptors=np.zeros((0, 4)), width=8, height=8)
        assert len(mnn_match(a, empty)) == 0
        assert len(mnn_match(empty, a)) == 0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            da = normalize_rows(rng.normal(size=(16, 6)))
            db = normalize_rows(rng.normal(size=(16, 6)))
            got = mnn_match(make_set(da), make_set(db)).pairs
            expected = brute_force_mnn(da, db)
            assert [(i, j) for i, j, _ in got] == [(i, j) for i, j, _ in expected]

    def test_symmetry(self):
        rng = np.random.default_rng(19)
        da = normalize_rows(rng.normal(size=(12, 5)))
        db = normalize_rows(rng.normal(size=(14, 5)))
        ab = mnn_match(make_set(da), make_set(db))
        ba = mnn_match(make_set(db), make_set(da))
        assert sorted((i, j) for i, j, _ in ab.pairs) == sorted((j, i) for i, j, _ in ba.pairs)

    def test_one_to_one(self):
        rng = np.random.default_rng(23)
        ms = mnn_match(make_set(rng.normal(size=(20, 4))), make_set(rng.normal(size=(20, 4))))
        lefts = [i for i, _, _ in ms.pairs]
        rights = [j for _, j, _ in ms.pairs]
        assert len(set(lefts)) == len(lefts)
        assert len(set(rights)) == len(rights)


def homography_instance(rng, n, h, noise=0.0, outliers=0):
    pts_a = rng.uniform(5, 95, size=(n, 2))
    pts_b = apply_homography(h, pts_a)
    if noise:
        pts_b = pts_b + rng.normal(0, noise, size=pts_b.shape)
    is_outlier = np.zeros(n, dtype=bool)
    if outliers:
        idx = rng.choice(n, size=outliers, replace=False)
        pts_b[idx] += rng.uniform(15, 40, size=(outliers, 2)) * rng.choice([-1, 1], size=(outliers, 2))
        is_outlier[idx] = True
    kp_a = [Keypoint(x, y, 1.0) for x, y in pts_a]
    kp_b = [Keypoint(x, y, 1.0) for x, y in pts_b]
    matches = MatchSet(pairs=[(i, i, 0.0) for i in range(n)])
    return matches, kp_a, kp_b, is_outlier


class TestRansac:
    H_TRUE = np.array([[1.02, 0.03, 4.0], [-0.02, 0.97, -2.0], [1e-4, -5e-5, 1.0]])

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(29)
        matches, kp_a, kp_b, _ = homography_instance(rng, 24, self.H_TRUE)
        h, mask = ransac_homography(matches, kp_a, kp_b, iterations=100, inlier_threshold_px=3.0, seed=1)
        assert mask.all()
        pts_a = np.array([[p.x, p.y] for p in kp_a])
        pts_b = np.array([[p.x, p.y] for p in kp_b])
        assert symmetric_transfer_errors(h, pts_a, pts_b).max() < 1e-6

    def test_fifty_percent_outliers_isolated(self):
        rng = np.random.default_rng(31)
        matches, kp_a, kp_b, is_outlier = homography_instance(rng, 32, self.H_TRUE, outliers=16)
        _, mask = ransac_homography(matches, kp_a, kp_b, iterations=200, inlier_threshold_px=3.0, seed=7)
        np.testing.assert_array_equal(mask, ~is_outlier)

    def test_identity_correspondences(self):
        rng = np.random.default_rng(37)
        matches, kp_a, kp_b, _ = homography_instance(rng, 12, np.eye(3))
        h, _ = ransac_homography(matches, kp_a, kp_b, iterations=50, inlier_threshold_px=3.0, seed=3)
        np.testing.assert_allclose(h, np.eye(3), atol=1e-9)

    def test_too_few_matches(self):
        with pytest.raises(InsufficientMatchesError):
            ransac_homography(MatchSet(pairs=[(0, 0, 0.0)] * 3), [], [], seed=0)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(41)
        matches, kp_a, kp_b, _ = homography_instance(rng, 20, self.H_TRUE, outliers=6)
        h1, m1 = ransac_homography(matches, kp_a, kp_b, iterations=80, seed=5)
        h2, m2 = ransac_homography(matches, kp_a, kp_b, iterations=80, seed=5)
        np.testing.assert_array_equal(h1, h2)
        np.testing.assert_array_equal(m1, m2)

    def test_dlt_exact_on_four_points(self):
        pts_a = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        pts_b = apply_homography(self.H_TRUE, pts_a)
        h = fit_homography_dlt(pts_a, pts_b)
        np.testing.assert_allclose(h, self.H_TRUE / self.H_TRUE[2, 2], atol=1e-9)


def test_self_match_identity():
    rng = np.random.default_rng(43)
    desc_map = rng.normal(size=(8, 6, 6))
    kps = [Keypoint(float(x * 4), float(y * 4), 1.0) for x, y in rng.integers(0, 6, size=(10, 2))]
    kps = list({(p.x, p.y): p for p in kps}.values())
    ds = sample_descriptors(desc_map, kps, downsample=4)
    ms = mnn_match(ds, ds)
    assert len(ms) == len(kps)
    for i, j, d in ms.pairs:
        assert i == j and d == 0.0
