import numpy as np
import pytest

from semloc.semantics import SemanticMask
from semloc.teacher import corner_reliability, teacher_features


def cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestCornerReliability:
    def test_constant_image(self):
        assert np.all(corner_reliability(np.full((12, 12), 0.3)) == 0.0)

    def test_single_pixel_image(self):
        assert np.all(corner_reliability(np.ones((1, 1))) == 0.0)

    def test_range(self):
        rng = np.random.default_rng(2)
        r = corner_reliability(rng.uniform(size=(20, 20)))
        assert r.min() >= 0.0 and r.max() <= 1.0

    def test_dot_peak_location(self):
        img = np.zeros((9, 9))
        img[4, 4] = 1.0
        r = corner_reliability(img)
        peak = np.unravel_index(np.argmax(r), r.shape)
        assert abs(peak[0] - 4) <= 1 and abs(peak[1] - 4) <= 1

    def test_junction_beats_edge(self):
        # vertical step edge through the card, plus an L-junction where a
        # horizontal edge terminates on it
        img = np.zeros((16, 16))
        img[:, 8:] = 1.0
        img[8:, :8] = 1.0
        r = corner_reliability(img)
        junction = r[7:10, 7:10].max()
        edge = r[2:4, 7:10].max()  # far from the junction, on the vertical edge
        assert junction > edge

    def test_offset_invariance(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(size=(15, 17))
        base = corner_reliability(img)
        shifted = corner_reliability(img + 0.37)
        assert np.max(np.abs(base - shifted)) < 1e-9


class TestTeacherFeatures:
    def make_mask(self, fill=2, shape=(16, 16)):
        return SemanticMask(np.full(shape, fill, dtype=np.uint8))

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 5, size=(16, 16)).astype(np.uint8)
        shapes = [(8, 8, 8), (16, 4, 4)]
        a = teacher_features(SemanticMask(labels), shapes, seed=7)
        b = teacher_features(SemanticMask(labels.copy()), shapes, seed=7)
        for ma, mb in zip(a, b):
            np.testing.assert_array_equal(ma, mb)

    def test_single_label_constant(self):
        maps = teacher_features(self.make_mask(), [(6, 8, 8), (12, 4, 4)], seed=0)
        for m in maps:
            for c in range(m.shape[0]):
                assert np.ptp(m[c]) < 1e-12

    def test_seed_changes_maps(self):
        mask = self.make_mask()
        a = teacher_features(mask, [(6, 8, 8)], seed=0)[0]
        b = teacher_features(mask, [(6, 8, 8)], seed=1)[0]
        assert not np.allclose(a, b)

    def test_shapes_follow_taps(self):
        maps = teacher_features(self.make_mask(shape=(32, 16)), [(5, 16, 8), (9, 8, 4)], seed=3)
        assert maps[0].shape == (5, 16, 8)
        assert maps[1].shape == (9, 8, 4)

    def test_same_label_more_similar_than_cross_label(self):
        # left half label 2, right half label 0; compare interior columns away
        # from the boundary so smoothing neighborhoods are label-pure
        labels = np.full((16, 16), 2, dtype=np.uint8)
        labels[:, 8:] = 0
        maps = teacher_features(SemanticMask(labels), [(16, 16, 16)], seed=11)
        m = maps[0]
        same = cosine(m[:, 4, 2], m[:, 10, 3])
        cross = cosine(m[:, 4, 2], m[:, 4, 13])
        assert same >= cross

    def test_indivisible_tap_rejected(self):
        from semloc.errors import ShapeError

        with pytest.raises(ShapeError):
            teacher_features(self.make_mask(), [(4, 5, 5)], seed=0)
