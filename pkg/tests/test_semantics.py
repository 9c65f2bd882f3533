import numpy as np
import pytest

from semloc.errors import ConfigError, LabelError
from semloc.semantics import Category, LabelTaxonomy, SemanticMask, load_taxonomy, stability_map

BASIC = """
# five outdoor labels
0 sky       Volatile
1 tree      ShortTerm
2 building  LongTerm
3 car       Dynamic
4 road      LongTerm
"""


@pytest.fixture
def tax():
    return load_taxonomy(BASIC)


class TestLoadTaxonomy:
    def test_table_one_values(self, tax):
        assert tax.stability_of(2) == 1.0  # building
        assert tax.stability_of(0) == 0.1  # sky
        assert tax.stability_of(1) == 0.5  # tree
        assert tax.stability_of(3) == 0.1  # car

    def test_four_categories(self):
        assert len(Category) == 4

    def test_duplicate_id_rejected(self):
        with pytest.raises(ConfigError):
            load_taxonomy("0 sky Volatile\n0 cloud Volatile\n")

    def test_missing_category_rejected(self):
        with pytest.raises(ConfigError):
            load_taxonomy("0 sky\n")

    def test_unknown_category_rejected(self):
        with pytest.raises(ConfigError):
            load_taxonomy("0 sky Ephemeral\n")

    def test_stability_override(self):
        t = load_taxonomy("0 tree ShortTerm 0.4\n1 building LongTerm\n")
        assert t.stability[Category.SHORT_TERM] == 0.4
        assert t.stability[Category.LONG_TERM] == 1.0

    def test_conflicting_override_rejected(self):
        with pytest.raises(ConfigError):
            load_taxonomy("0 tree ShortTerm 0.4\n1 bush ShortTerm 0.6\n")

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            load_taxonomy("# nothing here\n")


class TestStabilityMap:
    def test_all_building(self, tax):
        mask = SemanticMask(np.full((6, 8), 2, dtype=np.uint8))
        np.testing.assert_array_equal(stability_map(mask, tax), np.ones((6, 8)))

    def test_sky_and_car_share_low_value(self, tax):
        m = np.zeros((4, 4), dtype=np.uint8)
        m[:, 2:] = 3  # car
        out = stability_map(SemanticMask(m), tax)
        np.testing.assert_array_equal(out, np.full((4, 4), 0.1))

    def test_empty_mask(self, tax):
        out = stability_map(SemanticMask(np.zeros((0, 0), dtype=np.uint8)), tax)
        assert out.shape == (0, 0)

    def test_unknown_label(self, tax):
        m = np.full((3, 3), 2, dtype=np.uint8)
        m[1, 2] = 77
        with pytest.raises(LabelError) as exc:
            stability_map(SemanticMask(m), tax)
        assert exc.value.label_id == 77
        assert exc.value.pixel == (1, 2)

    def test_permutation_equivariance(self, tax):
        rng = np.random.default_rng(13)
        m = rng.integers(0, 5, size=(8, 8)).astype(np.uint8)
        out = stability_map(SemanticMask(m), tax)
        perm = rng.permutation(64)
        permuted = stability_map(SemanticMask(m.reshape(-1)[perm].reshape(8, 8)), tax)
        np.testing.assert_array_equal(permuted, out.reshape(-1)[perm].reshape(8, 8))

    def test_no_zero_under_defaults(self, tax):
        rng = np.random.default_rng(5)
        m = rng.integers(0, 5, size=(16, 16)).astype(np.uint8)
        out = stability_map(SemanticMask(m), tax)
        assert out.min() >= 0.1
