"""Label taxonomy and per-pixel stability maps.

Labels are grouped into four temporal-stability categories, each carrying a
scalar stability weight used to rerank detections.  The taxonomy lives in a
plain text file (``id name category [stability]``) so alternative label sets
drop in without code changes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LabelError


class Category(enum.Enum):
    VOLATILE = "Volatile"
    DYNAMIC = "Dynamic"
    SHORT_TERM = "ShortTerm"
    LONG_TERM = "LongTerm"


DEFAULT_STABILITY = {
    Category.VOLATILE: 0.1,
    Category.DYNAMIC: 0.1,
    Category.SHORT_TERM: 0.5,
    Category.LONG_TERM: 1.0,
}

_CATEGORY_WORDS = {
    "volatile": Category.VOLATILE,
    "dynamic": Category.DYNAMIC,
    "shortterm": Category.SHORT_TERM,
    "short-term": Category.SHORT_TERM,
    "short_term": Category.SHORT_TERM,
    "longterm": Category.LONG_TERM,
    "long-term": Category.LONG_TERM,
    "long_term": Category.LONG_TERM,
}


@dataclass(frozen=True)
class LabelTaxonomy:
    """Immutable map label_id -> (name, category) plus per-category stability."""

    labels: dict[int, tuple[str, Category]]
    stability: dict[Category, float] = field(default_factory=lambda: dict(DEFAULT_STABILITY))

    def category_of(self, label_id: int) -> Category:
        return self.labels[label_id][1]

    def name_of(self, label_id: int) -> str:
        return self.labels[label_id][0]

    def stability_of(self, label_id: int) -> float:
        return self.stability[self.labels[label_id][1]]

    def lookup_table(self, size: int = 256) -> np.ndarray:
        """Stability per label id; NaN marks ids absent from the taxonomy."""
        table = np.full(size, np.nan)
        for label_id, (_, cat) in self.labels.items():
            table[label_id] = self.stability[cat]
        return table


def load_taxonomy(text: str) -> LabelTaxonomy:
    """Parse the line-oriented taxonomy format.

    Each non-comment line is ``id name category`` with an optional trailing
    stability value that overrides that category's default weight.
    """
    labels: dict[int, tuple[str, Category]] = {}
    stability = dict(DEFAULT_STABILITY)
    overrides: dict[Category, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ConfigError(f"line {lineno}: expected 'id name category [stability]', got {raw!r}")
        try:
            label_id = int(parts[0])
        except ValueError:
            raise ConfigError(f"line {lineno}: label id {parts[0]!r} is not an integer") from None
        if label_id < 0 or label_id > 255:
            raise ConfigError(f"line {lineno}: label id {label_id} outside 8-bit range")
        if label_id in labels:
            raise ConfigError(f"line {lineno}: duplicate label id {label_id}")
        name = parts[1]
        cat_word = parts[2].lower()
        if cat_word not in _CATEGORY_WORDS:
            raise ConfigError(f"line {lineno}: unknown category {parts[2]!r}")
        cat = _CATEGORY_WORDS[cat_word]
        if len(parts) >= 4:
            try:
                value = float(parts[3])
            except ValueError:
                raise ConfigError(f"line {lineno}: stability {parts[3]!r} is not a number") from None
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"line {lineno}: stability {value} outside [0,1]")
            if cat in overrides and overrides[cat] != value:
                raise ConfigError(f"line {lineno}: conflicting stability for {cat.value}")
            overrides[cat] = value
            stability[cat] = value
        labels[label_id] = (name, cat)
    if not labels:
        raise ConfigError("taxonomy is empty")
    return LabelTaxonomy(labels=labels, stability=stability)


@dataclass(frozen=True)
class SemanticMask:
    """Per-pixel integer labels."""

    labels: np.ndarray  # [H, W] uint8

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.uint8))
        if self.labels.ndim != 2:
            raise ConfigError(f"semantic mask must be 2-d, got shape {self.labels.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def stability_map(mask: SemanticMask, taxonomy: LabelTaxonomy) -> np.ndarray:
    """Per-pixel stability lookup; shape follows the mask."""
    if mask.labels.size == 0:
        return np.zeros(mask.shape)
    table = taxonomy.lookup_table()
    out = table[mask.labels]
    if np.any(np.isnan(out)):
        r, c = np.argwhere(np.isnan(out))[0]
        raise LabelError(int(mask.labels[r, c]), (int(r), int(c)))
    return out
