"""Shared generators for AP-ranking test instances.

The soft-binned AP cannot resolve rankings whose decisive score gaps are
smaller than its bin resolution, so the fidelity oracle draws instances the
quantizer can resolve: positive scores on bin centers, every negative kept
clear of them by more than a bin width.  Positives land at arbitrary ranks,
so cumulative precision/recall machinery is exercised across the full AP
range.  Fully adversarial uniform instances are used for the aggregate
fidelity bound and for the exact-AP monotonicity probe.
"""

import numpy as np

AP_BINS = 25
DELTA = 2.0 / (AP_BINS - 1)
CENTERS = np.linspace(1.0, -1.0, AP_BINS)


def resolvable_instance(rng, max_len=64, max_pos=3):
    """Scores the 25-bin quantizer can rank exactly; returns (scores, is_positive)."""
    m = int(rng.integers(2, max_len + 1))
    n_pos = int(rng.integers(1, min(max_pos, m) + 1))
    pos_scores = rng.choice(CENTERS[1:-1], size=n_pos, replace=False)
    zones = sorted((p - 1.25 * DELTA, p + 1.25 * DELTA) for p in pos_scores)
    gaps, cursor = [], -1.0
    for lo, hi in zones:
        if lo > cursor:
            gaps.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < 1.0:
        gaps.append((cursor, 1.0))
    widths = np.array([hi - lo for lo, hi in gaps])
    probs = widths / widths.sum()
    negs = [rng.uniform(*gaps[rng.choice(len(gaps), p=probs)]) for _ in range(m - n_pos)]
    scores = np.concatenate([pos_scores, negs])
    is_pos = np.zeros(m, dtype=bool)
    is_pos[:n_pos] = True
    perm = rng.permutation(m)
    return scores[perm], is_pos[perm]


def uniform_instance(rng, max_len=64):
    """Unconstrained scores; near-ties below bin resolution are likely."""
    m = int(rng.integers(2, max_len + 1))
    scores = rng.uniform(-1.0, 1.0, size=m)
    is_pos = rng.uniform(size=m) < 0.3
    if not is_pos.any():
        is_pos[int(rng.integers(0, m))] = True
    return scores, is_pos
