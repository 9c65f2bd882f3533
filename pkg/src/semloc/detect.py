"""Reliability fusion and keypoint extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

DEFAULT_NMS_RADIUS = 4
DEFAULT_MIN_SCORE = 0.005


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float


def fuse_reliability(s_rel: np.ndarray, s_sta: np.ndarray) -> np.ndarray:
    """Pixelwise product of local reliability and semantic stability."""
    s_rel = np.asarray(s_rel, dtype=np.float64)
    s_sta = np.asarray(s_sta, dtype=np.float64)
    if s_rel.shape != s_sta.shape:
        raise ShapeError(f"fuse_reliability: shapes {s_rel.shape} and {s_sta.shape} differ")
    return s_rel * s_sta


def nms(score_map: np.ndarray, radius: int) -> np.ndarray:
    """Greedy non-maximum suppression within a Chebyshev radius.

    Pixels are visited in (score descending, row-major index ascending) order;
    a visited pixel survives unless a previously kept pixel lies within the
    radius.  Suppressed pixels are zeroed.  The index tie-break means the
    first pixel of an equal-valued neighborhood is the one kept.
    """
    score_map = np.asarray(score_map, dtype=np.float64)
    if score_map.ndim != 2:
        raise ShapeError(f"nms expects a 2-d map, got {score_map.shape}")
    if radius < 1:
        raise ValueError(f"nms radius must be >= 1, got {radius}")
    h, w = score_map.shape
    flat = score_map.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    suppressed = np.zeros((h, w), dtype=bool)
    out = np.zeros_like(score_map)
    for idx in order:
        val = flat[idx]
        if val <= 0.0:
            break
        r, c = divmod(int(idx), w)
        if suppressed[r, c]:
            continue
        out[r, c] = val
        r0, r1 = max(0, r - radius), min(h, r + radius + 1)
        c0, c1 = max(0, c - radius), min(w, c + radius + 1)
        suppressed[r0:r1, c0:c1] = True
    return out


def topk_keypoints(
    score_map: np.ndarray,
    k: int,
    min_score: float = DEFAULT_MIN_SCORE,
    radius: int = DEFAULT_NMS_RADIUS,
) -> list[Keypoint]:
    """NMS then the k best surviving pixels, scores non-increasing.

    Ties are ordered by row-major index; fewer than k keypoints is a valid
    result when the map cannot supply them.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    surviving = nms(score_map, radius)
    h, w = surviving.shape
    flat = surviving.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    points: list[Keypoint] = []
    for idx in order:
        val = float(flat[idx])
        if val < min_score or val <= 0.0:
            break
        r, c = divmod(int(idx), w)
        points.append(Keypoint(x=float(c), y=float(r), score=val))
        if len(points) == k:
            break
    return points


def keypoint_array(points: list[Keypoint]) -> np.ndarray:
    """[n, 3] array of (x, y, score)."""
    if not points:
        return np.zeros((0, 3))
    return np.array([[p.x, p.y, p.score] for p in points])
