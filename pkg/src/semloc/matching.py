"""Descriptor sampling, mutual nearest-neighbor matching, and homography RANSAC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detect import Keypoint
from .errors import DegenerateGeometryError, InsufficientMatchesError, ShapeError


@dataclass(frozen=True)
class DescriptorSet:
    keypoints: list[Keypoint]
    descriptors: np.ndarray  # [n, D], rows unit-norm
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass
class MatchSet:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # (idx_a, idx_b, distance)
    inlier_mask: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.pairs)


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize rows; an all-zero row becomes the uniform unit vector."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    out = vectors / safe[:, None]
    if np.any(zero):
        out[zero] = 1.0 / np.sqrt(vectors.shape[1])
    return out


def sample_descriptors(desc_map: np.ndarray, keypoints: list[Keypoint], downsample: int) -> DescriptorSet:
    """Bilinear interpolation of the descriptor map at (x/f, y/f), then L2 norm."""
    desc_map = np.asarray(desc_map, dtype=np.float64)
    if desc_map.ndim != 3:
        raise ShapeError(f"desc_map must be [D,h,w], got {desc_map.shape}")
    d, h, w = desc_map.shape
    width, height = w * downsample, h * downsample
    if not keypoints:
        return DescriptorSet(keypoints=[], descriptors=np.zeros((0, d)), width=width, height=height)

    xs = np.array([p.x for p in keypoints])
    ys = np.array([p.y for p in keypoints])
    if np.any(xs < 0) or np.any(ys < 0) or np.any(xs >= width) or np.any(ys >= height):
        bad = int(np.argmax((xs < 0) | (ys < 0) | (xs >= width) | (ys >= height)))
        raise IndexError(f"keypoint {bad} at ({xs[bad]}, {ys[bad]}) outside {width}x{height} image")

    u = np.clip(xs / downsample, 0.0, w - 1.0)
    v = np.clip(ys / downsample, 0.0, h - 1.0)
    x0 = np.floor(u).astype(int)
    y0 = np.floor(v).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = u - x0
    fy = v - y0
    cols = (
        desc_map[:, y0, x0] * ((1 - fy) * (1 - fx))
        + desc_map[:, y0, x1] * ((1 - fy) * fx)
        + desc_map[:, y1, x0] * (fy * (1 - fx))
        + desc_map[:, y1, x1] * (fy * fx)
    ).T
    return DescriptorSet(keypoints=list(keypoints), descriptors=normalize_rows(cols), width=width, height=height)


def mnn_match(a: DescriptorSet, b: DescriptorSet, ratio: float | None = None) -> MatchSet:
    """Mutual nearest neighbors under Euclidean distance, ties to smaller index.

    ``ratio`` optionally applies Lowe's ratio test on top of mutuality; the
    default protocol is plain MNN.
    """
    if len(a) == 0 or len(b) == 0:
        return MatchSet()
    dists = np.linalg.norm(a.descriptors[:, None, :] - b.descriptors[None, :, :], axis=2)
    fwd = np.argmin(dists, axis=1)  # first occurrence wins ties
    bwd = np.argmin(dists, axis=0)
    pairs = []
    for i, j in enumerate(fwd):
        if bwd[j] != i:
            continue
        if ratio is not None and dists.shape[1] >= 2:
            row = np.delete(dists[i], j)
            if dists[i, j] > ratio * row.min():
                continue
        pairs.append((i, int(j), float(dists[i, j])))
    return MatchSet(pairs=pairs)


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - centroid, axis=1))
    scale = np.sqrt(2.0) / spread if spread > 1e-12 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def fit_homography_dlt(pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Normalized DLT from >=4 correspondences; returns H with h33 = 1."""
    pts_a = np.asarray(pts_a, dtype=np.float64)
    pts_b = np.asarray(pts_b, dtype=np.float64)
    if pts_a.shape[0] < 4:
        raise InsufficientMatchesError(f"need >= 4 correspondences, got {pts_a.shape[0]}")
    ta = _hartley_normalization(pts_a)
    tb = _hartley_normalization(pts_b)
    na = (ta @ np.column_stack([pts_a, np.ones(len(pts_a))]).T).T
    nb = (tb @ np.column_stack([pts_b, np.ones(len(pts_b))]).T).T

    rows = []
    for (xa, ya, _), (xb, yb, _) in zip(na, nb):
        rows.append([xa, ya, 1, 0, 0, 0, -xb * xa, -xb * ya, -xb])
        rows.append([0, 0, 0, xa, ya, 1, -yb * xa, -yb * ya, -yb])
    m = np.array(rows)
    _, s, vt = np.linalg.svd(m)
    if s[-2] < 1e-12:
        raise DegenerateGeometryError("correspondences are degenerate (rank-deficient design matrix)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ h_norm @ ta
    if abs(h[2, 2]) < 1e-12 or abs(np.linalg.det(h)) < 1e-12:
        raise DegenerateGeometryError("estimated homography is singular")
    return h / h[2, 2]


def apply_homography(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.column_stack([points, np.ones(len(points))]) @ h.T
    return pts[:, :2] / pts[:, 2:3]


def symmetric_transfer_errors(h: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Per-correspondence max of forward and backward transfer distances (px)."""
    h_inv = np.linalg.inv(h)
    fwd = np.linalg.norm(apply_homography(h, pts_a) - pts_b, axis=1)
    bwd = np.linalg.norm(apply_homography(h_inv, pts_b) - pts_a, axis=1)
    return np.maximum(fwd, bwd)


def ransac_homography(
    matches: MatchSet,
    kp_a: list[Keypoint],
    kp_b: list[Keypoint],
    iterations: int = 200,
    inlier_threshold_px: float = 3.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 4-point RANSAC with a final DLT refit on the best consensus set."""
    n = len(matches.pairs)
    if n < 4:
        raise InsufficientMatchesError(f"RANSAC needs >= 4 matches, got {n}")
    pts_a = np.array([[kp_a[i].x, kp_a[i].y] for i, _, _ in matches.pairs])
    pts_b = np.array([[kp_b[j].x, kp_b[j].y] for _, j, _ in matches.pairs])

    rng = np.random.default_rng(seed)
    best_mask: np.ndarray | None = None
    best_count = -1
    best_err = np.inf
    for _ in range(iterations):
        sample = rng.choice(n, size=4, replace=False)
        try:
            h = fit_homography_dlt(pts_a[sample], pts_b[sample])
        except DegenerateGeometryError:
            continue
        errors = symmetric_transfer_errors(h, pts_a, pts_b)
        mask = errors < inlier_threshold_px
        count = int(mask.sum())
        total_err = float(errors[mask].sum()) if count else np.inf
        if count > best_count or (count == best_count and total_err < best_err):
            best_count = count
            best_err = total_err
            best_mask = mask
    if best_mask is None or best_count < 4:
        raise DegenerateGeometryError("no non-degenerate RANSAC sample produced a model")

    h = fit_homography_dlt(pts_a[best_mask], pts_b[best_mask])
    final_mask = symmetric_transfer_errors(h, pts_a, pts_b) < inlier_threshold_px
    return h, final_mask
