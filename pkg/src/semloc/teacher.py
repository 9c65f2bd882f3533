"""Stand-in supervision signals.

The real training setup takes its local-reliability target from a pretrained
corner network and its dense distillation features from a pretrained
segmentation encoder.  Here the reliability target is a classical corner
response and the distillation features are a seeded random projection of
one-hot label planes, so the *structure* of both signals is preserved without
shipping any pretrained weights.  Externally produced maps can be substituted
via the float-raster files in :mod:`semloc.fileio`.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .errors import ShapeError
from .semantics import SemanticMask

HARRIS_K = 0.05
HARRIS_SIGMA = 1.0
LABEL_UNIVERSE = 256  # projections cover every 8-bit label id


def corner_reliability(image: np.ndarray, sigma: float = HARRIS_SIGMA, k: float = HARRIS_K) -> np.ndarray:
    """Corner response R = det(M) - k*trace(M)^2, clamped at 0, max-normalized.

    M is the Gaussian-integrated structure tensor of central-difference
    gradients.  A flat or degenerate image yields an all-zero map.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"corner_reliability expects a 2-d grayscale image, got {image.shape}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    h, w = image.shape
    if h < 2 or w < 2:
        return np.zeros_like(image)

    gy, gx = np.gradient(image)
    sxx = gaussian_filter(gx * gx, sigma)
    syy = gaussian_filter(gy * gy, sigma)
    sxy = gaussian_filter(gx * gy, sigma)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    response = np.maximum(det - k * trace * trace, 0.0)
    peak = response.max()
    if peak <= 0.0:
        return np.zeros_like(response)
    return response / peak


def teacher_features(mask: SemanticMask, tap_shapes: list[tuple[int, int, int]], seed: int) -> list[np.ndarray]:
    """Dense semantic feature maps aligned to the student's tapped layers.

    One-hot label planes are projected through a seeded random matrix,
    average-pooled to each tap's spatial shape, then box-smoothed so nearby
    same-label pixels carry similar vectors.
    """
    h, w = mask.shape
    labels = mask.labels
    rng = np.random.default_rng(seed)
    maps = []
    for channels, th, tw in tap_shapes:
        if h % th != 0 or w % tw != 0:
            raise ShapeError(f"tap shape ({th},{tw}) does not divide mask shape ({h},{w})")
        projection = rng.normal(size=(channels, LABEL_UNIVERSE)) / np.sqrt(LABEL_UNIVERSE)
        dense = projection[:, labels.reshape(-1)].reshape(channels, h, w)
        fy, fx = h // th, w // tw
        pooled = dense.reshape(channels, th, fy, tw, fx).mean(axis=(2, 4))
        smoothed = uniform_filter(pooled, size=(1, 3, 3), mode="nearest")
        maps.append(smoothed)
    return maps
