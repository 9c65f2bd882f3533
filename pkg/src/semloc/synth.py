"""Deterministic synthetic outdoor scenes with exact pairwise correspondence.

Scenes compose a sky gradient, corner-rich building facades, low-contrast
tree blobs, small cars and a road band, each region labelled in a five-label
taxonomy that covers all four stability categories.  Pairs are formed by a
bounded random homography plus photometric jitter on the second image; the
jitter stands in for heavier appearance augmentation used at full scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .semantics import SemanticMask, load_taxonomy

LABEL_SKY = 0
LABEL_TREE = 1
LABEL_BUILDING = 2
LABEL_CAR = 3
LABEL_ROAD = 4

BUILTIN_TAXONOMY_TEXT = """\
# five-label outdoor micro-taxonomy
0 sky       Volatile
1 tree      ShortTerm
2 building  LongTerm
3 car       Dynamic
4 road      LongTerm
"""


def builtin_taxonomy():
    return load_taxonomy(BUILTIN_TAXONOMY_TEXT)


@dataclass(frozen=True)
class Scene:
    image: np.ndarray  # [H, W] grayscale in [0, 1]
    mask: SemanticMask
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


@dataclass(frozen=True)
class WarpParams:
    rotation_deg: float = 0.0
    scale: float = 1.0
    tx: float = 0.0  # pixels
    ty: float = 0.0
    px: float = 0.0  # perspective terms
    py: float = 0.0


@dataclass(frozen=True)
class PhotometricParams:
    gain: float = 1.0
    bias: float = 0.0
    gamma: float = 1.0


@dataclass(frozen=True)
class WarpedPair:
    scene_a: Scene
    scene_b: Scene
    homography: np.ndarray  # 3x3, maps a-coordinates to b-coordinates
    warp: WarpParams
    photometric: PhotometricParams
    valid_mask: np.ndarray  # [H, W] bool over scene_b pixels


def generate_scene(seed: int, size: int = 64) -> Scene:
    """Layered composition, fully determined by (seed, size)."""
    if size % 8 != 0:
        raise ValueError(f"size must be divisible by 8, got {size}")
    rng = np.random.default_rng(seed)
    h = w = size
    image = np.zeros((h, w))
    labels = np.zeros((h, w), dtype=np.uint8)

    horizon = int(h * rng.uniform(0.28, 0.38))
    road_top = int(h * rng.uniform(0.78, 0.86))

    # sky: smooth vertical gradient, nearly textureless
    sky_rows = np.linspace(0.85, 0.65, horizon)[:, None]
    image[:horizon] = sky_rows + rng.normal(0.0, 0.004, size=(horizon, w))
    labels[:horizon] = LABEL_SKY

    # mid band default: building backdrop texture is painted per building below;
    # anything uncovered becomes distant road-side ground (road label)
    image[horizon:road_top] = 0.45 + rng.normal(0.0, 0.01, size=(road_top - horizon, w))
    labels[horizon:road_top] = LABEL_ROAD

    # road band: mid-dark with a couple of bright lane ticks
    image[road_top:] = 0.30 + rng.normal(0.0, 0.01, size=(h - road_top, w))
    labels[road_top:] = LABEL_ROAD
    lane_y = (road_top + h) // 2
    for tick in range(0, w, max(8, w // 8)):
        x0, x1 = tick + 2, min(tick + max(4, w // 16), w)
        image[lane_y : lane_y + max(1, h // 64), x0:x1] = 0.9

    # buildings: 2-4 facades with window grids (dense strong corners)
    n_buildings = int(rng.integers(2, 5))
    edges = np.sort(rng.choice(np.arange(2, w - 2), size=n_buildings * 2, replace=False))
    for b in range(n_buildings):
        x0, x1 = int(edges[2 * b]), int(edges[2 * b + 1])
        if x1 - x0 < w // 10:
            x1 = min(w, x0 + w // 10 + 1)
        top = int(rng.uniform(0.05, 0.6) * horizon) + 2
        # full-contrast checkerboard facade: dense, strong corner responses
        cell = max(4, size // 12)
        rows = np.arange(top, road_top)
        cols = np.arange(x0, x1)
        board = (rows[:, None] // cell + cols[None, :] // cell) % 2
        phase = rng.uniform(0.0, 0.04)
        image[top:road_top, x0:x1] = np.where(board == 0, 0.02 + phase, 0.96 - phase)
        labels[top:road_top, x0:x1] = LABEL_BUILDING

    # trees: low-contrast smoothed blobs near the horizon
    n_trees = int(rng.integers(1, 4))
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_trees):
        cx = rng.uniform(0.1, 0.9) * w
        cy = horizon + rng.uniform(-0.05, 0.25) * h
        ry = rng.uniform(0.05, 0.11) * h
        rx = rng.uniform(0.05, 0.12) * w
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        noise = rng.normal(0.0, 0.015, size=(h, w))
        image[blob] = 0.42 + noise[blob]
        labels[blob] = LABEL_TREE

    # cars: small contrasty boxes on the road
    n_cars = int(rng.integers(1, 3))
    for _ in range(n_cars):
        cw = max(4, int(rng.uniform(0.06, 0.11) * w))
        ch = max(3, int(rng.uniform(0.04, 0.06) * h))
        cx = int(rng.uniform(0, w - cw))
        cy = int(rng.uniform(road_top, h - ch - 1))
        shade = rng.choice([0.08, 0.92])
        image[cy : cy + ch, cx : cx + cw] = shade
        image[cy : cy + ch // 2, cx + cw // 4 : cx + 3 * cw // 4] = 1.0 - shade
        labels[cy : cy + ch, cx : cx + cw] = LABEL_CAR

    return Scene(image=np.clip(image, 0.0, 1.0), mask=SemanticMask(labels), seed=seed)


def build_homography(params: WarpParams, width: int, height: int) -> np.ndarray:
    """Similarity-plus-perspective transform about the image center, h33 = 1."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    theta = np.deg2rad(params.rotation_deg)
    s = params.scale
    core = np.array(
        [
            [s * np.cos(theta), -s * np.sin(theta), params.tx],
            [s * np.sin(theta), s * np.cos(theta), params.ty],
            [params.px, params.py, 1.0],
        ]
    )
    to_center = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    from_center = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    h = from_center @ core @ to_center
    if abs(np.linalg.det(h)) < 1e-12:
        raise DegenerateGeometryError("homography is singular")
    return h / h[2, 2]


def random_warp_params(rng: np.random.Generator, size: int) -> WarpParams:
    # bounds keep the bulk of the frame valid after warping
    return WarpParams(
        rotation_deg=rng.uniform(-15.0, 15.0),
        scale=rng.uniform(0.85, 1.18),
        tx=rng.uniform(-0.1, 0.1) * size,
        ty=rng.uniform(-0.1, 0.1) * size,
        px=rng.uniform(-1e-3, 1e-3),
        py=rng.uniform(-1e-3, 1e-3),
    )


def random_photometric_params(rng: np.random.Generator) -> PhotometricParams:
    return PhotometricParams(
        gain=rng.uniform(0.7, 1.3),
        bias=rng.uniform(-0.12, 0.12),
        gamma=rng.uniform(0.6, 1.5),
    )


def _bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = image.shape
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(xs, 0, w - 1) - x0
    fy = np.clip(ys, 0, h - 1) - y0
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def apply_photometric(image: np.ndarray, params: PhotometricParams) -> np.ndarray:
    return np.clip(params.gain * np.power(np.clip(image, 0.0, 1.0), params.gamma) + params.bias, 0.0, 1.0)


def warp_pair(
    scene: Scene,
    warp: WarpParams | None = None,
    photometric: PhotometricParams | None = None,
    seed: int = 0,
) -> WarpedPair:
    """Second view b = warp(a) with photometric jitter applied to b only.

    When warp or photometric parameters are omitted they are sampled
    deterministically from the seed.
    """
    rng = np.random.default_rng(seed)
    h, w = scene.shape
    if warp is None:
        warp = random_warp_params(rng, w)
    if photometric is None:
        photometric = random_photometric_params(rng)

    hom = build_homography(warp, w, h)
    hom_inv = np.linalg.inv(hom)

    yy, xx = np.mgrid[0:h, 0:w]
    ones = np.ones_like(xx, dtype=np.float64)
    pts = np.stack([xx.reshape(-1), yy.reshape(-1), ones.reshape(-1)])
    src = hom_inv @ pts
    sx = (src[0] / src[2]).reshape(h, w)
    sy = (src[1] / src[2]).reshape(h, w)
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)

    image_b = _bilinear_sample(scene.image, sx, sy)
    image_b[~valid] = 0.0
    image_b = apply_photometric(image_b, photometric)

    nx = np.clip(np.rint(sx).astype(int), 0, w - 1)
    ny = np.clip(np.rint(sy).astype(int), 0, h - 1)
    mask_b = scene.mask.labels[ny, nx].copy()
    mask_b[~valid] = LABEL_SKY

    scene_b = Scene(image=image_b, mask=SemanticMask(mask_b), seed=scene.seed)
    return WarpedPair(
        scene_a=scene,
        scene_b=scene_b,
        homography=hom,
        warp=warp,
        photometric=photometric,
        valid_mask=valid,
    )


def gt_correspondence(pair: WarpedPair, x: float, y: float) -> tuple[float, float] | None:
    """Map a point of image a into image b; None when it leaves the valid area."""
    h, w = pair.scene_a.shape
    p = pair.homography @ np.array([x, y, 1.0])
    if abs(p[2]) < 1e-12:
        return None
    bx, by = p[0] / p[2], p[1] / p[2]
    if not (0 <= bx <= w - 1 and 0 <= by <= h - 1):
        return None
    if not pair.valid_mask[int(round(by)), int(round(bx))]:
        return None
    return bx, by
