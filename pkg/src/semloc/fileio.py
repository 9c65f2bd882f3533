"""File formats: rasters, feature files, checkpoints, match files, configs.

All binary formats are little-endian except PGM's 16-bit samples, which are
big-endian per the netpbm convention.  Every reader validates magic bytes and
declared lengths and raises FileFormatError on corruption.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, FileFormatError
from .network import NetworkConfig

FEATURE_MAGIC = b"SLF1"
RASTER_MAGIC = b"SLR1"
CHECKPOINT_MAGIC = b"SLCK"


# ---------------------------------------------------------------------------
# portable graymaps (masks at 8 bit, images at 16 bit)


def write_pgm(path, values: np.ndarray, maxval: int = 255) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"PGM wants a 2-d array, got {values.shape}")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    h, w = values.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval == 255:
        body = values.astype(np.uint8).tobytes()
    else:
        body = values.astype(">u2").tobytes()
    Path(path).write_bytes(header + body)


def read_pgm(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise FileFormatError(f"{path}: not a binary PGM")
    # header: magic, width, height, maxval as whitespace-separated tokens
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FileFormatError(f"{path}: truncated PGM header")
        tokens.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = tokens
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    expected = h * w * dtype.itemsize if maxval >= 256 else h * w
    body = raw[pos:]
    if len(body) != expected:
        raise FileFormatError(f"{path}: PGM body is {len(body)} bytes, expected {expected}")
    data = np.frombuffer(body, dtype=dtype).reshape(h, w)
    return np.asarray(data), maxval


def save_image(path, image: np.ndarray) -> None:
    """Grayscale [0,1] floats quantized to 16-bit."""
    write_pgm(path, np.round(np.clip(image, 0.0, 1.0) * 65535.0), maxval=65535)


def load_image(path) -> np.ndarray:
    data, maxval = read_pgm(path)
    return data.astype(np.float64) / maxval


def save_mask(path, labels: np.ndarray) -> None:
    write_pgm(path, labels, maxval=255)


def load_mask(path) -> np.ndarray:
    data, maxval = read_pgm(path)
    if maxval != 255:
        raise FileFormatError(f"{path}: semantic masks must be 8-bit PGM")
    return data.astype(np.uint8)


# ---------------------------------------------------------------------------
# float rasters (external reliability maps / teacher features)


def write_float_raster(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise ValueError(f"raster wants [C,H,W] or [H,W], got {data.shape}")
    c, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(struct.pack("<III", c, h, w))
        fh.write(data.astype("<f4").tobytes())


def read_float_raster(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != RASTER_MAGIC:
        raise FileFormatError(f"{path}: bad raster magic {raw[:4]!r}")
    if len(raw) < 16:
        raise FileFormatError(f"{path}: truncated raster header")
    c, h, w = struct.unpack("<III", raw[4:16])
    expected = 16 + c * h * w * 4
    if len(raw) != expected:
        raise FileFormatError(f"{path}: raster is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(c, h, w).astype(np.float64)


# ---------------------------------------------------------------------------
# feature files


def write_feature_file(path, width: int, height: int, keypoints, descriptors: np.ndarray) -> None:
    """magic SLF1, u32 {W,H,n,D}, n * {f32 x,y,score}, n*D f32 row-major."""
    descriptors = np.asarray(descriptors, dtype=np.float32)
    n = len(keypoints)
    d = descriptors.shape[1] if descriptors.size else descriptors.shape[-1] if descriptors.ndim == 2 else 0
    if descriptors.ndim != 2 or descriptors.shape[0] != n:
        raise ValueError(f"descriptors {descriptors.shape} do not match {n} keypoints")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIII", width, height, n, d))
        for p in keypoints:
            fh.write(struct.pack("<fff", p.x, p.y, p.score))
        fh.write(descriptors.astype("<f4").tobytes())


def read_feature_file(path):
    from .detect import Keypoint

    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FileFormatError(f"{path}: bad feature magic {raw[:4]!r}")
    if len(raw) < 20:
        raise FileFormatError(f"{path}: truncated feature header")
    width, height, n, d = struct.unpack("<IIII", raw[4:20])
    expected = 20 + n * 12 + n * d * 4
    if len(raw) != expected:
        raise FileFormatError(f"{path}: feature file is {len(raw)} bytes, expected {expected}")
    keypoints = []
    pos = 20
    for _ in range(n):
        x, y, score = struct.unpack("<fff", raw[pos : pos + 12])
        keypoints.append(Keypoint(x=float(x), y=float(y), score=float(score)))
        pos += 12
    descriptors = np.frombuffer(raw[pos:], dtype="<f4").reshape(n, d).astype(np.float64)
    return width, height, keypoints, descriptors


# ---------------------------------------------------------------------------
# weight checkpoints


def save_checkpoint(path, config: NetworkConfig, weights: dict[str, T.Tensor]) -> None:
    """magic, u32 version, config block, u32 count, entries of
    (u32 name length, name, u32 ndim, u32 dims..., f64 data)."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", 1))
        fh.write(
            struct.pack(
                "<IIII",
                config.base_channels,
                config.descriptor_dim,
                config.downsample_factor,
                config.resblock_count,
            )
        )
        fh.write(struct.pack("<I", len(weights)))
        for name, t in weights.items():
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            fh.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkConfig, dict[str, T.Tensor]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    pos = 4
    (version,) = struct.unpack("<I", raw[pos : pos + 4])
    pos += 4
    if version != 1:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    base, dim, factor, blocks = struct.unpack("<IIII", raw[pos : pos + 16])
    pos += 16
    config = NetworkConfig(
        base_channels=base, descriptor_dim=dim, downsample_factor=factor, resblock_count=blocks
    )
    (count,) = struct.unpack("<I", raw[pos : pos + 4])
    pos += 4
    weights: dict[str, T.Tensor] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack("<I", raw[pos : pos + 4])
            pos += 4
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack("<I", raw[pos : pos + 4])
            pos += 4
            dims = struct.unpack(f"<{ndim}I", raw[pos : pos + 4 * ndim])
            pos += 4 * ndim
            size = int(np.prod(dims)) * 8
            data = np.frombuffer(raw[pos : pos + size], dtype="<f8").reshape(dims)
            if data.size != int(np.prod(dims)):
                raise FileFormatError(f"{path}: tensor {name} truncated")
            pos += size
            weights[name] = T.Tensor(data.copy(), requires_grad=True)
    except struct.error as exc:
        raise FileFormatError(f"{path}: truncated checkpoint ({exc})") from None
    if pos != len(raw):
        raise FileFormatError(f"{path}: {len(raw) - pos} trailing bytes")
    return config, weights


# ---------------------------------------------------------------------------
# match files


def write_match_file(path, homography: np.ndarray, pairs, inlier_mask) -> None:
    """Header line `homography r11 ... r33`, then `idx_a idx_b distance inlier`."""
    lines = ["homography " + " ".join(f"{v:.17g}" for v in np.asarray(homography).reshape(-1))]
    for (i, j, dist), inl in zip(pairs, inlier_mask):
        lines.append(f"{i} {j} {dist:.17g} {1 if inl else 0}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_match_file(path):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("homography "):
        raise FileFormatError(f"{path}: missing homography header")
    values = lines[0].split()[1:]
    if len(values) != 9:
        raise FileFormatError(f"{path}: homography header has {len(values)} values")
    homography = np.array([float(v) for v in values]).reshape(3, 3)
    pairs = []
    inliers = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FileFormatError(f"{path}:{lineno}: expected 'idx_a idx_b distance inlier'")
        pairs.append((int(parts[0]), int(parts[1]), float(parts[2])))
        inliers.append(parts[3] == "1")
    return homography, pairs, np.array(inliers, dtype=bool)


# ---------------------------------------------------------------------------
# key = value configs


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())
