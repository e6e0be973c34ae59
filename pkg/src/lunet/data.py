"""Datasets: the 2-D Gaussian mixture, IDX image files, synthetic blobs, and the
dequantize / scale / logit image pipeline."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DEFAULT_CENTERS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))


class DataError(Exception):
    pass


class BadMagic(DataError):
    pass


class DimMismatch(DataError):
    pass


class TruncatedFile(DataError):
    pass


class EmptyClass(DataError):
    pass


@dataclass(frozen=True)
class MixtureSpec:
    centers: tuple[tuple[float, float], ...] = DEFAULT_CENTERS
    sigma: float = 0.2
    n_total: int = 10_000
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.centers:
            raise ValueError("at least one center is required")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.n_total < 2:
            raise ValueError("n_total must be at least 2")


def gaussian_mixture(spec: MixtureSpec = MixtureSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Equal-weight isotropic mixture, randomly split into (train, test)."""
    rng = np.random.default_rng(spec.seed)
    centers = np.asarray(spec.centers, dtype=np.float64)
    k = rng.integers(0, len(centers), spec.n_total)
    x = centers[k] + spec.sigma * rng.standard_normal((spec.n_total, centers.shape[1]))
    perm = rng.permutation(spec.n_total)
    n_train = int(round(spec.train_fraction * spec.n_total))
    return x[perm[:n_train]], x[perm[n_train:]]


@dataclass
class LabeledImages:
    images: np.ndarray  # (n, height*width) uint8
    labels: np.ndarray  # (n,) uint8
    height: int = 28
    width: int = 28

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels)
        if self.images.ndim != 2 or self.images.shape[1] != self.height * self.width:
            raise DimMismatch(f"images must be (n, {self.height * self.width}), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise DimMismatch(f"{self.images.shape[0]} images but labels have shape {self.labels.shape}")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        self.images = self.images.astype(np.uint8)
        self.labels = self.labels.astype(np.uint8)

    def __len__(self):
        return self.images.shape[0]


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(path, raw: bytes, magic: int, ndim: int) -> tuple[tuple[int, ...], int]:
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: file ends at offset {len(raw)} inside the magic number")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise BadMagic(f"{path}: offset 0: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFile(f"{path}: file ends at offset {len(raw)} inside the {header}-byte header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise TruncatedFile(f"{path}: offset {len(raw)}: expected {need} bytes for dims {dims}")
    if len(raw) > need:
        raise DimMismatch(f"{path}: offset {need}: {len(raw) - need} bytes beyond dims {dims}")
    return dims, header


def load_idx(images_path, labels_path) -> LabeledImages:
    """Read an IDX image/label pair (plain or gzip-compressed)."""
    raw = _read_bytes(images_path)
    (n, rows, cols), off = _parse_idx(images_path, raw, IDX_IMAGES_MAGIC, 3)
    images = np.frombuffer(raw, dtype=np.uint8, offset=off).reshape(n, rows * cols)
    raw = _read_bytes(labels_path)
    (n_labels,), off = _parse_idx(labels_path, raw, IDX_LABELS_MAGIC, 1)
    if n_labels != n:
        raise DimMismatch(f"{labels_path}: offset 4: {n_labels} labels but {images_path} holds {n} images")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=off)
    return LabeledImages(images.copy(), labels.copy(), rows, cols)


def write_idx(images: LabeledImages, images_path, labels_path) -> None:
    n = len(images)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, images.height, images.width))
        f.write(images.images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(images.labels.astype(np.uint8).tobytes())


def filter_class(data: LabeledImages, class_id: int) -> LabeledImages:
    if not 0 <= class_id <= 9:
        raise ValueError(f"class_id must lie in [0, 9], got {class_id}")
    keep = np.flatnonzero(data.labels == class_id)
    if keep.size == 0:
        raise EmptyClass(f"no images with label {class_id}")
    return LabeledImages(data.images[keep], data.labels[keep], data.height, data.width)


def synthetic_blobs(n: int, seed: int = 0, size: int = 28, label: int = 0) -> LabeledImages:
    """Gaussian bumps with random center and radius, quantized to 8 bits."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size]
    lo, hi = size / 3.0, 2.0 * size / 3.0
    cx = rng.uniform(lo, hi, n)[:, None, None]
    cy = rng.uniform(lo, hi, n)[:, None, None]
    r = rng.uniform(size / 9.0, size / 4.5, n)[:, None, None]
    img = 255.0 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * r**2))
    pixels = np.clip(np.round(img), 0, 255).astype(np.uint8).reshape(n, size * size)
    return LabeledImages(pixels, np.full(n, label, dtype=np.uint8), size, size)


@dataclass(frozen=True)
class Pipeline:
    scale_denominator: float = 256.0
    clamp_eps: float = 1e-6
    noise_seed: int = 0

    def noise(self, n: int, dim: int, start: int = 0) -> np.ndarray:
        """Uniform [0,1) dequantization noise; sample ``i`` has its own stream."""
        out = np.empty((n, dim))
        for i in range(n):
            out[i] = np.random.default_rng([self.noise_seed, start + i]).random(dim)
        return out


@dataclass
class Preprocessed:
    vectors: np.ndarray
    logdet_correction: np.ndarray = field(repr=False)


def preprocess(images: LabeledImages | np.ndarray, pipeline: Pipeline = Pipeline(),
               noise: np.ndarray | None = None, first_index: int = 0) -> Preprocessed:
    """Dequantize, scale to the unit interval, clamp, and apply the logit.

    ``logdet_correction`` is, per sample, ``sum_pixels ln(p(1-p)) + ln(scale)``.
    Adding it to the logit-space NLL gives the NLL of the dequantized pixel
    values ``x + u`` (the base-256 integer scale). Noise for row ``i`` comes
    from the stream ``(noise_seed, first_index + i)``.
    """
    pixels = images.images if isinstance(images, LabeledImages) else np.asarray(images)
    pixels = np.atleast_2d(pixels).astype(np.float64)
    if noise is None:
        noise = pipeline.noise(*pixels.shape, start=first_index)
    eps = pipeline.clamp_eps
    p = np.clip((pixels + noise) / pipeline.scale_denominator, eps, 1.0 - eps)
    vectors = np.log(p) - np.log1p(-p)
    correction = np.sum(np.log(p) + np.log1p(-p) + np.log(pipeline.scale_denominator), axis=1)
    return Preprocessed(vectors, correction)


def deprocess(vectors, scale_denominator: float = 256.0) -> np.ndarray:
    """Sigmoid, rescale and round down to 8-bit pixels."""
    p = expit(np.asarray(vectors, dtype=np.float64))
    return np.clip(np.floor(p * scale_denominator), 0, 255).astype(np.uint8)


def write_pgm(path, pixels: np.ndarray, height: int = 28, width: int = 28) -> None:
    """Binary (P5) 8-bit grayscale image."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(height, width)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (width, height))
        f.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    body = raw[pos + 1:]
    if len(body) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def tile_grid(images: np.ndarray, height: int = 28, width: int = 28, cols: int = 10) -> np.ndarray:
    """Arrange flat images row by row into one grid image."""
    n = images.shape[0]
    rows = max(1, -(-n // cols))
    cols = min(cols, max(n, 1))
    grid = np.zeros((rows * height, cols * width), dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        grid[r * height:(r + 1) * height, c * width:(c + 1) * width] = images[i].reshape(height, width)
    return grid


def save_csv(path, rows: np.ndarray, header: str | None = None) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64)) if len(rows) else np.empty((0, 0))
    with open(path, "w") as f:
        if header:
            f.write(header + "\n")
        for row in rows:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path) -> np.ndarray:
    """Rows of comma-separated floats; a non-numeric first line is taken as a header."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines:
        try:
            [float(v) for v in lines[0].split(",")]
        except ValueError:
            lines = lines[1:]
    if not lines:
        raise DataError(f"{path}: no data rows")
    return np.array([[float(v) for v in ln.split(",")] for ln in lines])
