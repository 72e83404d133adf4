"""Dataset ingestion (IDX), synthetic task generation, augmentation.

IDX is the classic big-endian binary container: image files carry
magic 0x00000803 and dims (N, H, W) as u32; label files carry magic
0x00000801 and N.  Pixels are unsigned bytes, scaled to [0,1] on load
and optionally standardized per channel.

The synthetic task is oriented-grating classification: class k's
template is a fixed sinusoidal grating at angle pi*k/num_classes, and
samples are template + noise*N(0,1) per pixel.  At noise=0 every class
collapses onto its template, so a linear probe separates the training
set perfectly; for noise>0 the Bayes-optimal rule is the nearest
template and its accuracy drops well below 1 (the matched-filter bound
Phi(d/(2*noise)) over nearest template pairs; roughly 0.87 for the
default amplitude at noise=0.5).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IdxParseError, ShapeError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# synthetic grating parameters (frozen; the regression band depends on them)
GRATING_CYCLES = 2.5
GRATING_PHASE = 0.7
GRATING_AMPLITUDE = 0.11


@dataclass
class Dataset:
    images: np.ndarray  # float32 (N, C, H, W)
    labels: np.ndarray  # int64 (N,)
    split: str = "train"
    normalization: tuple[np.ndarray, np.ndarray] | None = None  # per-channel (mean, std)
    num_classes: int = 0

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N,C,H,W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match {self.images.shape[0]} images"
            )
        if self.num_classes == 0:
            self.num_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError("labels must lie in [0, num_classes)")

    def __len__(self):
        return self.images.shape[0]


def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    std = np.where(std == 0, 1.0, std)
    return mean.astype(np.float32), std.astype(np.float32)


def standardize(images: np.ndarray, stats: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    mean, std = stats
    return ((images - mean[None, :, None, None]) / std[None, :, None, None]).astype(np.float32)


# ---------------------------------------------------------------------------
# IDX


def _read_u32s(buf: bytes, offset: int, count: int, path: str):
    end = offset + 4 * count
    if end > len(buf):
        raise IdxParseError(f"{path}: truncated header", offset)
    return struct.unpack_from(f">{count}I", buf, offset)


def load_idx(
    images_path,
    labels_path,
    split: str = "train",
    standardize_pixels: bool = True,
    normalization: tuple[np.ndarray, np.ndarray] | None = None,
) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0,1]; when ``standardize_pixels`` is set they
    are then standardized per channel, either with the provided
    ``normalization`` stats (e.g. the training split's) or with stats
    computed from this file.
    """
    with open(images_path, "rb") as fh:
        ibuf = fh.read()
    with open(labels_path, "rb") as fh:
        lbuf = fh.read()

    (imagic,) = _read_u32s(ibuf, 0, 1, str(images_path))
    if imagic != IDX_IMAGE_MAGIC:
        raise IdxParseError(
            f"{images_path}: bad image magic 0x{imagic:08x} (want 0x{IDX_IMAGE_MAGIC:08x})", 0
        )
    n, h, w = _read_u32s(ibuf, 4, 3, str(images_path))
    want = 16 + n * h * w
    if len(ibuf) != want:
        raise IdxParseError(
            f"{images_path}: payload holds {len(ibuf) - 16} bytes for {n} {h}x{w} images",
            min(len(ibuf), want),
        )

    (lmagic,) = _read_u32s(lbuf, 0, 1, str(labels_path))
    if lmagic != IDX_LABEL_MAGIC:
        raise IdxParseError(
            f"{labels_path}: bad label magic 0x{lmagic:08x} (want 0x{IDX_LABEL_MAGIC:08x})", 0
        )
    (ln,) = _read_u32s(lbuf, 4, 1, str(labels_path))
    if len(lbuf) != 8 + ln:
        raise IdxParseError(f"{labels_path}: payload holds {len(lbuf) - 8} labels for header {ln}",
                            min(len(lbuf), 8 + ln))
    if ln != n:
        raise IdxParseError(
            f"{labels_path}: {ln} labels for {n} images", 4
        )

    pixels = np.frombuffer(ibuf, dtype=np.uint8, offset=16).reshape(n, 1, h, w)
    images = (pixels.astype(np.float32) / np.float32(255.0))
    labels = np.frombuffer(lbuf, dtype=np.uint8, offset=8).astype(np.int64)

    stats = None
    if standardize_pixels:
        stats = normalization if normalization is not None else channel_stats(images)
        images = standardize(images, stats)
    return Dataset(images=images, labels=labels, split=split, normalization=stats)


def write_idx(images01: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write [0,1]-scaled single-channel images back to an IDX pair.

    Inverse of :func:`load_idx` with ``standardize_pixels=False``: pixel
    bytes are recovered by rounding x*255, so a load/write round trip
    is byte-lossless.
    """
    if images01.ndim != 4 or images01.shape[1] != 1:
        raise ShapeError(f"write_idx expects (N,1,H,W) images, got {images01.shape}")
    n, _, h, w = images01.shape
    pixels = np.rint(np.clip(images01, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# synthetic gratings


def grating_templates(num_classes: int, image_size: int) -> np.ndarray:
    """(num_classes, 1, S, S) fixed class templates."""
    coords = (np.arange(image_size, dtype=np.float64) + 0.5) / image_size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    templates = np.empty((num_classes, 1, image_size, image_size), dtype=np.float64)
    for k in range(num_classes):
        theta = np.pi * k / num_classes
        u = xx * np.cos(theta) + yy * np.sin(theta)
        templates[k, 0] = GRATING_AMPLITUDE * np.sin(
            2.0 * np.pi * GRATING_CYCLES * u + GRATING_PHASE
        )
    return templates.astype(np.float32)


def synth_classification(
    n: int,
    num_classes: int,
    noise: float,
    seed: int,
    image_size: int = 16,
    split: str = "train",
    standardize_pixels: bool = True,
    normalization: tuple[np.ndarray, np.ndarray] | None = None,
) -> Dataset:
    """Deterministic oriented-grating classification set."""
    if n < num_classes:
        raise ConfigError(f"need n >= num_classes, got n={n}, num_classes={num_classes}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    templates = grating_templates(num_classes, image_size)
    images = templates[labels].copy()
    if noise > 0:
        images += noise * rng.standard_normal(images.shape, dtype=np.float32)
    stats = None
    if standardize_pixels:
        stats = normalization if normalization is not None else channel_stats(images)
        images = standardize(images, stats)
    return Dataset(images=images, labels=labels, split=split,
                   normalization=stats, num_classes=num_classes)


def synth_train_val(
    n: int, num_classes: int, noise: float, seed: int,
    image_size: int = 16, val_fraction: float = 0.2,
) -> tuple[Dataset, Dataset]:
    """Split one generated pool into train/val, standardized with train stats."""
    if not (0.0 < val_fraction < 1.0):
        raise ConfigError(f"val_fraction must lie in (0,1), got {val_fraction}")
    pool = synth_classification(
        n, num_classes, noise, seed, image_size=image_size, standardize_pixels=False
    )
    n_val = max(1, int(round(n * val_fraction)))
    n_train = n - n_val
    if n_train < 1:
        raise ConfigError("val_fraction leaves no training data")
    stats = channel_stats(pool.images[:n_train])
    train = Dataset(
        images=standardize(pool.images[:n_train], stats),
        labels=pool.labels[:n_train],
        split="train", normalization=stats, num_classes=num_classes,
    )
    val = Dataset(
        images=standardize(pool.images[n_train:], stats),
        labels=pool.labels[n_train:],
        split="val", normalization=stats, num_classes=num_classes,
    )
    return train, val


# ---------------------------------------------------------------------------
# augmentation


def horizontal_flip(images: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Flip the masked images left-right. Applying twice restores the input."""
    out = images.copy()
    out[mask] = out[mask][:, :, :, ::-1]
    return out


def augment(
    batch: np.ndarray,
    crop_padding: int = 4,
    flip_prob: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pad-and-random-crop back to size, then random horizontal flips.

    Training-time only.  Consumes the rng in a fixed order (crop
    offsets first, then flip draws) so runs are reproducible.
    """
    if crop_padding == 0 and flip_prob == 0.0:
        return batch
    if rng is None:
        raise ConfigError("augment needs an rng when any augmentation is enabled")
    n, c, h, w = batch.shape
    out = batch
    if crop_padding > 0:
        p = crop_padding
        padded = np.pad(batch, ((0, 0), (0, 0), (p, p), (p, p)))
        offs = rng.integers(0, 2 * p + 1, size=(n, 2))
        out = np.empty_like(batch)
        for i in range(n):
            oy, ox = offs[i]
            out[i] = padded[i, :, oy : oy + h, ox : ox + w]
    if flip_prob > 0.0:
        mask = rng.random(n) < flip_prob
        out = horizontal_flip(out, mask)
    return out
