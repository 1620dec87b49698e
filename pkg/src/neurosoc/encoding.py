"""Dataset ingestion and spike encoding.

Images come from IDX files (big-endian dimensions, optionally gzipped);
pixels are normalized by the maximum value 256.  Each pixel becomes an
independent Bernoulli spike per time step with probability
``pixel * max_rate * dt`` from a counter-based (Philox) stream keyed by
(seed, sample index), so encoding is reproducible and stateless across
samples.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Sample",
    "Dataset",
    "EncoderParams",
    "IdxFormatError",
    "load_idx",
    "poisson_encode",
    "sample_rng",
]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file."""


@dataclass(frozen=True)
class Sample:
    pixels: np.ndarray  # flattened, values in [0, 1)
    label: int


class Dataset:
    """Loaded image set: pixels [N, D] float64 in [0, 1) plus labels."""

    def __init__(self, pixels: np.ndarray, labels: np.ndarray):
        if pixels.shape[0] != labels.shape[0]:
            raise IdxFormatError(
                f"image count {pixels.shape[0]} != label count {labels.shape[0]}"
            )
        self.pixels = pixels
        self.labels = labels

    def __len__(self):
        return self.pixels.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.pixels[i], int(self.labels[i]))

    def subset(self, start: int, count: int) -> "Dataset":
        return Dataset(self.pixels[start:start + count], self.labels[start:start + count])

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _open_maybe_gz(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise IdxFormatError(f"truncated file while reading {what}")
    return blob


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair, normalizing pixels by 256."""
    with _open_maybe_gz(images_path) as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != _IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic 0x{magic:08x} (expected 0x{_IMAGE_MAGIC:08x})"
            )
        raw = _read_exact(fh, count * rows * cols, "pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    pixels = pixels.astype(np.float64) / 256.0
    with _open_maybe_gz(labels_path) as fh:
        magic, lcount = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != _LABEL_MAGIC:
            raise IdxFormatError(
                f"bad label magic 0x{magic:08x} (expected 0x{_LABEL_MAGIC:08x})"
            )
        labels = np.frombuffer(_read_exact(fh, lcount, "label data"), dtype=np.uint8)
    if lcount != count:
        raise IdxFormatError(f"image count {count} != label count {lcount}")
    return Dataset(pixels, labels.astype(np.int64))


@dataclass(frozen=True)
class EncoderParams:
    """Poisson encoder constants.

    The defaults put the busiest pixel at p ~ 0.25 per step (a spike
    roughly every 4 steps).
    """

    dt: float = 0.001
    n_steps: int = 350
    max_rate: float = 255.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.n_steps <= 0 or self.max_rate < 0:
            raise ValueError("dt, n_steps must be positive; max_rate >= 0")
        if self.max_rate * self.dt > 1.0:
            raise ValueError("max_rate * dt must be <= 1 (Bernoulli probability)")


def sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Per-sample derived stream: Philox keyed by (seed, sample index)."""
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1),
                                                     sample_index & (2**64 - 1)]))


def poisson_encode(pixels, params: EncoderParams, sample_index: int = 0) -> np.ndarray:
    """Encode one sample into a [n_steps, width] uint8 spike raster.

    Bit (t, i) is a Bernoulli draw with p = pixel_i * max_rate * dt;
    identical (seed, sample_index) always yields identical bits.
    """
    if isinstance(pixels, Sample):
        pixels = pixels.pixels
    pixels = np.asarray(pixels, dtype=np.float64)
    p = pixels * (params.max_rate * params.dt)
    if p.max(initial=0.0) > 1.0:
        raise ValueError("spike probability above 1; lower max_rate or dt")
    rng = sample_rng(params.rng_seed, sample_index)
    draws = rng.random((params.n_steps, pixels.size))
    return (draws < p).astype(np.uint8)
