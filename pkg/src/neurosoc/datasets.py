"""Dataset location and a procedural stand-in generator.

Experiments read MNIST-format IDX files from ``NEUROSOC_DATA_DIR`` (or
an explicit directory).  When no real dataset is present, a
deterministic synthetic digit set — procedurally drawn stroke glyphs
with random affine distortion, written as standard IDX files — is
generated once and cached, so the whole pipeline (loader included) runs
unchanged at desk scale.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from .encoding import Dataset, load_idx

__all__ = ["mnist_file_pairs", "generate_synthetic_digits", "load_digits", "default_data_dir"]

_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def default_data_dir() -> Path:
    env = os.environ.get("NEUROSOC_DATA_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "neurosoc"


def mnist_file_pairs(data_dir) -> dict | None:
    """Locate the four IDX files (plain or .gz) under ``data_dir``."""
    data_dir = Path(data_dir)
    found = {}
    for key, name in _FILES.items():
        for candidate in (data_dir / name, data_dir / (name + ".gz")):
            if candidate.is_file():
                found[key] = candidate
                break
        else:
            return None
    return found


_CANVAS = 56  # render large, then downsample for soft strokes


def _glyph(draw: ImageDraw.ImageDraw, digit: int, rng: np.random.Generator, width: int):
    s = _CANVAS

    def pt(x, y):
        return (x * s, y * s)

    def j(a=0.025):
        return float(rng.uniform(-a, a))

    def line(x0, y0, x1, y1):
        draw.line([pt(x0 + j(), y0 + j()), pt(x1 + j(), y1 + j())], fill=255, width=width)

    def oval(x0, y0, x1, y1):
        draw.ellipse([pt(x0 + j(), y0 + j()), pt(x1 + j(), y1 + j())], outline=255, width=width)

    def arc(x0, y0, x1, y1, a0, a1):
        draw.arc([pt(x0 + j(), y0 + j()), pt(x1 + j(), y1 + j())], a0, a1, fill=255, width=width)

    if digit == 0:
        oval(0.28, 0.14, 0.72, 0.86)
    elif digit == 1:
        line(0.5, 0.12, 0.5, 0.88)
        if rng.random() < 0.5:
            line(0.36, 0.3, 0.5, 0.13)
    elif digit == 2:
        arc(0.26, 0.12, 0.74, 0.54, 150, 400)
        line(0.70, 0.45, 0.27, 0.84)
        line(0.27, 0.84, 0.74, 0.84)
    elif digit == 3:
        arc(0.28, 0.12, 0.72, 0.52, 200, 90)
        arc(0.28, 0.48, 0.74, 0.88, 270, 160)
    elif digit == 4:
        line(0.66, 0.12, 0.26, 0.6)
        line(0.26, 0.6, 0.8, 0.6)
        line(0.64, 0.33, 0.64, 0.88)
    elif digit == 5:
        line(0.7, 0.13, 0.32, 0.13)
        line(0.32, 0.13, 0.3, 0.48)
        arc(0.26, 0.42, 0.76, 0.88, 250, 150)
    elif digit == 6:
        line(0.62, 0.12, 0.4, 0.48)
        oval(0.3, 0.46, 0.72, 0.88)
    elif digit == 7:
        line(0.26, 0.14, 0.74, 0.14)
        line(0.74, 0.14, 0.42, 0.88)
    elif digit == 8:
        oval(0.31, 0.12, 0.69, 0.5)
        oval(0.28, 0.5, 0.72, 0.88)
    elif digit == 9:
        oval(0.3, 0.12, 0.7, 0.52)
        line(0.68, 0.38, 0.6, 0.88)
    else:
        raise ValueError(f"no glyph for digit {digit}")


def _affine_coeffs(rng: np.random.Generator) -> list[float]:
    angle = rng.uniform(-0.21, 0.21)
    scale = rng.uniform(0.82, 1.12)
    shear = rng.uniform(-0.14, 0.14)
    tx = rng.uniform(-4.5, 4.5)
    ty = rng.uniform(-4.5, 4.5)
    c = _CANVAS / 2
    cos, sin = np.cos(angle), np.sin(angle)
    rot = np.array([[cos, -sin, 0], [sin, cos, 0], [0, 0, 1]])
    sc = np.array([[scale, shear * scale, 0], [0, scale, 0], [0, 0, 1]])
    center = np.array([[1, 0, c], [0, 1, c], [0, 0, 1]])
    uncenter = np.array([[1, 0, -c + tx], [0, 1, -c + ty], [0, 0, 1]])
    m = center @ rot @ sc @ uncenter
    inv = np.linalg.inv(m)
    return [inv[0, 0], inv[0, 1], inv[0, 2], inv[1, 0], inv[1, 1], inv[1, 2]]


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 uint8 digit image."""
    img = Image.new("L", (_CANVAS, _CANVAS), 0)
    draw = ImageDraw.Draw(img)
    _glyph(draw, digit, rng, width=int(rng.integers(4, 7)))
    img = img.transform((_CANVAS, _CANVAS), Image.AFFINE, _affine_coeffs(rng),
                        resample=Image.BILINEAR)
    img = img.resize((28, 28), Image.LANCZOS)
    img = img.filter(ImageFilter.GaussianBlur(radius=float(rng.uniform(0.3, 0.7))))
    arr = np.asarray(img, dtype=np.float64) * float(rng.uniform(0.8, 1.0))
    return np.clip(arr, 0, 255).astype(np.uint8)


def _write_idx_images(path: Path, images: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, images.shape[0], 28, 28))
        fh.write(images.tobytes())


def _write_idx_labels(path: Path, labels: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


def generate_synthetic_digits(data_dir, n_train: int = 60000, n_test: int = 10000,
                              seed: int = 20190913) -> dict:
    """Write a synthetic digit set in IDX format; deterministic per seed."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    out = {}
    for split, count, ikey, lkey in (("train", n_train, "train_images", "train_labels"),
                                     ("test", n_test, "test_images", "test_labels")):
        labels = rng.integers(0, 10, size=count).astype(np.uint8)
        images = np.empty((count, 28, 28), dtype=np.uint8)
        for i in range(count):
            images[i] = render_digit(int(labels[i]), rng)
        ipath = data_dir / _FILES[ikey]
        lpath = data_dir / _FILES[lkey]
        _write_idx_images(ipath, images)
        _write_idx_labels(lpath, labels)
        out[ikey] = ipath
        out[lkey] = lpath
    (data_dir / "SYNTHETIC").write_text(
        f"procedurally generated stand-in digit set, seed={seed}\n"
    )
    return out


def load_digits(data_dir=None, generate: bool = True,
                n_train: int = 60000, n_test: int = 10000) -> tuple[Dataset, Dataset, str]:
    """Load (train, test) IDX datasets, generating the synthetic stand-in
    when no files are present.  Returns (train, test, origin)."""
    data_dir = Path(data_dir) if data_dir else default_data_dir()
    pairs = mnist_file_pairs(data_dir)
    if pairs is None:
        if not generate:
            raise FileNotFoundError(f"no IDX dataset under {data_dir}")
        pairs = generate_synthetic_digits(data_dir, n_train=n_train, n_test=n_test)
    origin = "synthetic" if (data_dir / "SYNTHETIC").exists() else "mnist"
    train = load_idx(pairs["train_images"], pairs["train_labels"])
    test = load_idx(pairs["test_images"], pairs["test_labels"])
    return train, test, origin
