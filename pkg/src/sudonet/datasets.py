"""Task datasets: synthetic generators plus MNIST (IDX) and PGM corpus loaders."""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .linalg import Matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    inputs: Matrix
    targets: Matrix
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} target rows"
            )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.inputs[rows], self.targets[rows], self.kind, dict(self.meta))


def checkerboard_label(x, y, board: int = 4) -> np.ndarray:
    """+1 on even-parity cells, -1 on odd; the cell (0, 0) touches (-1, -1)."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    cx = np.clip(np.floor((x + 1.0) / 2.0 * board), 0, board - 1)
    cy = np.clip(np.floor((y + 1.0) / 2.0 * board), 0, board - 1)
    return np.where((cx + cy) % 2 == 0, 1.0, -1.0)


def gen_checkerboard(n_train: int = 5000, board: int = 4, seed: int = 0) -> Dataset:
    if board < 2:
        raise ValueError(f"board must be >= 2, got {board}")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-1.0, 1.0, size=(n_train, 2))
    labels = checkerboard_label(xy[:, 0], xy[:, 1], board)
    return Dataset(xy, labels.reshape(-1, 1), "checkerboard", {"board": board})


def gen_checkerboard_testgrid(board: int = 4, side: int = 500) -> Dataset:
    """``side`` x ``side`` evenly spaced points covering [-1, 1]^2, endpoints included."""
    g = np.linspace(-1.0, 1.0, side)
    yy, xx = np.meshgrid(g, g, indexing="ij")
    xy = np.column_stack([xx.ravel(), yy.ravel()])
    labels = checkerboard_label(xy[:, 0], xy[:, 1], board)
    return Dataset(xy, labels.reshape(-1, 1), "checkerboard", {"board": board, "grid": (side, side)})


def gen_parabola(n: int = 200) -> Dataset:
    if n < 2:
        raise ValueError("parabola needs n >= 2")
    x = np.linspace(-1.0, 1.0, n).reshape(-1, 1)
    return Dataset(x, x * x, "parabola")


def sincos(x, y):
    return np.sin(np.asarray(x) * 10.0) * np.cos(np.asarray(y) * 5.0)


def gen_sincos(n_side: int = 100) -> Dataset:
    """Samples of sin(10x)·cos(5y) on an ``n_side`` x ``n_side`` grid over [-1, 1]^2."""
    if n_side < 2:
        raise ValueError("n_side must be >= 2")
    g = np.linspace(-1.0, 1.0, n_side)
    yy, xx = np.meshgrid(g, g, indexing="ij")
    xy = np.column_stack([xx.ravel(), yy.ravel()])
    z = sincos(xy[:, 0], xy[:, 1]).reshape(-1, 1)
    return Dataset(xy, z, "regression", {"grid": (n_side, n_side)})


# --- memorization -----------------------------------------------------------

def pixel_coordinates(height: int, width: int) -> Matrix:
    """Row-major (x, y) coordinates of every pixel, each scaled to [-1, 1]."""
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def intensity_to_unit(pixels) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / 255.0 * 2.0 - 1.0


def unit_to_intensity(values) -> np.ndarray:
    """Map [-1, 1] back to 0..255, clamped, rounding halves away from zero."""
    v = (np.asarray(values, dtype=np.float64) + 1.0) / 2.0 * 255.0
    v = np.clip(v, 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8)


def gen_memorization(image: np.ndarray) -> Dataset:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"memorization needs a grayscale image, got shape {image.shape}")
    h, w = image.shape
    return Dataset(
        pixel_coordinates(h, w),
        intensity_to_unit(image).reshape(-1, 1),
        "memorize",
        {"image_shape": (h, w)},
    )


def image_from_targets(values, shape: tuple[int, int]) -> np.ndarray:
    return unit_to_intensity(values).reshape(shape)


# --- MNIST IDX ------------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatch(IdxError):
    pass


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def parse_idx(data: bytes, expected_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file into an array of its declared shape."""
    if len(data) < 4:
        raise IdxTruncatedError("IDX header truncated")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise IdxMagicError(f"bad IDX magic 0x{magic:08X}, expected 0x{expected_magic:08X}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxTruncatedError("IDX dimension header truncated")
    dims = struct.unpack(f">{ndim}I", data[4:head])
    need = int(np.prod(dims))
    if len(data) - head < need:
        raise IdxTruncatedError(f"IDX payload truncated: {len(data) - head} of {need} bytes")
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=head).reshape(dims)


def load_mnist(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Images scaled to [0, 1] as N x 784; labels one-hot as N x 10."""
    images = parse_idx(_read_bytes(images_path), IDX_IMAGE_MAGIC)
    labels = parse_idx(_read_bytes(labels_path), IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise IdxError(f"label value {labels.max()} out of range 0..9")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    onehot = np.zeros((labels.shape[0], 10))
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    return Dataset(x, onehot, "mnist", {"image_shape": images.shape[1:]})


# --- autoencoding corpus -------------------------------------------------------

def center_crop(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    return img[top : top + s, left : left + s]


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (output corners hit input corners)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape

    def coords(n_out, n_in):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out)
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    ys, xs = coords(out_h, h), coords(out_w, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bottom = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


def load_image_dir(path: str | Path, size: int = 32) -> Dataset:
    """Load every ``*.pgm`` under ``path`` as a flattened ``size`` x ``size`` vector in [-1, 1].

    Unreadable files are skipped with a warning; an empty result is an error.
    Files are taken in sorted name order.
    """
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"image directory not found: {path}")
    rows, names = [], []
    for f in sorted(path.glob("*.pgm")):
        try:
            img = netpbm.read(f)
        except (netpbm.NetpbmError, OSError) as exc:
            log.warning("skipping %s: %s", f, exc)
            continue
        if img.ndim != 2:
            log.warning("skipping %s: not grayscale", f)
            continue
        small = resize_bilinear(center_crop(img), size, size)
        rows.append(intensity_to_unit(small).ravel())
        names.append(f.name)
    if not rows:
        raise ValueError(f"no usable PGM images in {path}")
    x = np.vstack(rows)
    return Dataset(x, x.copy(), "autoencode", {"image_shape": (size, size), "files": names})


def split(ds: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random train/test split."""
    n = len(ds)
    n_test = int(round(n * test_fraction))
    if not 0 < n_test < n:
        raise ValueError(f"cannot split {n} rows with test fraction {test_fraction}")
    order = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))
