"""Target signals, coordinate datasets, positional encoding and metrics.

Images are RGB with values in [0,1]; occupancy grids are binary voxel
lattices. Coordinates are normalized per axis to [-1,1] with endpoints
included (a single-sample axis maps to 0).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorruptDataError

OCC_MAGIC = b"OCC1"


@dataclass(frozen=True)
class PositionalEncodingSpec:
    """Fourier feature lift with `frequencies` octaves per input component."""

    frequencies: int = 10

    def __post_init__(self):
        if self.frequencies < 0:
            raise ValueError("frequencies must be non-negative")

    def encoded_dim(self, in_dim: int) -> int:
        return in_dim * (1 + 2 * self.frequencies)


def encode(coords: np.ndarray, spec: PositionalEncodingSpec | None) -> np.ndarray:
    """Lift raw coordinates to (coords, sin(2^f pi c), cos(2^f pi c))_{f<F}.

    Raw coordinates are kept in the output, so the encoded dimension is
    d*(1+2F). Accepts a single coordinate (d,) or a batch (N, d).
    """
    coords = np.asarray(coords, dtype=np.float64)
    if spec is None or spec.frequencies == 0:
        return coords
    single = coords.ndim == 1
    c = coords[None, :] if single else coords
    parts = [c]
    for f in range(spec.frequencies):
        arg = (2.0 ** f) * math.pi * c
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


class ImageSignal:
    """An RGB image held as float64 values in [0,1], shape (height, width, 3)."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3:
            raise ValueError("image values must have shape (height, width, 3)")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("image values must lie in [0,1]")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def pixel_count(self) -> int:
        return self.height * self.width


class OccupancySignal:
    """A voxel grid, shape (nx, ny, nz); values may be binary or real-valued."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("occupancy values must have shape (nx, ny, nz)")
        self.values = values

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class CoordinateDataset:
    """Raw (pre-encoding) coordinates in [-1,1]^d paired with target vectors."""

    coords: np.ndarray
    targets: np.ndarray
    encoding: PositionalEncodingSpec | None = None

    def __post_init__(self):
        if self.coords.shape[0] != self.targets.shape[0]:
            raise ValueError("coords and targets must have equal length")

    def __len__(self) -> int:
        return self.coords.shape[0]


def grid_axis(n: int) -> np.ndarray:
    """n samples of [-1,1]: index i -> -1 + 2i/(n-1); n == 1 -> [0]."""
    if n < 1:
        raise ValueError("axis length must be >= 1")
    if n == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(n, dtype=np.float64) / (n - 1)


def grid_coords(shape: tuple[int, ...]) -> np.ndarray:
    """Full coordinate lattice for `shape`, C-order (last axis fastest)."""
    axes = [grid_axis(n) for n in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def image_dataset(image: ImageSignal, encoding: PositionalEncodingSpec | None = None) -> CoordinateDataset:
    coords = grid_coords((image.height, image.width))
    targets = image.values.reshape(-1, 3)
    return CoordinateDataset(coords=coords, targets=targets, encoding=encoding)


def occupancy_dataset(occ: OccupancySignal, encoding: PositionalEncodingSpec | None = None) -> CoordinateDataset:
    coords = grid_coords(occ.dims)
    targets = occ.values.reshape(-1, 1)
    return CoordinateDataset(coords=coords, targets=targets, encoding=encoding)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB against a unit peak; +inf when equal."""
    av = a.values if isinstance(a, ImageSignal) else np.asarray(a, dtype=np.float64)
    bv = b.values if isinstance(b, ImageSignal) else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError("psnr requires equal shapes")
    mse = float(np.mean((av - bv) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def iou(pred, gt, threshold: float = 0.5) -> float:
    """Intersection over union of occupied sets; an empty union counts as 1."""
    pv = pred.values if isinstance(pred, OccupancySignal) else np.asarray(pred, dtype=np.float64)
    gv = gt.values if isinstance(gt, OccupancySignal) else np.asarray(gt, dtype=np.float64)
    if pv.shape != gv.shape:
        raise ValueError("iou requires equal shapes")
    p = pv > threshold
    g = gv > threshold
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """[0,1] floats to bytes: clamp, then round half up."""
    v = np.clip(values, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageSignal:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _load_ppm(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return ImageSignal(arr / 255.0)


def save_image(image: ImageSignal, path) -> None:
    path = Path(path)
    data = to_uint8(image.values)
    if path.suffix.lower() == ".ppm":
        with open(path, "wb") as fh:
            fh.write(b"P6\n%d %d\n255\n" % (image.width, image.height))
            fh.write(data.tobytes())
        return
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def _load_ppm(path: Path) -> ImageSignal:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # header tokens are whitespace separated; '#' starts a comment
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P6":
        raise OSError(f"{path}: not a binary P6 PPM file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise OSError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace after maxval
    need = width * height * 3
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise OSError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(height, width, 3)
    return ImageSignal(arr / 255.0)


def save_occupancy(occ: OccupancySignal, path) -> None:
    nx, ny, nz = occ.dims
    if min(nx, ny, nz) < 1:
        raise ValueError("occupancy dims must be positive")
    bits = (occ.values > 0.5).ravel(order="F")  # x varies fastest on disk
    packed = np.packbits(bits.astype(np.uint8), bitorder="little")
    with open(path, "wb") as fh:
        fh.write(OCC_MAGIC)
        fh.write(struct.pack("<III", nx, ny, nz))
        fh.write(packed.tobytes())


def load_occupancy(path) -> OccupancySignal:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != OCC_MAGIC:
        raise CorruptDataError(f"{path}: not an OCC1 file")
    nx, ny, nz = struct.unpack("<III", data[4:16])
    if min(nx, ny, nz) < 1:
        raise ValueError(f"{path}: occupancy dims must be positive")
    count = nx * ny * nz
    need = (count + 7) // 8
    payload = data[16:16 + need]
    if len(payload) < need:
        raise CorruptDataError(f"{path}: truncated occupancy payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")[:count]
    values = bits.astype(np.float64).reshape((nx, ny, nz), order="F")
    return OccupancySignal(values)
