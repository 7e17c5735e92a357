"""Dense tensor types, the CFT1 file format, and small numeric kernels.

Everything downstream consumes these types. Instances are immutable after
construction (the numpy buffers are marked read-only), so they can be shared
freely across threads.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from cfedit.errors import DegenerateInputError, FormatError

MAGIC = b"CFT1"

_HEADER_DIM = struct.Struct("<I")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMap:
    """H x W x d feature tensor; one d-vector per spatial cell."""

    height: int
    width: int
    channels: int
    data: np.ndarray  # float32, shape (H, W, d), row-major

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise FormatError("FeatureMap dims must be >= 1, got "
                              f"({self.height}, {self.width}, {self.channels})")
        a = np.asarray(self.data, dtype=np.float32)
        if a.size != self.height * self.width * self.channels:
            raise FormatError(
                f"FeatureMap payload has {a.size} values, dims require "
                f"{self.height * self.width * self.channels}")
        if not np.isfinite(a).all():
            raise FormatError("FeatureMap data contains non-finite values")
        a = a.reshape(self.height, self.width, self.channels)
        object.__setattr__(self, "data", _freeze(a))

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    @property
    def cells(self) -> np.ndarray:
        """Flattened (H*W, d) view; cell index = row * W + col."""
        return self.data.reshape(self.n_cells, self.channels)

    def cell_vector(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n_cells:
            raise IndexError(f"cell index {i} out of range for {self.n_cells} cells")
        return self.cells[i]


@dataclass(frozen=True)
class GridMap:
    """H x W scalar map (segmentation matrix, attribution map, ...)."""

    height: int
    width: int
    data: np.ndarray  # float32, shape (H, W)
    binary: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise FormatError(f"GridMap dims must be >= 1, got ({self.height}, {self.width})")
        a = np.asarray(self.data, dtype=np.float32)
        if a.size != self.height * self.width:
            raise FormatError(
                f"GridMap payload has {a.size} values, dims require {self.height * self.width}")
        if not np.isfinite(a).all():
            raise FormatError("GridMap data contains non-finite values")
        a = a.reshape(self.height, self.width)
        if self.binary and not np.isin(a, (0.0, 1.0)).all():
            raise FormatError("GridMap flagged binary but holds values outside {0, 1}")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(self.n_cells)


def write_tensor(path, tensor: FeatureMap | GridMap) -> None:
    """Write a tensor as CFT1: magic, u32 ndim, u32 dims, float32 payload."""
    if isinstance(tensor, FeatureMap):
        dims = (tensor.height, tensor.width, tensor.channels)
    else:
        dims = (tensor.height, tensor.width)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER_DIM.pack(len(dims)))
        for d in dims:
            fh.write(_HEADER_DIM.pack(d))
        fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def read_tensor(path) -> FeatureMap | GridMap:
    """Read a CFT1 file; 2-d payloads load as GridMap, 3-d as FeatureMap."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise FormatError(f"{path}: truncated header (ndim)")
        ndim = _HEADER_DIM.unpack(raw)[0]
        if ndim not in (2, 3):
            raise FormatError(f"{path}: ndim must be 2 or 3, got {ndim}")
        dims = []
        for k in range(ndim):
            raw = fh.read(4)
            if len(raw) != 4:
                raise FormatError(f"{path}: truncated header (dims[{k}])")
            dims.append(_HEADER_DIM.unpack(raw)[0])
        expected = math.prod(dims)
        payload = fh.read()
    if len(payload) != 4 * expected:
        raise FormatError(
            f"{path}: payload holds {len(payload) // 4} float32 values, "
            f"dims {tuple(dims)} require {expected}")
    data = np.frombuffer(payload, dtype="<f4").copy()
    if not np.isfinite(data).all():
        raise FormatError(f"{path}: payload contains non-finite values")
    if ndim == 2:
        return GridMap(dims[0], dims[1], data)
    return FeatureMap(dims[0], dims[1], dims[2], data)


def masked_softmax(w: np.ndarray) -> np.ndarray:
    """Softmax over the non-zero entries of w; zeros stay exactly zero.

    Raises DegenerateInputError when every entry is zero.
    """
    w = np.asarray(w, dtype=np.float64)
    nz = w != 0.0
    if not nz.any():
        raise DegenerateInputError("masked_softmax: all entries are zero")
    out = np.zeros_like(w)
    vals = w[nz]
    vals = vals - vals.max()  # overflow guard; softmax is shift invariant
    e = np.exp(vals)
    out[nz] = e / e.sum()
    return out


def bilinear_resize(m: GridMap, out_h: int, out_w: int) -> GridMap:
    """Resize with bilinear interpolation, half-pixel-center convention.

    Source coordinate for output index i is (i + 0.5) * in/out - 0.5, clamped
    to the valid range, so equal dims reproduce the input exactly and constant
    maps stay constant.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be >= 1, got ({out_h}, {out_w})")
    if out_h == m.height and out_w == m.width:
        return GridMap(out_h, out_w, m.data.copy(), binary=m.binary)
    src = m.data.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * (m.height / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (m.width / out_w) - 0.5
    ys = np.clip(ys, 0.0, m.height - 1.0)
    xs = np.clip(xs, 0.0, m.width - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, m.height - 1)
    x1 = np.minimum(x0 + 1, m.width - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    return GridMap(out_h, out_w, out.astype(np.float32))


def binarize(m: GridMap, threshold: float = 0.5) -> GridMap:
    """Threshold a map to {0, 1}: value > threshold becomes 1."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {threshold}")
    data = (m.data > threshold).astype(np.float32)
    return GridMap(m.height, m.width, data, binary=True)


def cell_dot(a: FeatureMap, i: int, b: FeatureMap, j: int) -> float:
    """Dot product of cell i of a with cell j of b."""
    if a.channels != b.channels:
        raise ValueError(f"channel mismatch: {a.channels} vs {b.channels}")
    va = a.cell_vector(i).astype(np.float64)
    vb = b.cell_vector(j).astype(np.float64)
    return float(va @ vb)
