"""Reference integer GEMM, direct convolution and software im2col lowering.

Feature maps are ``(H, W, C)`` int8 arrays (channel-minor). Convolution
weights are ``(Cout, k, k, Cin)``.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import BadGeometry, DimensionMismatch, ParseError

INT32_MAX = 2**31 - 1
KERNEL_SIZES = (1, 3, 5)


def _int32_exact(x: np.ndarray) -> np.ndarray:
    if x.size and (x.max() > INT32_MAX or x.min() < -(2**31)):
        raise OverflowError("result exceeds the 32-bit accumulator range")
    return x.astype(np.int32)


def gemm_ref(a, w) -> np.ndarray:
    """Exact int8 x int8 -> int32 matrix product."""
    a = np.asarray(a)
    w = np.asarray(w)
    if a.ndim != 2 or w.ndim != 2:
        raise DimensionMismatch("gemm operands must be 2-D")
    if a.shape[1] != w.shape[0]:
        raise DimensionMismatch(f"inner dimensions differ: {a.shape} x {w.shape}")
    return _int32_exact(a.astype(np.int64) @ w.astype(np.int64))


def output_size(size: int, k: int, s: int, p: int) -> int:
    return (size + 2 * p - k) // s + 1


def _check_geometry(fm: np.ndarray, k: int, s: int, p: int, kernels=KERNEL_SIZES):
    if fm.ndim != 3:
        raise BadGeometry(f"feature map must be (H, W, C), got shape {fm.shape}")
    if k not in kernels:
        raise BadGeometry(f"kernel size {k} not in {kernels}")
    if s < 1 or p < 0:
        raise BadGeometry(f"invalid stride {s} or padding {p}")
    oh = output_size(fm.shape[0], k, s, p)
    ow = output_size(fm.shape[1], k, s, p)
    if oh <= 0 or ow <= 0:
        raise BadGeometry(f"empty output for {fm.shape[:2]} with k={k}, s={s}, p={p}")
    return oh, ow


def im2col_lower(fm, k: int, s: int = 1, p: int = 0) -> np.ndarray:
    """Rows are output pixels (row-major); columns are (ky, kx, channel)."""
    fm = np.asarray(fm)
    oh, ow = _check_geometry(fm, k, s, p)
    c = fm.shape[2]
    padded = np.pad(fm, ((p, p), (p, p), (0, 0)))
    out = np.empty((oh, ow, k, k, c), dtype=fm.dtype)
    for ky in range(k):
        for kx in range(k):
            out[:, :, ky, kx, :] = padded[ky : ky + s * oh : s, kx : kx + s * ow : s, :]
    return out.reshape(oh * ow, k * k * c)


def conv_ref(fm, weights, s: int = 1, p: int = 0) -> np.ndarray:
    """Direct cross-correlation; returns an (OH, OW, Cout) int32 map."""
    fm = np.asarray(fm)
    weights = np.asarray(weights)
    if weights.ndim != 4 or weights.shape[1] != weights.shape[2]:
        raise BadGeometry(f"weights must be (Cout, k, k, Cin), got {weights.shape}")
    k = weights.shape[1]
    oh, ow = _check_geometry(fm, k, s, p, kernels=range(1, k + 1, 2))
    if weights.shape[3] != fm.shape[2]:
        raise DimensionMismatch("weight input channels differ from feature map channels")
    padded = np.pad(fm.astype(np.int64), ((p, p), (p, p), (0, 0)))
    w = weights.astype(np.int64)
    acc = np.zeros((oh, ow, weights.shape[0]), dtype=np.int64)
    for ky in range(k):
        for kx in range(k):
            window = padded[ky : ky + s * oh : s, kx : kx + s * ow : s, :]
            acc += np.einsum("hwc,oc->hwo", window, w[:, ky, kx, :])
    return _int32_exact(acc)


def conv_weights_to_gemm(weights) -> np.ndarray:
    """(Cout, k, k, Cin) -> (k*k*Cin, Cout), matching im2col column order."""
    weights = np.asarray(weights)
    return weights.reshape(weights.shape[0], -1).T.copy()


# -------------------------------------------------------- raw matrix files
#
# header: magic "VMAT", dtype tag (u8), ndim (u8), reserved (u16),
# then ndim u32 dims, then little-endian row-major data.

_MAGIC = b"VMAT"
_DTYPES = {1: np.dtype("i1"), 4: np.dtype("<i4")}
_TAGS = {v: k for k, v in _DTYPES.items()}


def dumps_matrix(arr) -> bytes:
    arr = np.asarray(arr)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
    if dt not in _TAGS:
        raise ValueError(f"unsupported dtype {arr.dtype}; use int8 or int32")
    head = struct.pack("<4sBBH", _MAGIC, _TAGS[dt], arr.ndim, 0)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dt).tobytes()


def loads_matrix(data: bytes) -> np.ndarray:
    if len(data) < 8 or data[:4] != _MAGIC:
        raise ParseError("not a VMAT matrix file")
    _, tag, ndim, _ = struct.unpack_from("<4sBBH", data)
    if tag not in _DTYPES:
        raise ParseError(f"unknown dtype tag {tag}")
    shape = struct.unpack_from(f"<{ndim}I", data, 8)
    dt = _DTYPES[tag]
    offset = 8 + 4 * ndim
    count = int(np.prod(shape, dtype=np.int64))
    if len(data) - offset != count * dt.itemsize:
        raise ParseError("payload size does not match header dims")
    return np.frombuffer(data, dtype=dt, offset=offset).reshape(shape).copy()


def load_matrix(path) -> np.ndarray:
    """Read a VMAT file, or a ``.npy`` file as a convenience."""
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    with open(path, "rb") as fh:
        return loads_matrix(fh.read())


def save_matrix(arr, path) -> None:
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, arr)
        return
    with open(path, "wb") as fh:
        fh.write(dumps_matrix(arr))
