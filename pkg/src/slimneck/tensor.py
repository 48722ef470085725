"""NCHW float32 tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n, c, h, w)`` and
dtype ``float32``. Every function here is pure: inputs are never written to.

Dense convolution has two paths that produce byte-identical results:

* :func:`conv2d_naive` -- the direct definition, one shifted-slice
  multiply-accumulate per kernel tap.
* :func:`conv2d_im2col` -- patch matrix plus a compiled GEMM.

Both accumulate each output element in the same order (input channel, then
kernel row, then kernel column) in float32, starting from zero, and add the
bias last. That shared order is what makes the two paths interchangeable.
"""

from __future__ import annotations

import contextlib
import contextvars
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, GeometryError, ShapeError

__all__ = [
    "ConvParams",
    "OpCounter",
    "as_tensor",
    "batch_norm_inference",
    "broadcast_scale",
    "channel_pixel_stats",
    "channel_shuffle",
    "concat_channels",
    "conv2d",
    "conv2d_im2col",
    "conv2d_naive",
    "count_ops",
    "decode_tensor",
    "directional_pool",
    "elementwise",
    "encode_tensor",
    "global_avg_pool",
    "global_max_pool",
    "load_tensor",
    "maxpool2d",
    "save_tensor",
    "split_channels",
    "upsample_nearest2x",
    "use_conv_path",
]

DTYPE = np.float32


def as_tensor(x, name="x"):
    """Return ``x`` as a C-contiguous float32 NCHW array, checking the rank."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeError(name, f"expected a 4-D NCHW tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(name, f"every dimension must be >= 1, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvParams:
    """Geometry of one convolution: square odd kernel, "same" padding."""

    in_c: int
    out_c: int
    k: int = 1
    stride: int = 1
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self):
        if self.in_c < 1 or self.out_c < 1:
            raise ShapeError("channels", f"in_c={self.in_c}, out_c={self.out_c} must be >= 1")
        if self.k < 1 or self.k % 2 == 0:
            raise ShapeError("k", f"kernel size must be odd and >= 1, got {self.k}")
        if self.stride < 1:
            raise ShapeError("stride", f"must be >= 1, got {self.stride}")
        if self.groups < 1 or self.in_c % self.groups or self.out_c % self.groups:
            raise ShapeError(
                "groups", f"{self.groups} must divide in_c={self.in_c} and out_c={self.out_c}"
            )

    @property
    def padding(self):
        return self.k // 2

    @property
    def weight_shape(self):
        return (self.out_c, self.in_c // self.groups, self.k, self.k)

    @property
    def depthwise(self):
        return self.groups == self.in_c == self.out_c

    def out_hw(self, h, w):
        return _out_dim(h, self.k, self.stride, self.padding), _out_dim(
            w, self.k, self.stride, self.padding
        )


def _out_dim(size, k, stride, pad):
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise GeometryError(
            f"kernel {k} with stride {stride} and padding {pad} leaves no output for size {size}"
        )
    return out


# -- operation counters ------------------------------------------------------


class OpCounter:
    """Accumulates multiply-accumulates and max-comparisons while active."""

    def __init__(self):
        self.macs = 0
        self.comparisons = 0

    def __repr__(self):
        return f"OpCounter(macs={self.macs}, comparisons={self.comparisons})"


_COUNTER: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "slimneck_op_counter", default=None
)
_CONV_PATH: contextvars.ContextVar[str] = contextvars.ContextVar(
    "slimneck_conv_path", default="im2col"
)


@contextlib.contextmanager
def count_ops():
    """Count MACs in convolutions and comparisons in max-pools within the block.

    >>> with count_ops() as ops:
    ...     _ = conv2d_naive(np.ones((1, 2, 3, 3), np.float32), np.ones((4, 2, 1, 1), np.float32))
    >>> ops.macs
    72
    """
    counter = OpCounter()
    token = _COUNTER.set(counter)
    try:
        yield counter
    finally:
        _COUNTER.reset(token)


@contextlib.contextmanager
def use_conv_path(path):
    """Route :func:`conv2d` through ``"naive"`` or ``"im2col"`` within the block."""
    if path not in ("naive", "im2col"):
        raise ValueError(f"unknown conv path {path!r}")
    token = _CONV_PATH.set(path)
    try:
        yield
    finally:
        _CONV_PATH.reset(token)


# -- convolution -------------------------------------------------------------


def _check_conv(x, weight, bias, stride, groups, padding):
    x = as_tensor(x)
    weight = as_tensor(weight, "weight")
    out_c, icg, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError("weight[2:]", f"kernel must be square, got {kh}x{kw}")
    if kh % 2 == 0:
        raise ShapeError("weight[2]", f"kernel size must be odd, got {kh}")
    if stride < 1:
        raise ShapeError("stride", f"must be >= 1, got {stride}")
    if groups < 1 or out_c % groups:
        raise ShapeError("groups", f"{groups} does not divide out_c={out_c}")
    if x.shape[1] != icg * groups:
        raise ShapeError(
            "c", f"input has {x.shape[1]} channels, weight expects {icg} x {groups} groups"
        )
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=DTYPE).reshape(-1)
        if bias.shape[0] != out_c:
            raise ShapeError("bias", f"length {bias.shape[0]} != out_c={out_c}")
    pad = kh // 2 if padding is None else int(padding)
    if pad < 0:
        raise ShapeError("padding", f"must be >= 0, got {pad}")
    oh = _out_dim(x.shape[2], kh, stride, pad)
    ow = _out_dim(x.shape[3], kh, stride, pad)
    return x, weight, bias, pad, oh, ow


def conv2d_naive(x, weight, bias=None, *, stride=1, groups=1, padding=None):
    """Grouped 2-D cross-correlation straight from the definition.

    ``weight`` has shape ``(out_c, in_c // groups, k, k)``; padding defaults
    to ``k // 2`` with zeros. For every kernel tap, in the order input
    channel, kernel row, kernel column, the shifted input slice times the tap
    weight is added to a float32 accumulator that starts at zero. The bias is
    added after the last tap.
    """
    x, weight, bias, pad, oh, ow = _check_conv(x, weight, bias, stride, groups, padding)
    n = x.shape[0]
    out_c, icg, k, _ = weight.shape
    ocg = out_c // groups
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, out_c, oh, ow), dtype=DTYPE)
    span_h = stride * (oh - 1) + 1
    span_w = stride * (ow - 1) + 1
    counter = _COUNTER.get()
    for g in range(groups):
        acc = out[:, g * ocg : (g + 1) * ocg]
        taps = weight[g * ocg : (g + 1) * ocg]
        for ci in range(icg):
            plane = xp[:, g * icg + ci]
            for ky in range(k):
                for kx in range(k):
                    patch = plane[:, ky : ky + span_h : stride, kx : kx + span_w : stride]
                    acc += taps[:, ci, ky, kx][None, :, None, None] * patch[:, None]
                    if counter is not None:
                        counter.macs += acc.size
    if bias is not None:
        out += bias[None, :, None, None]
    return out


@numba.njit(cache=True)
def _grouped_gemm(wmat, cols, out):  # pragma: no cover - compiled
    # wmat (G, ocg, K); cols (N, G, K, P); out (N, G, ocg, P), zero-filled.
    # Reduction index r runs outermost per output row, so every output element
    # sees its products in ascending r: the naive path's tap order.
    n_batch, n_groups, depth, n_pix = cols.shape
    ocg = wmat.shape[1]
    for b in range(n_batch):
        for g in range(n_groups):
            for o in range(ocg):
                row = out[b, g, o]
                for r in range(depth):
                    wv = wmat[g, o, r]
                    col = cols[b, g, r]
                    for p in range(n_pix):
                        row[p] += wv * col[p]


def conv2d_im2col(x, weight, bias=None, *, stride=1, groups=1, padding=None):
    """Same contract and same bytes as :func:`conv2d_naive`, via im2col + GEMM."""
    x, weight, bias, pad, oh, ow = _check_conv(x, weight, bias, stride, groups, padding)
    n = x.shape[0]
    out_c, icg, k, _ = weight.shape
    ocg = out_c // groups
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    # (n, c, oh, ow, ky, kx) -> (n, groups, icg * k * k, oh * ow), rows ordered (ci, ky, kx)
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(
        n, groups, icg * k * k, oh * ow
    )
    wmat = np.ascontiguousarray(weight.reshape(groups, ocg, icg * k * k))
    out = np.zeros((n, groups, ocg, oh * ow), dtype=DTYPE)
    _grouped_gemm(wmat, cols, out)
    counter = _COUNTER.get()
    if counter is not None:
        counter.macs += out.size * icg * k * k
    out = out.reshape(n, out_c, oh, ow)
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def conv2d(x, weight, bias=None, *, stride=1, groups=1, padding=None):
    """Dispatch to the active conv path (im2col unless :func:`use_conv_path` says otherwise)."""
    impl = conv2d_naive if _CONV_PATH.get() == "naive" else conv2d_im2col
    return impl(x, weight, bias, stride=stride, groups=groups, padding=padding)


# -- pooling -----------------------------------------------------------------


def maxpool2d(x, k, stride=1, padding=None):
    """Max over ``k x k`` windows; padding cells hold ``-inf`` and never win.

    Implemented as a running ``maximum`` over the window taps, so an active
    :func:`count_ops` sees exactly ``k*k - 1`` comparisons per output element.
    """
    x = as_tensor(x)
    if k < 1 or k % 2 == 0:
        raise ShapeError("k", f"pool kernel must be odd and >= 1, got {k}")
    if stride < 1:
        raise ShapeError("stride", f"must be >= 1, got {stride}")
    pad = k // 2 if padding is None else int(padding)
    if not 0 <= pad <= k // 2:
        raise ShapeError("padding", f"must lie in [0, {k // 2}], got {pad}")
    oh = _out_dim(x.shape[2], k, stride, pad)
    ow = _out_dim(x.shape[3], k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    span_h = stride * (oh - 1) + 1
    span_w = stride * (ow - 1) + 1
    out = xp[:, :, 0:span_h:stride, 0:span_w:stride].copy()
    for ky in range(k):
        for kx in range(k):
            if ky == 0 and kx == 0:
                continue
            np.maximum(out, xp[:, :, ky : ky + span_h : stride, kx : kx + span_w : stride], out=out)
    counter = _COUNTER.get()
    if counter is not None:
        counter.comparisons += out.size * (k * k - 1)
    return out


def global_avg_pool(x):
    """Per-channel spatial mean, shape ``(n, c, 1, 1)``."""
    x = as_tensor(x)
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(DTYPE)


def global_max_pool(x):
    """Per-channel spatial max, shape ``(n, c, 1, 1)``."""
    return as_tensor(x).max(axis=(2, 3), keepdims=True)


def directional_pool(x, axis, mode="avg"):
    """Collapse only the height or only the width axis to length 1.

    ``axis="width"`` gives ``(n, c, h, 1)``; ``axis="height"`` gives ``(n, c, 1, w)``.
    """
    x = as_tensor(x)
    try:
        ax = {"height": 2, "width": 3}[axis]
    except KeyError:
        raise ValueError(f"axis must be 'height' or 'width', got {axis!r}") from None
    if mode == "avg":
        return x.mean(axis=ax, keepdims=True, dtype=np.float64).astype(DTYPE)
    if mode == "max":
        return x.max(axis=ax, keepdims=True)
    raise ValueError(f"mode must be 'avg' or 'max', got {mode!r}")


def channel_pixel_stats(x, mode):
    """Per-pixel max or mean across channels, shape ``(n, 1, h, w)``."""
    x = as_tensor(x)
    if mode == "max":
        return x.max(axis=1, keepdims=True)
    if mode == "mean":
        return x.mean(axis=1, keepdims=True, dtype=np.float64).astype(DTYPE)
    raise ValueError(f"mode must be 'max' or 'mean', got {mode!r}")


# -- per-channel and structural ops ------------------------------------------


def _channel_vector(v, c, name):
    v = np.ascontiguousarray(v, dtype=DTYPE).reshape(-1)
    if v.shape[0] != c:
        raise ShapeError(name, f"length {v.shape[0]} != channels {c}")
    return v[None, :, None, None]


def batch_norm_inference(x, mean, var, gamma, beta, eps=1e-5):
    """``gamma * (x - mean) / sqrt(var + eps) + beta`` per channel."""
    x = as_tensor(x)
    c = x.shape[1]
    mean = _channel_vector(mean, c, "mean")
    var = _channel_vector(var, c, "var")
    gamma = _channel_vector(gamma, c, "gamma")
    beta = _channel_vector(beta, c, "beta")
    if np.any(var < 0):
        raise ValueError("batch-norm variance must be non-negative")
    denom = np.sqrt(var + DTYPE(eps))
    return (gamma * (x - mean) / denom + beta).astype(DTYPE, copy=False)


def concat_channels(xs):
    """Stack tensors along the channel axis in argument order."""
    xs = [as_tensor(t, f"xs[{i}]") for i, t in enumerate(xs)]
    if not xs:
        raise ShapeError("xs", "need at least one tensor")
    n, _, h, w = xs[0].shape
    for i, t in enumerate(xs[1:], 1):
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"xs[{i}]", f"shape {t.shape} does not match n,h,w of {xs[0].shape}")
    return np.concatenate(xs, axis=1)


def split_channels(x, sizes):
    """Inverse of :func:`concat_channels` given the recorded channel counts."""
    x = as_tensor(x)
    if sum(sizes) != x.shape[1]:
        raise ShapeError("c", f"sizes {list(sizes)} do not sum to {x.shape[1]}")
    offsets = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(part) for part in np.split(x, offsets, axis=1)]


def channel_shuffle(x, groups):
    """Transpose channels viewed as a ``(groups, c // groups)`` grid.

    Channel ``a * (c // groups) + b`` lands at position ``b * groups + a``.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    if groups < 1 or c % groups:
        raise ShapeError("c", f"{c} channels not divisible by {groups} groups")
    return np.ascontiguousarray(
        x.reshape(n, groups, c // groups, h, w).transpose(0, 2, 1, 3, 4).reshape(n, c, h, w)
    )


def elementwise(x, y, mode):
    x = as_tensor(x)
    y = as_tensor(y, "y")
    if x.shape != y.shape:
        raise ShapeError("y", f"shape {y.shape} != {x.shape}")
    if mode == "add":
        return x + y
    if mode == "mul":
        return x * y
    raise ValueError(f"mode must be 'add' or 'mul', got {mode!r}")


def broadcast_scale(x, s):
    """Multiply ``x`` by a scale map broadcast over the collapsed axes.

    Accepted scale shapes: ``(n, c, 1, 1)``, ``(n, c, h, 1)``, ``(n, c, 1, w)``
    and the per-pixel ``(n, 1, h, w)``.
    """
    x = as_tensor(x)
    s = as_tensor(s, "s")
    n, c, h, w = x.shape
    allowed = {(n, c, 1, 1), (n, c, h, 1), (n, c, 1, w), (n, 1, h, w)}
    if s.shape not in allowed:
        raise ShapeError("s", f"shape {s.shape} cannot scale a tensor of shape {x.shape}")
    return x * s


def upsample_nearest2x(x):
    x = as_tensor(x)
    return np.ascontiguousarray(x.repeat(2, axis=2).repeat(2, axis=3))


# -- .ntsr binary format -----------------------------------------------------

NTSR_MAGIC = b"NTSR"
NTSR_VERSION = 1
_NTSR_HEADER = struct.Struct("<4sIIIII")


def encode_tensor(x):
    x = as_tensor(x)
    return _NTSR_HEADER.pack(NTSR_MAGIC, NTSR_VERSION, *x.shape) + x.astype("<f4").tobytes()


def decode_tensor(buf):
    if len(buf) < _NTSR_HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} bytes")
    magic, version, n, c, h, w = _NTSR_HEADER.unpack_from(buf)
    if magic != NTSR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {NTSR_MAGIC!r}")
    if version != NTSR_VERSION:
        raise FormatError(f"unsupported version {version}")
    count = n * c * h * w
    payload = buf[_NTSR_HEADER.size :]
    if len(payload) != 4 * count:
        raise FormatError(f"payload has {len(payload)} bytes, expected {4 * count}")
    return np.frombuffer(payload, dtype="<f4").astype(DTYPE).reshape(n, c, h, w)


def save_tensor(x, path):
    Path(path).write_bytes(encode_tensor(x))


def load_tensor(path):
    return decode_tensor(Path(path).read_bytes())
