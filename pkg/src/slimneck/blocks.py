"""Composite blocks of a slim detector neck, built from tensor primitives.

Every block is an immutable dataclass holding its weights; calling it runs
inference. Blocks are assembled by :func:`build_block` from a
:class:`BlockSpec` and a *parameter source*, which either draws fresh
weights (:class:`RandomInit`), replays a weight store (:class:`StoreSource`)
or fills constants (:class:`ConstantInit`, handy in tests).

Channel layout conventions:

* GSConv output is ``channel_shuffle(concat(dense, depthwise(dense)), 2)``,
  so dense and depthwise channels alternate.
* Wherever two branches are concatenated, the shortcut / dense branch comes
  first.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import Activation, activate, parse_activation
from .errors import ShapeError, WeightError
from .tensor import (
    ConvParams,
    batch_norm_inference,
    broadcast_scale,
    channel_pixel_stats,
    channel_shuffle,
    concat_channels,
    conv2d,
    directional_pool,
    elementwise,
    global_avg_pool,
    global_max_pool,
    maxpool2d,
)

BN_EPS = 1e-5
SWISH = Activation("swish")
SPP_KERNELS = (5, 9, 13)
SPPF_KERNEL = 5
DEFAULT_REDUCTION = {"se": 16, "cbam": 16, "ca": 32}
CBAM_SPATIAL_KERNEL = 7

BLOCK_KINDS = (
    "conv",
    "dsc",
    "gsconv",
    "gs_bottleneck",
    "vov_gscsp",
    "csp",
    "spp",
    "sppf",
    "se",
    "cbam",
    "ca",
)


# -- parameter sources -------------------------------------------------------


def named_rng(seed, name):
    """Generator keyed by ``(seed, name)``: draws do not depend on build order."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def _vec(c, value):
    return np.full((c, 1, 1, 1), value, dtype=np.float32)


class _Recording:
    def __init__(self):
        self.tensors = {}

    def _record(self, name, arr):
        self.tensors[name] = arr
        return arr

    def bn(self, name, c):
        return BatchNorm(
            mean=self._record(f"{name}.mean", _vec(c, 0.0)),
            var=self._record(f"{name}.var", _vec(c, 1.0)),
            gamma=self._record(f"{name}.gamma", _vec(c, 1.0)),
            beta=self._record(f"{name}.beta", _vec(c, 0.0)),
        )

    def conv_bias(self, name, out_c):
        return self._record(name, _vec(out_c, 0.0))


class RandomInit(_Recording):
    """He-uniform conv weights in ``+-sqrt(6 / fan_in)``; identity batch norm; zero bias.

    With ``perturb=True`` batch-norm statistics and biases are drawn at random
    too, which exercises every parameter in structural tests.
    """

    def __init__(self, seed, perturb=False):
        super().__init__()
        self.seed = seed
        self.perturb = perturb

    def conv_weight(self, name, shape):
        fan_in = shape[1] * shape[2] * shape[3]
        bound = np.sqrt(6.0 / fan_in)
        w = named_rng(self.seed, name).uniform(-bound, bound, size=shape).astype(np.float32)
        return self._record(name, w)

    def conv_bias(self, name, out_c):
        if not self.perturb:
            return super().conv_bias(name, out_c)
        rng = named_rng(self.seed, name)
        return self._record(name, rng.normal(0, 0.1, (out_c, 1, 1, 1)).astype(np.float32))

    def bn(self, name, c):
        if not self.perturb:
            return super().bn(name, c)
        rng = named_rng(self.seed, name)
        shape = (c, 1, 1, 1)
        draw = {
            "mean": rng.normal(0, 0.1, shape),
            "var": rng.uniform(0.5, 1.5, shape),
            "gamma": rng.uniform(0.5, 1.5, shape),
            "beta": rng.normal(0, 0.1, shape),
        }
        return BatchNorm(**{k: self._record(f"{name}.{k}", v.astype(np.float32)) for k, v in draw.items()})


class ConstantInit(_Recording):
    """Every conv weight equal to ``value``; identity batch norm; zero bias."""

    def __init__(self, value=0.0):
        super().__init__()
        self.value = value

    def conv_weight(self, name, shape):
        return self._record(name, np.full(shape, self.value, dtype=np.float32))


class StoreSource:
    """Look tensors up by name in a mapping, checking shapes."""

    def __init__(self, store):
        self.store = store

    def _get(self, name, shape):
        try:
            arr = self.store[name]
        except KeyError:
            raise WeightError(f"missing weight tensor '{name}'") from None
        if tuple(arr.shape) != tuple(shape):
            raise WeightError(f"weight '{name}' has shape {tuple(arr.shape)}, expected {shape}")
        return np.asarray(arr, dtype=np.float32)

    def conv_weight(self, name, shape):
        return self._get(name, shape)

    def conv_bias(self, name, out_c):
        return self._get(name, (out_c, 1, 1, 1))

    def bn(self, name, c):
        shape = (c, 1, 1, 1)
        return BatchNorm(
            mean=self._get(f"{name}.mean", shape),
            var=self._get(f"{name}.var", shape),
            gamma=self._get(f"{name}.gamma", shape),
            beta=self._get(f"{name}.beta", shape),
        )


# -- leaf layers -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BatchNorm:
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = BN_EPS

    def __call__(self, x):
        return batch_norm_inference(x, self.mean, self.var, self.gamma, self.beta, self.eps)


@dataclass(frozen=True, eq=False)
class ConvBNAct:
    """Convolution, optional inference batch norm, optional activation."""

    params: ConvParams
    weight: np.ndarray
    bias: np.ndarray | None = None
    bn: BatchNorm | None = None
    act: Activation | None = None

    def __call__(self, x):
        y = conv2d(x, self.weight, self.bias, stride=self.params.stride, groups=self.params.groups)
        if self.bn is not None:
            y = self.bn(y)
        if self.act is not None:
            y = activate(self.act, y)
        return y

    def convs(self):
        yield self


def conv_bn_act(src, name, in_c, out_c, k=1, s=1, groups=1, act=SWISH, bn=True):
    """Build a :class:`ConvBNAct`; the conv carries a bias only when no batch norm follows."""
    p = ConvParams(in_c, out_c, k, s, groups, has_bias=not bn)
    return ConvBNAct(
        params=p,
        weight=src.conv_weight(f"{name}.conv.weight", p.weight_shape),
        bias=src.conv_bias(f"{name}.conv.bias", out_c) if p.has_bias else None,
        bn=src.bn(f"{name}.bn", out_c) if bn else None,
        act=act,
    )


# -- convolution blocks ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DSCUnit:
    depthwise: ConvBNAct
    pointwise: ConvBNAct

    def __call__(self, x):
        return self.pointwise(self.depthwise(x))

    def convs(self):
        yield self.depthwise
        yield self.pointwise


@dataclass(frozen=True, eq=False)
class GSConv:
    sc: ConvBNAct
    dw: ConvBNAct

    def __call__(self, x):
        dense = self.sc(x)
        return channel_shuffle(concat_channels([dense, self.dw(dense)]), 2)

    def convs(self):
        yield self.sc
        yield self.dw


def gsconv(src, name, in_c, out_c, k=1, s=1, k_dw=5, act=SWISH):
    if out_c % 2:
        raise ShapeError("out_c", f"GSConv needs an even output width, got {out_c}")
    half = out_c // 2
    return GSConv(
        sc=conv_bn_act(src, f"{name}.sc", in_c, half, k, s, act=act),
        dw=conv_bn_act(src, f"{name}.dw", half, half, k_dw, 1, groups=half, act=act),
    )


@dataclass(frozen=True, eq=False)
class GSBottleneck:
    """Two stacked GSConvs (1x1 then 3x3) plus a 1x1 conv+BN shortcut, summed."""

    gs1: GSConv
    gs2: GSConv
    shortcut: ConvBNAct

    def __call__(self, x):
        return elementwise(self.gs2(self.gs1(x)), self.shortcut(x), "add")

    def convs(self):
        yield from self.gs1.convs()
        yield from self.gs2.convs()
        yield self.shortcut


def gs_bottleneck(src, name, in_c, out_c, k_dw=5, act=SWISH, final_act=True):
    hidden = out_c // 2
    if out_c % 2 or hidden % 2:
        raise ShapeError("out_c", f"GS bottleneck needs out_c divisible by 4, got {out_c}")
    return GSBottleneck(
        gs1=gsconv(src, f"{name}.gs1", in_c, hidden, 1, 1, k_dw, act),
        gs2=gsconv(src, f"{name}.gs2", hidden, out_c, 3, 1, k_dw, act if final_act else None),
        shortcut=conv_bn_act(src, f"{name}.shortcut", in_c, out_c, 1, 1, act=None),
    )


@dataclass(frozen=True, eq=False)
class Bottleneck:
    """Standard residual bottleneck: 1x1 conv, 3x3 conv, add input."""

    cv1: ConvBNAct
    cv2: ConvBNAct

    def __call__(self, x):
        return elementwise(x, self.cv2(self.cv1(x)), "add")

    def convs(self):
        yield self.cv1
        yield self.cv2


@dataclass(frozen=True, eq=False)
class CrossStage:
    """Split / transform / fuse skeleton shared by VoV-GSCSP and the CSP baseline.

    ``fuse(concat(chain(cv1(x)), cv2(x)))`` with a single concatenation.
    """

    cv1: ConvBNAct
    chain: tuple
    cv2: ConvBNAct
    fuse: ConvBNAct

    def __call__(self, x):
        a = self.cv1(x)
        for m in self.chain:
            a = m(a)
        return self.fuse(concat_channels([a, self.cv2(x)]))

    def convs(self):
        yield self.cv1
        for m in self.chain:
            yield from m.convs()
        yield self.cv2
        yield self.fuse


def _cross_stage_skeleton(src, name, in_c, out_c, act):
    if out_c % 2:
        raise ShapeError("out_c", f"cross-stage block needs an even output width, got {out_c}")
    hidden = out_c // 2
    cv1 = conv_bn_act(src, f"{name}.cv1", in_c, hidden, act=act)
    cv2 = conv_bn_act(src, f"{name}.cv2", in_c, hidden, act=act)
    fuse = conv_bn_act(src, f"{name}.fuse", 2 * hidden, out_c, act=act)
    return hidden, cv1, cv2, fuse


def vov_gscsp(src, name, in_c, out_c, n=1, k_dw=5, act=SWISH):
    hidden, cv1, cv2, fuse = _cross_stage_skeleton(src, name, in_c, out_c, act)
    chain = tuple(
        gs_bottleneck(src, f"{name}.m{i}", hidden, hidden, k_dw, act) for i in range(n)
    )
    return CrossStage(cv1, chain, cv2, fuse)


def csp(src, name, in_c, out_c, n=1, act=SWISH):
    hidden, cv1, cv2, fuse = _cross_stage_skeleton(src, name, in_c, out_c, act)
    chain = tuple(
        Bottleneck(
            conv_bn_act(src, f"{name}.m{i}.cv1", hidden, hidden, 1, act=act),
            conv_bn_act(src, f"{name}.m{i}.cv2", hidden, hidden, 3, act=act),
        )
        for i in range(n)
    )
    return CrossStage(cv1, chain, cv2, fuse)


# -- pyramid pooling ---------------------------------------------------------


@dataclass(frozen=True)
class SPP:
    kernels: tuple = SPP_KERNELS

    def __call__(self, x):
        return concat_channels([x] + [maxpool2d(x, k) for k in self.kernels])

    def convs(self):
        return iter(())


@dataclass(frozen=True)
class SPPF:
    k: int = SPPF_KERNEL
    chain: int = 3

    def __call__(self, x):
        outs = [x]
        for _ in range(self.chain):
            outs.append(maxpool2d(outs[-1], self.k))
        return concat_channels(outs)

    def convs(self):
        return iter(())


# -- attention ---------------------------------------------------------------


def _reduced(c, r, kind):
    if r < 1 or c % r:
        raise ShapeError("r", f"{kind}: {c} channels not divisible by reduction {r}")
    return c // r


@dataclass(frozen=True, eq=False)
class SE:
    fc1: ConvBNAct
    fc2: ConvBNAct

    def __call__(self, x):
        return broadcast_scale(x, self.fc2(self.fc1(global_avg_pool(x))))

    def convs(self):
        yield self.fc1
        yield self.fc2


def se(src, name, c, r=16):
    mid = _reduced(c, r, "SE")
    return SE(
        fc1=conv_bn_act(src, f"{name}.fc1", c, mid, act=Activation("relu"), bn=False),
        fc2=conv_bn_act(src, f"{name}.fc2", mid, c, act=Activation("sigmoid"), bn=False),
    )


@dataclass(frozen=True, eq=False)
class CBAM:
    fc1: ConvBNAct
    fc2: ConvBNAct
    spatial: ConvBNAct

    def _mlp(self, v):
        return self.fc2(self.fc1(v))

    def __call__(self, x):
        summed = elementwise(self._mlp(global_avg_pool(x)), self._mlp(global_max_pool(x)), "add")
        x = broadcast_scale(x, activate("sigmoid", summed))
        stats = concat_channels([channel_pixel_stats(x, "max"), channel_pixel_stats(x, "mean")])
        return broadcast_scale(x, self.spatial(stats))

    def convs(self):
        yield self.fc1
        yield self.fc2
        yield self.spatial


def cbam(src, name, c, r=16, k_spatial=CBAM_SPATIAL_KERNEL):
    mid = _reduced(c, r, "CBAM")
    return CBAM(
        fc1=conv_bn_act(src, f"{name}.fc1", c, mid, act=Activation("relu"), bn=False),
        fc2=conv_bn_act(src, f"{name}.fc2", mid, c, act=None, bn=False),
        spatial=conv_bn_act(
            src, f"{name}.spatial", 2, 1, k_spatial, act=Activation("sigmoid"), bn=False
        ),
    )


@dataclass(frozen=True, eq=False)
class CA:
    """Coordinate attention: separate height-wise and width-wise gates."""

    reduce: ConvBNAct
    gate_h: ConvBNAct
    gate_w: ConvBNAct

    def __call__(self, x):
        n, c, h, w = x.shape
        along_h = directional_pool(x, "width")  # (n, c, h, 1)
        along_w = directional_pool(x, "height")  # (n, c, 1, w)
        joint = np.concatenate([along_h.reshape(n, c, 1, h), along_w], axis=3)
        y = self.reduce(joint)  # (n, mid, 1, h + w)
        mid = y.shape[1]
        a_h = self.gate_h(np.ascontiguousarray(y[:, :, :, :h]).reshape(n, mid, h, 1))
        a_w = self.gate_w(np.ascontiguousarray(y[:, :, :, h:]))
        return broadcast_scale(broadcast_scale(x, a_h), a_w)

    def convs(self):
        yield self.reduce
        yield self.gate_h
        yield self.gate_w


def ca(src, name, c, r=32):
    mid = _reduced(c, r, "CA")
    sig = Activation("sigmoid")
    return CA(
        reduce=conv_bn_act(src, f"{name}.reduce", c, mid, act=Activation("hard_swish")),
        gate_h=conv_bn_act(src, f"{name}.gate_h", mid, c, act=sig, bn=False),
        gate_w=conv_bn_act(src, f"{name}.gate_w", mid, c, act=sig, bn=False),
    )


# -- descriptors -------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpec:
    """Configuration of one block, independent of its weights.

    ``out_c`` is ignored by shape-preserving kinds (spp, sppf, se, cbam, ca);
    ``k`` is the depthwise kernel for ``dsc`` and the dense kernel elsewhere.
    ``r=None`` picks the per-kind default reduction.
    """

    kind: str
    in_c: int
    out_c: int | None = None
    k: int = 1
    s: int = 1
    n: int = 1
    r: int | None = None
    k_dw: int = 5
    act: Activation | None = field(default=SWISH)

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        object.__setattr__(self, "act", parse_activation(self.act))
        if self.out_c is None:
            object.__setattr__(self, "out_c", self.in_c)

    @property
    def reduction(self):
        return self.r if self.r is not None else DEFAULT_REDUCTION.get(self.kind)

    def with_(self, **kw):
        return replace(self, **kw)


def block_output_shape(spec, h, w):
    """``(c, h, w)`` produced by ``spec`` on an ``h x w`` input."""
    if spec.kind in ("spp", "sppf"):
        return 4 * spec.in_c, h, w
    if spec.kind in ("se", "cbam", "ca"):
        return spec.in_c, h, w
    if spec.kind in ("conv", "dsc", "gsconv"):
        oh, ow = ConvParams(1, 1, spec.k, spec.s).out_hw(h, w)
        return spec.out_c, oh, ow
    return spec.out_c, h, w


def build_block(spec, src, name):
    """Instantiate the block described by ``spec``, pulling tensors from ``src``."""
    kind, c = spec.kind, spec.in_c
    if kind == "conv":
        return conv_bn_act(src, name, c, spec.out_c, spec.k, spec.s, act=spec.act)
    if kind == "dsc":
        return DSCUnit(
            depthwise=conv_bn_act(src, f"{name}.dw", c, c, spec.k, spec.s, groups=c, act=spec.act),
            pointwise=conv_bn_act(src, f"{name}.pw", c, spec.out_c, 1, act=spec.act),
        )
    if kind == "gsconv":
        return gsconv(src, name, c, spec.out_c, spec.k, spec.s, spec.k_dw, spec.act)
    if kind == "gs_bottleneck":
        return gs_bottleneck(src, name, c, spec.out_c, spec.k_dw, spec.act)
    if kind == "vov_gscsp":
        return vov_gscsp(src, name, c, spec.out_c, spec.n, spec.k_dw, spec.act)
    if kind == "csp":
        return csp(src, name, c, spec.out_c, spec.n, spec.act)
    if kind == "spp":
        return SPP()
    if kind == "sppf":
        return SPPF()
    if kind == "se":
        return se(src, name, c, spec.reduction)
    if kind == "cbam":
        return cbam(src, name, c, spec.reduction)
    return ca(src, name, c, spec.reduction)


# Named entry points for callers that prefer functions over calling blocks.
def forward_gsconv(block, x):
    return block(x)


forward_gs_bottleneck = forward_vov_gscsp = forward_csp = forward_gsconv
forward_spp = forward_sppf = forward_gsconv
forward_se = forward_cbam = forward_ca = forward_gsconv
