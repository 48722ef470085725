"""Property checks behind ``slimneck check``.

Each suite returns :class:`CheckResult` rows with the measured value and the
bound it was held to. Every check pairs the code under test with an
independent route to the same answer: the naive conv path, comparison
counting, grid rasterisation, finite differences, exact rational arithmetic,
or a from-primitives recomposition of a block.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import activations as act_mod
from .activations import Activation, activate, activate_grad, finite_difference
from .bench import time_call
from .blocks import (
    CA,
    CBAM,
    RandomInit,
    SE,
    SPP,
    SPPF,
    Bottleneck,
    BlockSpec,
    ConvBNAct,
    CrossStage,
    DSCUnit,
    GSBottleneck,
    GSConv,
    build_block,
)
from .cost import cost_block, cost_dsc, cost_sc, sppf_efficiency
from .losses import (
    LOSS_KINDS,
    BBox,
    ciou_alpha,
    ciou_v_grad,
    iou,
    loss,
    loss_grad,
    rasterized_iou,
)
from .tensor import (
    batch_norm_inference,
    channel_pixel_stats,
    channel_shuffle,
    concat_channels,
    conv2d_im2col,
    conv2d_naive,
    count_ops,
    directional_pool,
    global_avg_pool,
    global_max_pool,
    split_channels,
    use_conv_path,
)

SUITES = ("conv", "shuffle", "sppf", "blocks", "losses", "activations", "cost")
FD_STEP = 1e-4
FD_FLOOR = 1e-8
DEFAULT_TOL = 1e-5

# closeness of mish and swish(beta=1): max |difference| on a 0.001 grid over
# [-10, 10], from a 25-digit dense evaluation (attained at x = 1.821)
MISH_SWISH_MAX_GAP = 0.18435114


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    measured: str
    bound: str
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.suite}/{self.name}: measured {self.measured}; bound {self.bound} ({self.seconds:.2f}s)"


class _Suite:
    def __init__(self, name):
        self.name = name
        self.results = []

    def record(self, name, passed, measured, bound, started):
        self.results.append(
            CheckResult(self.name, name, bool(passed), str(measured), str(bound), time.perf_counter() - started)
        )


def fd_close(analytic, numeric, rtol):
    """``|analytic - numeric| <= max(rtol * |numeric|, FD_FLOOR)``; returns (ok, scaled error)."""
    err = abs(analytic - numeric)
    allowed = max(rtol * abs(numeric), FD_FLOOR)
    return err <= allowed, err / allowed


# -- conv --------------------------------------------------------------------


def random_conv_config(rng):
    groups_mode = rng.integers(0, 4)
    if groups_mode == 3:  # depthwise
        c = int(rng.integers(1, 9))
        in_c = out_c = groups = c
    else:
        groups = int((1, 2, 4)[groups_mode])
        in_c = groups * int(rng.integers(1, 5))
        out_c = groups * int(rng.integers(1, 5))
    k = int(rng.choice([1, 3, 5, 7]))
    stride = int(rng.integers(1, 4))
    n = int(rng.integers(1, 3))
    h, w = (int(v) for v in rng.integers(1, 21, size=2))
    x = rng.standard_normal((n, in_c, h, w)).astype(np.float32)
    weight = rng.standard_normal((out_c, in_c // groups, k, k)).astype(np.float32)
    bias = rng.standard_normal(out_c).astype(np.float32) if rng.random() < 0.5 else None
    return x, weight, bias, stride, groups


def conv_suite(seed=0, tol=DEFAULT_TOL, repeat=5):
    s = _Suite("conv")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(200):
        x, weight, bias, stride, groups = random_conv_config(rng)
        a = conv2d_naive(x, weight, bias, stride=stride, groups=groups)
        b = conv2d_im2col(x, weight, bias, stride=stride, groups=groups)
        if a.shape != b.shape or a.tobytes() != b.tobytes():
            mismatches += 1
    s.record("im2col_bit_identical_200_configs", mismatches == 0, f"{mismatches} mismatches", "0", t0)

    t0 = time.perf_counter()
    x = rng.standard_normal((1, 64, 64, 64)).astype(np.float32)
    weight = rng.standard_normal((64, 64, 3, 3)).astype(np.float32)
    naive = time_call(lambda: conv2d_naive(x, weight), repeat)
    fast = time_call(lambda: conv2d_im2col(x, weight), repeat)
    s.record(
        "im2col_faster_1x64x64x64_k3",
        fast.median < naive.median,
        f"im2col median {fast.median * 1e3:.1f} ms vs naive {naive.median * 1e3:.1f} ms",
        "im2col < naive",
        t0,
    )

    t0 = time.perf_counter()
    x, weight, bias, stride, groups = random_conv_config(np.random.default_rng(seed + 1))
    runs = {conv2d_im2col(x, weight, bias, stride=stride, groups=groups).tobytes() for _ in range(5)}
    s.record("repeat_determinism", len(runs) == 1, f"{len(runs)} distinct outputs", "1", t0)
    return s.results


# -- shuffle -----------------------------------------------------------------


def shuffle_suite(seed=0, tol=DEFAULT_TOL):
    s = _Suite("shuffle")
    rng = np.random.default_rng(seed)

    t0 = time.perf_counter()
    labels = np.arange(4, dtype=np.float32).reshape(1, 4, 1, 1)
    got = channel_shuffle(labels, 2).reshape(-1).tolist()
    s.record("interleave_s0_d0_s1_d1", got == [0.0, 2.0, 1.0, 3.0], got, "[0, 2, 1, 3]", t0)

    t0 = time.perf_counter()
    failures = 0
    for _ in range(100):
        g = int(rng.integers(1, 5))
        c = g * int(rng.integers(1, 6))
        x = rng.standard_normal((int(rng.integers(1, 3)), c, int(rng.integers(1, 6)), int(rng.integers(1, 6))))
        x = x.astype(np.float32)
        y = channel_shuffle(x, g)
        ok = (
            np.array_equal(np.sort(x, axis=None), np.sort(y, axis=None))
            and math.fsum(x.ravel().tolist()) == math.fsum(y.ravel().tolist())
            and math.fsum((x.astype(np.float64) ** 2).ravel().tolist())
            == math.fsum((y.astype(np.float64) ** 2).ravel().tolist())
            and channel_shuffle(y, c // g).tobytes() == x.tobytes()
        )
        # independent position rule: input channel a*(c/g)+b -> output b*g+a
        for a in range(g):
            for b in range(c // g):
                ok = ok and np.array_equal(y[:, b * g + a], x[:, a * (c // g) + b])
        failures += not ok
    s.record("permutation_invariants_100_tensors", failures == 0, f"{failures} failures", "0", t0)

    t0 = time.perf_counter()
    failures = 0
    for _ in range(50):
        sizes = [int(v) for v in rng.integers(1, 5, size=int(rng.integers(1, 5)))]
        parts = [rng.standard_normal((1, c, 3, 4)).astype(np.float32) for c in sizes]
        back = split_channels(concat_channels(parts), sizes)
        failures += not all(p.tobytes() == q.tobytes() for p, q in zip(parts, back))
    s.record("concat_split_roundtrip", failures == 0, f"{failures} failures", "0", t0)
    return s.results


# -- sppf --------------------------------------------------------------------


def sppf_suite(seed=0, tol=DEFAULT_TOL):
    s = _Suite("sppf")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    mismatches = 0
    spp, sppf = SPP(), SPPF()
    for _ in range(100):
        c = int(rng.integers(1, 9))
        h, w = (int(v) for v in rng.integers(5, 34, size=2))
        x = rng.standard_normal((1, c, h, w)).astype(np.float32)
        mismatches += spp(x).tobytes() != sppf(x).tobytes()
    s.record("spp_equals_sppf_100_tensors", mismatches == 0, f"{mismatches} mismatches", "0 (bit-exact)", t0)
    return s.results


# -- blocks ------------------------------------------------------------------


def _ref_conv(m, x):
    p = m.params
    y = conv2d_naive(x, m.weight, m.bias, stride=p.stride, groups=p.groups)
    if m.bn is not None:
        y = batch_norm_inference(y, m.bn.mean, m.bn.var, m.bn.gamma, m.bn.beta, m.bn.eps)
    if m.act is not None:
        y = activate(m.act, y)
    return y


def _ref_pool(x, k):
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    return sliding_window_view(xp, (k, k), axis=(2, 3)).max(axis=(4, 5))


def reference_forward(block, x):
    """Recompose ``block`` from tensor primitives without calling its methods.

    Convolutions run on the naive path; GSConv's shuffle is written as a
    direct even/odd channel interleave and max-pools as window maxima.
    """
    if isinstance(block, ConvBNAct):
        return _ref_conv(block, x)
    if isinstance(block, DSCUnit):
        return _ref_conv(block.pointwise, _ref_conv(block.depthwise, x))
    if isinstance(block, GSConv):
        dense = _ref_conv(block.sc, x)
        depth = _ref_conv(block.dw, dense)
        out = np.empty((dense.shape[0], 2 * dense.shape[1]) + dense.shape[2:], dtype=np.float32)
        out[:, 0::2] = dense
        out[:, 1::2] = depth
        return out
    if isinstance(block, GSBottleneck):
        main = reference_forward(block.gs2, reference_forward(block.gs1, x))
        return main + _ref_conv(block.shortcut, x)
    if isinstance(block, Bottleneck):
        return x + _ref_conv(block.cv2, _ref_conv(block.cv1, x))
    if isinstance(block, CrossStage):
        a = _ref_conv(block.cv1, x)
        for m in block.chain:
            a = reference_forward(m, a)
        return _ref_conv(block.fuse, np.concatenate([a, _ref_conv(block.cv2, x)], axis=1))
    if isinstance(block, SPP):
        return np.concatenate([x] + [_ref_pool(x, k) for k in block.kernels], axis=1)
    if isinstance(block, SPPF):
        outs = [x]
        for _ in range(block.chain):
            outs.append(_ref_pool(outs[-1], block.k))
        return np.concatenate(outs, axis=1)
    if isinstance(block, SE):
        return x * _ref_conv(block.fc2, _ref_conv(block.fc1, global_avg_pool(x)))
    if isinstance(block, CBAM):
        mlp_avg = _ref_conv(block.fc2, _ref_conv(block.fc1, global_avg_pool(x)))
        mlp_max = _ref_conv(block.fc2, _ref_conv(block.fc1, global_max_pool(x)))
        x = x * activate("sigmoid", mlp_avg + mlp_max)
        stats = np.concatenate([channel_pixel_stats(x, "max"), channel_pixel_stats(x, "mean")], axis=1)
        return x * _ref_conv(block.spatial, stats)
    if isinstance(block, CA):
        n, c, h, w = x.shape
        xh = directional_pool(x, "width")
        xw = directional_pool(x, "height")
        y = _ref_conv(block.reduce, np.concatenate([xh.transpose(0, 1, 3, 2), xw], axis=3))
        a_h = _ref_conv(block.gate_h, np.ascontiguousarray(y[..., :h].transpose(0, 1, 3, 2)))
        a_w = _ref_conv(block.gate_w, np.ascontiguousarray(y[..., h:]))
        return x * a_h * a_w
    raise TypeError(f"no reference for {type(block).__name__}")


def _block_case(kind, rng):
    """A random small configuration for ``kind``: (BlockSpec, input shape)."""
    h, w = (int(v) for v in rng.integers(3, 11, size=2))
    s = int(rng.integers(1, 3))
    k = int(rng.choice([1, 3]))
    if kind == "conv":
        spec = BlockSpec("conv", int(rng.integers(1, 9)), int(rng.integers(1, 9)), k=k, s=s)
    elif kind == "dsc":
        spec = BlockSpec("dsc", int(rng.integers(1, 9)), int(rng.integers(1, 9)), k=k, s=s)
    elif kind == "gsconv":
        spec = BlockSpec("gsconv", int(rng.integers(1, 9)), 2 * int(rng.integers(1, 5)), k=k, s=s,
                         k_dw=int(rng.choice([3, 5])))
    elif kind == "gs_bottleneck":
        spec = BlockSpec("gs_bottleneck", int(rng.integers(1, 9)), 4 * int(rng.integers(1, 3)))
    elif kind in ("vov_gscsp", "csp"):
        spec = BlockSpec(kind, int(rng.integers(1, 9)), 8 * int(rng.integers(1, 3)), n=int(rng.integers(1, 3)))
    elif kind in ("spp", "sppf"):
        spec = BlockSpec(kind, int(rng.integers(1, 5)))
    else:
        r = int(rng.choice([2, 4]))
        spec = BlockSpec(kind, r * int(rng.integers(1, 4)), r=r)
    return spec, (1, spec.in_c, h, w)


BLOCK_CASES = ("conv", "dsc", "gsconv", "gs_bottleneck", "vov_gscsp", "csp", "spp", "sppf", "se", "cbam", "ca")


def blocks_suite(seed=0, tol=DEFAULT_TOL, seeds_per_block=20):
    s = _Suite("blocks")
    for kind in BLOCK_CASES:
        t0 = time.perf_counter()
        mismatches = 0
        for i in range(seeds_per_block):
            rng = np.random.default_rng([seed, i, BLOCK_CASES.index(kind)])
            spec, shape = _block_case(kind, rng)
            block = build_block(spec, RandomInit(seed * 1000 + i, perturb=True), kind)
            x = rng.standard_normal(shape).astype(np.float32)
            got = block(x)
            want = reference_forward(block, x)
            mismatches += got.shape != want.shape or got.tobytes() != want.tobytes()
        s.record(f"{kind}_matches_primitive_composition", mismatches == 0,
                 f"{mismatches}/{seeds_per_block} mismatches", "0 (bit-exact)", t0)

    t0 = time.perf_counter()
    failures = 0
    rng = np.random.default_rng(seed)
    for i in range(20):
        block = build_block(BlockSpec("gsconv", 3, 8, k=3), RandomInit(i, perturb=True), "gs")
        x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
        dense = block.sc(x)
        halves = np.concatenate([dense, block.dw(dense)], axis=1)
        failures += not np.array_equal(np.sort(block(x), axis=None), np.sort(halves, axis=None))
    s.record("gsconv_channel_multiset", failures == 0, f"{failures} failures", "0", t0)

    t0 = time.perf_counter()
    violations = 0
    for i, kind in enumerate(("se", "cbam", "ca") * 10):
        block = build_block(BlockSpec(kind, 8, r=2), RandomInit(i, perturb=True), kind)
        x = rng.standard_normal((1, 8, 7, 5)).astype(np.float32) * 10
        violations += int(np.count_nonzero(np.abs(block(x)) > np.abs(x)))
    s.record("attention_output_bounded_by_input", violations == 0, f"{violations} elements exceed |x|", "0", t0)
    return s.results


# -- losses ------------------------------------------------------------------


def random_box_pair(rng, margin=1e-3):
    """Boxes of comparable size with no pair of edges within ``margin`` on either axis."""
    while True:
        pred = BBox(*rng.uniform(0, 4, 2), *rng.uniform(0.5, 3, 2))
        gt = BBox(*rng.uniform(0, 4, 2), *rng.uniform(0.5, 3, 2))
        px1, py1, px2, py2 = pred.corners()
        gx1, gy1, gx2, gy2 = gt.corners()
        gaps = [abs(a - b) for a in (px1, px2) for b in (gx1, gx2)]
        gaps += [abs(a - b) for a in (py1, py2) for b in (gy1, gy2)]
        if min(gaps) > margin:
            return pred, gt


def numeric_loss_grad(kind, pred, gt, step=FD_STEP):
    """Central differences of :func:`loss`, CIoU's alpha frozen at ``pred``."""
    alpha = ciou_alpha(pred, gt) if kind == "ciou" else None
    base = [pred.cx, pred.cy, pred.w, pred.h]
    out = []
    for i in range(4):
        def f(t, i=i):
            p = list(base)
            p[i] = t
            return loss(kind, BBox(*p), gt, alpha=alpha)
        out.append(finite_difference(f, base[i], step))
    return np.array(out)


def losses_suite(seed=0, tol=DEFAULT_TOL):
    s = _Suite("losses")
    rng = np.random.default_rng(seed)

    t0 = time.perf_counter()
    pred, gt = BBox(0.5, 0.5, 1, 1), BBox(2.5, 0.5, 1, 1)
    expected = {"iou": 1.0, "giou": 4 / 3, "diou": 1.4, "ciou": 1.4, "eiou": 1.4}
    worst = max(abs(loss(k, pred, gt) - v) for k, v in expected.items())
    s.record("worked_pair_values", worst <= 1e-9, f"max error {worst:.2e}", "1e-9", t0)

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        a, b = random_box_pair(rng, margin=0.0)
        worst = max(worst, abs(rasterized_iou(a, b, 1024) - iou(a, b)))
    s.record("rasterized_iou_matches_100_pairs", worst <= 2e-3, f"max error {worst:.2e}", "2e-3", t0)

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        gt_box = BBox(*rng.uniform(-5, 5, 2), *rng.uniform(0.1, 5, 2))
        k = rng.uniform(0.1, 10)
        p = BBox(*rng.uniform(-5, 5, 2), k * gt_box.w, k * gt_box.h)
        worst = max(worst, abs(loss("ciou", p, gt_box) - loss("diou", p, gt_box)))
    s.record("ciou_degenerates_to_diou_for_proportional_boxes", worst < 1e-12, f"max |CIoU-DIoU| {worst:.2e}", "< 1e-12", t0)

    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p = BBox(0, 0, *rng.uniform(0.05, 10, 2))
        g = BBox(0, 0, *rng.uniform(0.05, 10, 2))
        dv_dw, dv_dh = ciou_v_grad(p, g)
        worst = max(worst, abs(dv_dw + p.h / p.w * dv_dh))
    s.record("aspect_gradient_opposite_signs_1000_pairs", worst <= 1e-12,
             f"max |dv/dw + (h/w) dv/dh| {worst:.2e}", "1e-12", t0)

    t0 = time.perf_counter()
    worst = 0.0
    failures = 0
    for _ in range(100):
        p, g = random_box_pair(rng)
        for kind in LOSS_KINDS:
            analytic = loss_grad(kind, p, g).vector
            numeric = numeric_loss_grad(kind, p, g)
            for a, n in zip(analytic, numeric):
                ok, scaled = fd_close(a, n, tol)
                failures += not ok
                worst = max(worst, scaled)
    s.record("loss_grad_matches_finite_differences_100x5", failures == 0,
             f"{failures} failures, worst err/allowed {worst:.3f}", f"rtol {tol:g}, floor {FD_FLOOR:g}", t0)
    return s.results


# -- activations -------------------------------------------------------------

ACTIVATIONS = tuple(Activation(k) for k in act_mod.KINDS)
KINKS = {"relu": (0.0,), "hard_swish": (-3.0, 3.0)}


def activations_suite(seed=0, tol=DEFAULT_TOL):
    s = _Suite("activations")
    rng = np.random.default_rng(seed)

    t0 = time.perf_counter()
    failures = 0
    worst = 0.0
    for a in ACTIVATIONS:
        xs = rng.uniform(-10, 10, 1000)
        for x in xs:
            if any(abs(x - kink) < 1e-3 for kink in KINKS.get(a.kind, ())):
                x = x + 2e-3
            analytic = float(activate_grad(a, np.float64(x)))
            numeric = finite_difference(lambda t: float(activate(a, np.float64(t))), float(x), FD_STEP)
            ok, scaled = fd_close(analytic, numeric, tol)
            failures += not ok
            worst = max(worst, scaled)
    s.record("activate_grad_matches_finite_differences_1000x6", failures == 0,
             f"{failures} failures, worst err/allowed {worst:.3f}", f"rtol {tol:g}, floor {FD_FLOOR:g}", t0)

    t0 = time.perf_counter()
    grid = np.round(np.arange(-10000, 10001) / 1000, 3)
    gap = float(np.max(np.abs(activate("mish", grid) - activate("swish", grid))))
    s.record("mish_swish_max_gap", abs(gap - MISH_SWISH_MAX_GAP) <= 0.01 * MISH_SWISH_MAX_GAP,
             f"{gap:.8f}", f"{MISH_SWISH_MAX_GAP} +-1%", t0)

    t0 = time.perf_counter()
    grid = np.linspace(-20, 20, 40001)
    ok = True
    detail = []
    for kind in ("swish", "mish"):
        y = activate(kind, grid)
        i = int(np.argmin(y))
        bounded = y.min() > -0.5 and abs(y[-1] - 20) < 1e-6
        interior_min = 0 < i < len(grid) - 1 and grid[i] < 0 and y[i] < y[0] and y[i] < y[-1]
        ok = ok and bounded and interior_min
        detail.append(f"{kind} min {y.min():.4f} at x={grid[i]:.3f}, f(20)={y[-1]:.6f}")
    s.record("bounded_below_unbounded_above_non_monotonic", ok, "; ".join(detail), "min > -0.5, interior min at x<0", t0)
    return s.results


# -- cost --------------------------------------------------------------------

GSCONV_SWEEP = (32, 64, 96, 128, 192, 256)
GSCONV_BAND = (0.58, 0.70)


def _ratio_pc(c1, c2, k, h=1, w=1):
    sc, dsc = cost_sc(c1, c2, k, h, w), cost_dsc(c1, c2, k, h, w)
    return Fraction(dsc.params, sc.params), Fraction(dsc.flops, sc.flops)


def gsconv_sc_ratio(c, k=1, k_dw=5):
    gs = cost_block(BlockSpec("gsconv", c, c, k=k, k_dw=k_dw), 1, 1)
    return gs.flops / cost_sc(c, c, k, 1, 1).flops


def vov_vs_csp(in_c, n, h=20, w=20):
    vov = cost_block(BlockSpec("vov_gscsp", in_c, in_c, n=n), h, w).flops
    csp = cost_block(BlockSpec("csp", in_c, in_c, n=n), h, w).flops
    return vov, csp


def counted_pool_comparisons(block, c=1, size=32):
    """Comparisons per output pixel, counted while running ``block`` on a ``size x size`` map."""
    x = np.random.default_rng(0).standard_normal((1, c, size, size)).astype(np.float32)
    with count_ops() as ops:
        block(x)
    return Fraction(ops.comparisons, c * size * size)


def cost_suite(seed=0, tol=DEFAULT_TOL):
    s = _Suite("cost")
    rng = np.random.default_rng(seed)

    t0 = time.perf_counter()
    rp, rc = _ratio_pc(3, 16, 3, 320, 320)
    value = float(rp)
    s.record("appendix_ratio_3_16_k3", rp == rc and abs(value - 0.174) <= 5e-4,
             f"ratio_p={value:.5f} ratio_c={float(rc):.5f}", "= each other, |x - 0.174| <= 5e-4", t0)

    t0 = time.perf_counter()
    bad = 0
    for _ in range(50):
        c1, c2 = (int(v) for v in rng.integers(1, 513, 2))
        k = int(rng.choice([1, 3, 5, 7]))
        h, w = (int(v) for v in rng.integers(1, 321, 2))
        rp, rc = _ratio_pc(c1, c2, k, h, w)
        bad += not (rp == rc == Fraction(1, c2) + Fraction(1, k * k))
    s.record("ratio_p_equals_ratio_c_50_configs", bad == 0, f"{bad} inexact", "0 (exact rationals)", t0)

    t0 = time.perf_counter()
    analytic = sppf_efficiency((5, 9, 13), 5, 3)
    spp_count = counted_pool_comparisons(SPP())
    sppf_count = counted_pool_comparisons(SPPF())
    counted = float((spp_count - sppf_count) / sppf_count * 100)
    ok = all(abs(v - 277.8) <= 1e-3 * 277.8 for v in (analytic, counted)) and analytic == counted
    s.record("sppf_efficiency", ok,
             f"analytic {analytic:.2f}%, counted {counted:.2f}% ({spp_count} vs {sppf_count} per pixel)",
             "277.8% +-0.1%", t0)

    t0 = time.perf_counter()
    ratios = {c: gsconv_sc_ratio(c) for c in GSCONV_SWEEP}
    lo, hi = GSCONV_BAND
    outside = [c for c, r in ratios.items() if not lo <= r <= hi]
    s.record("gsconv_flops_band", not outside,
             ", ".join(f"c={c}: {r:.4f}" for c, r in ratios.items())
             + (f" [outside: {outside}]" if outside else ""),
             f"[{lo}, {hi}] for k=1, k_dw=5", t0)

    t0 = time.perf_counter()
    parts = []
    ok = True
    for in_c in (64, 128, 256):
        for n in (1, 3):
            vov, csp = vov_vs_csp(in_c, n)
            ok = ok and vov < csp
            parts.append(f"c={in_c},n={n}: -{100 * (csp - vov) / csp:.2f}%")
    s.record("vov_gscsp_cheaper_than_csp", ok, "; ".join(parts), "VoV-GSCSP flops < CSP flops", t0)

    t0 = time.perf_counter()
    bad = 0
    kinds = ("conv", "dsc", "gsconv", "gs_bottleneck", "vov_gscsp", "csp", "se", "cbam", "ca", "spp", "sppf")
    for i in range(50):
        kind = kinds[i % len(kinds)]
        spec, shape = _block_case(kind, rng)
        block = build_block(spec, RandomInit(i), kind)
        x = rng.standard_normal(shape).astype(np.float32)
        with use_conv_path("naive"), count_ops() as ops:
            block(x)
        bad += ops.macs != cost_block(spec, shape[2], shape[3]).flops
    s.record("instrumented_macs_equal_analytic_50_configs", bad == 0, f"{bad} mismatches", "0 (exact)", t0)
    return s.results


SUITE_FUNCS = {
    "conv": conv_suite,
    "shuffle": shuffle_suite,
    "sppf": sppf_suite,
    "blocks": blocks_suite,
    "losses": losses_suite,
    "activations": activations_suite,
    "cost": cost_suite,
}


def run_suite(name, seed=0, tol=DEFAULT_TOL):
    """Results for one suite, or for every suite when ``name == "all"``."""
    if name == "all":
        return [r for suite in SUITES for r in SUITE_FUNCS[suite](seed=seed, tol=tol)]
    if name not in SUITE_FUNCS:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES + ('all',)}")
    return SUITE_FUNCS[name](seed=seed, tol=tol)
