"""Wall-clock timing of single operations."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .blocks import RandomInit, conv_bn_act, gsconv
from .tensor import conv2d_im2col, conv2d_naive

OPS = ("conv_naive", "conv_im2col", "gsconv", "sc")
WARMUP = 3


@dataclass(frozen=True)
class Timing:
    samples: tuple

    @property
    def median(self):
        return statistics.median(self.samples)

    @property
    def p10(self):
        return float(np.percentile(self.samples, 10))

    @property
    def p90(self):
        return float(np.percentile(self.samples, 90))


def time_call(fn, repeat, warmup=WARMUP):
    """Run ``fn`` ``warmup`` times untimed, then ``repeat`` timed runs."""
    if repeat < 1:
        raise ValueError(f"repeat must be >= 1, got {repeat}")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return Timing(tuple(samples))


def make_op(op, shape, out_c, k, seed=0):
    """A zero-argument callable running ``op`` on a fixed random input."""
    n, c, h, w = shape
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape).astype(np.float32)
    if op in ("conv_naive", "conv_im2col"):
        weight = rng.standard_normal((out_c, c, k, k)).astype(np.float32)
        conv = conv2d_naive if op == "conv_naive" else conv2d_im2col
        return lambda: conv(x, weight)
    src = RandomInit(seed)
    if op == "gsconv":
        block = gsconv(src, "bench", c, out_c, k)
    elif op == "sc":
        block = conv_bn_act(src, "bench", c, out_c, k)
    else:
        raise ValueError(f"unknown op {op!r}; expected one of {OPS}")
    return lambda: block(x)


def bench(op, shape, out_c, k, repeat):
    return time_call(make_op(op, shape, out_c, k), repeat)
