"""IoU-family bounding-box regression losses with analytic gradients.

Boxes are ``(cx, cy, w, h)``. Five losses are provided:

=====  =====================================================================
iou    ``1 - IoU``
giou   ``1 - IoU + (C - union) / C``, C the enclosing-box area
diou   ``1 - IoU + rho^2 / d^2``, rho the centre distance, d the enclosing diagonal
ciou   DIoU plus ``alpha * v``, v the aspect-ratio consistency term
eiou   DIoU plus ``(w - w_gt)^2 / C_w^2 + (h - h_gt)^2 / C_h^2``
=====  =====================================================================

``C_w`` and ``C_h`` are the width and height of the smallest enclosing box.
For CIoU the trade-off weight ``alpha = v / ((1 - IoU) + v)`` is held
constant when differentiating, and is defined as 0 when ``v == 0``.

Gradients are taken with respect to the predicted box. Where a ``min`` or
``max`` switches branch (coinciding edges, boxes just touching) the gradient
is the mean of the two one-sided derivatives, and the result is flagged via
``BoxGradient.on_boundary``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "BBox",
    "BoxGradient",
    "LOSS_KINDS",
    "aspect_consistency",
    "ciou_alpha",
    "ciou_v_grad",
    "iou",
    "loss",
    "loss_grad",
    "rasterized_iou",
]

LOSS_KINDS = ("iou", "giou", "diou", "ciou", "eiou")
MIN_SIZE = 1e-9
_V_SCALE = 4.0 / math.pi**2


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box by centre and size; sizes below 1e-9 are clamped and flagged."""

    cx: float
    cy: float
    w: float
    h: float
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.w < MIN_SIZE or self.h < MIN_SIZE:
            object.__setattr__(self, "w", max(self.w, MIN_SIZE))
            object.__setattr__(self, "h", max(self.h, MIN_SIZE))
            object.__setattr__(self, "clamped", True)

    @classmethod
    def from_corners(cls, x1, y1, x2, y2):
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def corners(self):
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    @property
    def area(self):
        return self.w * self.h

    def shifted(self, dx=0.0, dy=0.0):
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def scaled(self, s):
        return BBox(self.cx * s, self.cy * s, self.w * s, self.h * s)


class BoxGradient(NamedTuple):
    cx: float
    cy: float
    w: float
    h: float
    on_boundary: bool = False

    @property
    def vector(self):
        return np.array([self.cx, self.cy, self.w, self.h])


def _step(a, b):
    """Derivative of choosing ``a`` in ``min``/``max``: 1 if a < b, 0 if a > b, 0.5 on ties."""
    return 1.0 if a < b else 0.0 if a > b else 0.5


class _Axis(NamedTuple):
    """Overlap and enclosure along one axis plus their derivatives.

    ``d_*_c`` is the derivative with respect to the predicted centre, ``d_*_s``
    with respect to the predicted size on this axis.
    """

    overlap: float
    d_overlap_c: float
    d_overlap_s: float
    span: float
    d_span_c: float
    d_span_s: float
    tie: bool


def _axis(c, s, gc, gs):
    lo, hi = c - s / 2, c + s / 2
    glo, ghi = gc - gs / 2, gc + gs / 2
    # overlap = max(0, min(hi, ghi) - max(lo, glo))
    takes_hi = _step(hi, ghi)
    takes_lo = _step(glo, lo)
    raw = min(hi, ghi) - max(lo, glo)
    raw_c = takes_hi - takes_lo
    raw_s = 0.5 * (takes_hi + takes_lo)
    pos = _step(0.0, raw)
    # span = max(hi, ghi) - min(lo, glo)
    enc_hi = _step(ghi, hi)
    enc_lo = _step(lo, glo)
    tie = hi == ghi or lo == glo or hi == glo or lo == ghi
    return _Axis(
        overlap=max(0.0, raw),
        d_overlap_c=pos * raw_c,
        d_overlap_s=pos * raw_s,
        span=max(hi, ghi) - min(lo, glo),
        d_span_c=enc_hi - enc_lo,
        d_span_s=0.5 * (enc_hi + enc_lo),
        tie=tie,
    )


def iou(a, b):
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def aspect_consistency(pred, gt):
    """CIoU's ``v = 4/pi^2 * (atan(w_gt/h_gt) - atan(w/h))^2``."""
    return _V_SCALE * (math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)) ** 2


def ciou_alpha(pred, gt):
    v = aspect_consistency(pred, gt)
    if v == 0.0:
        return 0.0
    return v / ((1.0 - iou(pred, gt)) + v)


def ciou_v_grad(pred, gt):
    """Partial derivatives ``(dv/dw, dv/dh)`` of the aspect term w.r.t. the predicted size.

    They always satisfy ``dv/dw == -(h / w) * dv/dh``: a step that grows the
    penalty through ``w`` shrinks it through ``h``, so gradient descent moves
    ``w`` and ``h`` in the same direction.
    """
    delta = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    common = 2 * _V_SCALE * delta / (pred.w**2 + pred.h**2)
    return -common * pred.h, common * pred.w


def _terms(kind, pred, gt, alpha=None):
    x = _axis(pred.cx, pred.w, gt.cx, gt.w)
    y = _axis(pred.cy, pred.h, gt.cy, gt.h)
    inter = x.overlap * y.overlap
    union = pred.area + gt.area - inter
    value = 1.0 - inter / union
    extra = {}
    if kind == "giou":
        enclosing = x.span * y.span
        value += (enclosing - union) / enclosing
    elif kind in ("diou", "ciou", "eiou"):
        rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
        diag2 = x.span**2 + y.span**2
        value += rho2 / diag2
        if kind == "ciou":
            v = aspect_consistency(pred, gt)
            if alpha is None:
                alpha = 0.0 if v == 0.0 else v / ((1.0 - inter / union) + v)
            extra["alpha"] = alpha
            value += alpha * v
        elif kind == "eiou":
            value += (pred.w - gt.w) ** 2 / x.span**2 + (pred.h - gt.h) ** 2 / y.span**2
    return value, x, y, inter, union, extra


def loss(kind, pred, gt, *, alpha=None):
    """Loss of ``pred`` against ``gt``. ``alpha`` overrides CIoU's trade-off weight."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
    return _terms(kind, pred, gt, alpha)[0]


def loss_grad(kind, pred, gt):
    """Gradient of :func:`loss` over the predicted ``(cx, cy, w, h)``."""
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")
    _, x, y, inter, union, extra = _terms(kind, pred, gt)

    # d(inter) and d(union) as (d/dcx, d/dcy, d/dw, d/dh)
    d_inter = np.array(
        [
            y.overlap * x.d_overlap_c,
            x.overlap * y.d_overlap_c,
            y.overlap * x.d_overlap_s,
            x.overlap * y.d_overlap_s,
        ]
    )
    d_area = np.array([0.0, 0.0, pred.h, pred.w])
    d_union = d_area - d_inter
    d_iou = (d_inter * union - inter * d_union) / union**2
    grad = -d_iou

    if kind == "giou":
        enclosing = x.span * y.span
        d_enc = np.array(
            [y.span * x.d_span_c, x.span * y.d_span_c, y.span * x.d_span_s, x.span * y.d_span_s]
        )
        grad -= (d_union * enclosing - union * d_enc) / enclosing**2
    elif kind in ("diou", "ciou", "eiou"):
        dx, dy = pred.cx - gt.cx, pred.cy - gt.cy
        rho2 = dx * dx + dy * dy
        diag2 = x.span**2 + y.span**2
        d_rho2 = np.array([2 * dx, 2 * dy, 0.0, 0.0])
        d_diag2 = 2 * np.array(
            [x.span * x.d_span_c, y.span * y.d_span_c, x.span * x.d_span_s, y.span * y.d_span_s]
        )
        grad += (d_rho2 * diag2 - rho2 * d_diag2) / diag2**2
        if kind == "ciou":
            dv_dw, dv_dh = ciou_v_grad(pred, gt)
            grad += extra["alpha"] * np.array([0.0, 0.0, dv_dw, dv_dh])
        elif kind == "eiou":
            ew, eh = pred.w - gt.w, pred.h - gt.h
            grad += np.array(
                [
                    -2 * ew**2 / x.span**3 * x.d_span_c,
                    -2 * eh**2 / y.span**3 * y.d_span_c,
                    2 * ew / x.span**2 - 2 * ew**2 / x.span**3 * x.d_span_s,
                    2 * eh / y.span**2 - 2 * eh**2 / y.span**3 * y.d_span_s,
                ]
            )
    return BoxGradient(*(float(g) for g in grad), on_boundary=x.tie or y.tie)


def rasterized_iou(a, b, resolution=1024):
    """Grid estimate of IoU: ``resolution x resolution`` cells over the enclosing box.

    A cell belongs to a box when its centre lies in the half-open extent
    ``[lo, hi)`` on both axes.
    """
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    x0, x1 = min(ax1, bx1), max(ax2, bx2)
    y0, y1 = min(ay1, by1), max(ay2, by2)
    idx = np.arange(resolution) + 0.5
    xs = x0 + idx * (x1 - x0) / resolution
    ys = y0 + idx * (y1 - y0) / resolution
    in_a = ((ys >= ay1) & (ys < ay2))[:, None] & ((xs >= ax1) & (xs < ax2))[None, :]
    in_b = ((ys >= by1) & (ys < by2))[:, None] & ((xs >= bx1) & (xs < bx2))[None, :]
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union
