"""Analytic parameter and FLOP accounting.

Conventions, applied everywhere:

* FLOPs are multiply-accumulates (MACs): one conv weight applied at one
  output pixel is one FLOP. Pass ``mult_add=True`` to the renderers to
  report multiplies and adds separately (x2).
* Only convolution weights are counted. Bias, batch norm, activations,
  pooling, concatenation, shuffle and upsampling cost zero params and zero
  FLOPs.
* Counts are per sample; the batch size never enters.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .blocks import CBAM_SPATIAL_KERNEL, SPP_KERNELS, SPPF_KERNEL, block_output_shape
from .tensor import ConvParams

__all__ = [
    "CostReport",
    "LayerCost",
    "comparison_rows",
    "cost_block",
    "cost_dsc",
    "cost_sc",
    "format_comparison",
    "format_csv",
    "format_table",
    "graph_cost",
    "pool_comparisons",
    "sppf_efficiency",
    "sppf_efficiency_literal",
]

CSV_COLUMNS = ("name", "type", "in_shape", "out_shape", "params", "flops", "pct_of_total")
REPORT_FOOTER = (
    "FLOPs are multiply-accumulates per sample; only convolution weights are counted "
    "(bias, BN, activation, pooling, concat, shuffle and upsample cost zero)."
)


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int
    flops: int
    out_shape: tuple
    kind: str = ""
    in_shape: tuple = ()


def cost_sc(in_c, out_c, k, out_h, out_w):
    params = in_c * k * k * out_c
    return LayerCost("sc", params, out_h * out_w * params, (out_c, out_h, out_w), "sc")


def cost_dsc(in_c, out_c, k, out_h, out_w):
    params = in_c * k * k + in_c * out_c
    return LayerCost("dsc", params, out_h * out_w * params, (out_c, out_h, out_w), "dsc")


def _conv(in_c, out_c, k, out_h, out_w, groups=1):
    params = out_c * (in_c // groups) * k * k
    return params, params * out_h * out_w


def _gsconv(in_c, out_c, k, s, k_dw, h, w):
    oh, ow = ConvParams(1, 1, k, s).out_hw(h, w)
    half = out_c // 2
    p1, f1 = _conv(in_c, half, k, oh, ow)
    p2, f2 = _conv(half, half, k_dw, oh, ow, groups=half)
    return p1 + p2, f1 + f2


def _gs_bottleneck(in_c, out_c, k_dw, h, w):
    hidden = out_c // 2
    parts = [
        _gsconv(in_c, hidden, 1, 1, k_dw, h, w),
        _gsconv(hidden, out_c, 3, 1, k_dw, h, w),
        _conv(in_c, out_c, 1, h, w),
    ]
    return sum(p for p, _ in parts), sum(f for _, f in parts)


def _cross_stage(in_c, out_c, h, w, chain_cost, n):
    hidden = out_c // 2
    parts = [
        _conv(in_c, hidden, 1, h, w),
        _conv(in_c, hidden, 1, h, w),
        _conv(2 * hidden, out_c, 1, h, w),
    ] + [chain_cost(hidden)] * n
    return sum(p for p, _ in parts), sum(f for _, f in parts)


def _block_counts(spec, h, w):
    kind, c = spec.kind, spec.in_c
    if kind == "conv":
        oh, ow = ConvParams(1, 1, spec.k, spec.s).out_hw(h, w)
        return _conv(c, spec.out_c, spec.k, oh, ow)
    if kind == "dsc":
        oh, ow = ConvParams(1, 1, spec.k, spec.s).out_hw(h, w)
        p1, f1 = _conv(c, c, spec.k, oh, ow, groups=c)
        p2, f2 = _conv(c, spec.out_c, 1, oh, ow)
        return p1 + p2, f1 + f2
    if kind == "gsconv":
        return _gsconv(c, spec.out_c, spec.k, spec.s, spec.k_dw, h, w)
    if kind == "gs_bottleneck":
        return _gs_bottleneck(c, spec.out_c, spec.k_dw, h, w)
    if kind == "vov_gscsp":
        return _cross_stage(
            c, spec.out_c, h, w, lambda hid: _gs_bottleneck(hid, hid, spec.k_dw, h, w), spec.n
        )
    if kind == "csp":

        def standard_bottleneck(hid):
            p1, f1 = _conv(hid, hid, 1, h, w)
            p2, f2 = _conv(hid, hid, 3, h, w)
            return p1 + p2, f1 + f2

        return _cross_stage(c, spec.out_c, h, w, standard_bottleneck, spec.n)
    if kind in ("spp", "sppf"):
        return 0, 0
    mid = c // spec.reduction
    if kind == "se":
        return 2 * c * mid, 2 * c * mid
    if kind == "cbam":
        # the channel MLP is shared but evaluated on both the avg- and max-pooled vectors
        mlp = 2 * c * mid
        spatial_p, spatial_f = _conv(2, 1, CBAM_SPATIAL_KERNEL, h, w)
        return mlp + spatial_p, 2 * mlp + spatial_f
    # ca: reduce over the (1, h + w) strip, then one gate per axis
    return 3 * c * mid, (h + w) * c * mid + h * mid * c + w * mid * c


def cost_block(spec, h, w, name=None):
    """Cost of one block on an ``h x w`` input: the sum of its convolutions."""
    params, flops = _block_counts(spec, h, w)
    return LayerCost(
        name or spec.kind,
        params,
        flops,
        block_output_shape(spec, h, w),
        spec.kind,
        (spec.in_c, h, w),
    )


# -- SPP vs SPPF -------------------------------------------------------------


def pool_comparisons(kernels):
    """Max-comparisons per output pixel for stride-1 pools with the given kernels."""
    return sum(k * k - 1 for k in kernels)


def _check_chain(kernels_spp, kernel_sppf, chain_len):
    expected = [m * (kernel_sppf - 1) + 1 for m in range(1, chain_len + 1)]
    if sorted(kernels_spp) != expected:
        raise ValueError(
            f"kernels {list(kernels_spp)} are not realised by chaining {chain_len} "
            f"pools of size {kernel_sppf} (that gives {expected})"
        )


def sppf_efficiency(kernels_spp=SPP_KERNELS, kernel_sppf=SPPF_KERNEL, chain_len=3):
    """Percentage by which parallel pooling costs more comparisons than the chained form."""
    _check_chain(kernels_spp, kernel_sppf, chain_len)
    spp = pool_comparisons(kernels_spp)
    sppf = chain_len * (kernel_sppf * kernel_sppf - 1)
    return (spp - sppf) / sppf * 100.0


def sppf_efficiency_literal(kernels_spp=SPP_KERNELS):
    """``(sum(k_j^2) - i) - (k_1^2 - 1) * i`` over ``i`` kernels, k_1 the smallest.

    This is the comparison-count *difference* (a pure count, not a ratio);
    for (5, 9, 13) it is 200. Kept for comparison with :func:`sppf_efficiency`.
    """
    ks = sorted(kernels_spp)
    i = len(ks)
    return (sum(k * k for k in ks) - i) - (ks[0] ** 2 - 1) * i


# -- reports -----------------------------------------------------------------


@dataclass
class CostReport:
    rows: list = field(default_factory=list)

    @property
    def total_params(self):
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self):
        return sum(r.flops for r in self.rows)


def graph_cost(graph, input_shape=None):
    """Per-layer costs of a parsed graph, in topological order."""
    from .graph import LAYER_FREE_KINDS, propagate_shapes

    shapes = propagate_shapes(graph, input_shape)
    rows = []
    for layer in graph.layers:
        in_shapes = tuple(shapes[i] for i in layer.inputs)
        if layer.kind in LAYER_FREE_KINDS:
            rows.append(LayerCost(layer.name, 0, 0, shapes[layer.name], layer.kind, in_shapes))
            continue
        c, h, w = in_shapes[0]
        lc = cost_block(layer.block_spec(c), h, w, layer.name)
        rows.append(LayerCost(lc.name, lc.params, lc.flops, lc.out_shape, lc.kind, in_shapes))
    return CostReport(rows)


def _shape_str(shape):
    if shape and isinstance(shape[0], tuple):
        return "+".join(_shape_str(s) for s in shape)
    return "x".join(str(d) for d in shape)


def _pct(part, whole):
    return 100.0 * part / whole if whole else 0.0


def _rendered_rows(report, mult_add):
    scale = 2 if mult_add else 1
    total = report.total_flops
    for r in report.rows:
        yield (
            r.name,
            r.kind,
            _shape_str(r.in_shape),
            _shape_str(r.out_shape),
            r.params,
            r.flops * scale,
            f"{_pct(r.flops, total):.2f}",
        )


def format_csv(report, mult_add=False):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(_rendered_rows(report, mult_add))
    return buf.getvalue()


def format_table(report, mult_add=False):
    header = [c.upper() for c in CSV_COLUMNS]
    header[-1] = "%FLOPS"
    rows = [[str(v) for v in row] for row in _rendered_rows(report, mult_add)]
    scale = 2 if mult_add else 1
    rows.append(["TOTAL", "", "", "", str(report.total_params), str(report.total_flops * scale), "100.00"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    numeric = {4, 5, 6}

    def line(cells):
        return "  ".join(
            cell.rjust(widths[i]) if i in numeric else cell.ljust(widths[i])
            for i, cell in enumerate(cells)
        ).rstrip()

    out = [line(header), line(["-" * w for w in widths])]
    out += [line(r) for r in rows[:-1]]
    out += [line(["-" * w for w in widths]), line(rows[-1])]
    unit = "multiplies + adds" if mult_add else "MACs"
    out.append("")
    out.append(REPORT_FOOTER + f" Reported unit: {unit}.")
    return "\n".join(out) + "\n"


def comparison_rows(baseline, variant):
    """``(metric, baseline, variant, delta, delta_pct)`` for params and flops."""
    rows = []
    for metric in ("params", "flops"):
        b = getattr(baseline, f"total_{metric}")
        v = getattr(variant, f"total_{metric}")
        rows.append((metric, b, v, v - b, _pct(v - b, b)))
    return rows


def format_comparison(baseline, variant, mult_add=False):
    lines = ["", "comparison (variant vs baseline)"]
    for metric, b, v, d, pct in comparison_rows(baseline, variant):
        if metric == "flops" and mult_add:
            b, v, d = 2 * b, 2 * v, 2 * d
        lines.append(f"  {metric:<7} baseline={b}  variant={v}  delta={d:+d}  ({pct:+.2f}%)")
    return "\n".join(lines) + "\n"
