from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slimneck.blocks import SPP, SPPF, BlockSpec, RandomInit, build_block
from slimneck.checks import counted_pool_comparisons, gsconv_sc_ratio, vov_vs_csp
from slimneck.cost import (
    CSV_COLUMNS,
    comparison_rows,
    cost_block,
    cost_dsc,
    cost_sc,
    format_csv,
    format_table,
    graph_cost,
    pool_comparisons,
    sppf_efficiency,
    sppf_efficiency_literal,
)
from slimneck.graph import example_spec_path, parse_spec, read_spec
from slimneck.tensor import count_ops, use_conv_path

GOLDEN = Path(__file__).parent / "golden"


def test_sc_closed_form():
    c = cost_sc(3, 16, 3, 320, 320)
    assert (c.params, c.flops) == (432, 44_236_800)
    one = cost_sc(1, 1, 1, 1, 1)
    assert (one.params, one.flops) == (1, 1)


def test_dsc_ratio_appendix_config():
    sc, dsc = cost_sc(3, 16, 3, 320, 320), cost_dsc(3, 16, 3, 320, 320)
    assert Fraction(dsc.params, sc.params) == Fraction(1, 16) + Fraction(1, 9)
    assert round(dsc.flops / sc.flops, 5) == 0.17361


def test_dsc_costlier_in_trivial_corner():
    assert cost_dsc(7, 1, 1, 4, 4).params == 14 and cost_sc(7, 1, 1, 4, 4).params == 7


@settings(max_examples=100)
@given(c1=st.integers(1, 512), c2=st.integers(1, 512), k=st.sampled_from([1, 3, 5, 7]), h=st.integers(1, 64))
def test_flops_are_params_times_pixels(c1, c2, k, h):
    for cost in (cost_sc(c1, c2, k, h, h + 1), cost_dsc(c1, c2, k, h, h + 1)):
        assert cost.flops == cost.params * h * (h + 1)
    ratio = Fraction(cost_dsc(c1, c2, k, 1, 1).params, cost_sc(c1, c2, k, 1, 1).params)
    assert ratio == Fraction(1, c2) + Fraction(1, k * k)


def test_gsconv_ratio_hand_values():
    # per pixel: SC 64*64 = 4096, GSConv 64*32 + 32*25 = 2848
    assert cost_block(BlockSpec("gsconv", 64, 64), 1, 1).flops == 2848
    assert round(gsconv_sc_ratio(64), 4) == 0.6953
    assert round(gsconv_sc_ratio(128), 4) == 0.5977


def test_gsconv_ratio_closed_form():
    # ratio = 1/2 + k_dw^2 / (2c) at k = 1
    for c in (32, 64, 96, 128, 192, 256):
        assert gsconv_sc_ratio(c) == pytest.approx(0.5 + 25 / (2 * c), abs=1e-15)


@pytest.mark.parametrize("in_c", [64, 128, 256])
@pytest.mark.parametrize("n", [1, 3])
def test_vov_gscsp_cheaper_than_csp(in_c, n):
    vov, csp = vov_vs_csp(in_c, n)
    assert vov < csp


def test_sppf_efficiency_values():
    assert pool_comparisons((5, 9, 13)) == 272
    assert sppf_efficiency((5, 9, 13), 5, 3) == pytest.approx(2500 / 9, abs=1e-12)
    assert sppf_efficiency((5,), 5, 1) == 0
    assert sppf_efficiency_literal((5, 9, 13)) == 200
    with pytest.raises(ValueError):
        sppf_efficiency((5, 9, 11), 5, 3)


def test_sppf_counts_by_instrumentation():
    assert counted_pool_comparisons(SPP()) == 272
    assert counted_pool_comparisons(SPPF()) == 72


KINDS = ["conv", "dsc", "gsconv", "gs_bottleneck", "vov_gscsp", "csp", "se", "cbam", "ca", "spp", "sppf"]


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), c=st.sampled_from([4, 8, 12]), h=st.integers(2, 9), s=st.integers(1, 2))
def test_cost_matches_built_block(kind, c, h, s):
    spec = BlockSpec(kind, c, 8, k=3, s=s if kind in ("conv", "dsc", "gsconv") else 1, r=2, n=2)
    block = build_block(spec, RandomInit(0), "b")
    x = np.zeros((1, c, h, h + 1), np.float32)
    with use_conv_path("naive"), count_ops() as ops:
        y = block(x)
    expected = cost_block(spec, h, h + 1)
    assert ops.macs == expected.flops
    assert sum(m.weight.size for m in block.convs()) == expected.params
    assert y.shape[1:] == expected.out_shape


def test_single_conv_graph_is_one_sc_row():
    report = graph_cost(read_spec(example_spec_path("single_conv.spec")))
    (row,) = report.rows
    sc = cost_sc(3, 8, 3, 64, 64)
    assert (row.params, row.flops) == (sc.params, sc.flops)


def test_layer_free_graph_costs_nothing():
    report = graph_cost(parse_spec("input 1 3 8 8\noutput input\n"))
    assert report.rows == [] and report.total_params == 0 and report.total_flops == 0


def test_toy_spec_matches_golden_csv():
    report = graph_cost(read_spec(example_spec_path("slimneck_v5_toy.spec")))
    assert format_csv(report) == (GOLDEN / "slimneck_v5_toy_cost.csv").read_text()
    assert report.total_flops == sum(r.flops for r in report.rows)


def test_toy_variant_cheaper_than_csp_twin():
    slim = graph_cost(read_spec(example_spec_path("slimneck_v5_toy.spec")))
    base = graph_cost(read_spec(example_spec_path("slimneck_v5_toy_csp.spec")))
    rows = {m: (b, v, d) for m, b, v, d, _ in comparison_rows(base, slim)}
    assert rows["flops"][2] < 0 and rows["params"][2] < 0
    assert base.total_flops == 3_108_864 and base.total_params == 284_504


def test_renderers():
    report = graph_cost(read_spec(example_spec_path("single_conv.spec")))
    csv_text = format_csv(report)
    assert csv_text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert csv_text.splitlines()[1].split(",")[5] == str(cost_sc(3, 8, 3, 64, 64).flops)
    doubled = format_csv(report, mult_add=True).splitlines()[1].split(",")[5]
    assert int(doubled) == 2 * cost_sc(3, 8, 3, 64, 64).flops
    table = format_table(report)
    assert "TOTAL" in table and "multiply-accumulates" in table
