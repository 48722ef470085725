"""The eleven acceptance criteria, each at its stated tolerance and time limit.

Every test records one PASS/FAIL line; the full list is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

from slimneck import checks
from slimneck.graph import example_spec_path

GOLDEN = Path(__file__).parent / "golden"


def _pick(results, name):
    (r,) = [r for r in results if r.name == name]
    return r


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _judge(report, number, title, rows, seconds, limit):
    ok = all(r.passed for r in rows) and seconds < limit
    detail = "; ".join(f"{r.name}: {r.measured} [{r.bound}]" for r in rows)
    report(number, title, ok, f"{detail}; {seconds:.2f}s (limit {limit}s)")
    assert ok, detail


def test_criterion_01_appendix_ratio(acceptance_report):
    results, secs = _timed(checks.cost_suite)
    rows = [_pick(results, "appendix_ratio_3_16_k3"), _pick(results, "ratio_p_equals_ratio_c_50_configs")]
    _judge(acceptance_report, 1, "DSC/SC ratio", rows, secs, 1)


def test_criterion_02_sppf_efficiency(acceptance_report):
    results = checks.cost_suite()
    row = _pick(results, "sppf_efficiency")
    _judge(acceptance_report, 2, "SPPF efficiency", [row], row.seconds, 5)


def test_criterion_03_spp_equals_sppf(acceptance_report):
    results, secs = _timed(checks.sppf_suite)
    _judge(acceptance_report, 3, "SPP equals SPPF", results, secs, 30)


def test_criterion_04_gsconv_cost_band(acceptance_report):
    results = checks.cost_suite()
    row = _pick(results, "gsconv_flops_band")
    _judge(acceptance_report, 4, "GSConv cost band", [row], row.seconds, 1)


def test_criterion_05_vov_gscsp_cheaper(acceptance_report):
    results = checks.cost_suite()
    row = _pick(results, "vov_gscsp_cheaper_than_csp")
    _judge(acceptance_report, 5, "VoV-GSCSP below CSP", [row], row.seconds, 1)


def test_criterion_06_loss_values(acceptance_report):
    results = checks.losses_suite()
    rows = [_pick(results, "worked_pair_values"), _pick(results, "rasterized_iou_matches_100_pairs")]
    _judge(acceptance_report, 6, "loss correctness", rows, sum(r.seconds for r in rows), 20)


def test_criterion_07_ciou_flaw(acceptance_report):
    results = checks.losses_suite()
    rows = [
        _pick(results, "ciou_degenerates_to_diou_for_proportional_boxes"),
        _pick(results, "aspect_gradient_opposite_signs_1000_pairs"),
    ]
    _judge(acceptance_report, 7, "CIoU flaw reproduction", rows, sum(r.seconds for r in rows), 5)


def test_criterion_08_gradient_fidelity(acceptance_report):
    losses = checks.losses_suite(tol=1e-5)
    acts = checks.activations_suite(tol=1e-5)
    rows = [
        _pick(losses, "loss_grad_matches_finite_differences_100x5"),
        _pick(acts, "activate_grad_matches_finite_differences_1000x6"),
    ]
    _judge(acceptance_report, 8, "gradient fidelity", rows, sum(r.seconds for r in rows), 10)


def test_criterion_09_conv_paths(acceptance_report):
    results, secs = _timed(checks.conv_suite)
    rows = [_pick(results, "im2col_bit_identical_200_configs"), _pick(results, "im2col_faster_1x64x64x64_k3")]
    _judge(acceptance_report, 9, "conv path equivalence", rows, secs, 60)


def test_criterion_10_structural_fidelity(acceptance_report):
    blocks, secs_b = _timed(checks.blocks_suite)
    shuffle, secs_s = _timed(checks.shuffle_suite)
    rows = [r for r in blocks if r.name.endswith("_matches_primitive_composition")]
    rows.append(_pick(shuffle, "permutation_invariants_100_tensors"))
    _judge(acceptance_report, 10, "structural fidelity", rows, secs_b + secs_s, 30)


THREAD_SETTINGS = ("1", "2", "4")


def test_criterion_11_end_to_end_determinism(acceptance_report):
    golden = (GOLDEN / "slimneck_v5_toy_seed0.sha256").read_text()
    spec = str(example_spec_path("slimneck_v5_toy.spec"))
    outcomes = []
    worst = 0.0
    for threads in THREAD_SETTINGS:
        env = dict(os.environ, NUMBA_NUM_THREADS=threads, OMP_NUM_THREADS=threads)
        t0 = time.perf_counter()
        proc = subprocess.run(
            [sys.executable, "-m", "slimneck.cli", "run", spec, "--seed", "0"],
            capture_output=True, text=True, env=env, check=False,
        )
        worst = max(worst, time.perf_counter() - t0)
        outcomes.append(proc.returncode == 0 and proc.stdout == golden)
    ok = all(outcomes) and worst < 10
    matched = sum(outcomes)
    acceptance_report(
        11, "end-to-end determinism", ok,
        f"{matched}/{len(outcomes)} runs (threads {', '.join(THREAD_SETTINGS)}) match the golden checksums; "
        f"slowest run {worst:.2f}s (limit 10s)",
    )
    assert ok
