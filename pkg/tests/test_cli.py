import io

import numpy as np
import pytest

from slimneck.cli import main
from slimneck.cost import CSV_COLUMNS, cost_sc
from slimneck.graph import example_spec_path, init_weights, read_spec, save_weights
from slimneck.tensor import encode_tensor, load_tensor, save_tensor

TOY = str(example_spec_path("slimneck_v5_toy.spec"))
TOY_CSP = str(example_spec_path("slimneck_v5_toy_csp.spec"))
ONE = str(example_spec_path("single_conv.spec"))


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_analyze_single_conv_csv():
    code, text = run("analyze", ONE, "--format", "csv")
    assert code == 0
    header, row = text.splitlines()
    assert header == ",".join(CSV_COLUMNS)
    sc = cost_sc(3, 8, 3, 64, 64)
    assert row.split(",")[4:6] == [str(sc.params), str(sc.flops)]


def test_analyze_compare_reports_negative_delta():
    code, text = run("analyze", TOY, "--compare", TOY_CSP)
    assert code == 0
    flops_line = next(ln for ln in text.splitlines() if ln.strip().startswith("flops"))
    assert "delta=-" in flops_line


def test_analyze_input_shape_override():
    _, text = run("analyze", ONE, "--format", "csv", "--input-shape", "1,3,32,32")
    assert text.splitlines()[1].split(",")[5] == str(cost_sc(3, 8, 3, 32, 32).flops)


def test_analyze_bad_spec_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.spec"
    bad.write_text("input 1 3 8 8\nlayer conv name=a in=nowhere out_c=4\noutput a\n")
    code, _ = run("analyze", str(bad))
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_run_identity_graph_copies_payload(tmp_path):
    spec = tmp_path / "id.spec"
    spec.write_text("input 1 2 3 4\noutput input\n")
    x = np.random.default_rng(0).standard_normal((1, 2, 3, 4)).astype(np.float32)
    save_tensor(x, tmp_path / "x.ntsr")
    code, _ = run("run", str(spec), "--input", str(tmp_path / "x.ntsr"), "--output", str(tmp_path / "y.ntsr"))
    assert code == 0
    assert (tmp_path / "y.ntsr").read_bytes() == (tmp_path / "x.ntsr").read_bytes()


def test_run_with_weights_file_and_layer(tmp_path):
    g = read_spec(TOY)
    save_weights(init_weights(g, 0), tmp_path / "w.nwts")
    code_a, seeded = run("run", TOY, "--seed", "0")
    code_b, loaded = run("run", TOY, "--weights", str(tmp_path / "w.nwts"), "--seed", "0")
    assert code_a == code_b == 0 and seeded == loaded
    code, text = run("run", TOY, "--layer", "td4", "--output", str(tmp_path / "td4.ntsr"))
    assert code == 0 and text.startswith("td4 1x64x4x4")
    assert load_tensor(tmp_path / "td4.ntsr").shape == (1, 64, 4, 4)


def test_run_multiple_outputs_written_per_name(tmp_path):
    code, _ = run("run", TOY, "--output", str(tmp_path / "o.ntsr"))
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["o_out3.ntsr", "o_out4.ntsr", "o_out5.ntsr"]


@pytest.mark.parametrize(
    "argv",
    [
        ("run", TOY, "--weights", "/nonexistent.nwts"),
        ("run", TOY, "--input", "/nonexistent.ntsr"),
        ("run", TOY, "--layer", "ghost"),
        ("run", "/nonexistent.spec"),
        ("frobnicate",),
        ("analyze", ONE, "--bogus-flag"),
        ("run", TOY, "--input", "a", "--random"),
    ],
)
def test_usage_and_input_errors_exit_2(argv):
    assert run(*argv)[0] == 2


def test_run_rejects_wrong_input_shape(tmp_path):
    save_tensor(np.zeros((1, 4, 64, 64), np.float32), tmp_path / "x.ntsr")
    assert run("run", TOY, "--input", str(tmp_path / "x.ntsr"))[0] == 2


def test_check_sppf_passes():
    code, text = run("check", "--suite", "sppf")
    assert code == 0
    assert text.splitlines()[0].startswith("PASS  sppf/spp_equals_sppf")


def test_check_failure_exits_1(monkeypatch):
    from slimneck import checks

    monkeypatch.setitem(checks.SUITE_FUNCS, "sppf", lambda seed, tol: [checks.CheckResult("sppf", "x", False, "1", "0")])
    code, text = run("check", "--suite", "sppf")
    assert code == 1 and text.startswith("FAIL")


def test_bench_single_sample():
    code, text = run("bench", "--op", "sc", "--shape", "1,4,8,8", "--out-c", "4", "--k", "3", "--repeat", "1")
    assert code == 0
    median = text.split("median ")[1].split(" ms")[0]
    p10 = text.split("p10 ")[1].split(" ms")[0]
    p90 = text.split("p90 ")[1].split(" ms")[0]
    assert median == p10 == p90


def test_bench_rejects_zero_repeat():
    assert run("bench", "--op", "gsconv", "--repeat", "0")[0] == 2


def test_dump_maps(tmp_path):
    code, text = run("dump-maps", TOY, "--layer", "lat5", "--outdir", str(tmp_path), "--seed", "1")
    assert code == 0
    assert len(list(tmp_path.glob("lat5_c*.pgm"))) == 64
    assert len(text.splitlines()) == 64


def test_run_deterministic_output_bytes(tmp_path):
    run("run", TOY, "--layer", "out3", "--output", str(tmp_path / "a.ntsr"))
    run("run", TOY, "--layer", "out3", "--output", str(tmp_path / "b.ntsr"))
    a = load_tensor(tmp_path / "a.ntsr")
    assert encode_tensor(a) == (tmp_path / "b.ntsr").read_bytes()
