import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slimneck.blocks import named_rng
from slimneck.checks import reference_forward
from slimneck.cost import graph_cost
from slimneck.errors import FormatError, ShapeError, SpecError, WeightError
from slimneck.graph import (
    INPUT,
    WeightStore,
    build_network,
    decode_weights,
    dump_feature_maps,
    encode_weights,
    example_spec_path,
    forward,
    forward_all,
    init_weights,
    load_weights,
    output_checksums,
    parse_spec,
    read_pgm,
    read_spec,
    save_weights,
    serialize_spec,
)
from slimneck.tensor import encode_tensor

GOLDEN = Path(__file__).parent / "golden"
SHIPPED = ["single_conv.spec", "slimneck_v5_toy.spec", "slimneck_v5_toy_csp.spec"]
ONE_CONV = "input 1 3 64 64\nlayer conv name=c1 in=input out_c=8 k=3 s=1\noutput c1\n"


def golden_checksums():
    lines = (GOLDEN / "slimneck_v5_toy_seed0.sha256").read_text().split("\n")
    return {ln.split()[0]: ln.split("sha256=")[1] for ln in lines if ln}


def toy_input(seed=0):
    graph = read_spec(example_spec_path("slimneck_v5_toy.spec"))
    return graph, named_rng(seed, "input").standard_normal(graph.input_shape).astype(np.float32)


# -- parsing -----------------------------------------------------------------


def test_one_layer_graph():
    g = parse_spec(ONE_CONV)
    assert [layer.name for layer in g.layers] == ["c1"]
    assert g.shapes["c1"] == (8, 64, 64)
    out = forward(g, init_weights(g, 0), np.zeros((1, 3, 64, 64), np.float32))
    assert out["c1"].shape == (1, 8, 64, 64)


@pytest.mark.parametrize(
    "text,line,needle",
    [
        ("input 1 3 8 8\nlayer conv name=a in=ghost out_c=4\noutput a", 2, "ghost"),
        ("input 1 3 8 8\nlayer conv name=a in=input out_c=4\nlayer conv name=a in=a out_c=4\noutput a", 3, "a"),
        ("input 1 3 8 8\nlayer warp name=a in=input\noutput a", 2, "warp"),
        ("input 1 3 8 8\nlayer conv name=a in=input out_c=four\noutput a", 2, "out_c"),
        ("input 1 3 8 8\nlayer conv name=a in=b out_c=4\nlayer conv name=b in=input out_c=4\noutput a", 2, "b"),
        ("input 1 3 8\noutput input", 1, "input"),
    ],
)
def test_parse_errors_carry_line_numbers(text, line, needle):
    with pytest.raises(SpecError) as err:
        parse_spec(text)
    assert err.value.line == line
    assert needle in str(err.value)


def test_validation_error_names_layer():
    text = "input 1 3 8 8\nlayer conv name=a in=input out_c=4\nlayer conv name=b in=input out_c=6\nlayer add name=s in=a,b\noutput s"
    with pytest.raises(SpecError) as err:
        parse_spec(text)
    assert err.value.layer == "s"


@pytest.mark.parametrize("name", SHIPPED)
def test_serialization_is_a_fixed_point(name):
    g = read_spec(example_spec_path(name))
    once = serialize_spec(g)
    assert serialize_spec(parse_spec(once)) == once
    assert parse_spec(once).shapes == g.shapes


def test_toy_spec_has_three_vov_gscsp_layers():
    g = read_spec(example_spec_path("slimneck_v5_toy.spec"))
    assert sum(layer.kind == "vov_gscsp" for layer in g.layers) == 3
    assert [g.shapes[o] for o in g.outputs] == [(32, 8, 8), (64, 4, 4), (128, 2, 2)]


@pytest.mark.parametrize("name", SHIPPED)
def test_forward_shapes_agree_with_cost_model(name):
    g = read_spec(example_spec_path(name))
    values = forward_all(g, init_weights(g, 0), np.zeros(g.input_shape, np.float32))
    for row in graph_cost(g).rows:
        assert values[row.name].shape[1:] == row.out_shape


# -- weights -----------------------------------------------------------------


def test_init_weights_deterministic_and_bounded():
    g = read_spec(example_spec_path("slimneck_v5_toy.spec"))
    a, b, c = init_weights(g, 0), init_weights(g, 0), init_weights(g, 1)
    assert encode_weights(a) == encode_weights(b)
    first = next(iter(a))
    assert not np.array_equal(a[first], c[first])
    for name, arr in a.items():
        assert np.all(np.isfinite(arr))
        if name.endswith("conv.weight"):
            assert np.all(np.abs(arr) <= np.sqrt(6 / np.prod(arr.shape[1:])))
        elif name.endswith(("bn.gamma", "bn.var")):
            assert np.all(arr == 1)
        else:
            assert np.all(arr == 0)


def test_store_is_read_only():
    store = init_weights(parse_spec(ONE_CONV), 0)
    with pytest.raises(TypeError):
        store["c1.conv.weight"] = np.zeros(1)


def test_weights_roundtrip_and_errors(tmp_path):
    g = read_spec(example_spec_path("slimneck_v5_toy.spec"))
    store = init_weights(g, 3)
    save_weights(store, tmp_path / "w.nwts")
    again = load_weights(tmp_path / "w.nwts", g)
    assert encode_weights(again) == (tmp_path / "w.nwts").read_bytes()
    raw = encode_weights(store)
    with pytest.raises(FormatError):
        decode_weights(raw[:-3])
    with pytest.raises(FormatError):
        decode_weights(b"WTSN" + raw[4:])
    assert encode_weights(WeightStore({})) == b"NWTS" + (1).to_bytes(4, "little") + (0).to_bytes(4, "little")


def test_missing_and_extra_tensors_rejected():
    g = parse_spec(ONE_CONV)
    store = dict(init_weights(g, 0))
    missing = {k: v for k, v in store.items() if k != "c1.bn.gamma"}
    with pytest.raises(WeightError, match="c1.bn.gamma"):
        forward(g, WeightStore(missing), np.zeros((1, 3, 64, 64), np.float32))
    with pytest.raises(WeightError):
        build_network(g, WeightStore({**store, "stray.conv.weight": np.zeros((1, 1, 1, 1), np.float32)}))
    wrong = {**store, "c1.conv.weight": np.zeros((8, 3, 1, 1), np.float32)}
    with pytest.raises(WeightError):
        build_network(g, WeightStore(wrong))


def test_identity_style_conv_graph_reproduces_input():
    g = parse_spec("input 2 3 5 5\nlayer conv name=id in=input out_c=3 k=1 act=none\noutput id")
    store = dict(init_weights(g, 0))
    store["id.conv.weight"] = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 5)).astype(np.float32)
    np.testing.assert_allclose(forward(g, WeightStore(store), x)["id"], x, rtol=1e-5)


def test_input_shape_mismatch_rejected():
    g = parse_spec(ONE_CONV)
    with pytest.raises(ShapeError):
        forward(g, init_weights(g, 0), np.zeros((1, 4, 64, 64), np.float32))


# -- execution ---------------------------------------------------------------


def test_toy_forward_matches_golden_checksums():
    g, x = toy_input()
    assert output_checksums(forward(g, init_weights(g, 0), x)) == golden_checksums()


def test_golden_cross_checked_by_primitive_composition():
    g, x = toy_input()
    blocks = build_network(g, init_weights(g, 0))
    values = {INPUT: x}
    for layer in g.layers:
        args = [values[i] for i in layer.inputs]
        if layer.kind == "concat":
            values[layer.name] = np.concatenate(args, axis=1)
        elif layer.kind == "upsample_nearest2x":
            values[layer.name] = args[0].repeat(2, axis=2).repeat(2, axis=3)
        elif layer.kind == "add":
            values[layer.name] = args[0] + args[1]
        else:
            values[layer.name] = reference_forward(blocks[layer.name], args[0])
    digests = {o: hashlib.sha256(encode_tensor(values[o])).hexdigest() for o in g.outputs}
    assert digests == golden_checksums()


def test_forward_repeatable_and_intermediates_exposed():
    g, x = toy_input()
    w = init_weights(g, 0)
    a, b = forward_all(g, w, x), forward_all(g, w, x)
    assert set(a) == {INPUT} | {layer.name for layer in g.layers}
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


# -- feature maps ------------------------------------------------------------


def test_dump_feature_maps(tmp_path):
    g = parse_spec("input 1 1 4 6\nlayer conv name=c in=input out_c=2 k=1 act=none\noutput c")
    store = dict(init_weights(g, 0))
    store["c.conv.weight"] = np.array([0.0, 1.0], np.float32).reshape(2, 1, 1, 1)
    x = np.arange(24, dtype=np.float32).reshape(1, 1, 4, 6)
    paths = dump_feature_maps(g, WeightStore(store), x, "c", tmp_path)
    assert sorted(p.name for p in paths) == ["c_c0.pgm", "c_c1.pgm"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c_c0.pgm", "c_c1.pgm"]
    assert not np.any(read_pgm(tmp_path / "c_c0.pgm"))
    img = read_pgm(tmp_path / "c_c1.pgm")
    fmap = forward(g, WeightStore(store), x)["c"][0, 1]
    norm = (fmap - fmap.min()) / (fmap.max() - fmap.min())
    assert abs(img[0, 0] / 255 - norm[0, 0]) <= 1 / 255
    assert img.shape == (4, 6) and img.max() == 255
    with pytest.raises(SpecError):
        dump_feature_maps(g, WeightStore(store), x, "nope", tmp_path)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_pgm_quantization_bound(seed, tmp_path_factory):
    out = tmp_path_factory.mktemp("pgm")
    g = parse_spec("input 1 2 5 5\noutput input")
    x = np.random.default_rng(seed).standard_normal((1, 2, 5, 5)).astype(np.float32)
    dump_feature_maps(g, WeightStore({}), x, INPUT, out)
    for c in range(2):
        plane = x[0, c].astype(np.float64)
        norm = (plane - plane.min()) / (plane.max() - plane.min())
        assert np.all(np.abs(read_pgm(out / f"input_c{c}.pgm") / 255 - norm) <= 0.5 / 255 + 1e-12)
