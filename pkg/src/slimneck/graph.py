"""Line-oriented network specs, weight files and graph execution.

A ``.spec`` file declares one input, then one layer per line, then the
outputs. ``#`` starts a comment::

    input 1 3 64 64
    layer conv   name=c1 in=input out_c=8 k=3 s=2
    layer gsconv name=g1 in=c1 out_c=16 k=1
    layer concat name=cat in=c1,g1
    output cat

Layers may only consume the graph input or layers declared above them, so a
parsed spec is acyclic by construction.
"""

from __future__ import annotations

import hashlib
import re
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .blocks import BLOCK_KINDS, BlockSpec, RandomInit, StoreSource, block_output_shape, build_block
from .errors import FormatError, ShapeError, SpecError, WeightError
from .tensor import as_tensor, concat_channels, elementwise, encode_tensor, upsample_nearest2x

__all__ = [
    "GraphSpec",
    "LayerSpec",
    "WeightStore",
    "build_network",
    "dump_feature_maps",
    "example_spec_path",
    "forward",
    "forward_all",
    "init_weights",
    "load_weights",
    "output_checksums",
    "parse_spec",
    "propagate_shapes",
    "read_spec",
    "save_weights",
    "serialize_spec",
]

INPUT = "input"
LAYER_FREE_KINDS = ("concat", "add", "upsample_nearest2x")
KINDS = BLOCK_KINDS + LAYER_FREE_KINDS
ATTR_ORDER = ("out_c", "k", "s", "n", "r", "k_dw", "act")
_INT_ATTRS = frozenset(ATTR_ORDER) - {"act"}

# allowed attributes per kind; the first tuple holds the required ones
_ATTRS = {
    "conv": (("out_c",), ("k", "s", "act")),
    "dsc": (("out_c",), ("k", "s", "act")),
    "gsconv": (("out_c",), ("k", "s", "k_dw", "act")),
    "gs_bottleneck": (("out_c",), ("k_dw", "act")),
    "vov_gscsp": (("out_c",), ("n", "k_dw", "act")),
    "csp": (("out_c",), ("n", "act")),
    "spp": ((), ()),
    "sppf": ((), ()),
    "se": ((), ("r",)),
    "cbam": ((), ("r",)),
    "ca": ((), ("r",)),
    "concat": ((), ()),
    "add": ((), ()),
    "upsample_nearest2x": ((), ()),
}
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple
    attrs: tuple = ()  # sorted (key, value) pairs, values int or str

    @property
    def attr_dict(self):
        return dict(self.attrs)

    def block_spec(self, in_c):
        a = self.attr_dict
        return BlockSpec(
            kind=self.kind,
            in_c=in_c,
            out_c=a.get("out_c"),
            k=a.get("k", 1),
            s=a.get("s", 1),
            n=a.get("n", 1),
            r=a.get("r"),
            k_dw=a.get("k_dw", 5),
            act=a.get("act", "swish"),
        )


@dataclass(frozen=True)
class GraphSpec:
    input_shape: tuple
    layers: tuple
    outputs: tuple
    shapes: Mapping = field(default=None, compare=False, repr=False)

    def layer(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)


# -- parsing -----------------------------------------------------------------


def _parse_attr(key, value, lineno):
    if key in _INT_ATTRS:
        try:
            v = int(value)
        except ValueError:
            raise SpecError(f"attribute {key} expects an integer, got {value!r}", line=lineno) from None
        if v < 1:
            raise SpecError(f"attribute {key} must be >= 1, got {v}", line=lineno)
        return v
    if key == "act":
        from .activations import parse_activation

        try:
            parse_activation(value)
        except ValueError as exc:
            raise SpecError(str(exc), line=lineno) from None
        return value
    raise SpecError(f"unknown attribute {key!r}", line=lineno)


def _parse_layer(tokens, lineno, known):
    if len(tokens) < 2:
        raise SpecError("layer line needs a kind", line=lineno)
    kind = tokens[1]
    if kind not in KINDS:
        raise SpecError(f"unknown layer kind {kind!r}", line=lineno)
    fields = {}
    for tok in tokens[2:]:
        key, eq, value = tok.partition("=")
        if not eq or not value:
            raise SpecError(f"expected key=value, got {tok!r}", line=lineno)
        if key in fields:
            raise SpecError(f"attribute {key!r} given twice", line=lineno)
        fields[key] = value
    name = fields.pop("name", None)
    if name is None:
        raise SpecError("layer is missing name=", line=lineno)
    if not _NAME_RE.match(name) or name == INPUT:
        raise SpecError(f"invalid layer name {name!r}", line=lineno)
    if name in known:
        raise SpecError(f"duplicate layer name {name!r}", line=lineno)
    if "in" not in fields:
        raise SpecError(f"layer {name!r} is missing in=", line=lineno)
    inputs = tuple(fields.pop("in").split(","))
    for ref in inputs:
        if ref not in known:
            raise SpecError(f"layer {name!r} references undeclared layer {ref!r}", line=lineno)
    required, optional = _ATTRS[kind]
    for key in fields:
        if key not in required and key not in optional:
            raise SpecError(f"attribute {key!r} not allowed for kind {kind}", line=lineno)
    for key in required:
        if key not in fields:
            raise SpecError(f"kind {kind} requires attribute {key!r}", line=lineno)
    n_in = len(inputs)
    if kind == "add" and n_in != 2:
        raise SpecError(f"add takes exactly 2 inputs, got {n_in}", line=lineno)
    if kind not in ("add", "concat") and n_in != 1:
        raise SpecError(f"{kind} takes exactly 1 input, got {n_in}", line=lineno)
    attrs = tuple(
        sorted(((k, _parse_attr(k, v, lineno)) for k, v in fields.items()), key=_attr_rank)
    )
    return LayerSpec(name, kind, inputs, attrs)


def _attr_rank(item):
    return ATTR_ORDER.index(item[0])


def parse_spec(text):
    """Parse and validate spec text into a :class:`GraphSpec`."""
    input_shape = None
    layers = []
    outputs = []
    known = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "input":
            if input_shape is not None:
                raise SpecError("input declared twice", line=lineno)
            if layers:
                raise SpecError("input must come before the first layer", line=lineno)
            try:
                dims = tuple(int(t) for t in tokens[1:])
            except ValueError:
                raise SpecError("input dimensions must be integers", line=lineno) from None
            if len(dims) != 4 or min(dims) < 1:
                raise SpecError("input needs four positive dimensions n c h w", line=lineno)
            input_shape = dims
            known.add(INPUT)
        elif head == "layer":
            if input_shape is None:
                raise SpecError("layer before input declaration", line=lineno)
            layer = _parse_layer(tokens, lineno, known)
            layers.append(layer)
            known.add(layer.name)
        elif head == "output":
            if len(tokens) < 2:
                raise SpecError("output line names no layer", line=lineno)
            for ref in tokens[1:]:
                if ref not in known:
                    raise SpecError(f"output references undeclared layer {ref!r}", line=lineno)
                if ref in outputs:
                    raise SpecError(f"output {ref!r} declared twice", line=lineno)
                outputs.append(ref)
        else:
            raise SpecError(f"unknown directive {head!r}", line=lineno)
    if input_shape is None:
        raise SpecError("no input declaration")
    if not outputs:
        raise SpecError("no output declaration")
    graph = GraphSpec(input_shape, tuple(layers), tuple(outputs))
    shapes = propagate_shapes(graph)
    return GraphSpec(input_shape, tuple(layers), tuple(outputs), shapes)


def read_spec(path):
    return parse_spec(Path(path).read_text(encoding="utf-8"))


def serialize_spec(graph):
    """Canonical text: no comments, fixed attribute order, one space between fields."""
    lines = ["input " + " ".join(str(d) for d in graph.input_shape)]
    for layer in graph.layers:
        parts = ["layer", layer.kind, f"name={layer.name}", "in=" + ",".join(layer.inputs)]
        parts += [f"{k}={v}" for k, v in layer.attrs]
        lines.append(" ".join(parts))
    lines.append("output " + " ".join(graph.outputs))
    return "\n".join(lines) + "\n"


def example_spec_path(name):
    """Path of a spec shipped with the package, e.g. ``"slimneck_v5_toy.spec"``."""
    return Path(str(resources.files("slimneck") / "specs" / name))


# -- shapes ------------------------------------------------------------------


class _NullSource:
    """Zero-cost parameter source used only to run block constructor checks."""

    def conv_weight(self, name, shape):
        return np.broadcast_to(np.float32(0), shape)

    def conv_bias(self, name, out_c):
        return np.broadcast_to(np.float32(0), (out_c, 1, 1, 1))

    def bn(self, name, c):
        from .blocks import BatchNorm

        z = np.broadcast_to(np.float32(0), (c, 1, 1, 1))
        return BatchNorm(z, z, z, z)


def propagate_shapes(graph, input_shape=None):
    """``{name: (c, h, w)}`` for the input and every layer; raises naming the bad layer."""
    n, c, h, w = input_shape or graph.input_shape
    shapes = {INPUT: (c, h, w)}
    null = _NullSource()
    for layer in graph.layers:
        ins = [shapes[i] for i in layer.inputs]
        try:
            if layer.kind == "concat":
                if len({(s[1], s[2]) for s in ins}) != 1:
                    raise ShapeError("h,w", f"inputs disagree spatially: {ins}")
                shapes[layer.name] = (sum(s[0] for s in ins), ins[0][1], ins[0][2])
            elif layer.kind == "add":
                if ins[0] != ins[1]:
                    raise ShapeError("shape", f"inputs differ: {ins[0]} vs {ins[1]}")
                shapes[layer.name] = ins[0]
            elif layer.kind == "upsample_nearest2x":
                ci, hi, wi = ins[0]
                shapes[layer.name] = (ci, 2 * hi, 2 * wi)
            else:
                ci, hi, wi = ins[0]
                spec = layer.block_spec(ci)
                build_block(spec, null, layer.name)
                shapes[layer.name] = block_output_shape(spec, hi, wi)
        except (ValueError, ArithmeticError) as exc:
            raise SpecError(str(exc), layer=layer.name) from None
    return shapes


# -- weights -----------------------------------------------------------------


class WeightStore(Mapping):
    """Read-only ``{"layer.role": tensor}`` mapping; tensors are 4-D float32."""

    def __init__(self, tensors=()):
        self._tensors = {}
        for name, arr in dict(tensors).items():
            arr = np.array(arr, dtype=np.float32)
            if arr.ndim != 4:
                raise WeightError(f"weight '{name}' must be 4-D, got shape {arr.shape}")
            arr.flags.writeable = False
            self._tensors[name] = arr

    def __getitem__(self, name):
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __repr__(self):
        return f"WeightStore({len(self)} tensors)"


class _Tracking(StoreSource):
    def __init__(self, store):
        super().__init__(store)
        self.used = set()

    def _get(self, name, shape):
        self.used.add(name)
        return super()._get(name, shape)


def init_weights(graph, seed):
    """Deterministic weights for every parameterised layer of ``graph``."""
    src = RandomInit(seed)
    for layer in graph.layers:
        if layer.kind not in LAYER_FREE_KINDS:
            c = graph.shapes[layer.inputs[0]][0]
            build_block(layer.block_spec(c), src, layer.name)
    return WeightStore(src.tensors)


def build_network(graph, weights):
    """``{layer name: block}`` from a weight store; every tensor must be used exactly."""
    src = _Tracking(weights)
    blocks = {}
    for layer in graph.layers:
        if layer.kind not in LAYER_FREE_KINDS:
            c = graph.shapes[layer.inputs[0]][0]
            blocks[layer.name] = build_block(layer.block_spec(c), src, layer.name)
    extra = sorted(set(weights) - src.used)
    if extra:
        raise WeightError(f"weight store has tensors the graph does not use: {extra[:5]}")
    return blocks


def forward_all(graph, weights, x):
    """Evaluate every layer; returns ``{name: tensor}`` including ``"input"``."""
    x = as_tensor(x)
    if x.shape[1:] != graph.shapes[INPUT]:
        raise ShapeError("x", f"shape {x.shape} does not match declared input {graph.input_shape}")
    blocks = build_network(graph, weights)
    values = {INPUT: x}
    for layer in graph.layers:
        args = [values[i] for i in layer.inputs]
        if layer.kind == "concat":
            y = concat_channels(args)
        elif layer.kind == "add":
            y = elementwise(args[0], args[1], "add")
        elif layer.kind == "upsample_nearest2x":
            y = upsample_nearest2x(args[0])
        else:
            y = blocks[layer.name](args[0])
        values[layer.name] = y
    return values


def forward(graph, weights, x):
    """Declared outputs, in declaration order."""
    values = forward_all(graph, weights, x)
    return {name: values[name] for name in graph.outputs}


def output_checksums(outputs):
    """SHA-256 of each output's ``.ntsr`` encoding."""
    return {name: hashlib.sha256(encode_tensor(t)).hexdigest() for name, t in outputs.items()}


# -- .nwts binary format -----------------------------------------------------

NWTS_MAGIC = b"NWTS"
NWTS_VERSION = 1
_HEAD = struct.Struct("<4sII")
_U32 = struct.Struct("<I")
_DIMS = struct.Struct("<IIII")


def encode_weights(store):
    parts = [_HEAD.pack(NWTS_MAGIC, NWTS_VERSION, len(store))]
    for name, arr in store.items():
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _DIMS.pack(*arr.shape), arr.astype("<f4").tobytes()]
    return b"".join(parts)


def decode_weights(buf):
    def take(size, what):
        nonlocal pos
        if pos + size > len(buf):
            raise FormatError(f"truncated weight file while reading {what}")
        chunk = buf[pos : pos + size]
        pos += size
        return chunk

    pos = 0
    magic, version, count = _HEAD.unpack(take(_HEAD.size, "header"))
    if magic != NWTS_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {NWTS_MAGIC!r}")
    if version != NWTS_VERSION:
        raise FormatError(f"unsupported version {version}")
    tensors = {}
    for i in range(count):
        (length,) = _U32.unpack(take(_U32.size, f"entry {i} name length"))
        name = take(length, f"entry {i} name").decode("utf-8")
        dims = _DIMS.unpack(take(_DIMS.size, f"entry '{name}' dims"))
        payload = take(4 * int(np.prod(dims)), f"entry '{name}' data")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after {count} entries")
    return WeightStore(tensors)


def save_weights(store, path):
    Path(path).write_bytes(encode_weights(store))


def load_weights(path, graph=None):
    """Read a ``.nwts`` file; with ``graph``, also check it matches the graph exactly."""
    store = decode_weights(Path(path).read_bytes())
    if graph is not None:
        build_network(graph, store)
    return store


# -- feature maps ------------------------------------------------------------


def _to_gray(plane):
    lo, hi = float(plane.min()), float(plane.max())
    if hi == lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    scaled = (plane.astype(np.float64) - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def write_pgm(path, image):
    h, w = image.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise FormatError(f"{path}: not an 8-bit binary PGM")
    w, h = (int(t) for t in dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w)


def dump_feature_maps(graph, weights, x, layer_name, out_dir):
    """Write one grayscale PGM per channel of ``layer_name`` (first sample).

    Each channel is min-max normalised to 0..255 on its own; a constant
    channel becomes all zeros. Files are named ``{layer}_c{idx}.pgm``.
    """
    if layer_name != INPUT and layer_name not in graph.shapes:
        raise SpecError(f"unknown layer {layer_name!r}")
    values = forward_all(graph, weights, x)
    fmap = values[layer_name][0]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for idx, plane in enumerate(fmap):
        path = out_dir / f"{layer_name}_c{idx}.pgm"
        write_pgm(path, _to_gray(plane))
        paths.append(path)
    return paths
