"""Self-contained ONNX support: protobuf codec, numpy executor, oracle.

The mirror in this environment carries neither ``onnx`` nor
``onnxruntime``, so the interchange format is handled directly: a minimal
protobuf wire-format codec for the handful of ONNX messages that CNN
classifier graphs use, a numpy executor for their op set (Conv,
BatchNormalization, pooling, Gemm, elementwise glue), and the
ModelOracle backend on top.

Supported graphs: single-input feed-forward, opset >= 13, initializers
for all weights, nodes in topological order (required by the ONNX spec).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ImageTensor
from .errors import ManifestError
from .oracle import ModelOracle

# ---------------------------------------------------------------------------
# protobuf wire format
# ---------------------------------------------------------------------------

_WIRE_VARINT, _WIRE_I64, _WIRE_LEN, _WIRE_I32 = 0, 1, 2, 5


def _read_varint(buf: bytes, i: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        b = buf[i]
        i += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, i
        shift += 7


def _signed(v: int) -> int:
    return v - (1 << 64) if v >= (1 << 63) else v


def _iter_fields(buf: bytes):
    """Yield (field_number, wire_type, value) over a message payload."""
    i = 0
    n = len(buf)
    while i < n:
        tag, i = _read_varint(buf, i)
        num, wt = tag >> 3, tag & 7
        if wt == _WIRE_VARINT:
            v, i = _read_varint(buf, i)
        elif wt == _WIRE_I64:
            v = buf[i : i + 8]
            i += 8
        elif wt == _WIRE_LEN:
            ln, i = _read_varint(buf, i)
            v = buf[i : i + ln]
            i += ln
        elif wt == _WIRE_I32:
            v = buf[i : i + 4]
            i += 4
        else:
            raise ManifestError(f"unsupported protobuf wire type {wt}")
        yield num, wt, v


def _packed_varints(payload: bytes) -> list[int]:
    out = []
    i = 0
    while i < len(payload):
        v, i = _read_varint(payload, i)
        out.append(_signed(v))
    return out


def _encode_varint(v: int) -> bytes:
    if v < 0:
        v += 1 << 64
    out = bytearray()
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _field(num: int, wt: int, payload: bytes) -> bytes:
    return _encode_varint(num << 3 | wt) + payload


def _f_varint(num: int, v: int) -> bytes:
    return _field(num, _WIRE_VARINT, _encode_varint(v))


def _f_len(num: int, payload: bytes) -> bytes:
    return _field(num, _WIRE_LEN, _encode_varint(len(payload)) + payload)


def _f_str(num: int, s: str) -> bytes:
    return _f_len(num, s.encode())


def _f_float(num: int, v: float) -> bytes:
    return _field(num, _WIRE_I32, struct.pack("<f", v))


# ---------------------------------------------------------------------------
# ONNX messages (decode)
# ---------------------------------------------------------------------------

_DTYPES = {1: "<f4", 6: "<i4", 7: "<i8", 9: "?", 10: "<f2", 11: "<f8"}


def _decode_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    dtype = 1
    raw = b""
    floats: list[float] = []
    int64s: list[int] = []
    int32_raw: list[bytes] = []
    name = ""
    for num, wt, v in _iter_fields(buf):
        if num == 1:
            dims.extend(_packed_varints(v) if wt == _WIRE_LEN else [_signed(v)])
        elif num == 2:
            dtype = v
        elif num == 4:
            if wt == _WIRE_LEN:
                floats.extend(np.frombuffer(v, dtype="<f4").tolist())
            else:
                floats.append(struct.unpack("<f", v)[0])
        elif num == 5:
            int32_raw.append(v if wt == _WIRE_LEN else _encode_varint(v))
        elif num == 7:
            int64s.extend(_packed_varints(v) if wt == _WIRE_LEN else [_signed(v)])
        elif num == 8:
            name = v.decode()
        elif num == 9:
            raw = v
        elif num == 10:
            if wt == _WIRE_LEN:
                floats.extend(np.frombuffer(v, dtype="<f8").tolist())
    shape = tuple(dims)
    if raw:
        np_dtype = _DTYPES.get(dtype)
        if np_dtype is None:
            raise ManifestError(f"unsupported tensor data type {dtype}")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(shape)
    elif floats:
        arr = np.array(floats, dtype=np.float64 if dtype == 11 else np.float32).reshape(shape)
    elif int64s:
        arr = np.array(int64s, dtype=np.int64).reshape(shape)
    elif int32_raw:
        arr = np.array(_packed_varints(b"".join(int32_raw)), dtype=np.int32).reshape(shape)
    else:
        arr = np.zeros(shape, dtype=_DTYPES.get(dtype, "<f4"))
    return name, arr


def _decode_attr(buf: bytes):
    name = ""
    value = None
    ints: list[int] = []
    floats: list[float] = []
    for num, wt, v in _iter_fields(buf):
        if num == 1:
            name = v.decode()
        elif num == 2:
            value = struct.unpack("<f", v)[0]
        elif num == 3:
            value = _signed(v)
        elif num == 4:
            value = v.decode(errors="replace")
        elif num == 5:
            value = _decode_tensor(v)[1]
        elif num == 7:
            if wt == _WIRE_LEN:
                floats.extend(np.frombuffer(v, dtype="<f4").tolist())
            else:
                floats.append(struct.unpack("<f", v)[0])
        elif num == 8:
            ints.extend(_packed_varints(v) if wt == _WIRE_LEN else [_signed(v)])
    if ints:
        value = ints
    elif floats:
        value = floats
    return name, value


@dataclass
class OnnxNode:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict
    name: str = ""


def _decode_node(buf: bytes) -> OnnxNode:
    node = OnnxNode("", [], [], {})
    for num, wt, v in _iter_fields(buf):
        if num == 1:
            node.inputs.append(v.decode())
        elif num == 2:
            node.outputs.append(v.decode())
        elif num == 3:
            node.name = v.decode()
        elif num == 4:
            node.op_type = v.decode()
        elif num == 5:
            k, val = _decode_attr(v)
            node.attrs[k] = val
    return node


def _decode_value_info(buf: bytes) -> tuple[str, tuple[int, ...]]:
    name = ""
    shape: list[int] = []
    for num, _, v in _iter_fields(buf):
        if num == 1:
            name = v.decode()
        elif num == 2:
            for n2, _, v2 in _iter_fields(v):  # TypeProto
                if n2 == 1:  # tensor_type
                    for n3, _, v3 in _iter_fields(v2):
                        if n3 == 2:  # shape
                            for n4, _, v4 in _iter_fields(v3):
                                if n4 == 1:  # dim
                                    dim = 0
                                    for n5, _, v5 in _iter_fields(v4):
                                        if n5 == 1:
                                            dim = _signed(v5)
                                    shape.append(dim)
    return name, tuple(shape)


@dataclass
class OnnxGraph:
    nodes: list[OnnxNode] = field(default_factory=list)
    initializers: dict[str, np.ndarray] = field(default_factory=dict)
    inputs: dict[str, tuple[int, ...]] = field(default_factory=dict)
    outputs: dict[str, tuple[int, ...]] = field(default_factory=dict)
    name: str = ""


@dataclass
class OnnxModel:
    graph: OnnxGraph
    opset: int = 0

    @property
    def input_name(self) -> str:
        feeds = [n for n in self.graph.inputs if n not in self.graph.initializers]
        if len(feeds) != 1:
            raise ManifestError(f"expected exactly one graph input, got {feeds}")
        return feeds[0]

    @property
    def output_name(self) -> str:
        return next(iter(self.graph.outputs))


def parse_model(data: bytes) -> OnnxModel:
    graph = OnnxGraph()
    opset = 0
    for num, _, v in _iter_fields(data):
        if num == 7:
            for n2, _, v2 in _iter_fields(v):
                if n2 == 1:
                    graph.nodes.append(_decode_node(v2))
                elif n2 == 2:
                    graph.name = v2.decode()
                elif n2 == 5:
                    name, arr = _decode_tensor(v2)
                    graph.initializers[name] = arr
                elif n2 == 11:
                    name, shape = _decode_value_info(v2)
                    graph.inputs[name] = shape
                elif n2 == 12:
                    name, shape = _decode_value_info(v2)
                    graph.outputs[name] = shape
        elif num == 8:
            domain, version = "", 0
            for n2, _, v2 in _iter_fields(v):
                if n2 == 1:
                    domain = v2.decode()
                elif n2 == 2:
                    version = _signed(v2)
            if domain in ("", "ai.onnx"):
                opset = max(opset, version)
    if not graph.nodes:
        raise ManifestError("ONNX model has no graph nodes")
    return OnnxModel(graph, opset)


def load_model(path: str | Path) -> OnnxModel:
    return parse_model(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# ONNX messages (encode) — enough to build classifier graphs
# ---------------------------------------------------------------------------

_NP_TO_ONNX = {np.dtype("float32"): 1, np.dtype("int64"): 7, np.dtype("float64"): 11}


def make_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = _NP_TO_ONNX.get(arr.dtype)
    if dtype is None:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    out = b"".join(_f_varint(1, int(d)) for d in arr.shape)
    out += _f_varint(2, dtype)
    out += _f_len(9, arr.tobytes())
    out += _f_str(8, name)
    return out


def _make_attr(name: str, value) -> bytes:
    out = _f_str(1, name)
    if isinstance(value, bool):
        out += _f_varint(3, int(value)) + _f_varint(20, 2)
    elif isinstance(value, int):
        out += _f_varint(3, value) + _f_varint(20, 2)
    elif isinstance(value, float):
        out += _f_float(2, value) + _f_varint(20, 1)
    elif isinstance(value, str):
        out += _f_str(4, value) + _f_varint(20, 3)
    elif isinstance(value, np.ndarray):
        out += _f_len(5, make_tensor("", value)) + _f_varint(20, 4)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        out += b"".join(_f_varint(8, int(v)) for v in value) + _f_varint(20, 7)
    elif isinstance(value, (list, tuple)):
        out += b"".join(_f_float(7, float(v)) for v in value) + _f_varint(20, 6)
    else:
        raise ValueError(f"unsupported attribute value {value!r}")
    return out


def make_node(op_type: str, inputs, outputs, name: str = "", **attrs) -> bytes:
    out = b"".join(_f_str(1, s) for s in inputs)
    out += b"".join(_f_str(2, s) for s in outputs)
    if name:
        out += _f_str(3, name)
    out += _f_str(4, op_type)
    out += b"".join(_f_len(5, _make_attr(k, v)) for k, v in attrs.items())
    return out


def make_value_info(name: str, shape, elem_type: int = 1) -> bytes:
    dims = b"".join(_f_len(1, _f_varint(1, int(d))) for d in shape)
    tensor_type = _f_varint(1, elem_type) + _f_len(2, dims)
    return _f_str(1, name) + _f_len(2, _f_len(1, tensor_type))


def make_model(
    nodes: list[bytes],
    inputs: list[bytes],
    outputs: list[bytes],
    initializers: list[bytes],
    graph_name: str = "graph",
    opset: int = 13,
    ir_version: int = 8,
) -> bytes:
    graph = b"".join(_f_len(1, n) for n in nodes)
    graph += _f_str(2, graph_name)
    graph += b"".join(_f_len(5, t) for t in initializers)
    graph += b"".join(_f_len(11, vi) for vi in inputs)
    graph += b"".join(_f_len(12, vi) for vi in outputs)
    model = _f_varint(1, ir_version)
    model += _f_len(8, _f_varint(2, opset))
    model += _f_len(7, graph)
    return model


# ---------------------------------------------------------------------------
# numpy executor
# ---------------------------------------------------------------------------


def _attr(node: OnnxNode, name: str, default):
    return node.attrs.get(name, default)


def _pool_prepare(x, kernel, strides, pads, fill):
    kh, kw = kernel
    sh, sw = strides
    pt, pl, pb, pr = pads
    xp = np.pad(
        x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), mode="constant", constant_values=fill
    )
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw]


def _conv(x, w, b, strides, pads, dilations, group):
    n, cin, _, _ = x.shape
    m, cing, kh, kw = w.shape
    sh, sw = strides
    dh, dw = dilations
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    ekh, ekw = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (ekh, ekw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw, ::dh, ::dw]  # (N, C, OH, OW, kh, kw)
    outs = []
    mg = m // group
    for g in range(group):
        wg = w[g * mg : (g + 1) * mg]
        xg = win[:, g * cing : (g + 1) * cing]
        outs.append(np.einsum("nchwij,mcij->nmhw", xg, wg, optimize=True))
    out = np.concatenate(outs, axis=1) if group > 1 else outs[0]
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return out


def _run_node(node: OnnxNode, vals: dict[str, np.ndarray]) -> list[np.ndarray]:
    op = node.op_type
    x = vals[node.inputs[0]] if node.inputs and node.inputs[0] else None

    if op == "Conv":
        w = vals[node.inputs[1]]
        b = vals[node.inputs[2]] if len(node.inputs) > 2 else None
        kh, kw = _attr(node, "kernel_shape", list(w.shape[2:]))
        return [
            _conv(
                x, w, b,
                _attr(node, "strides", [1, 1]),
                _attr(node, "pads", [0, 0, 0, 0]),
                _attr(node, "dilations", [1, 1]),
                _attr(node, "group", 1),
            )
        ]
    if op == "BatchNormalization":
        scale, bias, mean, var = (vals[n] for n in node.inputs[1:5])
        eps = _attr(node, "epsilon", 1e-5)
        shape = (1, -1) + (1,) * (x.ndim - 2)
        return [
            (x - mean.reshape(shape))
            / np.sqrt(var.reshape(shape) + eps)
            * scale.reshape(shape)
            + bias.reshape(shape)
        ]
    if op == "Relu":
        return [np.maximum(x, 0)]
    if op == "Sigmoid":
        return [1.0 / (1.0 + np.exp(-x))]
    if op == "MaxPool":
        kernel = _attr(node, "kernel_shape", [1, 1])
        strides = _attr(node, "strides", [1, 1])
        pads = list(_attr(node, "pads", [0, 0, 0, 0]))
        if _attr(node, "ceil_mode", 0):
            # extend end padding so the final partial window is included
            for axis, (k, s) in enumerate(zip(kernel, strides)):
                size = x.shape[2 + axis] + pads[axis] + pads[axis + 2]
                rem = (size - k) % s
                if rem:
                    pads[axis + 2] += s - rem
        win = _pool_prepare(x, kernel, strides, pads, -np.inf)
        return [win.max(axis=(-2, -1))]
    if op == "AveragePool":
        kernel = _attr(node, "kernel_shape", [1, 1])
        strides = _attr(node, "strides", [1, 1])
        pads = _attr(node, "pads", [0, 0, 0, 0])
        win = _pool_prepare(x, kernel, strides, pads, 0.0)
        total = win.sum(axis=(-2, -1))
        if _attr(node, "count_include_pad", 0):
            return [total / (kernel[0] * kernel[1])]
        ones = _pool_prepare(np.ones_like(x), kernel, strides, pads, 0.0)
        return [total / ones.sum(axis=(-2, -1))]
    if op == "GlobalAveragePool":
        return [x.mean(axis=(2, 3), keepdims=True)]
    if op == "Flatten":
        axis = _attr(node, "axis", 1)
        return [x.reshape(int(np.prod(x.shape[:axis])), -1)]
    if op == "Reshape":
        shape = vals[node.inputs[1]].astype(int).tolist()
        shape = [x.shape[i] if s == 0 else s for i, s in enumerate(shape)]
        return [x.reshape(shape)]
    if op == "Gemm":
        a, b = x, vals[node.inputs[1]]
        if _attr(node, "transA", 0):
            a = a.T
        if _attr(node, "transB", 0):
            b = b.T
        out = _attr(node, "alpha", 1.0) * (a @ b)
        if len(node.inputs) > 2:
            out = out + _attr(node, "beta", 1.0) * vals[node.inputs[2]]
        return [out]
    if op == "MatMul":
        return [x @ vals[node.inputs[1]]]
    if op == "Add":
        return [x + vals[node.inputs[1]]]
    if op == "Sub":
        return [x - vals[node.inputs[1]]]
    if op == "Mul":
        return [x * vals[node.inputs[1]]]
    if op == "Concat":
        return [np.concatenate([vals[n] for n in node.inputs], axis=_attr(node, "axis", 0))]
    if op == "Softmax":
        axis = _attr(node, "axis", -1)
        z = x - x.max(axis=axis, keepdims=True)
        e = np.exp(z)
        return [e / e.sum(axis=axis, keepdims=True)]
    if op in ("Identity", "Dropout"):
        return [x]
    if op == "Constant":
        for key in ("value", "value_float", "value_int"):
            if key in node.attrs:
                return [np.asarray(node.attrs[key])]
        raise ManifestError(f"Constant node {node.name!r} without a value")
    raise ManifestError(f"unsupported ONNX op {op!r}")


def run_model(model: OnnxModel, feed: np.ndarray) -> np.ndarray:
    """Execute the graph on one input array; returns the first graph output."""
    vals: dict[str, np.ndarray] = dict(model.graph.initializers)
    vals[model.input_name] = np.asarray(feed, dtype=np.float32)
    for node in model.graph.nodes:
        outs = _run_node(node, vals)
        for name, arr in zip(node.outputs, outs):
            vals[name] = arr
    return vals[model.output_name]


class OnnxOracle(ModelOracle):
    """Scores images with a serialized inference graph; softmax on logits."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.model = load_model(self.path)
        self._class_count: int | None = None
        out_shape = self.model.graph.outputs.get(self.model.output_name, ())
        if len(out_shape) == 2 and out_shape[1] > 0:
            self._class_count = int(out_shape[1])

    @property
    def class_count(self) -> int:
        if self._class_count is None:
            in_shape = self.model.graph.inputs[self.model.input_name]
            probe = np.zeros([d if d > 0 else 1 for d in in_shape], dtype=np.float32)
            self._class_count = int(run_model(self.model, probe).shape[-1])
        return self._class_count

    def predict(self, image: ImageTensor) -> np.ndarray:
        logits = run_model(self.model, image.values[None].astype(np.float32))
        logits = np.asarray(logits, dtype=np.float64).reshape(-1)
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()
