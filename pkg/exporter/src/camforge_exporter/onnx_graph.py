"""Serialize a traced torch CNN as an ONNX graph.

The graph is written directly in the protobuf wire format (the package
index here carries no ``onnx`` build), covering the message subset that
feed-forward classifier graphs need: nodes, float/int64 initializers,
and tensor value infos.  The source graph comes from ``torch.fx``
symbolic tracing with shape propagation, so module calls and functional
ops are lowered uniformly.

Contract: single input named "input", single output of raw (softmax-free)
logits, opset 13.
"""

from __future__ import annotations

import operator
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.fx import symbolic_trace
from torch.fx.passes.shape_prop import ShapeProp

from .errors import ExportUnsupported

# --- protobuf wire helpers (write-only) ------------------------------------


def _varint(v: int) -> bytes:
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


def _f_varint(num: int, v: int) -> bytes:
    return _varint(num << 3) + _varint(v)


def _f_len(num: int, payload: bytes) -> bytes:
    return _varint(num << 3 | 2) + _varint(len(payload)) + payload


def _f_str(num: int, s: str) -> bytes:
    return _f_len(num, s.encode())


def _f_float(num: int, v: float) -> bytes:
    return _varint(num << 3 | 5) + struct.pack("<f", v)


_NP_TO_ONNX = {np.dtype("float32"): 1, np.dtype("int64"): 7}


def _tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = _NP_TO_ONNX.get(arr.dtype)
    if dtype is None:
        raise ExportUnsupported(f"unsupported initializer dtype {arr.dtype}")
    out = b"".join(_f_varint(1, int(d)) for d in arr.shape)
    out += _f_varint(2, dtype)
    out += _f_len(9, arr.tobytes())
    out += _f_str(8, name)
    return out


def _attr(name: str, value) -> bytes:
    out = _f_str(1, name)
    if isinstance(value, bool):
        out += _f_varint(3, int(value)) + _f_varint(20, 2)
    elif isinstance(value, int):
        out += _f_varint(3, value) + _f_varint(20, 2)
    elif isinstance(value, float):
        out += _f_float(2, value) + _f_varint(20, 1)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        out += b"".join(_f_varint(8, int(v)) for v in value) + _f_varint(20, 7)
    else:
        raise ExportUnsupported(f"unsupported attribute value {value!r}")
    return out


def _node(op_type: str, inputs, outputs, **attrs) -> bytes:
    out = b"".join(_f_str(1, s) for s in inputs)
    out += b"".join(_f_str(2, s) for s in outputs)
    out += _f_str(4, op_type)
    out += b"".join(_f_len(5, _attr(k, v)) for k, v in attrs.items())
    return out


def _value_info(name: str, shape) -> bytes:
    dims = b"".join(_f_len(1, _f_varint(1, int(d))) for d in shape)
    tensor_type = _f_varint(1, 1) + _f_len(2, dims)  # float32
    return _f_str(1, name) + _f_len(2, _f_len(1, tensor_type))


def _model(nodes, inputs, outputs, initializers, opset=13, ir_version=8) -> bytes:
    graph = b"".join(_f_len(1, n) for n in nodes)
    graph += _f_str(2, "exported")
    graph += b"".join(_f_len(5, t) for t in initializers)
    graph += b"".join(_f_len(11, vi) for vi in inputs)
    graph += b"".join(_f_len(12, vi) for vi in outputs)
    return _f_varint(1, ir_version) + _f_len(8, _f_varint(2, opset)) + _f_len(7, graph)


# --- fx graph lowering ------------------------------------------------------


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


class _Writer:
    def __init__(self):
        self.nodes: list[bytes] = []
        self.initializers: list[bytes] = []
        self._counter = 0

    def init(self, base: str, arr: np.ndarray) -> str:
        name = f"{base}_{self._counter}"
        self._counter += 1
        self.initializers.append(_tensor(name, arr))
        return name

    def emit(self, op_type: str, inputs, output: str, **attrs) -> None:
        self.nodes.append(_node(op_type, inputs, [output], **attrs))


def _lower_module(w: _Writer, module: nn.Module, inputs: list[str], out: str) -> None:
    if isinstance(module, nn.Conv2d):
        names = [inputs[0], w.init("weight", module.weight.detach().numpy())]
        if module.bias is not None:
            names.append(w.init("bias", module.bias.detach().numpy()))
        ph, pw = _pair(module.padding)
        w.emit(
            "Conv", names, out,
            kernel_shape=list(module.kernel_size),
            strides=list(_pair(module.stride)),
            pads=[ph, pw, ph, pw],
            dilations=list(_pair(module.dilation)),
            group=module.groups,
        )
    elif isinstance(module, nn.BatchNorm2d):
        names = [
            inputs[0],
            w.init("scale", module.weight.detach().numpy()),
            w.init("bias", module.bias.detach().numpy()),
            w.init("mean", module.running_mean.detach().numpy()),
            w.init("var", module.running_var.detach().numpy()),
        ]
        w.emit("BatchNormalization", names, out, epsilon=float(module.eps))
    elif isinstance(module, nn.ReLU):
        w.emit("Relu", inputs, out)
    elif isinstance(module, nn.MaxPool2d):
        if _pair(module.dilation) != (1, 1):
            raise ExportUnsupported("dilated max pooling is not supported")
        ph, pw = _pair(module.padding)
        w.emit(
            "MaxPool", inputs, out,
            kernel_shape=list(_pair(module.kernel_size)),
            strides=list(_pair(module.stride or module.kernel_size)),
            pads=[ph, pw, ph, pw],
            ceil_mode=int(module.ceil_mode),
        )
    elif isinstance(module, nn.AvgPool2d):
        ph, pw = _pair(module.padding)
        w.emit(
            "AveragePool", inputs, out,
            kernel_shape=list(_pair(module.kernel_size)),
            strides=list(_pair(module.stride or module.kernel_size)),
            pads=[ph, pw, ph, pw],
            ceil_mode=int(module.ceil_mode),
            count_include_pad=int(module.count_include_pad),
        )
    elif isinstance(module, nn.AdaptiveAvgPool2d):
        if _pair(module.output_size or 1) != (1, 1):
            raise ExportUnsupported("only global adaptive average pooling is supported")
        w.emit("GlobalAveragePool", inputs, out)
    elif isinstance(module, nn.Linear):
        names = [inputs[0], w.init("weight", module.weight.detach().numpy())]
        if module.bias is not None:
            names.append(w.init("bias", module.bias.detach().numpy()))
        w.emit("Gemm", names, out, alpha=1.0, beta=1.0, transB=1)
    elif isinstance(module, (nn.Dropout, nn.Identity)):
        w.emit("Identity", inputs, out)
    elif isinstance(module, nn.Flatten):
        w.emit("Flatten", inputs, out, axis=module.start_dim)
    else:
        raise ExportUnsupported(f"module type {type(module).__name__} is not supported")


def _lower_function(w: _Writer, node, name_of, out: str) -> None:
    fn = node.target
    args = node.args

    def tensor_in(i):
        return name_of(args[i])

    if fn in (operator.add, torch.add):
        w.emit("Add", [tensor_in(0), tensor_in(1)], out)
    elif fn in (operator.mul, torch.mul):
        w.emit("Mul", [tensor_in(0), tensor_in(1)], out)
    elif fn is torch.cat:
        dim = node.kwargs.get("dim", args[1] if len(args) > 1 else 0)
        w.emit("Concat", [name_of(t) for t in args[0]], out, axis=int(dim))
    elif fn is torch.flatten:
        axis = node.kwargs.get("start_dim", args[1] if len(args) > 1 else 0)
        w.emit("Flatten", [tensor_in(0)], out, axis=int(axis))
    elif fn is F.relu:
        w.emit("Relu", [tensor_in(0)], out)
    elif fn is F.adaptive_avg_pool2d:
        size = node.kwargs.get("output_size", args[1] if len(args) > 1 else 1)
        if _pair(size if size is not None else 1) != (1, 1):
            raise ExportUnsupported("only global adaptive average pooling is supported")
        w.emit("GlobalAveragePool", [tensor_in(0)], out)
    else:
        raise ExportUnsupported(f"function {getattr(fn, '__name__', fn)!r} is not supported")


def _lower_method(w: _Writer, node, name_of, out: str) -> None:
    method = node.target
    src = name_of(node.args[0])
    if method == "flatten":
        axis = node.kwargs.get("start_dim", node.args[1] if len(node.args) > 1 else 0)
        w.emit("Flatten", [src], out, axis=int(axis))
    elif method in ("view", "reshape"):
        shape = [int(d) for d in node.args[1:]]
        if len(shape) == 1 and isinstance(node.args[1], (list, tuple)):
            shape = [int(d) for d in node.args[1]]
        shape_name = w.init("shape", np.asarray(shape, dtype=np.int64))
        w.emit("Reshape", [src, shape_name], out)
    elif method == "contiguous":
        w.emit("Identity", [src], out)
    else:
        raise ExportUnsupported(f"tensor method {method!r} is not supported")


def export_onnx(
    model: nn.Module,
    input_shape: tuple[int, int, int, int],
    input_name: str = "input",
    output_name: str = "logits",
) -> bytes:
    """Trace ``model`` and serialize it as ONNX bytes.

    The output is the raw logit tensor; no softmax is appended.
    """
    model = model.eval()
    gm = symbolic_trace(model)
    example = torch.zeros(input_shape)
    ShapeProp(gm).propagate(example)

    w = _Writer()
    names: dict = {}

    def name_of(arg) -> str:
        if isinstance(arg, torch.fx.Node):
            return names[arg]
        raise ExportUnsupported(f"non-tensor argument {arg!r} in the traced graph")

    output_shape = None
    for node in gm.graph.nodes:
        if node.op == "placeholder":
            names[node] = input_name
        elif node.op == "get_attr":
            tensor = gm
            for part in node.target.split("."):
                tensor = getattr(tensor, part)
            names[node] = w.init("const", tensor.detach().numpy())
        elif node.op == "call_module":
            out = f"t_{node.name}"
            _lower_module(w, gm.get_submodule(node.target),
                          [name_of(a) for a in node.args], out)
            names[node] = out
        elif node.op == "call_function":
            out = f"t_{node.name}"
            _lower_function(w, node, name_of, out)
            names[node] = out
        elif node.op == "call_method":
            out = f"t_{node.name}"
            _lower_method(w, node, name_of, out)
            names[node] = out
        elif node.op == "output":
            result = node.args[0]
            if isinstance(result, (tuple, list)):
                if len(result) != 1:
                    raise ExportUnsupported("multi-output models are not supported")
                result = result[0]
            w.emit("Identity", [name_of(result)], output_name)
            meta = result.meta.get("tensor_meta")
            output_shape = tuple(meta.shape) if meta is not None else None
        else:
            raise ExportUnsupported(f"fx op {node.op!r} is not supported")

    if output_shape is None:
        with torch.no_grad():
            output_shape = tuple(model(example).shape)
    return _model(
        w.nodes,
        inputs=[_value_info(input_name, input_shape)],
        outputs=[_value_info(output_name, output_shape)],
        initializers=w.initializers,
    )
