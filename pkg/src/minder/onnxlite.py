"""Self-contained ONNX graph I/O and a NumPy executor for a small operator set.

The toolkit's model files are ordinary ONNX protobufs (opset 17): a single
float32 input ``(N, 3, H, W)``, a single float32 output ``(N, d)``, weights as
initializers. When onnxruntime is installed the encoder uses it directly; this
module is the fallback that keeps graph-file models runnable anywhere NumPy
runs, and it doubles as the serializer the export tooling emits through.

Only the protobuf fields ONNX models actually populate are implemented:
ModelProto / GraphProto / NodeProto / AttributeProto / TensorProto /
ValueInfoProto, with tensors stored as little-endian ``raw_data``. Supported
operators cover feed-forward and transformer-style encoders:

    Add Sub Mul Div MatMul Gemm Tanh Erf Relu Sigmoid Sqrt Neg Exp Pow
    Softmax LayerNormalization Transpose Reshape Flatten Concat Gather
    Slice ReduceMean Squeeze Unsqueeze Cast Shape Identity Constant
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf as _erf

from .errors import ShapeMismatch

DEFAULT_OPSET = 17
PRODUCER = "minder-onnxlite"

# TensorProto.DataType values
FLOAT = 1
UINT8 = 2
INT32 = 6
INT64 = 7
BOOL = 9
DOUBLE = 11

_NUMPY_DTYPES = {
    FLOAT: np.dtype("<f4"),
    UINT8: np.dtype("u1"),
    INT32: np.dtype("<i4"),
    INT64: np.dtype("<i8"),
    BOOL: np.dtype("bool"),
    DOUBLE: np.dtype("<f8"),
}
_ELEM_TYPES = {v: k for k, v in _NUMPY_DTYPES.items()}

# AttributeProto.AttributeType values
_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS, _ATTR_STRINGS = 6, 7, 8


class GraphFormatError(Exception):
    """Graph bytes are not a parseable ONNX model of the supported subset."""


@dataclass(frozen=True)
class TensorSpec:
    """Graph input/output declaration; dims may mix ints and symbolic names."""

    name: str
    dims: tuple
    elem_type: int = FLOAT


@dataclass
class Node:
    op_type: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    name: str = ""
    attrs: dict = field(default_factory=dict)


@dataclass
class Model:
    nodes: list[Node]
    initializers: dict[str, np.ndarray]
    inputs: list[TensorSpec]
    outputs: list[TensorSpec]
    graph_name: str = "graph"
    opset: int = DEFAULT_OPSET
    ir_version: int = 8
    producer: str = PRODUCER


# --------------------------------------------------------------------------
# protobuf wire primitives
# --------------------------------------------------------------------------

def _varint(value: int) -> bytes:
    value &= 0xFFFFFFFFFFFFFFFF
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field_number: int, wire_type: int) -> bytes:
    return _varint((field_number << 3) | wire_type)


def _field_varint(field_number: int, value: int) -> bytes:
    return _tag(field_number, 0) + _varint(value)


def _field_bytes(field_number: int, payload: bytes) -> bytes:
    return _tag(field_number, 2) + _varint(len(payload)) + payload


def _field_string(field_number: int, text: str) -> bytes:
    return _field_bytes(field_number, text.encode("utf-8"))


def _field_float(field_number: int, value: float) -> bytes:
    return _tag(field_number, 5) + struct.pack("<f", value)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise GraphFormatError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise GraphFormatError("varint overflow")


def _signed64(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _parse_fields(buf: bytes) -> dict[int, list]:
    """Decode a message into {field_number: [raw values]} preserving order."""
    fields: dict[int, list] = {}
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        number, wire = key >> 3, key & 0x7
        if wire == 0:
            value, pos = _read_varint(buf, pos)
        elif wire == 2:
            length, pos = _read_varint(buf, pos)
            if pos + length > len(buf):
                raise GraphFormatError("truncated length-delimited field")
            value = buf[pos : pos + length]
            pos += length
        elif wire == 5:
            if pos + 4 > len(buf):
                raise GraphFormatError("truncated fixed32 field")
            value = struct.unpack_from("<f", buf, pos)[0]
            pos += 4
        elif wire == 1:
            if pos + 8 > len(buf):
                raise GraphFormatError("truncated fixed64 field")
            value = struct.unpack_from("<d", buf, pos)[0]
            pos += 8
        else:
            raise GraphFormatError(f"unsupported wire type {wire}")
        fields.setdefault(number, []).append(value)
    return fields


def _repeated_int64(fields: dict[int, list], number: int) -> list[int]:
    """A repeated int64 field, accepting both packed and unpacked encodings."""
    out: list[int] = []
    for raw in fields.get(number, []):
        if isinstance(raw, (bytes, bytearray)):
            pos = 0
            while pos < len(raw):
                v, pos = _read_varint(raw, pos)
                out.append(_signed64(v))
        else:
            out.append(_signed64(raw))
    return out


def _text(fields: dict[int, list], number: int, default: str = "") -> str:
    values = fields.get(number)
    if not values:
        return default
    return values[-1].decode("utf-8")


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    # ascontiguousarray promotes 0-d to 1-d, which would break scalar Gather
    # indices; reshape back to the declared shape
    arr = np.ascontiguousarray(array).reshape(np.shape(array))
    if arr.dtype not in _ELEM_TYPES:
        if arr.dtype == np.dtype("float64"):
            arr = arr.astype("<f4")
        elif arr.dtype.kind == "i":
            arr = arr.astype("<i8")
        else:
            raise GraphFormatError(f"unsupported tensor dtype {array.dtype}")
    out = bytearray()
    for d in arr.shape:
        out += _field_varint(1, d)
    out += _field_varint(2, _ELEM_TYPES[arr.dtype])
    out += _field_string(8, name)
    out += _field_bytes(9, arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return bytes(out)


def _encode_attribute(name: str, value) -> bytes:
    out = bytearray(_field_string(1, name))
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, (int, np.integer)):
        out += _field_varint(3, int(value))
        out += _field_varint(20, _ATTR_INT)
    elif isinstance(value, (float, np.floating)):
        out += _field_float(2, float(value))
        out += _field_varint(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _field_bytes(4, value.encode("utf-8"))
        out += _field_varint(20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        out += _field_bytes(5, _encode_tensor(name + "_value", value))
        out += _field_varint(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)):
        if all(isinstance(v, (int, np.integer)) for v in value):
            for v in value:
                out += _field_varint(8, int(v))
            out += _field_varint(20, _ATTR_INTS)
        elif all(isinstance(v, (int, float, np.floating, np.integer)) for v in value):
            for v in value:
                out += _field_float(7, float(v))
            out += _field_varint(20, _ATTR_FLOATS)
        else:
            raise GraphFormatError(f"unsupported attribute list {name}={value!r}")
    else:
        raise GraphFormatError(f"unsupported attribute {name}={value!r}")
    return bytes(out)


def _encode_node(node: Node) -> bytes:
    out = bytearray()
    for inp in node.inputs:
        out += _field_string(1, inp)
    for o in node.outputs:
        out += _field_string(2, o)
    if node.name:
        out += _field_string(3, node.name)
    out += _field_string(4, node.op_type)
    for attr_name in sorted(node.attrs):
        out += _field_bytes(5, _encode_attribute(attr_name, node.attrs[attr_name]))
    return bytes(out)


def _encode_value_info(spec: TensorSpec) -> bytes:
    shape = bytearray()
    for d in spec.dims:
        if isinstance(d, str):
            dim = _field_string(2, d)
        else:
            dim = _field_varint(1, int(d))
        shape += _field_bytes(1, dim)
    tensor_type = _field_varint(1, spec.elem_type) + _field_bytes(2, bytes(shape))
    type_proto = _field_bytes(1, tensor_type)
    return _field_string(1, spec.name) + _field_bytes(2, type_proto)


def write_model(model: Model) -> bytes:
    graph = bytearray()
    for node in model.nodes:
        graph += _field_bytes(1, _encode_node(node))
    graph += _field_string(2, model.graph_name)
    for name, array in model.initializers.items():
        graph += _field_bytes(5, _encode_tensor(name, array))
    for spec in model.inputs:
        graph += _field_bytes(11, _encode_value_info(spec))
    for spec in model.outputs:
        graph += _field_bytes(12, _encode_value_info(spec))

    opset = _field_string(1, "") + _field_varint(2, model.opset)
    out = bytearray()
    out += _field_varint(1, model.ir_version)
    out += _field_string(2, model.producer)
    out += _field_string(3, "0.1.0")
    out += _field_bytes(7, bytes(graph))
    out += _field_bytes(8, opset)
    return bytes(out)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _decode_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    fields = _parse_fields(buf)
    dims = _repeated_int64(fields, 1)
    data_type = fields.get(2, [FLOAT])[-1]
    if data_type not in _NUMPY_DTYPES:
        raise GraphFormatError(f"unsupported tensor data_type {data_type}")
    name = _text(fields, 8)
    dtype = _NUMPY_DTYPES[data_type]
    if 9 in fields:
        arr = np.frombuffer(fields[9][-1], dtype=dtype).reshape(dims)
    elif data_type == FLOAT and 4 in fields:
        values = []
        for raw in fields[4]:
            if isinstance(raw, (bytes, bytearray)):
                values.extend(struct.unpack(f"<{len(raw) // 4}f", raw))
            else:
                values.append(raw)
        arr = np.array(values, dtype=dtype).reshape(dims)
    elif data_type == INT64 and 7 in fields:
        arr = np.array(_repeated_int64(fields, 7), dtype=dtype).reshape(dims)
    else:
        arr = np.zeros(dims, dtype=dtype)
    return name, arr.copy()


def _decode_attribute(buf: bytes) -> tuple[str, object]:
    fields = _parse_fields(buf)
    name = _text(fields, 1)
    attr_type = fields.get(20, [0])[-1]
    if attr_type == _ATTR_INT or (attr_type == 0 and 3 in fields):
        return name, _signed64(fields[3][-1])
    if attr_type == _ATTR_FLOAT or (attr_type == 0 and 2 in fields):
        return name, float(fields[2][-1])
    if attr_type == _ATTR_STRING or (attr_type == 0 and 4 in fields):
        return name, fields[4][-1].decode("utf-8")
    if attr_type == _ATTR_TENSOR or (attr_type == 0 and 5 in fields):
        return name, _decode_tensor(fields[5][-1])[1]
    if attr_type == _ATTR_INTS or (attr_type == 0 and 8 in fields):
        return name, _repeated_int64(fields, 8)
    if attr_type == _ATTR_FLOATS or (attr_type == 0 and 7 in fields):
        values = []
        for raw in fields.get(7, []):
            if isinstance(raw, (bytes, bytearray)):
                values.extend(struct.unpack(f"<{len(raw) // 4}f", raw))
            else:
                values.append(raw)
        return name, values
    if attr_type == _ATTR_STRINGS:
        return name, [v.decode("utf-8") for v in fields.get(9, [])]
    raise GraphFormatError(f"unsupported attribute type {attr_type} for {name!r}")


def _decode_node(buf: bytes) -> Node:
    fields = _parse_fields(buf)
    attrs = {}
    for raw in fields.get(5, []):
        k, v = _decode_attribute(raw)
        attrs[k] = v
    return Node(
        op_type=_text(fields, 4),
        inputs=tuple(v.decode("utf-8") for v in fields.get(1, [])),
        outputs=tuple(v.decode("utf-8") for v in fields.get(2, [])),
        name=_text(fields, 3),
        attrs=attrs,
    )


def _decode_value_info(buf: bytes) -> TensorSpec:
    fields = _parse_fields(buf)
    name = _text(fields, 1)
    elem_type = FLOAT
    dims: list = []
    if 2 in fields:
        type_fields = _parse_fields(fields[2][-1])
        if 1 in type_fields:
            tensor_fields = _parse_fields(type_fields[1][-1])
            elem_type = tensor_fields.get(1, [FLOAT])[-1]
            if 2 in tensor_fields:
                shape_fields = _parse_fields(tensor_fields[2][-1])
                for dim_buf in shape_fields.get(1, []):
                    dim_fields = _parse_fields(dim_buf)
                    if 1 in dim_fields:
                        dims.append(_signed64(dim_fields[1][-1]))
                    elif 2 in dim_fields:
                        dims.append(dim_fields[2][-1].decode("utf-8"))
                    else:
                        dims.append("?")
    return TensorSpec(name=name, dims=tuple(dims), elem_type=elem_type)


def read_model(data: bytes) -> Model:
    try:
        fields = _parse_fields(bytes(data))
    except GraphFormatError:
        raise
    except Exception as exc:
        raise GraphFormatError(f"not a parseable model: {exc}") from exc
    if 7 not in fields:
        raise GraphFormatError("model has no graph")
    graph_fields = _parse_fields(fields[7][-1])

    initializers = {}
    for raw in graph_fields.get(5, []):
        name, arr = _decode_tensor(raw)
        initializers[name] = arr
    nodes = [_decode_node(raw) for raw in graph_fields.get(1, [])]
    inputs = [_decode_value_info(raw) for raw in graph_fields.get(11, [])]
    outputs = [_decode_value_info(raw) for raw in graph_fields.get(12, [])]

    opset = DEFAULT_OPSET
    for raw in fields.get(8, []):
        opset_fields = _parse_fields(raw)
        if _text(opset_fields, 1) == "":
            opset = _signed64(opset_fields.get(2, [DEFAULT_OPSET])[-1])
    return Model(
        nodes=nodes,
        initializers=initializers,
        inputs=[s for s in inputs if s.name not in initializers],
        outputs=outputs,
        graph_name=_text(graph_fields, 2, "graph"),
        opset=opset,
        ir_version=_signed64(fields.get(1, [8])[-1]),
        producer=_text(fields, 2, ""),
    )


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------

def _broadcast_op(fn):
    return lambda node, vals: (fn(vals[0], vals[1]),)


def _unary(fn):
    return lambda node, vals: (fn(vals[0]),)


def _op_gemm(node: Node, vals):
    a, b = vals[0], vals[1]
    if node.attrs.get("transA", 0):
        a = a.T
    if node.attrs.get("transB", 0):
        b = b.T
    y = node.attrs.get("alpha", 1.0) * (a @ b)
    if len(vals) > 2 and vals[2] is not None:
        y = y + node.attrs.get("beta", 1.0) * vals[2]
    return (y,)


def _op_softmax(node: Node, vals):
    axis = node.attrs.get("axis", -1)
    x = vals[0]
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=axis, keepdims=True),)


def _op_layernorm(node: Node, vals):
    x = vals[0]
    axis = node.attrs.get("axis", -1)
    eps = node.attrs.get("epsilon", 1e-5)
    axes = tuple(range(axis % x.ndim, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axes, keepdims=True)
    y = (x - mean) / np.sqrt(var + eps)
    y = y * vals[1]
    if len(vals) > 2 and vals[2] is not None:
        y = y + vals[2]
    return (y,)


def _op_reshape(node: Node, vals):
    data, shape = vals[0], [int(v) for v in vals[1]]
    resolved = [data.shape[i] if s == 0 else s for i, s in enumerate(shape)]
    return (data.reshape(resolved),)


def _op_transpose(node: Node, vals):
    perm = node.attrs.get("perm")
    return (np.transpose(vals[0], axes=perm),)


def _op_concat(node: Node, vals):
    return (np.concatenate(vals, axis=node.attrs["axis"]),)


def _op_gather(node: Node, vals):
    axis = node.attrs.get("axis", 0)
    indices = vals[1]
    idx = int(indices) if np.ndim(indices) == 0 else np.asarray(indices, dtype=np.int64)
    return (np.take(vals[0], idx, axis=axis),)


def _op_slice(node: Node, vals):
    data = vals[0]
    starts = [int(v) for v in vals[1]]
    ends = [int(v) for v in vals[2]]
    axes = [int(v) for v in vals[3]] if len(vals) > 3 and vals[3] is not None else list(range(len(starts)))
    steps = [int(v) for v in vals[4]] if len(vals) > 4 and vals[4] is not None else [1] * len(starts)
    slices = [slice(None)] * data.ndim
    for s, e, ax, st in zip(starts, ends, axes, steps):
        slices[ax % data.ndim] = slice(s, e, st)
    return (data[tuple(slices)],)


def _op_reduce_mean(node: Node, vals):
    axes = node.attrs.get("axes")
    if axes is None and len(vals) > 1 and vals[1] is not None:
        axes = [int(v) for v in vals[1]]
    keepdims = bool(node.attrs.get("keepdims", 1))
    axes_t = tuple(int(a) for a in axes) if axes is not None else None
    return (vals[0].mean(axis=axes_t, keepdims=keepdims),)


def _axes_arg(node: Node, vals):
    if "axes" in node.attrs:
        return [int(v) for v in node.attrs["axes"]]
    if len(vals) > 1 and vals[1] is not None:
        return [int(v) for v in vals[1]]
    return None


def _op_unsqueeze(node: Node, vals):
    out = vals[0]
    for ax in sorted(_axes_arg(node, vals)):
        out = np.expand_dims(out, axis=ax)
    return (out,)


def _op_squeeze(node: Node, vals):
    axes = _axes_arg(node, vals)
    return (np.squeeze(vals[0], axis=tuple(axes) if axes else None),)


def _op_cast(node: Node, vals):
    to = node.attrs["to"]
    if to not in _NUMPY_DTYPES:
        raise GraphFormatError(f"Cast to unsupported data_type {to}")
    return (vals[0].astype(_NUMPY_DTYPES[to]),)


_OPS = {
    "Identity": _unary(lambda x: x),
    "Add": _broadcast_op(np.add),
    "Sub": _broadcast_op(np.subtract),
    "Mul": _broadcast_op(np.multiply),
    "Div": _broadcast_op(np.divide),
    "Pow": _broadcast_op(np.power),
    "MatMul": _broadcast_op(np.matmul),
    "Gemm": _op_gemm,
    "Tanh": _unary(np.tanh),
    "Erf": _unary(lambda x: _erf(x).astype(x.dtype, copy=False)),
    "Relu": _unary(lambda x: np.maximum(x, 0)),
    "Sigmoid": _unary(lambda x: 1.0 / (1.0 + np.exp(-x))),
    "Sqrt": _unary(np.sqrt),
    "Neg": _unary(np.negative),
    "Exp": _unary(np.exp),
    "Softmax": _op_softmax,
    "LayerNormalization": _op_layernorm,
    "Transpose": _op_transpose,
    "Reshape": _op_reshape,
    "Flatten": lambda node, vals: (
        vals[0].reshape(
            int(np.prod(vals[0].shape[: node.attrs.get("axis", 1)], initial=1)), -1
        ),
    ),
    "Concat": _op_concat,
    "Gather": _op_gather,
    "Slice": _op_slice,
    "ReduceMean": _op_reduce_mean,
    "Unsqueeze": _op_unsqueeze,
    "Squeeze": _op_squeeze,
    "Cast": _op_cast,
    "Shape": _unary(lambda x: np.asarray(x.shape, dtype=np.int64)),
}


def supported_ops() -> frozenset[str]:
    return frozenset(_OPS)


def run_graph(model: Model, feeds: dict[str, np.ndarray]) -> list[np.ndarray]:
    """Execute the graph on the given feeds; nodes must be topologically sorted."""
    values: dict[str, np.ndarray] = dict(model.initializers)
    for spec in model.inputs:
        if spec.name not in feeds:
            raise GraphFormatError(f"missing feed for graph input {spec.name!r}")
        arr = np.asarray(feeds[spec.name])
        declared = [d for d in spec.dims]
        if len(declared) != arr.ndim:
            raise ShapeMismatch(
                f"input {spec.name!r} expects rank {len(declared)}, got {arr.ndim}"
            )
        for want, got in zip(declared, arr.shape):
            if isinstance(want, int) and want >= 0 and want != got:
                raise ShapeMismatch(
                    f"input {spec.name!r} expects dims {declared}, got {list(arr.shape)}"
                )
        values[spec.name] = arr

    for node in model.nodes:
        if node.op_type == "Constant":
            values[node.outputs[0]] = np.asarray(node.attrs["value"])
            continue
        handler = _OPS.get(node.op_type)
        if handler is None:
            raise GraphFormatError(f"unsupported operator {node.op_type!r}")
        for name in node.inputs:
            if name and name not in values:
                raise GraphFormatError(f"node {node.name!r} input {name!r} undefined")
        vals = [values[name] if name else None for name in node.inputs]
        results = handler(node, vals)
        for out_name, out_val in zip(node.outputs, results):
            if out_name:
                values[out_name] = out_val

    missing = [s.name for s in model.outputs if s.name not in values]
    if missing:
        raise GraphFormatError(f"graph outputs never produced: {missing}")
    return [np.asarray(values[s.name]) for s in model.outputs]


def run_model(model: Model, batch: np.ndarray) -> np.ndarray:
    """Single-input single-output convenience wrapper used by the encoder."""
    if len(model.inputs) != 1 or len(model.outputs) < 1:
        raise GraphFormatError("expected a single-input graph with at least one output")
    out = run_graph(model, {model.inputs[0].name: batch})[0]
    return np.asarray(out, dtype=np.float32)
