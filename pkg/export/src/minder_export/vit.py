"""Vision-transformer graph builder.

Reads weights straight out of a DINOv2/timm-style ViT module and emits the
equivalent ONNX graph using only operators the minder runtime executes:
patch embedding as reshape/transpose/matmul (exact for stride == kernel),
pre-norm attention blocks with optional LayerScale, erf-based GELU, and a
class-token or mean-pooled head.
"""

from __future__ import annotations

import numpy as np
import torch

from minder.onnxlite import FLOAT, Model, Node, TensorSpec

from .errors import UnsupportedArchitecture

CLASS_TOKEN = "class_token"
POOLED = "pooled"
HEADS = (CLASS_TOKEN, POOLED)


def _f32(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().to(torch.float32).numpy().copy()


def _linear_weights(linear) -> tuple[np.ndarray, np.ndarray | None]:
    w = _f32(linear.weight).T.copy()  # torch stores (out, in)
    b = _f32(linear.bias) if linear.bias is not None else None
    return w, b


def _layer_scale(block, attr: str) -> np.ndarray | None:
    ls = getattr(block, attr, None)
    if ls is not None and hasattr(ls, "gamma"):
        return _f32(ls.gamma)
    legacy = {"ls1": "gamma_1", "ls2": "gamma_2"}[attr]
    if getattr(block, legacy, None) is not None:
        return _f32(getattr(block, legacy))
    return None


def resample_pos_embed(pos: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Bicubic-resample the patch position grid to a new size; the class-token
    slot passes through unchanged."""
    n_patches = pos.shape[1] - 1
    side = int(round(np.sqrt(n_patches)))
    if side * side != n_patches:
        raise UnsupportedArchitecture(f"non-square position grid with {n_patches} patches")
    if (side, side) == tuple(grid):
        return pos.astype(np.float32)
    cls_part = pos[:, :1]
    grid_part = pos[:, 1:].reshape(1, side, side, -1)
    t = torch.from_numpy(grid_part).permute(0, 3, 1, 2)
    t = torch.nn.functional.interpolate(t, size=tuple(grid), mode="bicubic", antialias=False)
    resampled = t.permute(0, 2, 3, 1).reshape(1, grid[0] * grid[1], -1).numpy()
    return np.concatenate([cls_part, resampled], axis=1).astype(np.float32)


class _GraphAssembler:
    def __init__(self):
        self.nodes: list[Node] = []
        self.initializers: dict[str, np.ndarray] = {}
        self._counter = 0

    def fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}_{self._counter}"

    def const(self, stem: str, array: np.ndarray) -> str:
        name = self.fresh(stem)
        self.initializers[name] = array
        return name

    def op(self, op_type: str, inputs, n_out: int = 1, **attrs) -> str | tuple[str, ...]:
        outs = tuple(self.fresh(op_type.lower()) for _ in range(n_out))
        self.nodes.append(Node(op_type, tuple(inputs), outs, attrs=attrs))
        return outs[0] if n_out == 1 else outs

    def linear(self, x: str, module, stem: str) -> str:
        w, b = _linear_weights(module)
        y = self.op("MatMul", (x, self.const(f"{stem}_w", w)))
        if b is not None:
            y = self.op("Add", (y, self.const(f"{stem}_b", b)))
        return y

    def layernorm(self, x: str, module, stem: str) -> str:
        scale = self.const(f"{stem}_scale", _f32(module.weight))
        bias = self.const(f"{stem}_bias", _f32(module.bias))
        return self.op(
            "LayerNormalization", (x, scale, bias), axis=-1, epsilon=float(module.eps)
        )

    def gelu(self, x: str) -> str:
        sqrt2 = self.const("sqrt2", np.array([np.sqrt(2.0)], dtype=np.float32))
        one = self.const("one", np.array([1.0], dtype=np.float32))
        half = self.const("half", np.array([0.5], dtype=np.float32))
        inner = self.op("Erf", (self.op("Div", (x, sqrt2)),))
        return self.op("Mul", (self.op("Mul", (x, self.op("Add", (inner, one)))), half))


def _require(module, name: str):
    value = getattr(module, name, None)
    if value is None:
        raise UnsupportedArchitecture(f"module lacks required attribute {name!r}")
    return value


def build_vit_graph(module, input_size: tuple[int, int], head: str = CLASS_TOKEN) -> Model:
    """Translate a ViT-family torch module into a runnable ONNX model."""
    if head not in HEADS:
        raise ValueError(f"head must be one of {HEADS}, got {head!r}")
    if int(getattr(module, "num_register_tokens", 0) or 0) > 0:
        raise UnsupportedArchitecture("register-token variants are not supported")
    module = module.eval()

    patch_embed = _require(module, "patch_embed")
    proj = _require(patch_embed, "proj")
    patch = int(proj.kernel_size[0])
    if tuple(proj.kernel_size) != tuple(proj.stride):
        raise UnsupportedArchitecture("patch embedding must have stride == kernel size")
    h_img, w_img = int(input_size[0]), int(input_size[1])
    if h_img % patch or w_img % patch:
        raise UnsupportedArchitecture(
            f"input {input_size} not divisible by patch size {patch}"
        )
    grid = (h_img // patch, w_img // patch)
    n_tokens = grid[0] * grid[1] + 1
    dim = int(proj.out_channels)

    g = _GraphAssembler()
    x = "input"

    # patchify: exact unfold of a stride==kernel convolution
    shape1 = g.const(
        "patch_shape",
        np.array([0, 3, grid[0], patch, grid[1], patch], dtype=np.int64),
    )
    patches = g.op("Reshape", (x, shape1))
    patches = g.op("Transpose", (patches,), perm=[0, 2, 4, 1, 3, 5])
    shape2 = g.const(
        "token_shape", np.array([0, grid[0] * grid[1], 3 * patch * patch], dtype=np.int64)
    )
    tokens = g.op("Reshape", (patches, shape2))
    w_patch = _f32(proj.weight).reshape(dim, -1).T.copy()
    tokens = g.op("MatMul", (tokens, g.const("patch_w", w_patch)))
    if proj.bias is not None:
        tokens = g.op("Add", (tokens, g.const("patch_b", _f32(proj.bias))))

    # class token, broadcast over the batch by rebuilding it from token zero
    cls = _f32(_require(module, "cls_token")).reshape(1, 1, dim)
    first = g.op(
        "Slice",
        (
            tokens,
            g.const("zero", np.array([0], dtype=np.int64)),
            g.const("one_i", np.array([1], dtype=np.int64)),
            g.const("axis1", np.array([1], dtype=np.int64)),
        ),
    )
    zeroed = g.op("Mul", (first, g.const("zero_f", np.array([0.0], dtype=np.float32))))
    cls_tok = g.op("Add", (zeroed, g.const("cls_token", cls)))
    seq = g.op("Concat", (cls_tok, tokens), axis=1)

    pos = resample_pos_embed(_f32(_require(module, "pos_embed")), grid)
    if pos.shape[1] != n_tokens:
        raise UnsupportedArchitecture(
            f"position embedding covers {pos.shape[1]} tokens, need {n_tokens}"
        )
    seq = g.op("Add", (seq, g.const("pos_embed", pos)))

    blocks = list(_require(module, "blocks"))
    if not blocks:
        raise UnsupportedArchitecture("module has no transformer blocks")
    for i, block in enumerate(blocks):
        attn = _require(block, "attn")
        heads = int(_require(attn, "num_heads"))
        if dim % heads:
            raise UnsupportedArchitecture(f"dim {dim} not divisible by heads {heads}")
        head_dim = dim // heads

        normed = g.layernorm(seq, _require(block, "norm1"), f"b{i}_norm1")
        qkv = g.linear(normed, _require(attn, "qkv"), f"b{i}_qkv")
        qkv = g.op(
            "Reshape",
            (qkv, g.const(f"b{i}_qkv_shape", np.array([0, 0, 3, heads, head_dim], np.int64))),
        )
        qkv = g.op("Transpose", (qkv,), perm=[2, 0, 3, 1, 4])
        q = g.op("Gather", (qkv, g.const(f"b{i}_iq", np.array(0, np.int64))), axis=0)
        k = g.op("Gather", (qkv, g.const(f"b{i}_ik", np.array(1, np.int64))), axis=0)
        v = g.op("Gather", (qkv, g.const(f"b{i}_iv", np.array(2, np.int64))), axis=0)
        scale = g.const(f"b{i}_scale", np.array([head_dim**-0.5], dtype=np.float32))
        q = g.op("Mul", (q, scale))
        kt = g.op("Transpose", (k,), perm=[0, 1, 3, 2])
        attn_weights = g.op("Softmax", (g.op("MatMul", (q, kt)),), axis=-1)
        ctx = g.op("MatMul", (attn_weights, v))
        ctx = g.op("Transpose", (ctx,), perm=[0, 2, 1, 3])
        ctx = g.op(
            "Reshape", (ctx, g.const(f"b{i}_merge", np.array([0, 0, dim], np.int64)))
        )
        ctx = g.linear(ctx, _require(attn, "proj"), f"b{i}_proj")
        gamma1 = _layer_scale(block, "ls1")
        if gamma1 is not None:
            ctx = g.op("Mul", (ctx, g.const(f"b{i}_ls1", gamma1)))
        seq = g.op("Add", (seq, ctx))

        normed2 = g.layernorm(seq, _require(block, "norm2"), f"b{i}_norm2")
        mlp = _require(block, "mlp")
        hidden = g.gelu(g.linear(normed2, _require(mlp, "fc1"), f"b{i}_fc1"))
        out = g.linear(hidden, _require(mlp, "fc2"), f"b{i}_fc2")
        gamma2 = _layer_scale(block, "ls2")
        if gamma2 is not None:
            out = g.op("Mul", (out, g.const(f"b{i}_ls2", gamma2)))
        seq = g.op("Add", (seq, out))

    seq = g.layernorm(seq, _require(module, "norm"), "final_norm")

    if head == CLASS_TOKEN:
        emb = g.op("Gather", (seq, g.const("cls_index", np.array(0, np.int64))), axis=1)
    else:
        rest = g.op(
            "Slice",
            (
                seq,
                g.const("one_start", np.array([1], dtype=np.int64)),
                g.const("stop", np.array([n_tokens], dtype=np.int64)),
                g.const("axis1b", np.array([1], dtype=np.int64)),
            ),
        )
        emb = g.op("ReduceMean", (rest,), axes=[1], keepdims=0)

    g.nodes.append(Node("Identity", (emb,), ("embedding",)))
    return Model(
        nodes=g.nodes,
        initializers=g.initializers,
        inputs=[TensorSpec("input", ("batch", 3, h_img, w_img), FLOAT)],
        outputs=[TensorSpec("embedding", ("batch", dim), FLOAT)],
        graph_name="vit_encoder",
    )


def source_embeddings(module, batch: torch.Tensor, head: str = CLASS_TOKEN) -> np.ndarray:
    """Reference embeddings straight from the torch module."""
    module = module.eval()
    with torch.no_grad():
        if hasattr(module, "forward_features"):
            feats = module.forward_features(batch)
            if isinstance(feats, dict):
                if head == CLASS_TOKEN:
                    return _f32(feats["x_norm_clstoken"])
                return _f32(feats["x_norm_patchtokens"].mean(dim=1))
            if head == CLASS_TOKEN:
                return _f32(feats[:, 0])
            return _f32(feats[:, 1:].mean(dim=1))
        if head != CLASS_TOKEN:
            raise UnsupportedArchitecture(
                "pooled head needs a forward_features implementation"
            )
        return _f32(module(batch))
