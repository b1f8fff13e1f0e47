"""Dual-trunk patch network with correlation and concatenation heads.

Two convolutional trunks with identical layer shapes but independent weights
map a 36 x 36 x 4 patch to a 256-vector. The two feature vectors are fused
twice: elementwise product (256-D) and concatenation RGB-then-LWIR (512-D).
Each fused vector goes through its own three-layer fully connected head that
emits two logits ``(not same, same)``.

A trunk applied to a wider patch (36 x (36 + D) x 4) yields D + 1 feature
columns, one per 36-wide window, which is how all disparity candidates are
scored in a single pass.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import (
    DEFAULT_DTYPE,
    LayerSpec,
    ShapeError,
    Tensor,
    conv2d_backward,
    conv2d_forward,
    fully_connected_backward,
    fully_connected_forward,
    init_weights,
    relu_backward,
    relu_forward,
)

PATCH_SIZE = 36
IN_CHANNELS = 4
FEATURE_DIM = 256
SAME, NOT_SAME = 1, 0

TRUNK_LAYERS: tuple[LayerSpec, ...] = (
    LayerSpec("conv", 4, 32, (5, 5)),
    LayerSpec("conv", 32, 64, (5, 5)),
    LayerSpec("conv", 64, 64, (5, 5)),
    LayerSpec("conv", 64, 64, (5, 5)),
    LayerSpec("conv", 64, 128, (5, 5)),
    LayerSpec("conv", 128, 128, (5, 5)),
    LayerSpec("conv", 128, 256, (5, 5)),
    LayerSpec("conv", 256, 256, (5, 5)),
    LayerSpec("conv", 256, 256, (4, 4)),
)
CORR_HEAD_LAYERS: tuple[LayerSpec, ...] = (
    LayerSpec("fc", 256, 128),
    LayerSpec("fc", 128, 64),
    LayerSpec("fc", 64, 2),
)
CONCAT_HEAD_LAYERS: tuple[LayerSpec, ...] = (
    LayerSpec("fc", 512, 128),
    LayerSpec("fc", 128, 64),
    LayerSpec("fc", 64, 2),
)

CHECKPOINT_MAGIC = b"4DMS"
CHECKPOINT_VERSION = 1


@dataclass
class Stack:
    """A sequence of conv or fc layers with their weights; ReLU between layers.

    ``final_relu`` controls whether the last layer is followed by ReLU (true for
    trunks, false for heads, which emit logits).
    """

    prefix: str
    specs: tuple[LayerSpec, ...]
    weights: list[Tensor]
    biases: list[Tensor]
    final_relu: bool

    @classmethod
    def initialise(cls, prefix, specs, rng, final_relu, dtype=DEFAULT_DTYPE) -> "Stack":
        ws, bs = [], []
        for spec in specs:
            w, b = init_weights(spec, rng, dtype)
            ws.append(w)
            bs.append(b)
        return cls(prefix, tuple(specs), ws, bs, final_relu)

    def layer_names(self) -> list[str]:
        kind = "conv" if self.specs[0].kind == "conv" else "fc"
        return [f"{kind}{i + 1}" for i in range(len(self.specs))]

    def named_tensors(self):
        for name, w, b in zip(self.layer_names(), self.weights, self.biases):
            yield f"{self.prefix}.{name}.weight", w
            yield f"{self.prefix}.{name}.bias", b

    def forward(self, x: np.ndarray):
        conv = self.specs[0].kind == "conv"
        fwd = conv2d_forward if conv else fully_connected_forward
        caches = []
        last = len(self.specs) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x, c = fwd(x, w.data, b.data)
            r = None
            if i < last or self.final_relu:
                x, r = relu_forward(x)
            caches.append((c, r))
        return x, caches

    def backward(self, grad: np.ndarray, caches, need_input_grad: bool = False):
        """Accumulate parameter gradients into ``.grad``; return the input gradient."""
        conv = self.specs[0].kind == "conv"
        bwd = conv2d_backward if conv else fully_connected_backward
        for i in range(len(self.specs) - 1, -1, -1):
            c, r = caches[i]
            if r is not None:
                grad = relu_backward(grad, r)
            dx, dw, db = bwd(grad, c, need_input_grad=(i > 0 or need_input_grad))
            w, b = self.weights[i], self.biases[i]
            w.grad = dw.astype(w.data.dtype) if w.grad is None else w.grad + dw
            b.grad = db.astype(b.data.dtype) if b.grad is None else b.grad + db
            grad = dx
        return grad


@dataclass
class ModelParams:
    rgb_branch: Stack
    lwir_branch: Stack
    corr_head: Stack
    concat_head: Stack

    @classmethod
    def initialise(cls, seed: int = 0, dtype=DEFAULT_DTYPE) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            Stack.initialise("rgb", TRUNK_LAYERS, rng, True, dtype),
            Stack.initialise("lwir", TRUNK_LAYERS, rng, True, dtype),
            Stack.initialise("corr", CORR_HEAD_LAYERS, rng, False, dtype),
            Stack.initialise("concat", CONCAT_HEAD_LAYERS, rng, False, dtype),
        )

    def stacks(self) -> tuple[Stack, Stack, Stack, Stack]:
        return self.rgb_branch, self.lwir_branch, self.corr_head, self.concat_head

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """All parameters in checkpoint order."""
        return [nt for s in self.stacks() for nt in s.named_tensors()]

    def parameter_count(self) -> int:
        return sum(t.data.size for _, t in self.named_tensors())

    def zero_grad(self) -> None:
        for _, t in self.named_tensors():
            t.grad = None

    def astype(self, dtype) -> "ModelParams":
        def conv(s: Stack) -> Stack:
            return Stack(
                s.prefix, s.specs,
                [w.astype(dtype) for w in s.weights],
                [b.astype(dtype) for b in s.biases],
                s.final_relu,
            )
        return ModelParams(*(conv(s) for s in self.stacks()))

    def copy(self) -> "ModelParams":
        return self.astype(self.rgb_branch.weights[0].data.dtype)

    @property
    def dtype(self):
        return self.rgb_branch.weights[0].data.dtype

    def branch(self, name: str) -> Stack:
        if name == "rgb":
            return self.rgb_branch
        if name == "lwir":
            return self.lwir_branch
        raise ValueError(f"branch must be 'rgb' or 'lwir', got {name!r}")


@dataclass
class FusionOutputs:
    """Fused features and logits. Leading axes are batch/candidate axes if present."""

    f_corr: np.ndarray
    f_concat: np.ndarray
    y_corr: np.ndarray
    y_concat: np.ndarray
    cache: object = field(default=None, repr=False, compare=False)


# -- features and fusion -----------------------------------------------------

def extract_features(patch: np.ndarray, params: ModelParams, branch: str) -> np.ndarray:
    """Run one trunk on a ``36 x W x 4`` patch; returns ``1 x (W - 35) x 256``."""
    patch = np.asarray(patch, dtype=params.dtype)
    if patch.ndim != 3 or patch.shape[2] != IN_CHANNELS:
        raise ShapeError(f"patch must be 36 x W x 4, got {patch.shape}")
    if patch.shape[0] != PATCH_SIZE or patch.shape[1] < PATCH_SIZE:
        raise ShapeError(f"patch must be 36 rows and at least 36 columns, got {patch.shape}")
    out, _ = params.branch(branch).forward(patch)
    return out


def _check_feature_pair(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape[-1] != FEATURE_DIM or v.shape[-1] != FEATURE_DIM:
        raise ShapeError(f"features must have length {FEATURE_DIM}, got {u.shape} and {v.shape}")


def fuse_correlation(f_rgb: np.ndarray, f_lwir: np.ndarray) -> np.ndarray:
    """Elementwise product of two 256-vectors (broadcasts over leading axes)."""
    _check_feature_pair(f_rgb, f_lwir)
    return f_rgb * f_lwir


def fuse_concatenation(f_rgb: np.ndarray, f_lwir: np.ndarray) -> np.ndarray:
    """``[f_rgb || f_lwir]``; RGB occupies indices 0-255, LWIR 256-511."""
    _check_feature_pair(f_rgb, f_lwir)
    f_rgb, f_lwir = np.broadcast_arrays(f_rgb, f_lwir)
    return np.concatenate([f_rgb, f_lwir], axis=-1)


def heads_forward(params: ModelParams, f_rgb: np.ndarray, f_lwir: np.ndarray) -> FusionOutputs:
    """Fuse ``N x 256`` feature rows and run both heads."""
    f_corr = fuse_correlation(f_rgb, f_lwir)
    f_concat = fuse_concatenation(f_rgb, f_lwir)
    y_corr, c_corr = params.corr_head.forward(f_corr)
    y_concat, c_concat = params.concat_head.forward(f_concat)
    return FusionOutputs(f_corr, f_concat, y_corr, y_concat, (f_rgb, f_lwir, c_corr, c_concat))


# -- paired forward / backward -----------------------------------------------

def forward_batch(params: ModelParams, rgb: np.ndarray, lwir: np.ndarray) -> FusionOutputs:
    """Forward ``N x 36 x 36 x 4`` RGB and LWIR patches; logits are ``N x 2``."""
    rgb = np.asarray(rgb, dtype=params.dtype)
    lwir = np.asarray(lwir, dtype=params.dtype)
    for name, p in (("rgb", rgb), ("lwir", lwir)):
        if p.ndim != 4 or p.shape[1:] != (PATCH_SIZE, PATCH_SIZE, IN_CHANNELS):
            raise ShapeError(f"{name} patches must be N x 36 x 36 x 4, got {p.shape}")
    if rgb.shape[0] != lwir.shape[0]:
        raise ShapeError(f"{rgb.shape[0]} RGB patches vs {lwir.shape[0]} LWIR patches")
    n = rgb.shape[0]
    f_rgb, c_rgb = params.rgb_branch.forward(rgb)
    f_lwir, c_lwir = params.lwir_branch.forward(lwir)
    out = heads_forward(params, f_rgb.reshape(n, FEATURE_DIM), f_lwir.reshape(n, FEATURE_DIM))
    out.cache = (c_rgb, c_lwir, out.cache)
    return out


def backward_batch(params: ModelParams, out: FusionOutputs, grad_y_corr: np.ndarray,
                   grad_y_concat: np.ndarray) -> None:
    """Backpropagate logit gradients from both heads into every parameter's ``.grad``."""
    if out.cache is None:
        raise ShapeError("forward outputs carry no cache")
    c_rgb, c_lwir, (f_rgb, f_lwir, c_corr, c_concat) = out.cache
    g_corr = params.corr_head.backward(grad_y_corr, c_corr, need_input_grad=True)
    g_concat = params.concat_head.backward(grad_y_concat, c_concat, need_input_grad=True)
    g_rgb = g_corr * f_lwir + g_concat[:, :FEATURE_DIM]
    g_lwir = g_corr * f_rgb + g_concat[:, FEATURE_DIM:]
    n = f_rgb.shape[0]
    params.rgb_branch.backward(g_rgb.reshape(n, 1, 1, FEATURE_DIM), c_rgb)
    params.lwir_branch.backward(g_lwir.reshape(n, 1, 1, FEATURE_DIM), c_lwir)


def forward_pair(p_rgb: np.ndarray, p_lwir: np.ndarray, params: ModelParams) -> FusionOutputs:
    """Single 36 x 36 x 4 patch pair; fused vectors and logits without batch axis."""
    p_rgb, p_lwir = np.asarray(p_rgb), np.asarray(p_lwir)
    if p_rgb.ndim != 3 or p_lwir.ndim != 3:
        raise ShapeError("forward_pair takes single 36 x 36 x 4 patches")
    out = forward_batch(params, p_rgb[None], p_lwir[None])
    return FusionOutputs(out.f_corr[0], out.f_concat[0], out.y_corr[0], out.y_concat[0])


# -- checkpoints --------------------------------------------------------------
# Layout: b"4DMS", u32 version, then per tensor in ModelParams.named_tensors()
# order: u32 name length, utf-8 name, u32 rank, u32 dims..., float32 LE data.

def checkpoint_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    for name, t in params.named_tensors():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", t.data.ndim))
        buf.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return buf.getvalue()


def params_from_bytes(blob: bytes) -> ModelParams:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint: bad magic bytes")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 8
    read: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims))
        if pos + 4 * count > len(blob):
            raise ValueError(f"checkpoint truncated inside tensor {name!r}")
        read[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * count

    params = ModelParams.initialise(0)
    expected = params.named_tensors()
    if list(read) != [n for n, _ in expected]:
        raise ValueError("checkpoint tensor names/order do not match the architecture")
    for name, t in expected:
        if read[name].shape != t.data.shape:
            raise ValueError(f"{name}: checkpoint shape {read[name].shape} != {t.data.shape}")
        t.data = read[name]
    return params


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return params_from_bytes(path.read_bytes())
