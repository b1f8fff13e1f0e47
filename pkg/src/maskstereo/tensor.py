"""Dense tensor type and the layer kernels used by the patch network.

Every kernel is a pair of pure functions: ``*_forward`` returns the output and a
cache, ``*_backward`` consumes the upstream gradient and that cache. Images are
laid out ``H x W x C`` (optionally with a leading batch axis), convolution
weights ``kh x kw x Cin x Cout``.

Convolutions are valid (no padding), stride 1, implemented as an im2col gather
followed by a single BLAS matmul. Columns are ordered (kh, kw, Cin) so the
weight tensor reshapes to the matmul operand without a transpose; the input
gradient is a col2im scatter-add of ``grad @ W^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when array dimensions do not fit an operation."""


class UsageError(RuntimeError):
    """Raised when an operation is called out of order (e.g. backward without forward)."""


@dataclass
class Tensor:
    """Row-major real array with an optional gradient slot of the same shape."""

    data: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 0 or 0 in self.data.shape:
            raise ShapeError(f"tensor dims must be positive, got {self.data.shape}")
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise ShapeError(f"grad dims {self.grad.shape} != data dims {self.data.shape}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @classmethod
    def zeros(cls, dims: Sequence[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        return cls(np.zeros(tuple(dims), dtype=dtype))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def astype(self, dtype) -> "Tensor":
        grad = None if self.grad is None else self.grad.astype(dtype)
        return Tensor(self.data.astype(dtype), grad)


@dataclass(frozen=True)
class LayerSpec:
    """Shape description of one layer. Stride is always 1 and padding always 0."""

    kind: str  # "conv" | "fc" | "activation"
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: int = field(default=1, init=False)
    padding: int = field(default=0, init=False)

    ALLOWED_KERNELS = ((5, 5), (4, 4))

    def __post_init__(self):
        if self.kind not in ("conv", "fc", "activation"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and tuple(self.kernel) not in self.ALLOWED_KERNELS:
            raise ShapeError(f"conv kernel {self.kernel} not in {self.ALLOWED_KERNELS}")

    @property
    def weight_dims(self) -> tuple[int, ...]:
        if self.kind == "conv":
            return (*self.kernel, self.in_channels, self.out_channels)
        if self.kind == "fc":
            return (self.in_channels, self.out_channels)
        return ()

    @property
    def fan_in(self) -> int:
        kh, kw = self.kernel if self.kind == "conv" else (1, 1)
        return kh * kw * self.in_channels

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        if self.kind != "conv":
            return h, w
        kh, kw = self.kernel
        return h - kh + 1, w - kw + 1


def init_weights(spec: LayerSpec, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> tuple[Tensor, Tensor]:
    """Fan-in scaled uniform weights, bound sqrt(6 / fan_in); zero bias."""
    bound = np.sqrt(6.0 / spec.fan_in)
    w = rng.uniform(-bound, bound, size=spec.weight_dims).astype(dtype)
    b = np.zeros(spec.out_channels, dtype=dtype)
    return Tensor(w), Tensor(b)


# -- convolution -------------------------------------------------------------

def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected H x W x C or N x H x W x C input, got {x.shape}")


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (N, Ho, Wo, C, kh, kw) view -> (N*Ho*Wo, kh*kw*C) copy
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    n, ho, wo, c = win.shape[:4]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Valid cross-correlation.

    Returns ``(out, cache)`` with out of shape ``(H-kh+1) x (W-kw+1) x Cout``
    (batch axis preserved if given).
    """
    xb, squeeze = _as_batch(np.asarray(x))
    if w.ndim != 4:
        raise ShapeError(f"conv weights must be kh x kw x Cin x Cout, got {w.shape}")
    kh, kw, cin, cout = w.shape
    n, h, wd, c = xb.shape
    if c != cin:
        raise ShapeError(f"input has {c} channels, kernel expects {cin}")
    if h < kh or wd < kw:
        raise ShapeError(f"input {h}x{wd} smaller than kernel {kh}x{kw}")
    if b.shape != (cout,):
        raise ShapeError(f"bias shape {b.shape} != ({cout},)")
    ho, wo = h - kh + 1, wd - kw + 1
    out = _im2col(xb, kh, kw) @ w.reshape(kh * kw * cin, cout)
    out += b
    out = out.reshape(n, ho, wo, cout)
    cache = (xb, w, squeeze)
    return (out[0] if squeeze else out), cache


def conv2d_backward(grad_out: np.ndarray, cache, need_input_grad: bool = True):
    """Gradients ``(dx, dw, db)`` of the valid cross-correlation.

    ``dx`` is None when ``need_input_grad`` is False (first layer of a trunk).
    """
    if cache is None:
        raise UsageError("conv2d_backward called without a forward cache")
    xb, w, squeeze = cache
    kh, kw, cin, cout = w.shape
    g = grad_out[None] if squeeze else grad_out
    n, ho, wo, _ = g.shape
    if g.shape != (xb.shape[0], xb.shape[1] - kh + 1, xb.shape[2] - kw + 1, cout):
        raise ShapeError(f"upstream grad {grad_out.shape} does not match forward output")
    g2 = g.reshape(n * ho * wo, cout)
    db = g2.sum(axis=0)
    dw = (_im2col(xb, kh, kw).T @ g2).reshape(w.shape)
    dx = None
    if need_input_grad:
        dcols = (g2 @ w.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
        dx = np.zeros_like(xb, dtype=dcols.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i:i + ho, j:j + wo] += dcols[:, :, :, i, j]
        if squeeze:
            dx = dx[0]
    return dx, dw, db


# -- fully connected ---------------------------------------------------------

def fully_connected_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map ``x @ w + b`` for x of shape ``1 x Din`` or ``N x Din``."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"fc input must be 2-D (rows x Din), got {x.shape}")
    if w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"fc input width {x.shape[1]} does not match weights {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"bias shape {b.shape} != ({w.shape[1]},)")
    return x @ w + b, (x, w)


def fully_connected_backward(grad_out: np.ndarray, cache, need_input_grad: bool = True):
    if cache is None:
        raise UsageError("fully_connected_backward called without a forward cache")
    x, w = cache
    dx = grad_out @ w.T if need_input_grad else None
    return dx, x.T @ grad_out, grad_out.sum(axis=0)


# -- activation and loss -----------------------------------------------------

def relu_forward(x: np.ndarray):
    x = np.asarray(x)
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    if cache is None:
        raise UsageError("relu_backward called without a forward cache")
    return grad_out * cache


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, target):
    """Mean two-class cross-entropy and its gradient wrt the logits.

    ``logits`` is ``1 x 2`` (or ``N x 2``); ``target`` an int or int array of
    class indices in {0, 1}. The loss is averaged over rows in float64; the
    gradient keeps the dtype of ``logits``.
    """
    logits = np.asarray(logits)
    dtype = logits.dtype if np.issubdtype(logits.dtype, np.floating) else np.float64
    logits = logits.astype(np.float64)
    if logits.ndim == 1:
        logits = logits[None]
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"expected rows of 2 logits, got {logits.shape}")
    t = np.atleast_1d(np.asarray(target))
    if t.shape != (logits.shape[0],):
        raise ShapeError(f"{t.shape[0]} targets for {logits.shape[0]} rows")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError(f"targets must be 0 or 1, got {t}")
    t = t.astype(np.intp)
    rows = np.arange(len(t))
    n = logits.shape[0]
    loss = -log_softmax(logits)[rows, t].mean()
    grad = softmax(logits)
    grad[rows, t] -= 1.0
    return float(loss), (grad / n).astype(dtype)


# -- finite-difference checking ----------------------------------------------

@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


def numerical_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` wrt every element of ``x`` (mutated in place, restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    num = np.abs(analytic - numeric)
    den = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(num / den)) if num.size else 0.0


def gradient_check(
    forward: Callable[..., tuple[np.ndarray, object]],
    backward: Callable[[np.ndarray, object], Sequence[np.ndarray | None]],
    inputs: Sequence[np.ndarray],
    *,
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    rng: np.random.Generator | None = None,
    name: str = "op",
    corrupt: float = 0.0,
) -> GradCheckReport:
    """Compare a layer's analytic gradients with central differences.

    The scalar probed is ``sum(forward(*inputs)[0] * r)`` for a fixed random
    ``r``, so every output element contributes. Inputs must be float64.
    ``corrupt`` is added to the analytic gradients, for checking the checker.
    """
    rng = rng or np.random.default_rng(0)
    inputs = [np.array(a, dtype=CHECK_DTYPE) for a in inputs]
    out, cache = forward(*inputs)
    r = rng.standard_normal(np.shape(out))
    grads = backward(r, cache)

    def scalar() -> float:
        return float(np.sum(forward(*inputs)[0] * r))

    worst, count = 0.0, 0
    for a, g in zip(inputs, grads):
        if g is None:
            continue
        num = numerical_gradient(scalar, a, eps)
        worst = max(worst, relative_error(np.asarray(g) + corrupt, num))
        count += a.size
    return GradCheckReport(name, worst, tolerance, count)
