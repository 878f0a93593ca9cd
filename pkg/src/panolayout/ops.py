"""Dense float64 array ops, each with a hand-written backward pass.

Every op here returns ``(out, vjp)``. ``out`` is the forward value; ``vjp``
takes the cotangent of ``out`` and returns the cotangents of the op's array
inputs, in call order, as a tuple (single-input ops return a 1-tuple). There
is no tape and no graph: composite modules chain these closures by hand and
walk them in reverse. Arrays are float64, C-order; integer arguments (axes,
strides, sizes) are compile-time constants baked into the closure.

Conventions used throughout:
  * panoramas are [C, H, W] with W == 2H; axis -1 is longitude and wraps,
  * sampling coordinates are pixel-center based: (row, col) = (0, 0) is the
    center of the top-left pixel,
  * out-of-range columns wrap modulo W, out-of-range rows clamp to [0, H-1].
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ValidationError

Array = np.ndarray
VJP = Callable[[Array], tuple]


def as_tensor(x, shape: tuple[int, ...] | None = None) -> Array:
    """Coerce to a C-contiguous float64 array, optionally checking shape."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if shape is not None and a.shape != tuple(shape):
        raise ValidationError(f"expected shape {tuple(shape)}, got {a.shape}")
    return a


def ensure_finite(name: str, *arrays: Array) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"{name}: non-finite values encountered")


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient over the axes that broadcasting expanded."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives


def add(a: Array, b: Array):
    a = as_tensor(a)
    b = as_tensor(b)
    out = a + b

    def vjp(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return out, vjp


def sub(a: Array, b: Array):
    a = as_tensor(a)
    b = as_tensor(b)
    out = a - b

    def vjp(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return out, vjp


def mul(a: Array, b: Array):
    a = as_tensor(a)
    b = as_tensor(b)
    out = a * b

    def vjp(g: Array):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

    return out, vjp


def scale(a: Array, s: float):
    a = as_tensor(a)
    out = a * s

    def vjp(g: Array):
        return (g * s,)

    return out, vjp


def sigmoid(x: Array):
    x = as_tensor(x)
    # stable in both tails
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g: Array):
        return (g * out * (1.0 - out),)

    return out, vjp


def softplus(x: Array):
    """log(1 + exp(x)), computed as logaddexp(0, x) for stability."""
    x = as_tensor(x)
    out = np.logaddexp(0.0, x)
    sig = 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))

    def vjp(g: Array):
        return (g * sig,)

    return out, vjp


def matmul(a: Array, b: Array):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a @ b

    def vjp(g: Array):
        return g @ b.T, a.T @ g

    return out, vjp


def reshape(x: Array, shape: tuple[int, ...]):
    x = as_tensor(x)
    out = x.reshape(shape)

    def vjp(g: Array):
        return (g.reshape(x.shape),)

    return out, vjp


def transpose(x: Array, axes: tuple[int, ...]):
    x = as_tensor(x)
    out = np.transpose(x, axes)
    inv = np.argsort(axes)

    def vjp(g: Array):
        return (np.transpose(g, inv),)

    return out, vjp


def mean(x: Array, axis: int | tuple[int, ...] | None = None):
    x = as_tensor(x)
    out = x.mean(axis=axis)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def vjp(g: Array):
        if axis is None:
            return (np.full_like(x, g / n),)
        ge = np.expand_dims(g, axis)
        return (np.broadcast_to(ge / n, x.shape).copy(),)

    return out, vjp


def sum_(x: Array, axis: int | tuple[int, ...] | None = None):
    x = as_tensor(x)
    out = x.sum(axis=axis)

    def vjp(g: Array):
        if axis is None:
            return (np.full_like(x, g),)
        ge = np.expand_dims(g, axis)
        return (np.broadcast_to(ge, x.shape).copy(),)

    return out, vjp


def softmax(x: Array, axis: int = -1):
    x = as_tensor(x)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: Array):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return out, vjp


def softmax_masked_diagonal(x: Array):
    """Row softmax of a square matrix with the diagonal excluded.

    Diagonal entries of the result are exactly zero and each row of the
    off-diagonal entries sums to 1. Requires n >= 2.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 2:
        raise ValidationError(f"need a square matrix with n >= 2, got {x.shape}")
    n = x.shape[0]
    masked = x.copy()
    np.fill_diagonal(masked, -np.inf)
    m = np.max(masked, axis=1, keepdims=True)
    e = np.exp(masked - m)
    np.fill_diagonal(e, 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g: Array):
        dot = np.sum(g * out, axis=1, keepdims=True)
        dx = out * (g - dot)
        np.fill_diagonal(dx, 0.0)
        return (dx,)

    return out, vjp


# ---------------------------------------------------------------------------
# sampling, resizing, convolution


def _prepare_coords(coords: Array, height: int, width: int):
    """Split sampling coords into integer cells and fractional weights.

    Columns wrap modulo width; rows clamp to [0, height-1]. Returns the four
    corner index arrays plus fractional weights and the row in-range mask
    (the derivative of the clamp).
    """
    y = coords[..., 0]
    x = coords[..., 1]
    xw = np.mod(x, width)
    x0 = np.floor(xw).astype(np.intp)
    x0 = np.minimum(x0, width - 1)  # guards xw == width from roundoff
    wx = xw - x0
    x1 = (x0 + 1) % width

    yc = np.clip(y, 0.0, float(height - 1))
    y0 = np.minimum(np.floor(yc).astype(np.intp), height - 2)
    wy = yc - y0
    y1 = y0 + 1
    ymask = ((y > 0.0) & (y < float(height - 1))).astype(np.float64)
    return x0, x1, wx, y0, y1, wy, ymask


def bilinear_sample(f: Array, coords: Array):
    """Sample [C, H, W] at fractional (row, col) points, [N, 2] -> [C, N].

    Horizontal wrap, vertical clamp. Differentiable w.r.t. both the field and
    the coordinates; the row-clamp contributes zero coordinate gradient
    outside (0, H-1).
    """
    f = as_tensor(f)
    coords = as_tensor(coords)
    if f.ndim != 3:
        raise ValidationError(f"bilinear_sample: field must be [C,H,W], got {f.shape}")
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValidationError(f"bilinear_sample: coords must be [N,2], got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise NumericalError("bilinear_sample: non-finite coordinates")
    C, H, W = f.shape
    if H < 2:
        raise ValidationError("bilinear_sample: field height must be >= 2")

    x0, x1, wx, y0, y1, wy, ymask = _prepare_coords(coords, H, W)
    v00 = f[:, y0, x0]
    v01 = f[:, y0, x1]
    v10 = f[:, y1, x0]
    v11 = f[:, y1, x1]
    out = ((1 - wy) * ((1 - wx) * v00 + wx * v01)
           + wy * ((1 - wx) * v10 + wx * v11))

    def vjp(g: Array):
        df = np.zeros_like(f)
        np.add.at(df, (slice(None), y0, x0), g * ((1 - wy) * (1 - wx)))
        np.add.at(df, (slice(None), y0, x1), g * ((1 - wy) * wx))
        np.add.at(df, (slice(None), y1, x0), g * (wy * (1 - wx)))
        np.add.at(df, (slice(None), y1, x1), g * (wy * wx))
        ddy = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
        ddx = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
        dcoords = np.stack([np.sum(g * ddy, axis=0) * ymask,
                            np.sum(g * ddx, axis=0)], axis=-1)
        return df, dcoords

    return out, vjp


def resize_grid(src_h: int, src_w: int, dst_h: int, dst_w: int) -> Array:
    """Half-pixel-aligned source coordinates for a bilinear resize, [dst_h*dst_w, 2]."""
    rows = (np.arange(dst_h) + 0.5) * (src_h / dst_h) - 0.5
    cols = (np.arange(dst_w) + 0.5) * (src_w / dst_w) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr, cc], axis=-1).reshape(-1, 2)


def resize_bilinear(f: Array, dst_h: int, dst_w: int):
    """Bilinear resize of [C, H, W] to [C, dst_h, dst_w].

    Implemented through bilinear_sample on a half-pixel-aligned grid so the
    wrap/clamp edge rules match sampling everywhere. Equal dims short-circuit
    to the identity.
    """
    f = as_tensor(f)
    if f.ndim != 3:
        raise ValidationError(f"resize_bilinear: field must be [C,H,W], got {f.shape}")
    if dst_h < 1 or dst_w < 1:
        raise ValidationError("resize_bilinear: target dims must be positive")
    C, H, W = f.shape
    if (H, W) == (dst_h, dst_w):
        out = f.copy()

        def vjp_id(g: Array):
            return (g,)

        return out, vjp_id

    coords = resize_grid(H, W, dst_h, dst_w)
    flat, inner = bilinear_sample(f, coords)
    out = flat.reshape(C, dst_h, dst_w)

    def vjp(g: Array):
        df, _ = inner(g.reshape(C, -1))
        return (df,)

    return out, vjp


def conv2d(x: Array, kernel: Array, bias: Array, stride: int = 1):
    """3x3 convolution with circular horizontal and zero vertical padding.

    x [Cin, H, W], kernel [Cout, Cin, 3, 3], bias [Cout]; output keeps
    ceil(H/stride) x ceil(W/stride) spatial dims (H, W divisible by stride in
    all uses here).
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    bias = as_tensor(bias)
    if x.ndim != 3 or kernel.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ValidationError(f"conv2d: bad shapes x{x.shape} k{kernel.shape}")
    if kernel.shape[1] != x.shape[0] or bias.shape != (kernel.shape[0],):
        raise ValidationError("conv2d: channel mismatch")
    if stride < 1:
        raise ValidationError("conv2d: stride must be >= 1")
    Cin, H, W = x.shape
    Cout = kernel.shape[0]

    xp = np.zeros((Cin, H + 2, W + 2), dtype=np.float64)
    xp[:, 1:-1, 1:-1] = x
    xp[:, 1:-1, 0] = x[:, :, -1]   # circular columns
    xp[:, 1:-1, -1] = x[:, :, 0]

    from numpy.lib.stride_tricks import sliding_window_view
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("cijab,ocab->oij", win, kernel, optimize=True) + bias[:, None, None]
    Ho, Wo = out.shape[1:]

    def vjp(g: Array):
        dk = np.einsum("cijab,oij->ocab", win, g, optimize=True)
        db = g.sum(axis=(1, 2))
        dxp = np.zeros_like(xp)
        # scatter each tap back; strided slices never alias within one tap
        for a in range(3):
            for b in range(3):
                contrib = np.einsum("oij,ocab->cij", g,
                                    kernel[:, :, a:a + 1, b:b + 1], optimize=True)
                dxp[:, a:a + Ho * stride:stride, b:b + Wo * stride:stride] += contrib
        dx = dxp[:, 1:-1, 1:-1].copy()
        dx[:, :, -1] += dxp[:, 1:-1, 0]   # fold circular columns back
        dx[:, :, 0] += dxp[:, 1:-1, -1]
        return dx, dk, db

    return out, vjp


def chain_vjps(vjps: Sequence[Callable]) -> Callable:
    """Compose single-array vjps in reverse order (last applied first)."""

    def composed(g):
        for v in reversed(vjps):
            g = v(g)[0]
        return (g,)

    return composed
