"""Layer kinds with hand-written forward and backward passes.

Tensors are numpy arrays with a leading batch axis; images are NHWC.
Convolution weights are stored ``(C_in, kh, kw, C_out)``.

Padding follows the 'same' convention: a conv of stride ``s`` maps ``H`` to
``ceil(H / s)`` and a transposed conv maps ``H`` to ``H * s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidArgument, ShapeError

ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "none")
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # dense | conv | tconv | reshape
    units: int = 0  # dense output units, or conv/tconv filters
    kernel: tuple = (1, 1)
    stride: tuple = (1, 1)
    shape: tuple = ()  # reshape target, batch axis excluded
    activation: str = "none"
    alpha: float = LEAKY_SLOPE
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "conv", "tconv", "reshape"):
            raise InvalidArgument(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgument(f"dropout must lie in [0, 1), got {self.dropout}")
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.kind in ("conv", "tconv"):
            if min(self.kernel) < 1 or min(self.stride) < 1 or self.units < 1:
                raise InvalidArgument("kernel, stride and filters must be >= 1")
        if self.kind == "dense" and self.units < 1:
            raise InvalidArgument("dense units must be >= 1")

    def to_text(self):
        parts = [self.kind]
        if self.kind == "dense":
            parts.append(f"units={self.units}")
        elif self.kind in ("conv", "tconv"):
            parts += [f"filters={self.units}", "kernel={}x{}".format(*self.kernel),
                      "stride={}x{}".format(*self.stride)]
        else:
            parts.append("shape=" + "x".join(map(str, self.shape)))
        act = self.activation if self.activation != "leaky_relu" else f"leaky_relu:{self.alpha!r}"
        parts += [f"act={act}", f"dropout={self.dropout!r}"]
        return " ".join(parts)

    @classmethod
    def from_text(cls, text):
        bits = text.split()
        if not bits:
            raise InvalidArgument("empty layer description")
        kw = {"kind": bits[0]}
        for item in bits[1:]:
            key, _, value = item.partition("=")
            if key in ("units", "filters"):
                kw["units"] = int(value)
            elif key in ("kernel", "stride"):
                kw[key] = tuple(int(v) for v in value.split("x"))
            elif key == "shape":
                kw["shape"] = tuple(int(v) for v in value.split("x"))
            elif key == "act":
                name, _, alpha = value.partition(":")
                kw["activation"] = name
                if alpha:
                    kw["alpha"] = float(alpha)
            elif key == "dropout":
                kw["dropout"] = float(value)
            else:
                raise InvalidArgument(f"unknown layer attribute {key!r}")
        return cls(**kw)


def dense(units, activation="none", dropout=0.0, alpha=LEAKY_SLOPE):
    return LayerSpec("dense", units=units, activation=activation, dropout=dropout, alpha=alpha)


def conv(filters, kernel, stride=1, activation="none", dropout=0.0, alpha=LEAKY_SLOPE):
    return LayerSpec("conv", units=filters, kernel=_pair(kernel), stride=_pair(stride),
                     activation=activation, dropout=dropout, alpha=alpha)


def tconv(filters, kernel, stride=1, activation="none", dropout=0.0, alpha=LEAKY_SLOPE):
    return LayerSpec("tconv", units=filters, kernel=_pair(kernel), stride=_pair(stride),
                     activation=activation, dropout=dropout, alpha=alpha)


def reshape(*shape):
    return LayerSpec("reshape", shape=shape)


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


# --- geometry --------------------------------------------------------------

def same_pad(size, k, s):
    """(out, pad_before, pad_after) of a 'same' convolution along one axis."""
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return out, total // 2, total - total // 2


def tconv_crop(size, k, s):
    """(out, crop_before) of a 'same' transposed convolution along one axis."""
    return size * s, max(k - s, 0) // 2


def output_shape(spec: LayerSpec, in_shape):
    in_shape = tuple(in_shape)
    if spec.kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"dense layer needs a flat input, got {in_shape}")
        return (spec.units,)
    if spec.kind == "reshape":
        if math.prod(in_shape) != math.prod(spec.shape):
            raise ShapeError(f"cannot reshape {in_shape} to {spec.shape}")
        return spec.shape
    if len(in_shape) != 3:
        raise ShapeError(f"{spec.kind} layer needs an HxWxC input, got {in_shape}")
    h, w, _ = in_shape
    if spec.kind == "conv":
        return (same_pad(h, spec.kernel[0], spec.stride[0])[0],
                same_pad(w, spec.kernel[1], spec.stride[1])[0], spec.units)
    return (h * spec.stride[0], w * spec.stride[1], spec.units)


def param_shapes(spec: LayerSpec, in_shape):
    if spec.kind == "dense":
        return [(in_shape[0], spec.units), (spec.units,)]
    if spec.kind in ("conv", "tconv"):
        return [(in_shape[2], spec.kernel[0], spec.kernel[1], spec.units), (spec.units,)]
    return []


def glorot(spec: LayerSpec, in_shape, rng, dtype):
    shapes = param_shapes(spec, in_shape)
    if not shapes:
        return []
    wshape, bshape = shapes
    if spec.kind == "dense":
        fan_in, fan_out = wshape
    else:
        area = spec.kernel[0] * spec.kernel[1]
        fan_in, fan_out = wshape[0] * area, spec.units * area
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return [rng.uniform(-limit, limit, size=wshape).astype(dtype), np.zeros(bshape, dtype=dtype)]


# --- activations -----------------------------------------------------------

def activate(name, z, alpha):
    if name == "leaky_relu":
        return np.where(z > 0, z, alpha * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def activate_grad(name, z, a, da, alpha):
    if name == "leaky_relu":
        return np.where(z > 0, da, alpha * da)
    if name == "tanh":
        return da * (1.0 - a * a)
    if name == "sigmoid":
        return da * a * (1.0 - a)
    return da


# --- linear ops ------------------------------------------------------------

def _conv_forward(spec, x, W, b):
    kh, kw = spec.kernel
    sh, sw = spec.stride
    _, H, Wd, C = x.shape
    ho, ph0, ph1 = same_pad(H, kh, sh)
    wo, pw0, pw1 = same_pad(Wd, kw, sw)
    xp = np.pad(x, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw][:, :ho, :wo]
    cols = win.reshape(-1, C * kh * kw)  # (B*ho*wo, C*kh*kw), copies
    y = cols @ W.reshape(C * kh * kw, -1) + b
    return y.reshape(x.shape[0], ho, wo, -1), (cols, xp.shape, (ph0, pw0), x.shape)


def _conv_backward(spec, dy, W, saved, need_dx=True):
    cols, xp_shape, (ph0, pw0), x_shape = saved
    kh, kw = spec.kernel
    sh, sw = spec.stride
    B, ho, wo, F = dy.shape
    C = W.shape[0]
    dyf = dy.reshape(-1, F)
    dW = (cols.T @ dyf).reshape(W.shape)
    db = dyf.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = (dyf @ W.reshape(C * kh * kw, F).T).reshape(B, ho, wo, C, kh, kw)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + sh * ho:sh, j:j + sw * wo:sw, :] += dcols[:, :, :, :, i, j]
    H, Wd = x_shape[1], x_shape[2]
    return dxp[:, ph0:ph0 + H, pw0:pw0 + Wd, :], dW, db


def _tconv_forward(spec, x, W, b):
    kh, kw = spec.kernel
    sh, sw = spec.stride
    B, H, Wd, C = x.shape
    F = W.shape[3]
    ho, ch = tconv_crop(H, kh, sh)
    wo, cw = tconv_crop(Wd, kw, sw)
    xf = x.reshape(-1, C)
    proj = (xf @ W.reshape(C, -1)).reshape(B, H, Wd, kh, kw, F)
    full = np.zeros((B, max((H - 1) * sh + kh, ch + ho), max((Wd - 1) * sw + kw, cw + wo), F),
                    dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            full[:, i:i + sh * H:sh, j:j + sw * Wd:sw, :] += proj[:, :, :, i, j, :]
    y = full[:, ch:ch + ho, cw:cw + wo, :] + b
    return np.ascontiguousarray(y), (xf, full.shape, (ch, cw), x.shape)


def _tconv_backward(spec, dy, W, saved, need_dx=True):
    xf, full_shape, (ch, cw), x_shape = saved
    kh, kw = spec.kernel
    sh, sw = spec.stride
    B, H, Wd, C = x_shape
    F = W.shape[3]
    dfull = np.zeros(full_shape, dtype=dy.dtype)
    dfull[:, ch:ch + dy.shape[1], cw:cw + dy.shape[2], :] = dy
    dproj = np.empty((B, H, Wd, kh, kw, F), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dproj[:, :, :, i, j, :] = dfull[:, i:i + sh * H:sh, j:j + sw * Wd:sw, :]
    dproj = dproj.reshape(B * H * Wd, -1)
    Wm = W.reshape(C, -1)
    dW = (xf.T @ dproj).reshape(W.shape)
    db = dy.reshape(-1, F).sum(axis=0)
    dx = (dproj @ Wm.T).reshape(x_shape) if need_dx else None
    return dx, dW, db


def layer_forward(spec: LayerSpec, params, x, train, rng):
    """Apply one layer; returns (output, saved state for the backward pass)."""
    if spec.kind == "reshape":
        return x.reshape((x.shape[0],) + spec.shape), x.shape
    if spec.kind == "dense":
        W, b = params
        z = x @ W + b
        lin = x
    elif spec.kind == "conv":
        z, lin = _conv_forward(spec, x, *params)
    else:
        z, lin = _tconv_forward(spec, x, *params)
    a = activate(spec.activation, z, spec.alpha)
    mask = None
    out = a
    if train and spec.dropout > 0:
        keep = 1.0 - spec.dropout
        mask = (rng.random(a.shape) < keep).astype(a.dtype) / keep
        out = a * mask
    return out, (lin, z, a, mask)


def layer_backward(spec: LayerSpec, params, saved, dout, need_dx=True):
    """Returns (d input, [d params]); d input is None when not ``need_dx``."""
    if spec.kind == "reshape":
        return (dout.reshape(saved) if need_dx else None), []
    lin, z, a, mask = saved
    if mask is not None:
        dout = dout * mask
    dz = activate_grad(spec.activation, z, a, dout, spec.alpha)
    if spec.kind == "dense":
        W, _ = params
        return (dz @ W.T if need_dx else None), [lin.T @ dz, dz.sum(axis=0)]
    if spec.kind == "conv":
        dx, dW, db = _conv_backward(spec, dz, params[0], lin, need_dx)
    else:
        dx, dW, db = _tconv_backward(spec, dz, params[0], lin, need_dx)
    return dx, [dW, db]
