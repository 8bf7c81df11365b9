"""Layer primitives: conv2d (incl. depthwise), linear, layer/batch norm,
activations and the sub-pixel rearrangement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor, _result, as_tensor

LAYER_KINDS = ("conv2d", "linear", "layer_norm", "batch_norm")


@dataclass
class LayerParams:
    """Weights of one layer.

    ``hyper`` holds kernel/stride/padding/groups/channel counts; ``buffers``
    holds non-trainable state (running statistics for batch_norm).
    """

    kind: str
    weight: Tensor
    bias: Tensor
    hyper: dict[str, Any] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")
        w, b = self.weight.shape, self.bias.shape
        if self.kind == "conv2d":
            if len(w) != 4 or w[2] != w[3]:
                raise DimensionError(f"conv2d weight must be (out, in/groups, k, k), got {w}")
            groups = self.hyper.setdefault("groups", 1)
            cin = self.hyper.setdefault("in_channels", w[1] * groups)
            if cin != w[1] * groups or w[0] % groups:
                raise DimensionError(f"conv2d weight {w} inconsistent with in_channels={cin}, groups={groups}")
            self.hyper.setdefault("kernel", w[2])
            self.hyper.setdefault("stride", 1)
            self.hyper.setdefault("padding", w[2] // 2)
            n_out = w[0]
        elif self.kind == "linear":
            if len(w) != 2:
                raise DimensionError(f"linear weight must be (out, in), got {w}")
            n_out = w[0]
        else:
            if len(w) != 1:
                raise DimensionError(f"{self.kind} weight must be 1-d, got {w}")
            n_out = w[0]
            self.hyper.setdefault("eps", 1e-5)
            if self.kind == "batch_norm":
                self.hyper.setdefault("momentum", 0.1)
                self.buffers.setdefault("running_mean", np.zeros(n_out))
                self.buffers.setdefault("running_var", np.ones(n_out))
        if b != (n_out,):
            raise DimensionError(f"{self.kind} bias length {b} != output channels {n_out}")

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def _uniform(rng: np.random.Generator, bound: float, shape) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def linear_params(n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True) -> LayerParams:
    bound = 1.0 / np.sqrt(n_in)
    b = _uniform(rng, bound, (n_out,)) if bias else Tensor(np.zeros(n_out), requires_grad=True)
    return LayerParams("linear", _uniform(rng, bound, (n_out, n_in)), b)


def conv2d_params(
    n_in: int, n_out: int, kernel: int, rng: np.random.Generator, groups: int = 1, stride: int = 1
) -> LayerParams:
    fan_in = (n_in // groups) * kernel * kernel
    bound = 1.0 / np.sqrt(fan_in)
    return LayerParams(
        "conv2d",
        _uniform(rng, bound, (n_out, n_in // groups, kernel, kernel)),
        _uniform(rng, bound, (n_out,)),
        hyper={"groups": groups, "in_channels": n_in, "stride": stride},
    )


def layer_norm_params(n: int) -> LayerParams:
    return LayerParams("layer_norm", Tensor(np.ones(n), requires_grad=True), Tensor(np.zeros(n), requires_grad=True))


def batch_norm_params(n: int) -> LayerParams:
    return LayerParams("batch_norm", Tensor(np.ones(n), requires_grad=True), Tensor(np.zeros(n), requires_grad=True))


# -- primitive ops ------------------------------------------------------------
def linear(x, w, b) -> Tensor:
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear: input feature axis (-1) has {x.shape[-1]} entries, weight expects {w.shape[1]}")
    out = x.data @ w.data.T + b.data

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, x.shape[-1]) if w.requires_grad else None
        return gx, gw, g2.sum(axis=0)

    return _result(out, (x, w, b), bw, "linear")


def conv2d(x, w, b, stride: int = 1, padding: int | None = None, groups: int = 1) -> Tensor:
    """Cross-correlation of a (C, H, W) map with zero padding."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 3:
        raise DimensionError(f"conv2d expects a (C, H, W) map, got shape {x.shape}")
    cout, cin_g, k, _ = w.shape
    cin, H, W = x.shape
    if cin != cin_g * groups:
        raise DimensionError(f"conv2d: channel axis (0) has {cin} entries, weight expects {cin_g * groups}")
    p = k // 2 if padding is None else padding
    s = stride
    Ho, Wo = (H + 2 * p - k) // s + 1, (W + 2 * p - k) // s + 1
    if Ho < 1 or Wo < 1:
        raise DimensionError(f"conv2d: spatial size {(H, W)} too small for kernel {k}")
    G, cout_g = groups, cout // groups
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data
    xg = xp.reshape(G, cin_g, xp.shape[1], xp.shape[2])
    wg = w.data.reshape(G, cout_g, cin_g, k, k)
    depthwise = cin_g == 1 and cout_g == 1
    hs, ws = slice(None, s * (Ho - 1) + 1, s), slice(None, s * (Wo - 1) + 1, s)

    def patch(a, c):
        return xg[:, :, a : a + s * (Ho - 1) + 1 : s, c : c + s * (Wo - 1) + 1 : s].reshape(G, cin_g, Ho * Wo)

    out = np.zeros((G, cout_g, Ho * Wo))
    for a in range(k):
        for c in range(k):
            if depthwise:
                out[:, 0] += wg[:, 0, 0, a, c][:, None] * patch(a, c)[:, 0]
            else:
                out += wg[:, :, :, a, c] @ patch(a, c)
    out = out.reshape(cout, Ho, Wo) + b.data[:, None, None]

    def bw(g):
        gg = g.reshape(G, cout_g, Ho * Wo)
        gw = np.zeros_like(wg) if w.requires_grad else None
        gxp = np.zeros_like(xg) if x.requires_grad else None
        for a in range(k):
            for c in range(k):
                pa = patch(a, c)
                if gw is not None:
                    if depthwise:
                        gw[:, 0, 0, a, c] = np.einsum("gn,gn->g", gg[:, 0], pa[:, 0])
                    else:
                        gw[:, :, :, a, c] = gg @ pa.transpose(0, 2, 1)
                if gxp is not None:
                    if depthwise:
                        contrib = wg[:, 0, 0, a, c][:, None] * gg[:, 0]
                        contrib = contrib[:, None]
                    else:
                        contrib = wg[:, :, :, a, c].transpose(0, 2, 1) @ gg
                    gxp[:, :, a:, c:][:, :, hs, ws] += contrib.reshape(G, cin_g, Ho, Wo)
        gx = None
        if gxp is not None:
            gx = gxp.reshape(cin, xp.shape[1], xp.shape[2])
            if p:
                gx = gx[:, p : p + H, p : p + W]
            gx = np.ascontiguousarray(gx)
        return gx, (gw.reshape(w.shape) if gw is not None else None), g.sum(axis=(1, 2))

    return _result(out, (x, w, b), bw, "conv2d")


def layer_norm(x, weight, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing feature axis."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"layer_norm: feature axis (-1) has {x.shape[-1]} entries, params expect {weight.shape[0]}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def bw(g):
        gxh = g * weight.data
        gx = inv * (gxh - gxh.mean(axis=-1, keepdims=True) - xhat * (gxh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * weight.data + bias.data, (x, weight, bias), bw, "layer_norm")


def batch_norm(x, p: LayerParams, training: bool) -> Tensor:
    """Per-channel normalization of a (C, H, W) map over its spatial positions."""
    x = as_tensor(x)
    weight, bias = p.weight, p.bias
    if x.ndim != 3 or x.shape[0] != weight.shape[0]:
        raise DimensionError(f"batch_norm: channel axis (0) of {x.shape} does not match {weight.shape[0]} channels")
    eps = p.hyper["eps"]
    gamma = weight.data[:, None, None]
    if training:
        mu = x.data.mean(axis=(1, 2), keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=(1, 2), keepdims=True)
        n = x.shape[1] * x.shape[2]
        m = p.hyper["momentum"]
        rm, rv = p.buffers["running_mean"], p.buffers["running_var"]
        unbiased = var.reshape(-1) * (n / (n - 1) if n > 1 else 1.0)
        p.buffers["running_mean"] = (1.0 - m) * rm + m * mu.reshape(-1)
        p.buffers["running_var"] = (1.0 - m) * rv + m * unbiased
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def bw(g):
            gxh = g * gamma
            gx = inv * (
                gxh - gxh.mean(axis=(1, 2), keepdims=True) - xhat * (gxh * xhat).mean(axis=(1, 2), keepdims=True)
            )
            return gx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    else:
        rm = p.buffers["running_mean"][:, None, None]
        inv = 1.0 / np.sqrt(p.buffers["running_var"][:, None, None] + eps)
        xhat = (x.data - rm) * inv

        def bw(g):
            return g * gamma * inv, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return _result(xhat * gamma + bias.data[:, None, None], (x, weight, bias), bw, "batch_norm")


def apply_layer(p: LayerParams, x, training: bool = False) -> Tensor:
    """Run one layer on ``x``.

    conv2d and batch_norm take (C, H, W) maps; linear and layer_norm act on
    the trailing feature axis.
    """
    if p.kind == "conv2d":
        h = p.hyper
        return conv2d(x, p.weight, p.bias, stride=h["stride"], padding=h["padding"], groups=h["groups"])
    if p.kind == "linear":
        return linear(x, p.weight, p.bias)
    if p.kind == "layer_norm":
        return layer_norm(x, p.weight, p.bias, p.hyper["eps"])
    return batch_norm(x, p, training)


ACTIVATIONS = ("softplus", "silu", "sigmoid", "softmax")


def activate(kind: str, x, axis: int | None = None) -> Tensor:
    if kind == "softplus":
        return T.softplus(x)
    if kind == "silu":
        return T.silu(x)
    if kind == "sigmoid":
        return T.sigmoid(x)
    if kind in ("softmax", "softmax_over_axis"):
        if axis is None:
            raise ConfigError("softmax needs an explicit axis")
        return T.softmax(x, axis)
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def pixel_shuffle(x, r: int) -> Tensor:
    """(C*r*r, H, W) -> (C, H*r, W*r); channel c*r*r + i*r + j lands at offset (i, j)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"pixel_shuffle expects (C, H, W), got {x.shape}")
    c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise DimensionError(f"pixel_shuffle: channel axis (0) has {c} entries, not divisible by r^2={r * r}")
    if r == 1:
        return x
    y = T.reshape(x, (c // (r * r), r, r, h, w))
    y = T.transpose(y, (0, 3, 1, 4, 2))
    return T.reshape(y, (c // (r * r), h * r, w * r))


def pixel_unshuffle(x, r: int) -> Tensor:
    x = as_tensor(x)
    c, h, w = x.shape
    if h % r or w % r:
        raise DimensionError(f"pixel_unshuffle: spatial size {(h, w)} not divisible by {r}")
    if r == 1:
        return x
    y = T.reshape(x, (c, h // r, r, w // r, r))
    y = T.transpose(y, (0, 2, 4, 1, 3))
    return T.reshape(y, (c * r * r, h // r, w // r))


def to_seq(x) -> Tensor:
    """(C, H, W) map -> (H*W, C) sequence in row-major raster order."""
    x = as_tensor(x)
    c, h, w = x.shape
    return T.transpose(T.reshape(x, (c, h * w)), (1, 0))


def to_map(seq, h: int, w: int) -> Tensor:
    seq = as_tensor(seq)
    n, c = seq.shape
    if n != h * w:
        raise DimensionError(f"sequence length {n} != {h}x{w}")
    return T.reshape(T.transpose(seq, (1, 0)), (c, h, w))
