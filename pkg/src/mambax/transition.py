"""Progressive cross-domain transition from the LR image into the state
feature space: per x2 stage, three conv+pixel-shuffle bases with different
receptive fields fused by softmax-normalized learned weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .bicubic import bicubic_upsample
from .errors import ConfigError, DimensionError
from .layers import LayerParams, apply_layer, conv2d_params, pixel_shuffle
from .tensor import Tensor, as_tensor

TRANSITION_MODES = ("adaptive", "adaptive_no_weights", "pixelshuffle", "bicubic")
SUPPORTED_SCALES = (2, 4, 8)
BASIS_KERNELS = (1, 3, 5)


@dataclass
class TransitionParams:
    mode: str
    bases: list[tuple[LayerParams, ...]]  # one tuple per x2 layer
    weights: Tensor | None  # (depth, 3) adaptive weights
    embed: LayerParams | None  # bicubic mode / scale 1
    r: int = 2

    def __post_init__(self):
        if self.mode not in TRANSITION_MODES:
            raise ConfigError(f"unknown transition mode {self.mode!r}; expected one of {TRANSITION_MODES}")

    @property
    def depth(self) -> int:
        return len(self.bases)


def _depth_for(scale: int) -> int:
    if scale == 1:
        return 0
    if scale not in SUPPORTED_SCALES:
        raise ConfigError(f"unsupported scale {scale}; expected one of {SUPPORTED_SCALES}")
    return int(np.log2(scale))


def make_transition(mode: str, in_ch: int, out_ch: int, scale: int, rng: np.random.Generator) -> TransitionParams:
    if mode not in TRANSITION_MODES:
        raise ConfigError(f"unknown transition mode {mode!r}; expected one of {TRANSITION_MODES}")
    depth = _depth_for(scale)
    if mode == "bicubic" or depth == 0:
        return TransitionParams(mode, [], None, conv2d_params(in_ch, out_ch, 3, rng))
    kernels = (3,) if mode == "pixelshuffle" else BASIS_KERNELS
    bases = []
    for layer in range(depth):
        cin = in_ch if layer == 0 else out_ch
        bases.append(tuple(conv2d_params(cin, out_ch * 4, k, rng) for k in kernels))
    weights = None
    if mode == "adaptive":
        weights = Tensor(np.zeros((depth, 3)), requires_grad=True)
    return TransitionParams(mode, bases, weights, None)


def basis_expand(p: TransitionParams, layer: int, x) -> list[Tensor]:
    x = as_tensor(x)
    out = []
    for conv in p.bases[layer]:
        y = apply_layer(conv, x)
        if y.shape[0] % (p.r * p.r):
            raise DimensionError(f"basis conv emits {y.shape[0]} channels, not divisible by r^2={p.r * p.r}")
        out.append(pixel_shuffle(y, p.r))
    shapes = {b.shape for b in out}
    if len(shapes) != 1:
        raise DimensionError(f"bases disagree in shape: {sorted(shapes)}")
    return out


def adaptive_fuse(weights, bases) -> Tensor:
    """sum_i softmax(weights)_i * bases[i]."""
    weights = as_tensor(weights)
    if len(bases) != weights.shape[0]:
        raise DimensionError(f"{len(bases)} bases but {weights.shape[0]} weights")
    shapes = {as_tensor(b).shape for b in bases}
    if len(shapes) != 1:
        raise DimensionError(f"bases disagree in shape: {sorted(shapes)}")
    w = T.softmax(weights, axis=0)
    out = w[0] * bases[0]
    for i in range(1, len(bases)):
        out = out + w[i] * bases[i]
    return out


_UNIFORM = Tensor(np.zeros(3))


def progressive_transition(p: TransitionParams, x_lr, scale: int) -> Tensor:
    """Map a (C, h, w) LR image to a (c_m, h*scale, w*scale) feature map."""
    x = as_tensor(x_lr)
    depth = _depth_for(scale)
    if p.mode == "bicubic" or depth == 0:
        if p.embed is None:
            raise ConfigError("transition built without an embedding conv for this mode/scale")
        up = bicubic_upsample(x.data, scale) if depth else x.data
        return apply_layer(p.embed, Tensor._wrap(up) if depth else x)
    if depth != p.depth:
        raise ConfigError(f"transition has {p.depth} layers but scale {scale} needs {depth}")
    for layer in range(depth):
        bases = basis_expand(p, layer, x)
        if p.mode == "pixelshuffle":
            x = bases[0]
        elif p.mode == "adaptive":
            x = adaptive_fuse(p.weights[layer], bases)
        else:
            x = adaptive_fuse(_UNIFORM, bases)
    return x
