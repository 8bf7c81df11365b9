"""MambaX assembly: transition -> stacked state blocks -> output projection,
with a global residual to the bicubic upsampling of the LR input."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..bicubic import bicubic_upsample
from ..config import ExperimentConfig
from ..errors import ContractError
from ..fusion import FusionBlockParams, block_forward, make_block_params
from ..layers import LayerParams, apply_layer, conv2d_params
from ..ssm import DscGeneratorParams
from ..tensor import Tensor
from ..transition import make_transition, progressive_transition
from .data import ImagePair


def _generator_layers(prefix: str, g: DscGeneratorParams) -> list[tuple[str, LayerParams]]:
    return [(f"{prefix}.{k}", lp) for k, lp in g.layers().items()]


class MambaX:
    """SISR / MFSR network; parameters are float64 Tensors with stable names."""

    def __init__(self, config: ExperimentConfig, bands: int | None = None, seed: int | None = None):
        self.config = config
        self.bands = bands if bands is not None else config.data.bands
        self.scale = config.scale
        self.task = config.task
        m = config.model
        init_seed = config.seed if seed is None else seed
        rng = np.random.default_rng(np.random.SeedSequence(init_seed).spawn(1)[0])
        self.transition = make_transition(m.transition_mode, self.bands, m.c_m, self.scale, rng)
        self.aux_embed = conv2d_params(1, m.c_m, 3, rng) if self.task == "mfsr" else None
        role_map = m.role_map if self.task == "mfsr" else "all_primary"
        self.blocks: list[FusionBlockParams] = [
            make_block_params(
                m.c_m,
                m.n_state,
                m.c_d,
                m.c_r,
                rng,
                role_map=role_map,
                delta_mode=m.delta_mode,
                c_mode=m.c_mode,
                use_spatial=m.use_spatial,
                use_channel=m.use_channel,
                bidirectional=m.bidirectional,
            )
            for _ in range(m.blocks)
        ]
        self.out_proj = conv2d_params(m.c_m, self.bands, 3, rng)
        # start near the bicubic baseline
        self.out_proj.weight.data *= 0.1
        self.out_proj.bias.data[:] = 0.0

    # -- parameter registry ---------------------------------------------------------
    def named_layers(self) -> list[tuple[str, LayerParams]]:
        out: list[tuple[str, LayerParams]] = []
        t = self.transition
        for li, bases in enumerate(t.bases):
            out += [(f"transition.l{li}.basis{bi}", b) for bi, b in enumerate(bases)]
        if t.embed is not None:
            out.append(("transition.embed", t.embed))
        if self.aux_embed is not None:
            out.append(("aux_embed", self.aux_embed))
        for i, blk in enumerate(self.blocks):
            p = f"blocks.{i}"
            out.append((f"{p}.ln_in", blk.ln_in))
            out.append((f"{p}.b_proj", blk.ssm.B_proj))
            out += _generator_layers(f"{p}.delta_gen", blk.ssm.delta_gen)
            out += _generator_layers(f"{p}.c_gen", blk.ssm.c_gen)
            out += [(f"{p}.gate.ln", blk.gate.ln), (f"{p}.gate.proj_x", blk.gate.proj_x)]
            out.append((f"{p}.gate.proj_out", blk.gate.proj_out))
        out.append(("out_proj", self.out_proj))
        return out

    def named_parameters(self) -> OrderedDict[str, Tensor]:
        params: OrderedDict[str, Tensor] = OrderedDict()
        for name, lp in self.named_layers():
            params[f"{name}.weight"] = lp.weight
            params[f"{name}.bias"] = lp.bias
        if self.transition.weights is not None:
            params["transition.weights"] = self.transition.weights
        for i, blk in enumerate(self.blocks):
            params[f"blocks.{i}.D"] = blk.ssm.D
        return params

    def named_buffers(self) -> OrderedDict[str, np.ndarray]:
        bufs: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, lp in self.named_layers():
            for key in sorted(lp.buffers):
                bufs[f"{name}.{key}"] = lp.buffers[key]
        return bufs

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        layers = dict(self.named_layers())
        for full, arr in buffers.items():
            name, key = full.rsplit(".", 1)
            if name not in layers or key not in layers[name].buffers:
                raise ContractError(f"unknown buffer {full!r}")
            layers[name].buffers[key] = np.array(arr, dtype=np.float64)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    # -- forward ------------------------------------------------------------------------
    def forward(self, pair: ImagePair, training: bool = False) -> Tensor:
        lr = np.asarray(pair.lr, dtype=np.float64)
        if lr.shape[0] != self.bands:
            raise ContractError(f"model expects {self.bands} bands, input has {lr.shape[0]}")
        if pair.scale != self.scale:
            raise ContractError(f"model built for scale {self.scale}, pair has scale {pair.scale}")
        aux = None
        if self.task == "mfsr":
            if pair.aux is None:
                raise ContractError("mfsr model needs the auxiliary (PAN) image")
            aux = apply_layer(self.aux_embed, Tensor._wrap(np.asarray(pair.aux, dtype=np.float64)))
        feat = progressive_transition(self.transition, Tensor._wrap(lr), self.scale)
        for blk in self.blocks:
            feat = block_forward(blk, feat, aux, training)
        base = bicubic_upsample(lr, self.scale) if self.scale > 1 else lr
        return apply_layer(self.out_proj, feat) + base

    __call__ = forward
