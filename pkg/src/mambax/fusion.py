"""Cross-control fusion: the auxiliary modality drives some of the control
variables (by default B) while the primary one drives the rest, so the two
modalities meet inside the state recurrence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .layers import LayerParams, apply_layer, layer_norm_params, linear_params, to_map, to_seq
from .ssm import (
    ScanInputs,
    SsmBlockParams,
    delta_to_channels,
    discretize_zoh,
    gen_c,
    gen_delta,
    make_ssm_params,
    nspc_layer,
    selective_scan_seq,
)
from .tensor import Tensor, as_tensor

CONTROLS = ("B", "C", "delta")

# keyed by short config name; labels follow the ablation table rows
ROLE_MAPS: dict[str, dict[str, str]] = {
    "all_primary": {"B": "primary", "C": "primary", "delta": "primary"},
    "c_aux": {"B": "primary", "C": "aux", "delta": "primary"},
    "bc_aux": {"B": "aux", "C": "aux", "delta": "primary"},
    "b_aux": {"B": "aux", "C": "primary", "delta": "primary"},
}
ROLE_LABELS = {
    "all_primary": "{B, C, Δ} ⇒ X",
    "c_aux": "{B, Δ} ⇒ X, {C} ⇒ S",
    "bc_aux": "{Δ} ⇒ X, {B, C} ⇒ S",
    "b_aux": "{C, Δ} ⇒ X, {B} ⇒ S",
}
DEFAULT_ROLE_MAP = "b_aux"


def resolve_role_map(role_map: str | dict) -> dict[str, str]:
    if isinstance(role_map, str):
        if role_map not in ROLE_MAPS:
            raise ConfigError(f"unknown role_map {role_map!r}; expected one of {sorted(ROLE_MAPS)}")
        return dict(ROLE_MAPS[role_map])
    rm = dict(role_map)
    if set(rm) != set(CONTROLS) or any(v not in ("primary", "aux") for v in rm.values()):
        raise ConfigError(f"role_map must assign each of {CONTROLS} to 'primary' or 'aux', got {rm}")
    return rm


@dataclass
class GateParams:
    ln: LayerParams
    proj_x: LayerParams
    proj_out: LayerParams


@dataclass
class FusionBlockParams:
    ssm: SsmBlockParams
    ln_in: LayerParams
    gate: GateParams
    role_map: dict[str, str] = field(default_factory=lambda: dict(ROLE_MAPS["all_primary"]))
    bidirectional: bool = True

    @property
    def uses_aux(self) -> bool:
        return any(v == "aux" for v in self.role_map.values())


def make_block_params(
    c_m: int,
    n_state: int,
    c_d: int,
    c_r: int,
    rng: np.random.Generator,
    role_map: str | dict = "all_primary",
    delta_mode: str = "nspc",
    c_mode: str = "nspc",
    use_spatial: bool = True,
    use_channel: bool = True,
    bidirectional: bool = True,
) -> FusionBlockParams:
    rm = resolve_role_map(role_map)
    ssm = make_ssm_params(c_m, n_state, c_d, c_r, rng, delta_mode, c_mode, use_spatial, use_channel)
    gate = GateParams(layer_norm_params(c_m), linear_params(c_m, c_m, rng), linear_params(c_m, c_m, rng))
    return FusionBlockParams(ssm, layer_norm_params(c_m), gate, rm, bidirectional)


def gen_cross_controls(p: FusionBlockParams, x_primary, s_aux=None, training: bool = False) -> ScanInputs:
    """Generate (delta, B, C) from their assigned modality and discretize.

    Both inputs are (c_m, H, W) maps; the scanned sequence is x_primary.
    """
    x_primary = as_tensor(x_primary)
    sources = {"primary": x_primary}
    if s_aux is not None:
        s_aux = as_tensor(s_aux)
        if s_aux.shape != x_primary.shape:
            raise DimensionError(f"auxiliary map {s_aux.shape} not aligned with primary {x_primary.shape}")
        sources["aux"] = s_aux
    for ctrl, role in p.role_map.items():
        if role not in sources:
            raise DimensionError(f"role_map routes {ctrl} to the auxiliary modality but no auxiliary input was given")
    ssm = p.ssm
    src_d, src_b, src_c = (sources[p.role_map[k]] for k in ("delta", "B", "C"))
    delta = delta_to_channels(gen_delta(ssm.delta_gen, src_d, ssm.delta_mode, training), ssm.channels)
    B = apply_layer(ssm.B_proj, to_seq(src_b))
    C = gen_c(ssm.c_gen, src_c, ssm.c_mode, training)
    A_bar, B_bar = discretize_zoh(ssm.A, B, delta)
    h0 = Tensor._wrap(np.zeros(ssm.A.shape))
    return ScanInputs(to_seq(x_primary), delta, A_bar, B_bar, C, h0)


def flip_inputs(inputs: ScanInputs) -> ScanInputs:
    f = lambda t: T.flip(t, 0)  # noqa: E731
    return ScanInputs(f(inputs.u), f(inputs.delta), f(inputs.A_bar), f(inputs.B_bar), f(inputs.C_seq), inputs.h0)


def cross_control_scan(inputs: ScanInputs, D) -> tuple[Tensor, Tensor]:
    """Joint update [h_k; y_k] = [[A, B], [C A, C B + D]] [h_{k-1}; x_k].

    Evaluated literally with one (N+1)x(N+1) block matrix per channel and
    step. Reference path, not differentiable.
    """
    inputs.validate()
    u, a, b, c = inputs.u.data, inputs.A_bar.data, inputs.B_bar.data, inputs.C_seq.data
    d = as_tensor(D).data
    Tn, M, N = a.shape
    hs = np.zeros((Tn, M, N))
    ys = np.zeros((Tn, M))
    h = inputs.h0.data.copy()
    blk = np.zeros((M, N + 1, N + 1))
    idx = np.arange(N)
    for k in range(Tn):
        blk[:] = 0.0
        blk[:, idx, idx] = a[k]
        blk[:, :N, N] = b[k]
        blk[:, N, :N] = c[k][None, :] * a[k]
        blk[:, N, N] = b[k] @ c[k] + d
        vec = np.concatenate([h, u[k][:, None]], axis=1)  # (M, N+1)
        out = np.einsum("mij,mj->mi", blk, vec)
        h = out[:, :N]
        hs[k] = h
        ys[k] = out[:, N]
    return Tensor(hs), Tensor(ys)


def spectral_gate(gate: GateParams, y, x_orig) -> Tensor:
    """Linear(LN(y) * SiLU(Linear(x_orig))) on (T, c) sequences."""
    y, x_orig = as_tensor(y), as_tensor(x_orig)
    if y.shape[0] != x_orig.shape[0]:
        raise DimensionError(f"spectral_gate: sequence lengths differ ({y.shape[0]} vs {x_orig.shape[0]})")
    g = T.silu(apply_layer(gate.proj_x, x_orig))
    return apply_layer(gate.proj_out, apply_layer(gate.ln, y) * g)


def _scan_y(inputs: ScanInputs, D, bidirectional: bool) -> Tensor:
    y, _ = selective_scan_seq(inputs, D)
    if bidirectional:
        yb, _ = selective_scan_seq(flip_inputs(inputs), D)
        y = (y + T.flip(yb, 0)) * 0.5
    return y


def block_forward(p: FusionBlockParams, x_map, aux_map=None, training: bool = False) -> Tensor:
    """Residual state block: LN -> cross-controlled scan -> spectral gate."""
    x_map = as_tensor(x_map)
    _, h, w = x_map.shape
    xs = to_seq(x_map)
    um = to_map(apply_layer(p.ln_in, xs), h, w)
    y = _scan_y(gen_cross_controls(p, um, aux_map, training), p.ssm.D, p.bidirectional)
    return to_map(xs + spectral_gate(p.gate, y, xs), h, w)


def unimodal_block_forward(p: FusionBlockParams, x_map, training: bool = False) -> Tensor:
    """Same block with every control generated from x (ignores role_map)."""
    x_map = as_tensor(x_map)
    _, h, w = x_map.shape
    xs = to_seq(x_map)
    um = to_map(apply_layer(p.ln_in, xs), h, w)
    y = nspc_layer(p.ssm, um, training, p.bidirectional)
    return to_map(xs + spectral_gate(p.gate, y, xs), h, w)
