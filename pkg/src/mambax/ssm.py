"""Selective state-space core: ZOH discretization, sequential and unrolled
scans, and the linear / nonlinear generators for the step size and C."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, DomainError
from .layers import (
    LayerParams,
    apply_layer,
    batch_norm_params,
    conv2d_params,
    linear_params,
    to_map,
    to_seq,
)
from .scan_kernels import scan_backward, scan_forward
from .tensor import Tensor, _result, as_tensor

MATRIX_MODES = ("linear", "nspc")


def init_A(channels: int, n_state: int) -> np.ndarray:
    """Diagonal real state matrix with A[c, k] = -(k + 1)."""
    return -np.tile(np.arange(1, n_state + 1, dtype=np.float64), (channels, 1))


@dataclass
class ScanInputs:
    u: Tensor  # (T, M)
    delta: Tensor  # (T, M)
    A_bar: Tensor  # (T, M, N)
    B_bar: Tensor  # (T, M, N)
    C_seq: Tensor  # (T, N)
    h0: Tensor  # (M, N)

    def validate(self) -> None:
        Tn, M = self.u.shape
        if Tn < 1:
            raise DimensionError("scan needs at least one timestep")
        N = self.C_seq.shape[-1]
        expected = {
            "delta": (self.delta.shape, (Tn, M)),
            "A_bar": (self.A_bar.shape, (Tn, M, N)),
            "B_bar": (self.B_bar.shape, (Tn, M, N)),
            "C_seq": (self.C_seq.shape, (Tn, N)),
            "h0": (self.h0.shape, (M, N)),
        }
        for name, (got, want) in expected.items():
            if got != want:
                raise DimensionError(f"scan input {name} has shape {got}, expected {want}")
        if (self.delta.data <= 0).any():
            raise DomainError("scan step sizes must be strictly positive")
        if (self.A_bar.data < 0).any() or (self.A_bar.data > 1).any():
            raise DomainError("discretized state transition must lie in [0, 1]")


# -- discretization -------------------------------------------------------------
def discretize_zoh(A, B, delta) -> tuple[Tensor, Tensor]:
    """Zero-order hold for a diagonal A.

    A: (M, N) fixed; B: (T, N); delta: (T, M) > 0.  Returns A_bar, B_bar of
    shape (T, M, N) with A_bar = exp(delta*A) and B_bar = expm1(delta*A)/A * B
    (delta * B where A == 0).
    """
    A = np.asarray(A.data if isinstance(A, Tensor) else A, dtype=np.float64)
    B, delta = as_tensor(B), as_tensor(delta)
    if delta.ndim != 2 or B.ndim != 2 or A.ndim != 2:
        raise DimensionError(f"zoh expects A (M,N), B (T,N), delta (T,M); got {A.shape}, {B.shape}, {delta.shape}")
    if delta.shape[1] != A.shape[0] or B.shape[1] != A.shape[1] or B.shape[0] != delta.shape[0]:
        raise DimensionError(f"zoh shape mismatch: A {A.shape}, B {B.shape}, delta {delta.shape}")
    if (delta.data <= 0).any():
        raise DomainError("zoh step size delta must be > 0")
    dA = delta.data[:, :, None] * A[None]
    E = np.exp(dA)
    zero = A == 0
    safe_A = np.where(zero, 1.0, A)
    phi = np.where(zero[None], delta.data[:, :, None], np.expm1(dA) / safe_A[None])
    Bn = B.data[:, None, :]

    def bw_a(g):
        return ((g * A[None] * E).sum(axis=2),)

    def bw_b(g):
        gd = (g * E * Bn).sum(axis=2) if delta.requires_grad else None
        gb = (g * phi).sum(axis=1) if B.requires_grad else None
        return gd, gb

    A_bar = _result(E, (delta,), bw_a, "zoh_a")
    B_bar = _result(phi * Bn, (delta, B), bw_b, "zoh_b")
    return A_bar, B_bar


# -- scans --------------------------------------------------------------------
def selective_scan_states(inputs: ScanInputs, D) -> tuple[Tensor, Tensor]:
    """Left-to-right recurrence returning (y (T, M), all states (T, M, N))."""
    inputs.validate()
    D = as_tensor(D)
    u, a, b, c, h0 = inputs.u, inputs.A_bar, inputs.B_bar, inputs.C_seq, inputs.h0
    if D.shape != (u.shape[1],):
        raise DimensionError(f"skip vector D has shape {D.shape}, expected ({u.shape[1]},)")
    Tn, M, N = a.shape
    y, hs = scan_forward(u.data, a.data, b.data, c.data, D.data, h0.data)
    ny = Tn * M

    def bw(g):
        gy = g[:ny].reshape(Tn, M)
        ghs = g[ny:].reshape(Tn, M, N)
        gu, ga, gb, gc, gd, gh0 = scan_backward(u.data, a.data, b.data, c.data, D.data, h0.data, hs, gy, ghs)
        return gu, ga, gb, gc, gd, gh0

    flat = _result(np.concatenate([y.reshape(-1), hs.reshape(-1)]), (u, a, b, c, D, h0), bw, "selective_scan")
    return T.reshape(flat[:ny], (Tn, M)), T.reshape(flat[ny:], (Tn, M, N))


def selective_scan_seq(inputs: ScanInputs, D) -> tuple[Tensor, Tensor]:
    """Exact sequential scan; returns the output sequence and the final state."""
    y, hs = selective_scan_states(inputs, D)
    return y, hs[-1]


def composite_A(A_bar: np.ndarray, j: int, i: int) -> np.ndarray:
    """Product A_bar_i ... A_bar_j (1-based, inclusive); ones when j > i."""
    if j > i:
        return np.ones(A_bar.shape[1:])
    return np.prod(A_bar[j - 1 : i], axis=0)


def selective_scan_unrolled(inputs: ScanInputs, D) -> Tensor:
    """O(T^2) reference: y_i = C_i A_{1:i} h0 + sum_j D_j u_j with explicit
    composite operators. Not differentiable; meant for short sequences."""
    inputs.validate()
    u = inputs.u.data
    a, b, c, h0 = inputs.A_bar.data, inputs.B_bar.data, inputs.C_seq.data, inputs.h0.data
    d = as_tensor(D).data
    Tn, M = u.shape
    y = np.zeros((Tn, M))
    for i in range(1, Tn + 1):
        Ci = c[i - 1]
        # C_i A_{1:i} h0
        acc = (composite_A(a, 1, i) * h0) @ Ci
        for j in range(1, i + 1):
            if j < i:
                Dj = (composite_A(a, j + 1, i) * b[j - 1]) @ Ci
            else:
                Dj = b[i - 1] @ Ci + d
            acc = acc + Dj * u[j - 1]
        y[i - 1] = acc
    return Tensor(y)


# -- control generators --------------------------------------------------------
@dataclass
class DscGeneratorParams:
    """Parameters of one control generator (target 'delta' or 'c').

    Both the nonlinear stack and the single-linear baseline are held so the
    mode can be switched per call.
    """

    target: str
    proj_in: LayerParams
    dw5: LayerParams
    dw7: LayerParams
    bn: LayerParams
    fc1: LayerParams
    fc2: LayerParams
    fc3: LayerParams
    head: tuple[LayerParams, ...]  # (squeeze, expand) for delta, (proj_out,) for c
    linear: LayerParams
    use_spatial: bool = True
    use_channel: bool = True

    def layers(self) -> dict[str, LayerParams]:
        out = {
            "proj_in": self.proj_in,
            "dw5": self.dw5,
            "dw7": self.dw7,
            "bn": self.bn,
            "fc1": self.fc1,
            "fc2": self.fc2,
            "fc3": self.fc3,
        }
        for i, h in enumerate(self.head):
            out[f"head{i}"] = h
        out["linear"] = self.linear
        return out


def make_dsc_generator(
    target: str,
    c_m: int,
    c_d: int,
    rng: np.random.Generator,
    c_r: int | None = None,
    n_state: int | None = None,
    use_spatial: bool = True,
    use_channel: bool = True,
) -> DscGeneratorParams:
    if target == "delta":
        if c_r is None or c_d < 4 * c_r:
            raise ConfigError(f"delta generator needs c_d >= 4*c_r (got c_d={c_d}, c_r={c_r})")
    elif target == "c":
        if n_state is None:
            raise ConfigError("C generator needs n_state")
    else:
        raise ConfigError(f"unknown generator target {target!r}")
    proj_in = linear_params(c_m, c_d, rng)
    dw5 = conv2d_params(c_d, c_d, 5, rng, groups=c_d)
    dw7 = conv2d_params(c_d, c_d, 7, rng, groups=c_d)
    bn = batch_norm_params(c_d)
    fc1, fc2, fc3 = (linear_params(c_d, c_d, rng) for _ in range(3))
    if target == "delta":
        head = (linear_params(c_d, c_r, rng), linear_params(c_r, c_d, rng))
        lin = linear_params(c_m, c_d, rng)
    else:
        head = (linear_params(c_d, n_state, rng),)
        lin = linear_params(c_m, n_state, rng)
    return DscGeneratorParams(target, proj_in, dw5, dw7, bn, fc1, fc2, fc3, head, lin, use_spatial, use_channel)


def _dsc_trunk(g: DscGeneratorParams, x_map: Tensor, training: bool) -> Tensor:
    """proj_in -> spatial operator -> gated channel cascade, as a (T, c_d) sequence."""
    _, h, w = x_map.shape
    z = apply_layer(g.proj_in, to_seq(x_map))
    s = z
    if g.use_spatial:
        zm = to_map(z, h, w)
        sm = apply_layer(g.bn, apply_layer(g.dw7, apply_layer(g.dw5, zm)), training)
        s = to_seq(sm)
    if not g.use_channel:
        return s
    f1 = apply_layer(g.fc1, s)
    f2 = apply_layer(g.fc2, f1 * T.sigmoid(s))
    return apply_layer(g.fc3, f2) + z


def _check_mode(mode: str) -> None:
    if mode not in MATRIX_MODES:
        raise ConfigError(f"unknown matrix mode {mode!r}; expected one of {MATRIX_MODES}")


def gen_delta(g: DscGeneratorParams, x_map, mode: str = "nspc", training: bool = False) -> Tensor:
    """Positive step sizes, one c_d-wide row per raster position."""
    _check_mode(mode)
    x_map = as_tensor(x_map)
    if mode == "linear":
        return T.softplus(apply_layer(g.linear, to_seq(x_map)))
    squeeze, expand = g.head
    v = apply_layer(expand, apply_layer(squeeze, _dsc_trunk(g, x_map, training)))
    return T.softplus(T.silu(v))


def gen_c(g: DscGeneratorParams, x_map, mode: str = "nspc", training: bool = False) -> Tensor:
    """Output matrix rows (T, n_state)."""
    _check_mode(mode)
    x_map = as_tensor(x_map)
    if mode == "linear":
        return apply_layer(g.linear, to_seq(x_map))
    return T.silu(apply_layer(g.head[0], _dsc_trunk(g, x_map, training)))


def delta_to_channels(delta_cd: Tensor, c_m: int) -> Tensor:
    """Average consecutive groups of the c_d-wide step sizes down to c_m channels."""
    n, c_d = delta_cd.shape
    if c_d % c_m:
        raise ConfigError(f"c_d={c_d} must be a multiple of c_m={c_m}")
    if c_d == c_m:
        return delta_cd
    return T.reshape(delta_cd, (n, c_m, c_d // c_m)).mean(axis=2)


# -- one selective-scan layer ---------------------------------------------------------
@dataclass
class SsmBlockParams:
    A: np.ndarray  # (c_m, n_state), fixed
    B_proj: LayerParams
    D: Tensor
    delta_gen: DscGeneratorParams
    c_gen: DscGeneratorParams
    delta_mode: str = "nspc"
    c_mode: str = "nspc"

    def __post_init__(self):
        if (self.A >= 0).any():
            raise DomainError("state matrix A must be strictly negative")
        _check_mode(self.delta_mode)
        _check_mode(self.c_mode)

    @property
    def channels(self) -> int:
        return self.A.shape[0]

    @property
    def n_state(self) -> int:
        return self.A.shape[1]


def make_ssm_params(
    c_m: int,
    n_state: int,
    c_d: int,
    c_r: int,
    rng: np.random.Generator,
    delta_mode: str = "nspc",
    c_mode: str = "nspc",
    use_spatial: bool = True,
    use_channel: bool = True,
) -> SsmBlockParams:
    if c_d % c_m:
        raise ConfigError(f"c_d={c_d} must be a multiple of c_m={c_m}")
    B_proj = linear_params(c_m, n_state, rng)
    dgen = make_dsc_generator("delta", c_m, c_d, rng, c_r=c_r, use_spatial=use_spatial, use_channel=use_channel)
    cgen = make_dsc_generator("c", c_m, c_d, rng, n_state=n_state, use_spatial=use_spatial, use_channel=use_channel)
    D = Tensor(np.ones(c_m), requires_grad=True)
    return SsmBlockParams(init_A(c_m, n_state), B_proj, D, dgen, cgen, delta_mode, c_mode)


def scan_direction(p: SsmBlockParams, u: Tensor, delta: Tensor, B: Tensor, C: Tensor, reverse: bool) -> Tensor:
    """Discretize and scan one direction; the reverse pass runs on flipped sequences."""
    if reverse:
        u, delta, B, C = (T.flip(t, 0) for t in (u, delta, B, C))
    A_bar, B_bar = discretize_zoh(p.A, B, delta)
    h0 = Tensor._wrap(np.zeros(p.A.shape))
    y, _ = selective_scan_seq(ScanInputs(u, delta, A_bar, B_bar, C, h0), p.D)
    return T.flip(y, 0) if reverse else y


def nspc_layer(p: SsmBlockParams, x_map, training: bool = False, bidirectional: bool = False) -> Tensor:
    """Bare selective-scan layer on a (c_m, H, W) map; all controls come from x.

    Returns the (H*W, c_m) output sequence.
    """
    x_map = as_tensor(x_map)
    if x_map.ndim != 3 or x_map.shape[0] != p.channels:
        raise DimensionError(f"nspc_layer expects ({p.channels}, H, W), got {x_map.shape}")
    u = to_seq(x_map)
    delta = delta_to_channels(gen_delta(p.delta_gen, x_map, p.delta_mode, training), p.channels)
    B = apply_layer(p.B_proj, u)
    C = gen_c(p.c_gen, x_map, p.c_mode, training)
    y = scan_direction(p, u, delta, B, C, reverse=False)
    if bidirectional:
        y = (y + scan_direction(p, u, delta, B, C, reverse=True)) * 0.5
    return y
