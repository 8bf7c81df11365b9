"""Random instance builders shared by the test modules."""

import numpy as np

from mambax.ssm import ScanInputs, discretize_zoh, init_A
from mambax.tensor import Tensor


def random_scan_inputs(rng, Tn, M, N, grad=False, h0_zero=False):
    A = init_A(M, N)
    delta = Tensor(rng.uniform(0.01, 2.0, (Tn, M)), requires_grad=grad)
    B = Tensor(rng.uniform(-1, 1, (Tn, N)), requires_grad=grad)
    A_bar, B_bar = discretize_zoh(A, B, delta)
    C = Tensor(rng.uniform(-1, 1, (Tn, N)), requires_grad=grad)
    u = Tensor(rng.uniform(-1, 1, (Tn, M)), requires_grad=grad)
    h0 = Tensor(np.zeros((M, N)) if h0_zero else rng.uniform(-1, 1, (M, N)), requires_grad=grad)
    D = Tensor(rng.uniform(-1, 1, M), requires_grad=grad)
    return ScanInputs(u, delta, A_bar, B_bar, C, h0), D, (A, B)
