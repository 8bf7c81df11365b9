"""Compiled forward/adjoint kernels for the diagonal selective scan.

Shapes: u (T, M); a, b (T, M, N); c (T, N); d (M,); h0 (M, N).
Recurrence per channel m and state n:
    h[t] = a[t] * h[t-1] + b[t] * u[t]
    y[t, m] = sum_n c[t, n] * h[t, m, n] + d[m] * u[t, m]
"""

import numpy as np
from numba import njit


@njit(cache=True)
def scan_forward(u, a, b, c, d, h0):
    T, M, N = a.shape
    hs = np.empty((T, M, N))
    y = np.empty((T, M))
    h = h0.copy()
    for t in range(T):
        for m in range(M):
            acc = 0.0
            um = u[t, m]
            for n in range(N):
                hv = a[t, m, n] * h[m, n] + b[t, m, n] * um
                h[m, n] = hv
                hs[t, m, n] = hv
                acc += c[t, n] * hv
            y[t, m] = acc + d[m] * um
    return y, hs


@njit(cache=True)
def scan_backward(u, a, b, c, d, h0, hs, gy, ghs):
    """Adjoint of :func:`scan_forward`.

    ``gy`` is the cotangent of y and ``ghs`` the cotangent of every stored
    state (zeros when only y is consumed).
    """
    T, M, N = a.shape
    gu = np.zeros((T, M))
    ga = np.zeros((T, M, N))
    gb = np.zeros((T, M, N))
    gc = np.zeros((T, N))
    gd = np.zeros(M)
    carry = np.zeros((M, N))
    for t in range(T - 1, -1, -1):
        for m in range(M):
            gym = gy[t, m]
            um = u[t, m]
            gd[m] += gym * um
            gum = gym * d[m]
            for n in range(N):
                gh = carry[m, n] + gym * c[t, n] + ghs[t, m, n]
                gc[t, n] += gym * hs[t, m, n]
                hprev = hs[t - 1, m, n] if t > 0 else h0[m, n]
                ga[t, m, n] = gh * hprev
                gb[t, m, n] = gh * um
                gum += gh * b[t, m, n]
                carry[m, n] = gh * a[t, m, n]
            gu[t, m] = gum
    return gu, ga, gb, gc, gd, carry
