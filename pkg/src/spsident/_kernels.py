"""Compiled inner loops for the sign-perturbed statistics.

For every sign row i (row 0 is the implicit all-plus row standing in for the
unperturbed data) these kernels run the perturbed-output recursion and
accumulate, in a single pass,

* the averaged cross sum  (1/n) sum_t w_{i,t} phibar_{i,t}  with
  w_{i,t} = signs_{i,t} * nhat_t, and
* the averaged outer-product (gram) matrix (1/n) sum_t
  phibar_{i,t} phibar_{i,t}^T,

where phibar stacks the negated lagged perturbed outputs and the original
input lags. The input-input gram block is shared by all rows and is passed
in precomputed.

Rows are independent, so the parallel loop is bitwise deterministic: equal
sign rows always produce equal outputs, which the tie-breaking logic of the
rank computation relies on.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = ["sums_and_grams", "sums_and_grams_11"]


@njit(cache=True, parallel=True)
def sums_and_grams(a, exog, exog_gram, y_init_old_first, nhat, drive, signs):
    """General-order kernel.

    a: (n_a,) autoregressive coefficients.
    exog: (n, n_b) input lag columns (column k-1 holds U_{t-k}).
    exog_gram: (n_b, n_b) un-normalized input gram, sum_t exog_t exog_t^T.
    y_init_old_first: (n_a,) past outputs ordered oldest first.
    nhat, drive: (n,) residuals and input contribution at the evaluation
    point.
    signs: (m, n) int8 sign matrix including the leading all-plus row.

    Returns (s_num (m, d), grams (m, d, d)), both already divided by n.
    """
    m, n = signs.shape
    n_a = a.shape[0]
    n_b = exog.shape[1]
    d = n_a + n_b
    s_num = np.zeros((m, d))
    grams = np.zeros((m, d, d))
    for i in prange(m):
        ybuf = np.empty(n_a + n)
        for k in range(n_a):
            ybuf[k] = y_init_old_first[k]
        sn = np.zeros(d)
        gr = np.zeros((d, d))
        for t in range(n):
            w = signs[i, t] * nhat[t]
            acc = drive[t] + w
            for k in range(n_a):
                acc -= a[k] * ybuf[n_a + t - 1 - k]
            ybuf[n_a + t] = acc
            for k in range(n_a):
                pk = -ybuf[n_a + t - 1 - k]
                sn[k] += w * pk
                for l in range(k, n_a):
                    gr[k, l] += pk * (-ybuf[n_a + t - 1 - l])
                for l in range(n_b):
                    gr[k, n_a + l] += pk * exog[t, l]
            for l in range(n_b):
                sn[n_a + l] += w * exog[t, l]
        for k in range(n_a):
            for l in range(k, n_a):
                gr[l, k] = gr[k, l]
            for l in range(n_b):
                gr[n_a + l, k] = gr[k, n_a + l]
        for k in range(n_b):
            for l in range(n_b):
                gr[n_a + k, n_a + l] = exog_gram[k, l]
        for k in range(d):
            for l in range(d):
                grams[i, k, l] = gr[k, l] / n
        for k in range(d):
            s_num[i, k] = sn[k] / n
    return s_num, grams


@njit(cache=True, parallel=True)
def sums_and_grams_11(a1, ulag, ulag_sq_sum, y0, nhat, drive, signs):
    """First-order special case (n_a = n_b = 1), the common 2-d model."""
    m, n = signs.shape
    s_num = np.zeros((m, 2))
    grams = np.zeros((m, 2, 2))
    for i in prange(m):
        yprev = y0
        s0 = 0.0
        s1 = 0.0
        g00 = 0.0
        g01 = 0.0
        for t in range(n):
            w = signs[i, t] * nhat[t]
            pk = -yprev
            ut = ulag[t]
            s0 += w * pk
            s1 += w * ut
            g00 += pk * pk
            g01 += pk * ut
            yprev = drive[t] + w - a1 * yprev
        s_num[i, 0] = s0 / n
        s_num[i, 1] = s1 / n
        grams[i, 0, 0] = g00 / n
        grams[i, 0, 1] = g01 / n
        grams[i, 1, 0] = g01 / n
        grams[i, 1, 1] = ulag_sq_sum / n
    return s_num, grams
