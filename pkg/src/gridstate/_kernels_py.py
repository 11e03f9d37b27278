"""Pure numpy implementation of the polar measurement kernel.

Same signature and output layout as the compiled ``_kernels.polar_model``.
Rows are handled per measurement type with vectorised array expressions.
"""
from __future__ import annotations

import numpy as np


def _inj_dense(indptr, indices, gdat, bdat, n):
    G = np.zeros((n, n))
    B = np.zeros((n, n))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    G[rows, indices] = gdat
    B[rows, indices] = bdat
    return G, B


def polar_model(code, kbus, mbus, g, b, gs, bs, indptr, indices, ydata_g, ydata_b, vm, va, h, H, want_jac=True):
    code = np.asarray(code)
    kbus = np.asarray(kbus)
    mbus = np.asarray(mbus)
    g = np.asarray(g)
    b = np.asarray(b)
    gs = np.asarray(gs)
    bs = np.asarray(bs)
    vm = np.asarray(vm)
    va = np.asarray(va)
    n = vm.size
    if want_jac:
        H[:, :] = 0.0
    known = np.isin(code, np.arange(10))
    if not known.all():
        raise ValueError(f"unknown measurement code {code[~known][0]}")

    inj = np.flatnonzero((code == 0) | (code == 1))
    if inj.size:
        G, B = _inj_dense(np.asarray(indptr), np.asarray(indices), np.asarray(ydata_g), np.asarray(ydata_b), n)
        k = kbus[inj]
        dt = va[k, None] - va[None, :]
        c, s = np.cos(dt), np.sin(dt)
        Gk, Bk = G[k], B[k]
        t1 = Gk * c + Bk * s
        t2 = Gk * s - Bk * c
        vk = vm[k]
        is_p = code[inj] == 0
        tv = np.where(is_p[:, None], t1, t2)  # terms summed into the injection
        ta = np.where(is_p[:, None], t2, -t1)  # d(term)/d(angle_j)
        acc = tv @ vm
        h[inj] = vk * acc
        if want_jac:
            rr = np.arange(inj.size)
            dth = vk[:, None] * vm[None, :] * ta
            dth[rr, k] = 0.0
            dth[rr, k] = -dth.sum(axis=1)
            dv = vk[:, None] * tv
            diag = np.where(is_p, Gk[rr, k], -Bk[rr, k])
            dv[rr, k] = acc + vk * diag
            H[inj, :n] = dth
            H[inj, n:] = dv

    for cd in (2, 3, 6, 7):
        rows = np.flatnonzero(code == cd)
        if not rows.size:
            continue
        k, m = kbus[rows], mbus[rows]
        vk, vmm = vm[k], vm[m]
        tk, tm = va[k], va[m]
        gg, bb = g[rows], b[rows]
        gk, bk = gg + gs[rows], bb + bs[rows]
        if cd in (2, 3):
            c, s = np.cos(tk - tm), np.sin(tk - tm)
            t1 = gg * c + bb * s
            t2 = gg * s - bb * c
            if cd == 2:
                h[rows] = vk * vk * gk - vk * vmm * t1
                cols = (vk * vmm * t2, -vk * vmm * t2, 2.0 * vk * gk - vmm * t1, -vk * t1)
            else:
                h[rows] = -vk * vk * bk - vk * vmm * t2
                cols = (-vk * vmm * t1, vk * vmm * t1, -2.0 * vk * bk - vmm * t2, -vk * t2)
        else:
            ck, sk, cm, sm = np.cos(tk), np.sin(tk), np.cos(tm), np.sin(tm)
            if cd == 6:
                h[rows] = gk * vk * ck - bk * vk * sk - gg * vmm * cm + bb * vmm * sm
                cols = (-gk * vk * sk - bk * vk * ck, gg * vmm * sm + bb * vmm * cm, gk * ck - bk * sk, -gg * cm + bb * sm)
            else:
                h[rows] = bk * vk * ck + gk * vk * sk - bb * vmm * cm - gg * vmm * sm
                cols = (-bk * vk * sk + gk * vk * ck, bb * vmm * sm - gg * vmm * cm, bk * ck + gk * sk, -bb * cm - gg * sm)
        if want_jac:
            H[rows, k] = cols[0]
            H[rows, m] = cols[1]
            H[rows, n + k] = cols[2]
            H[rows, n + m] = cols[3]

    rows = np.flatnonzero(code == 4)
    h[rows] = vm[kbus[rows]]
    if want_jac:
        H[rows, n + kbus[rows]] = 1.0
    rows = np.flatnonzero(code == 5)
    h[rows] = va[kbus[rows]]
    if want_jac:
        H[rows, kbus[rows]] = 1.0
    for cd, fn, dfn in ((8, np.cos, lambda t: -np.sin(t)), (9, np.sin, np.cos)):
        rows = np.flatnonzero(code == cd)
        if not rows.size:
            continue
        k = kbus[rows]
        h[rows] = vm[k] * fn(va[k])
        if want_jac:
            H[rows, k] = vm[k] * dfn(va[k])
            H[rows, n + k] = fn(va[k])
