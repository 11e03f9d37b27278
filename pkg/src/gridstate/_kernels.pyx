# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled measurement-function and Jacobian kernel (polar coordinates).

Row codes, see ``gridstate.measurements.MeasType.code``:
0 P injection, 1 Q injection, 2 P flow, 3 Q flow, 4 |V|, 5 angle,
6 current real part, 7 current imaginary part, 8 voltage real part,
9 voltage imaginary part.

Jacobian columns are ``[angle_0 .. angle_{N-1}, vmag_0 .. vmag_{N-1}]``.
"""
from libc.math cimport cos, sin

import numpy as np
cimport numpy as cnp

cnp.import_array()


def polar_model(
    const int[::1] code,
    const Py_ssize_t[::1] kbus,
    const Py_ssize_t[::1] mbus,
    const double[::1] g,
    const double[::1] b,
    const double[::1] gs,
    const double[::1] bs,
    const Py_ssize_t[::1] indptr,
    const Py_ssize_t[::1] indices,
    const double[::1] ydata_g,
    const double[::1] ydata_b,
    const double[::1] vm,
    const double[::1] va,
    double[::1] h,
    double[:, ::1] H,
    bint want_jac=True,
):
    cdef Py_ssize_t nrow = code.shape[0]
    cdef Py_ssize_t n = vm.shape[0]
    cdef Py_ssize_t r, k, m, j, p
    cdef double vk, vj, vmm, tk, tm, c, s, gg, bb, gk, bk, t1, t2, acc, G, B
    cdef int cd

    if want_jac:
        H[:, :] = 0.0

    for r in range(nrow):
        cd = code[r]
        k = kbus[r]
        vk = vm[k]
        tk = va[k]
        if cd == 0 or cd == 1:
            acc = 0.0
            for p in range(indptr[k], indptr[k + 1]):
                j = indices[p]
                G = ydata_g[p]
                B = ydata_b[p]
                vj = vm[j]
                c = cos(tk - va[j])
                s = sin(tk - va[j])
                t1 = G * c + B * s
                t2 = G * s - B * c
                if cd == 0:
                    acc += vj * t1
                    if want_jac and j != k:
                        H[r, j] = vk * vj * t2
                        H[r, k] -= vk * vj * t2
                        H[r, n + j] = vk * t1
                    elif want_jac:
                        H[r, n + k] += vk * G
                else:
                    acc += vj * t2
                    if want_jac and j != k:
                        H[r, j] = -vk * vj * t1
                        H[r, k] += vk * vj * t1
                        H[r, n + j] = vk * t2
                    elif want_jac:
                        H[r, n + k] -= vk * B
            h[r] = vk * acc
            if want_jac:
                H[r, n + k] += acc
        elif cd == 2 or cd == 3:
            m = mbus[r]
            vmm = vm[m]
            gg = g[r]
            bb = b[r]
            gk = gg + gs[r]
            bk = bb + bs[r]
            c = cos(tk - va[m])
            s = sin(tk - va[m])
            t1 = gg * c + bb * s
            t2 = gg * s - bb * c
            if cd == 2:
                h[r] = vk * vk * gk - vk * vmm * t1
                if want_jac:
                    H[r, k] = vk * vmm * t2
                    H[r, m] = -vk * vmm * t2
                    H[r, n + k] = 2.0 * vk * gk - vmm * t1
                    H[r, n + m] = -vk * t1
            else:
                h[r] = -vk * vk * bk - vk * vmm * t2
                if want_jac:
                    H[r, k] = -vk * vmm * t1
                    H[r, m] = vk * vmm * t1
                    H[r, n + k] = -2.0 * vk * bk - vmm * t2
                    H[r, n + m] = -vk * t2
        elif cd == 4:
            h[r] = vk
            if want_jac:
                H[r, n + k] = 1.0
        elif cd == 5:
            h[r] = tk
            if want_jac:
                H[r, k] = 1.0
        elif cd == 6 or cd == 7:
            m = mbus[r]
            vmm = vm[m]
            tm = va[m]
            gg = g[r]
            bb = b[r]
            gk = gg + gs[r]
            bk = bb + bs[r]
            if cd == 6:
                h[r] = gk * vk * cos(tk) - bk * vk * sin(tk) - gg * vmm * cos(tm) + bb * vmm * sin(tm)
                if want_jac:
                    H[r, k] = -gk * vk * sin(tk) - bk * vk * cos(tk)
                    H[r, m] = gg * vmm * sin(tm) + bb * vmm * cos(tm)
                    H[r, n + k] = gk * cos(tk) - bk * sin(tk)
                    H[r, n + m] = -gg * cos(tm) + bb * sin(tm)
            else:
                h[r] = bk * vk * cos(tk) + gk * vk * sin(tk) - bb * vmm * cos(tm) - gg * vmm * sin(tm)
                if want_jac:
                    H[r, k] = -bk * vk * sin(tk) + gk * vk * cos(tk)
                    H[r, m] = bb * vmm * sin(tm) - gg * vmm * cos(tm)
                    H[r, n + k] = bk * cos(tk) + gk * sin(tk)
                    H[r, n + m] = -bb * cos(tm) - gg * sin(tm)
        elif cd == 8:
            h[r] = vk * cos(tk)
            if want_jac:
                H[r, k] = -vk * sin(tk)
                H[r, n + k] = cos(tk)
        elif cd == 9:
            h[r] = vk * sin(tk)
            if want_jac:
                H[r, k] = vk * cos(tk)
                H[r, n + k] = sin(tk)
        else:
            raise ValueError(f"unknown measurement code {cd}")
