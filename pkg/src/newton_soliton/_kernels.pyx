# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. See ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, M_PI

cnp.import_array()

cdef double FOUR_PI = 4.0 * M_PI


cdef inline void _rhs(double s, double r, double rp, double q, double qp,
                      double* out) noexcept nogil:
    out[0] = rp
    out[1] = -2.0 * rp / s - 2.0 * q * r
    out[2] = qp
    out[3] = -2.0 * qp / s - FOUR_PI * r * r


def radial_shoot(double q0, double ds, double s_max):
    cdef Py_ssize_t nmax = <Py_ssize_t>(s_max / ds) + 2
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nmax, 5))
    cdef double[:, ::1] o = out
    cdef double s = ds
    cdef double r = 1.0 - q0 * s * s / 3.0
    cdef double rp = -2.0 * q0 * s / 3.0
    cdef double q = q0 - FOUR_PI * s * s / 6.0
    cdef double qp = -FOUR_PI * s / 3.0
    cdef double h = ds, hh = 0.5 * ds
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef Py_ssize_t i = 2
    cdef int status = 0
    o[0, 0] = 0.0; o[0, 1] = 1.0; o[0, 2] = 0.0; o[0, 3] = q0; o[0, 4] = 0.0
    o[1, 0] = s; o[1, 1] = r; o[1, 2] = rp; o[1, 3] = q; o[1, 4] = qp
    with nogil:
        while i < nmax:
            _rhs(s, r, rp, q, qp, k1)
            _rhs(s + hh, r + hh * k1[0], rp + hh * k1[1], q + hh * k1[2], qp + hh * k1[3], k2)
            _rhs(s + hh, r + hh * k2[0], rp + hh * k2[1], q + hh * k2[2], qp + hh * k2[3], k3)
            _rhs(s + h, r + h * k3[0], rp + h * k3[1], q + h * k3[2], qp + h * k3[3], k4)
            r += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            rp += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            q += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            qp += h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            s += h
            if r <= 0.0:
                status = -1
                break
            if rp >= 0.0:
                status = 1
                break
            o[i, 0] = s; o[i, 1] = r; o[i, 2] = rp; o[i, 3] = q; o[i, 4] = qp
            i += 1
            if s >= s_max:
                break
    return status, out[:i].copy()


def pair_interaction(pos_a, w_a, pos_b, w_b):
    cdef double[:, ::1] pa = np.ascontiguousarray(pos_a, dtype=np.float64)
    cdef double[:, ::1] pb = np.ascontiguousarray(pos_b, dtype=np.float64)
    cdef double[::1] wa = np.ascontiguousarray(w_a, dtype=np.float64)
    cdef double[::1] wb = np.ascontiguousarray(w_b, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef Py_ssize_t na = pa.shape[0], nb = pb.shape[0]
    cdef double total = 0.0, acc, dx, dy, dz, d2
    with nogil:
        for i in range(na):
            if wa[i] == 0.0:
                continue
            acc = 0.0
            for j in range(nb):
                dx = pa[i, 0] - pb[j, 0]
                dy = pa[i, 1] - pb[j, 1]
                dz = pa[i, 2] - pb[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 > 0.0:
                    acc += wb[j] / sqrt(d2)
            total += wa[i] * acc
    return total


def apply_phase(w, theta, double scale):
    if not (w.flags.c_contiguous and w.dtype == np.complex128):
        raise ValueError("apply_phase needs a C-contiguous complex128 array")
    cdef double complex[::1] wv = w.reshape(-1)
    cdef double[::1] tv = np.ascontiguousarray(theta, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t i, n = wv.shape[0]
    cdef double a, c, s, re, im
    if tv.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            a = -scale * tv[i]
            c = cos(a)
            s = sin(a)
            re = wv[i].real
            im = wv[i].imag
            wv[i] = (re * c - im * s) + 1j * (re * s + im * c)
    return w
