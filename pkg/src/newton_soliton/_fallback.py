"""Pure-Python/NumPy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; used when the extension is not built or when
``NEWTON_SOLITON_PURE`` is set.
"""

import math

import numpy as np

FOUR_PI = 4.0 * math.pi


def _rhs(s, r, rp, q, qp):
    return rp, -2.0 * rp / s - 2.0 * q * r, qp, -2.0 * qp / s - FOUR_PI * r * r


def radial_shoot(q0, ds, s_max):
    """RK4 integration of the scaled radial ground-state system.

    Unknowns ``r(s)`` and ``q(s)`` with ``r(0) = 1``, ``q(0) = q0``::

        r'' + 2 r'/s = -2 q r,      q'' + 2 q'/s = -4 pi r^2.

    Integration stops when ``r`` changes sign (status -1), when ``r`` turns
    upward (status +1) or at ``s_max`` (status 0).

    Returns
    -------
    status : int
    out : ndarray, shape (m, 5)
        Columns ``s, r, r', q, q'``.
    """
    nmax = int(s_max / ds) + 2
    out = np.empty((nmax, 5))
    # regular series start away from the s = 0 singularity
    s = ds
    r = 1.0 - q0 * s * s / 3.0
    rp = -2.0 * q0 * s / 3.0
    q = q0 - FOUR_PI * s * s / 6.0
    qp = -FOUR_PI * s / 3.0
    out[0] = (0.0, 1.0, 0.0, q0, 0.0)
    out[1] = (s, r, rp, q, qp)
    i = 2
    h = ds
    hh = 0.5 * ds
    status = 0
    while i < nmax:
        a1, b1, c1, d1 = _rhs(s, r, rp, q, qp)
        a2, b2, c2, d2 = _rhs(s + hh, r + hh * a1, rp + hh * b1, q + hh * c1, qp + hh * d1)
        a3, b3, c3, d3 = _rhs(s + hh, r + hh * a2, rp + hh * b2, q + hh * c2, qp + hh * d2)
        a4, b4, c4, d4 = _rhs(s + h, r + h * a3, rp + h * b3, q + h * c3, qp + h * d3)
        r += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        rp += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        q += h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        qp += h / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
        s += h
        if r <= 0.0:
            status = -1
            break
        if rp >= 0.0:
            status = 1
            break
        out[i] = (s, r, rp, q, qp)
        i += 1
        if s >= s_max:
            break
    return status, out[:i].copy()


def pair_interaction(pos_a, w_a, pos_b, w_b):
    """Direct sum ``sum_ij w_a[i] w_b[j] / |pos_a[i] - pos_b[j]|`` over distinct points."""
    pos_a = np.ascontiguousarray(pos_a, dtype=float)
    pos_b = np.ascontiguousarray(pos_b, dtype=float)
    total = 0.0
    chunk = 256
    for i0 in range(0, len(pos_a), chunk):
        d = pos_a[i0 : i0 + chunk, None, :] - pos_b[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        with np.errstate(divide="ignore"):
            inv = np.where(dist > 0, 1.0 / dist, 0.0)
        total += float(w_a[i0 : i0 + chunk] @ inv @ w_b)
    return total


def apply_phase(w, theta, scale):
    """In place ``w *= exp(-1j * scale * theta)`` for complex ``w``, real ``theta``."""
    w *= np.exp(-1j * scale * theta)
    return w
