"""Periodic 3D grid, spectral derivatives and the truncated Coulomb convolution.

All fields are sampled on a cubic periodic box of side ``box_length`` with
``n`` points per axis. Coordinates are cell-vertex, centred on
``Grid3.center``; index ``n // 2`` sits on the centre. The only quadrature
rule used anywhere in the package is the rectangle rule ``h**3 * sum``.

The free-space Coulomb potential ``|x|^-1 * rho`` is computed with the
kernel truncated at radius ``R``.  Its Fourier symbol is

    4 pi (1 - cos(R |k|)) / |k|^2,     2 pi R^2 at k = 0,

and the periodic convolution with it reproduces the free-space result
whenever the density and the evaluation points lie in a ball of diameter
``R`` (with ``R <= L/2`` no periodic image is seen).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "Field3",
    "GridMismatchError",
    "coulomb_convolve",
    "gradient",
    "laplacian",
    "translate",
    "integrate",
    "inner",
    "l2_norm",
]


class GridMismatchError(ValueError):
    """Two fields live on different grids."""


def _fftn(a):
    return sfft.fftn(a, workers=-1)


def _ifftn(a):
    return sfft.ifftn(a, workers=-1)


def _rfftn(a):
    return sfft.rfftn(a, workers=-1)


def _irfftn(a, shape):
    return sfft.irfftn(a, s=shape, workers=-1)


@dataclass(frozen=True, eq=False)
class Grid3:
    """Cubic periodic grid.

    Parameters
    ----------
    n : int
        Points per axis. Even; powers of two and 96 are the intended sizes.
    box_length : float
        Side ``L`` of the box.
    truncation_radius : float, optional
        Radius ``R`` of the truncated Coulomb kernel. Defaults to ``L / 2``.
    center : sequence of 3 floats, optional
        Physical position of the box centre.
    """

    n: int
    box_length: float
    truncation_radius: float | None = None
    center: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 4, got {self.n}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        R = self.truncation_radius
        if R is None:
            object.__setattr__(self, "truncation_radius", 0.5 * self.box_length)
        elif not 0 < R <= 0.5 * self.box_length * (1 + 1e-12):
            raise ValueError("truncation radius must satisfy 0 < R <= L/2")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    # identity -----------------------------------------------------------
    def _key(self):
        return (self.n, float(self.box_length), float(self.truncation_radius), self.center)

    def __eq__(self, other):
        return isinstance(other, Grid3) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"Grid3(n={self.n}, box_length={self.box_length!r}, "
            f"truncation_radius={self.truncation_radius!r}, center={self.center!r})"
        )

    def scaled(self, factor: float) -> "Grid3":
        """Same samples, all lengths multiplied by ``factor``."""
        return Grid3(
            self.n,
            self.box_length * factor,
            self.truncation_radius * factor,
            tuple(factor * c for c in self.center),
        )

    def recentered(self, center) -> "Grid3":
        return Grid3(self.n, self.box_length, self.truncation_radius, tuple(center))

    def with_size(self, n: int) -> "Grid3":
        return Grid3(n, self.box_length, self.truncation_radius, self.center)

    # geometry -----------------------------------------------------------
    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def axis(self) -> np.ndarray:
        """Box-relative 1D coordinates ``-L/2 + i h``."""
        return (np.arange(self.n) - self.n // 2) * self.spacing

    def axes(self):
        """Physical 1D coordinates along each axis (centre included)."""
        return [self.axis + c for c in self.center]

    def mesh(self, relative: bool = False):
        """Broadcastable coordinate arrays ``(x1, x2, x3)``."""
        if relative:
            a = [self.axis, self.axis, self.axis]
        else:
            a = self.axes()
        return (
            a[0][:, None, None],
            a[1][None, :, None],
            a[2][None, None, :],
        )

    def radius(self, origin=None) -> np.ndarray:
        """Distance of every grid point from ``origin`` (default: box centre)."""
        x1, x2, x3 = self.mesh(relative=True)
        if origin is not None:
            o = np.asarray(origin, dtype=float) - np.asarray(self.center)
            x1, x2, x3 = x1 - o[0], x2 - o[1], x3 - o[2]
        return np.sqrt(x1 * x1 + x2 * x2 + x3 * x3)

    # wavenumbers --------------------------------------------------------
    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """1D wavenumbers in FFT order, ``(2 pi / L) * {-n/2, ..., n/2 - 1}``."""
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def _k_deriv(self) -> np.ndarray:
        # Nyquist mode dropped so that odd derivatives of real fields stay real
        k = self.wavenumbers.copy()
        k[self.n // 2] = 0.0
        return k

    def _kvec(self, real: bool, deriv: bool):
        k = self._k_deriv if deriv else self.wavenumbers
        k3 = 2 * np.pi * sfft.rfftfreq(self.n, d=self.spacing) if real else self.wavenumbers
        if deriv:
            k3 = k3.copy()
            k3[self.n // 2 if not real else -1] = 0.0
        return k[:, None, None], k[None, :, None], k3[None, None, :]

    # k2 arrays use the Nyquist-free derivative symbol, so that the Laplacian
    # is exactly the sum of squared first derivatives.
    @cached_property
    def k2_full(self) -> np.ndarray:
        k1, k2, k3 = self._kvec(False, True)
        return k1**2 + k2**2 + k3**2

    @cached_property
    def k2_half(self) -> np.ndarray:
        k1, k2, k3 = self._kvec(True, True)
        return k1**2 + k2**2 + k3**2

    def _kmag2(self, real: bool) -> np.ndarray:
        k1, k2, k3 = self._kvec(real, False)
        return k1**2 + k2**2 + k3**2

    def coulomb_symbol(self, real: bool = True) -> np.ndarray:
        return self._coulomb_half if real else self._coulomb_full

    @staticmethod
    def _truncated_symbol(k2, R):
        kk = np.sqrt(k2)
        with np.errstate(divide="ignore", invalid="ignore"):
            sym = 4 * np.pi * (1 - np.cos(R * kk)) / k2
        sym[k2 == 0] = 2 * np.pi * R * R
        return sym

    @cached_property
    def _coulomb_half(self):
        return self._truncated_symbol(self._kmag2(True), self.truncation_radius)

    @cached_property
    def _coulomb_full(self):
        return self._truncated_symbol(self._kmag2(False), self.truncation_radius)

    # transforms ---------------------------------------------------------
    def forward(self, a: np.ndarray) -> np.ndarray:
        """Unnormalised DFT (full complex layout)."""
        return _fftn(a)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        return _ifftn(a)

    def apply_symbol(self, a: np.ndarray, symbol_full, symbol_half=None) -> np.ndarray:
        """Multiply by a Fourier symbol; real input with a real even symbol stays real."""
        if np.isrealobj(a) and symbol_half is not None:
            return _irfftn(_rfftn(a) * symbol_half, self.shape)
        return _ifftn(_fftn(a) * symbol_full)

    def coulomb(self, rho: np.ndarray) -> np.ndarray:
        """Raw-array truncated Coulomb convolution of a real density."""
        return _irfftn(_rfftn(rho) * self._coulomb_half, self.shape)

    def laplacian(self, a: np.ndarray) -> np.ndarray:
        return self.apply_symbol(a, -self.k2_full, -self.k2_half)

    def grad(self, a: np.ndarray):
        """Raw-array spectral gradient (three arrays)."""
        n = self.n
        kd = self._k_deriv
        if np.isrealobj(a):
            ah = _rfftn(a)
            ks = (kd[:, None, None], kd[None, :, None], kd[None, None, : n // 2 + 1])
            return [_irfftn(1j * k * ah, self.shape) for k in ks]
        ah = _fftn(a)
        ks = (kd[:, None, None], kd[None, :, None], kd[None, None, :])
        return [_ifftn(1j * k * ah) for k in ks]

    def grad_sq_integral(self, a: np.ndarray) -> float:
        """``||grad a||_2^2`` evaluated in Fourier space."""
        if np.isrealobj(a):
            ah = _rfftn(a)
            w = np.full(ah.shape[-1], 2.0)
            w[0] = 1.0
            if self.n % 2 == 0:
                w[-1] = 1.0
            p = (ah.real**2 + ah.imag**2) * w
            return float(np.sum(self.k2_half * p) * self.cell_volume / self.n**3)
        ah = _fftn(a)
        return float(np.sum(self.k2_full * (ah.real**2 + ah.imag**2)) * self.cell_volume / self.n**3)

    def integrate(self, a: np.ndarray):
        s = np.sum(a) * self.cell_volume
        return s

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        """Real L2 inner product ``Re int a conj(b)``."""
        if np.iscomplexobj(a) or np.iscomplexobj(b):
            return float(np.vdot(b, a).real * self.cell_volume)
        return float(np.dot(a.ravel(), b.ravel()) * self.cell_volume)

    def translate(self, a: np.ndarray, offset) -> np.ndarray:
        """Band-limited ``a(. - offset)`` via the phase ``exp(-i k . offset)``.

        Lattice multiples of the spacing are exact rolls.
        """
        o = np.asarray(offset, dtype=float)
        if not np.any(o):
            return a.copy()
        steps = o / self.spacing
        if np.allclose(steps, np.round(steps), rtol=0, atol=1e-13):
            return np.roll(a, tuple(int(s) for s in np.round(steps)), axis=(0, 1, 2))
        # Nyquist mode dropped: the shift is then an isometry that keeps real fields real
        k = self._k_deriv
        p = [np.exp(-1j * k * oj) for oj in o]
        for pj in p:
            pj[self.n // 2] = 0.0
        if np.isrealobj(a):
            h = self.n // 2 + 1
            ph = p[0][:, None, None] * p[1][None, :, None] * p[2][None, None, :h]
            return _irfftn(_rfftn(a) * ph, self.shape)
        ph = p[0][:, None, None] * p[1][None, :, None] * p[2][None, None, :]
        return _ifftn(_fftn(a) * ph)

    def resample(self, a: np.ndarray, n_new: int) -> np.ndarray:
        """Spectral (zero-pad / truncate) resampling onto ``n_new`` points per axis.

        The Nyquist planes of both grids are dropped.
        """
        n = self.n
        if n_new == n:
            return a.copy()
        ah = np.fft.fftshift(_fftn(a))
        ah[0, :, :] = 0.0
        ah[:, 0, :] = 0.0
        ah[:, :, 0] = 0.0
        out = np.zeros((n_new,) * 3, dtype=complex)
        m = min(n, n_new)
        si = slice(n // 2 - m // 2, n // 2 + m // 2)
        so = slice(n_new // 2 - m // 2, n_new // 2 + m // 2)
        out[so, so, so] = ah[si, si, si]
        out[0, :, :] = 0.0
        out[:, 0, :] = 0.0
        out[:, :, 0] = 0.0
        res = _ifftn(np.fft.ifftshift(out)) * (n_new / n) ** 3
        return res.real.copy() if np.isrealobj(a) else res

    def dilate(self, a: np.ndarray, factor: float) -> np.ndarray:
        """Evaluate the trigonometric interpolant of ``a`` at ``factor * x``.

        ``x`` is measured from the box centre. Points whose image falls
        outside the box are set to zero rather than wrapped, which is the
        right continuation for fields that are negligible near the boundary.
        Done as three 1D non-uniform inverse DFTs, so the cost is ``O(n^4)``.
        """
        n = self.n
        k = self.wavenumbers.copy()
        # symmetric treatment of the Nyquist mode keeps real fields real
        ah = _fftn(a) / n**3
        x = self.axis * factor + 0.5 * self.box_length
        E = np.exp(1j * np.outer(x, k))
        nyq = n // 2
        E[:, nyq] = np.cos(k[nyq] * x)
        E[np.abs(self.axis * factor) > 0.5 * (self.box_length + self.spacing)] = 0.0
        out = np.einsum("ia,abc->ibc", E, ah, optimize=True)
        out = np.einsum("jb,ibc->ijc", E, out, optimize=True)
        out = np.einsum("kc,ijc->ijk", E, out, optimize=True)
        return out.real.copy() if np.isrealobj(a) else out


@dataclass(frozen=True, eq=False)
class Field3:
    """Scalar field (real or complex) sampled on a :class:`Grid3`."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            if v.size == self.grid.n**3:
                v = v.reshape(self.grid.shape)
            else:
                raise ValueError(f"values of shape {v.shape} do not fit {self.grid}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "values", v)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def _check(self, other: "Field3"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")

    def __add__(self, other):
        if isinstance(other, Field3):
            self._check(other)
            return Field3(self.grid, self.values + other.values)
        return Field3(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field3):
            self._check(other)
            return Field3(self.grid, self.values - other.values)
        return Field3(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, Field3):
            self._check(other)
            return Field3(self.grid, self.values * other.values)
        return Field3(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Field3(self.grid, -self.values)

    def conj(self) -> "Field3":
        return Field3(self.grid, np.conj(self.values))

    def real(self) -> "Field3":
        return Field3(self.grid, self.values.real.copy())

    def imag(self) -> "Field3":
        return Field3(self.grid, self.values.imag.copy())

    def flat(self) -> np.ndarray:
        """Row-major length ``n**3`` view of the samples."""
        return self.values.reshape(-1)


def _same_grid(*fields: Field3):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"{g} != {f.grid}")
    return g


def integrate(f: Field3):
    """Rectangle-rule integral ``h^3 sum f``."""
    return f.grid.integrate(f.values)


def inner(f: Field3, g: Field3) -> float:
    """Real L2 inner product ``Re int f conj(g)``."""
    grid = _same_grid(f, g)
    return grid.dot(f.values, g.values)


def l2_norm(f: Field3) -> float:
    return float(np.sqrt(inner(f, f)))


def coulomb_convolve(density: Field3) -> Field3:
    """``(|x|^-1 * density)`` with the radially truncated kernel.

    Raises
    ------
    TypeError
        If ``density`` is complex-valued.
    """
    if not density.is_real:
        raise TypeError("coulomb_convolve needs a real density")
    g = density.grid
    return Field3(g, g.coulomb(density.values))


def gradient(f: Field3):
    """Spectral gradient; returns three fields."""
    return tuple(Field3(f.grid, c) for c in f.grid.grad(f.values))


def laplacian(f: Field3) -> Field3:
    return Field3(f.grid, f.grid.laplacian(f.values))


def translate(f: Field3, offset) -> Field3:
    """Periodic, band-limited translate ``f(. - offset)``."""
    return Field3(f.grid, f.grid.translate(f.values, offset))


def smooth_random_field(grid: Grid3, rng: np.random.Generator, *, decay: float = 3.0, envelope: float | None = 3.0,
                        complex_valued: bool = False, center=None) -> np.ndarray:
    """Gaussian random field with Fourier amplitudes ``~ (1 + |k|^2)^(-decay/2)``.

    Optionally multiplied by a Gaussian envelope of width ``envelope``
    about ``center`` (box-relative, default the box centre). Returned with
    unit L2 norm.
    """
    shape = grid.shape
    noise = rng.standard_normal(shape)
    if complex_valued:
        noise = noise + 1j * rng.standard_normal(shape)
    amp = (1.0 + grid.k2_full) ** (-0.5 * decay)
    f = grid.inverse(grid.forward(noise) * amp)
    if not complex_valued:
        f = f.real
    if envelope is not None:
        r = grid.radius() if center is None else grid.radius(np.asarray(center) + np.asarray(grid.center))
        f = f * np.exp(-(r**2) / (2 * envelope**2))
    return f / np.sqrt(grid.dot(f, f))
