"""Scalar functionals: energies, norms, mass, momentum, classical Hamiltonian.

Norm convention throughout: ``||f||^2 = ||f||_2^2 + 0.5 ||grad f||_2^2`` and
``(u, v)_{H1} = (u, v) + 0.5 (grad u, grad v)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .spectral import Field3, GridMismatchError

BOUNDARY_TAIL_THRESHOLD = 1e-8


class TruncationWarning(RuntimeWarning):
    """Field is not small at the box boundary; the truncated kernel is unreliable."""


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential_external: float
    hartree: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential_external + self.hartree


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    x: np.ndarray
    v: np.ndarray
    hamiltonian: float


def classical_hamiltonian(mass: float, x, v, potential) -> float:
    """``0.5 m |v|^2 + m V(x)``."""
    v = np.asarray(v, dtype=float)
    return 0.5 * mass * float(v @ v) + mass * potential(x)


def boundary_tail(values: np.ndarray) -> float:
    """Max amplitude on the box faces relative to the global max."""
    a = np.abs(values)
    peak = a.max()
    if peak == 0:
        return 0.0
    faces = max(a[0].max(), a[:, 0].max(), a[:, :, 0].max(), a[-1].max(), a[:, -1].max(), a[:, :, -1].max())
    return float(faces / peak)


def _check_tail(values, threshold=BOUNDARY_TAIL_THRESHOLD):
    tail = boundary_tail(values)
    if tail > threshold:
        warnings.warn(
            f"boundary tail {tail:.2e} exceeds {threshold:.0e}; truncated Coulomb kernel may be inaccurate",
            TruncationWarning,
            stacklevel=3,
        )


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def _density(values: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(values):
        return values.real**2 + values.imag**2
    return values * values


def kinetic_integral(phi: Field3) -> float:
    """``||grad phi||_2^2``."""
    return phi.grid.grad_sq_integral(phi.values)


def hartree_integral(phi: Field3) -> float:
    """``int int |phi(x)|^2 |phi(y)|^2 / |x - y|``."""
    g = phi.grid
    rho = _density(phi.values)
    return float(g.dot(g.coulomb(rho), rho))


def energy(phi: Field3, check_tail: bool = True) -> float:
    """``0.5 ||grad phi||^2 - 0.5 int int |phi|^2 |phi|^2 / |x - y|``."""
    if check_tail:
        _check_tail(phi.values)
    return 0.5 * kinetic_integral(phi) - 0.5 * hartree_integral(phi)


def action(phi: Field3) -> float:
    """``energy(phi) + ||phi||_2^2``."""
    return energy(phi) + phi.grid.dot(phi.values, phi.values)


def h1_inner(u: Field3, v: Field3) -> float:
    """Real part of ``(u, v) + 0.5 (grad u, grad v)``."""
    if u.grid != v.grid:
        raise GridMismatchError(f"{u.grid} != {v.grid}")
    g = u.grid
    gu = g.grad(u.values)
    gv = g.grad(v.values)
    return g.dot(u.values, v.values) + 0.5 * sum(g.dot(a, b) for a, b in zip(gu, gv))


def h1_norm(phi: Field3) -> float:
    g = phi.grid
    return float(np.sqrt(g.dot(phi.values, phi.values) + 0.5 * g.grad_sq_integral(phi.values)))


def semiclassical_energy(u: Field3, eps: float, potential, offset=(0.0, 0.0, 0.0)) -> EnergyBreakdown:
    """``E_eps = (1/2eps)||grad u||^2 + eps^-3 int V|u|^2 - (1/2eps^5) int int ...``.

    ``u`` lives on a grid in lab coordinates; ``offset`` is added to the grid
    coordinates before ``potential`` is evaluated.
    """
    _check_eps(eps)
    g = u.grid
    rho = _density(u.values)
    kin = kinetic_integral(u) / (2 * eps)
    pot = g.dot(potential.on_grid(g, offset), rho) / eps**3
    har = -0.5 * g.dot(g.coulomb(rho), rho) / eps**5
    return EnergyBreakdown(kin, pot, har)


def momentum(u: Field3, eps: float) -> np.ndarray:
    """``int eps^-2 Im(conj(u) grad u)``."""
    _check_eps(eps)
    if u.is_real:
        return np.zeros(3)
    g = u.grid
    grads = g.grad(u.values)
    conj = np.conj(u.values)
    return np.array([float(np.sum(conj * d).imag) * g.cell_volume for d in grads]) / eps**2


def mass(u: Field3, eps: float = 1.0) -> float:
    """``eps^-3 ||u||_2^2``."""
    _check_eps(eps)
    return u.grid.dot(u.values, u.values) / eps**3


def h_eps_norm(u: Field3, eps: float) -> float:
    """``((1/eps)||grad u||^2 + (1/eps^3)||u||^2)^(1/2)``."""
    _check_eps(eps)
    g = u.grid
    return float(np.sqrt(g.grad_sq_integral(u.values) / eps + g.dot(u.values, u.values) / eps**3))


def gradient_norm(u: Field3) -> float:
    """``||grad u||_2``."""
    return float(np.sqrt(u.grid.grad_sq_integral(u.values)))
