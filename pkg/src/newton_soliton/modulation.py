"""Distance of a field to the soliton orbit ``{exp(i theta) r(. - x)}``.

With ``g = (1 - 0.5 Lap) r`` and ``c(x) = int conj(phi(y)) g(y - x) dy``::

    Upsilon(x, theta) = ||phi||^2 + ||r||^2 - 2 Re(exp(i theta) c(x))

in the norm ``||f||^2 = ||f||_2^2 + 0.5 ||grad f||_2^2``. In Fourier space
``c(x) = sum_k a_k exp(-i k . x)`` with ``a_k = h^3/N g_k conj(phi_k)``,
so one FFT gives ``c`` on every lattice shift and a direct trigonometric
sum gives it (with derivatives) anywhere else. The reference profile is
``r`` with its Nyquist planes removed, which makes off-lattice translates
exact isometries.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .ground_state import GroundState
from .observables import energy
from .spectral import Field3, GridMismatchError, smooth_random_field

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class MassMismatchWarning(UserWarning):
    """Field mass is more than 1% away from the ground-state mass."""


class ModulationCollapseError(RuntimeError):
    """A perturbation landed on the orbit (distance 0)."""


@dataclass(frozen=True)
class ModulationFrame:
    x_star: np.ndarray
    theta_star: float
    distance: float
    converged: bool
    n_restarts_used: int
    gradient_norm: float = 0.0


def _h1_weight(grid):
    return 1.0 + 0.5 * grid.k2_full


def _nyquist_free(grid, a_hat):
    out = a_hat.copy()
    m = grid.n // 2
    out[m] = 0
    out[:, m] = 0
    out[:, :, m] = 0
    return out


class OrbitDistance:
    """Cross-correlation data for one field ``phi`` against the ground state.

    Build once per ``phi``; every evaluation of ``Upsilon`` and its
    derivatives then costs one pass over the Fourier coefficients.
    """

    def __init__(self, state: GroundState, phi: Field3):
        if phi.grid != state.grid:
            raise GridMismatchError(f"{phi.grid} != {state.grid}")
        g = self.grid = state.grid
        N = g.n**3
        w = _h1_weight(g)
        self.r_hat = _nyquist_free(g, g.forward(state.values.astype(complex)))
        self.phi_hat = g.forward(np.asarray(phi.values, dtype=complex))
        scale = g.cell_volume / N
        self.phi_sq = float(np.sum(w * np.abs(self.phi_hat) ** 2) * scale)
        self.r_sq = float(np.sum(w * np.abs(self.r_hat) ** 2) * scale)
        self.a = w * self.r_hat * np.conj(self.phi_hat) * scale
        k = g.wavenumbers
        self._k = k

    # c(x) and derivatives ----------------------------------------------
    def correlation_on_lattice(self) -> np.ndarray:
        """``c`` at every lattice shift ``x_m = m h`` (FFT index order)."""
        return np.fft.fftn(self.a)

    def correlation(self, x, order: int = 0):
        """``c(x)``; with ``order >= 1`` also the gradient, ``order 2`` the Hessian."""
        k = self._k
        E = [np.exp(-1j * k * xj) for xj in np.asarray(x, dtype=float)]
        t = np.einsum("abc,c->ab", self.a, E[2])
        c0 = E[0] @ t @ E[1]
        if order == 0:
            return c0
        dk = -1j * k
        # partial sums with derivative factors inserted per axis
        t1 = np.einsum("abc,c->ab", self.a, dk * E[2])
        grad = np.array([(dk * E[0]) @ t @ E[1], E[0] @ t @ (dk * E[1]), E[0] @ t1 @ E[1]])
        if order == 1:
            return c0, grad
        t2 = np.einsum("abc,c->ab", self.a, dk * dk * E[2])
        e0, e1 = E[0], E[1]
        d0, d1 = dk * E[0], dk * E[1]
        H = np.empty((3, 3), dtype=complex)
        H[0, 0] = (dk * d0) @ t @ e1
        H[1, 1] = e0 @ t @ (dk * d1)
        H[2, 2] = e0 @ t2 @ e1
        H[0, 1] = H[1, 0] = d0 @ t @ d1
        H[0, 2] = H[2, 0] = d0 @ t1 @ e1
        H[1, 2] = H[2, 1] = e0 @ t1 @ d1
        return c0, grad, H

    # Upsilon -----------------------------------------------------------
    def value(self, x, theta) -> float:
        c = self.correlation(x)
        return self.phi_sq + self.r_sq - 2.0 * float((np.exp(1j * theta) * c).real)

    def gradient(self, x, theta):
        c, dc = self.correlation(x, order=1)
        e = np.exp(1j * theta)
        return -2.0 * (e * dc).real, 2.0 * float((e * c).imag)

    def direct_distance(self, x, theta) -> float:
        """``||phi - exp(i theta) r(. - x)||`` summed as a difference (no cancellation)."""
        g = self.grid
        k = self._k
        x = np.asarray(x, dtype=float)
        ph = (
            np.exp(-1j * k * x[0])[:, None, None]
            * np.exp(-1j * k * x[1])[None, :, None]
            * np.exp(-1j * k * x[2])[None, None, :]
        )
        diff = self.phi_hat - np.exp(1j * theta) * self.r_hat * ph
        return float(np.sqrt(np.sum(_h1_weight(g) * np.abs(diff) ** 2) * g.cell_volume / g.n**3))

    def lattice_offsets(self, idx) -> np.ndarray:
        n, h = self.grid.n, self.grid.spacing
        m = np.array([i if i < n // 2 else i - n for i in idx], dtype=float)
        return m * h


def upsilon(phi: Field3, x, theta: float, state: GroundState) -> float:
    """``||phi - exp(i theta) r(. - x)||^2`` via the correlation expansion."""
    return OrbitDistance(state, phi).value(x, theta)


def upsilon_grad(phi: Field3, x, theta: float, state: GroundState):
    """``(dUpsilon/dx, dUpsilon/dtheta)``."""
    return OrbitDistance(state, phi).gradient(x, theta)


def _refine(od: OrbitDistance, x0, max_iter: int = 50, tol: float = 1e-13):
    """Newton ascent on ``|c(x)|^2`` with backtracking."""
    x = np.asarray(x0, dtype=float).copy()
    h = od.grid.spacing
    c, dc, H = od.correlation(x, order=2)
    f = abs(c) ** 2
    for _ in range(max_iter):
        g = 2.0 * (np.conj(c) * dc).real
        J = 2.0 * ((np.conj(dc)[:, None] * dc[None, :]).real + (np.conj(c) * H).real)
        try:
            step = -np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            step = g * h
        # a valid ascent direction needs J negative definite; otherwise fall back to gradient
        newton = not (np.any(np.linalg.eigvalsh(J) >= 0) or g @ step <= 0)
        if not newton:
            step = g / (np.abs(J).max() + 1e-300)
        nrm = np.linalg.norm(step)
        if newton and nrm < 1e-3 * h:
            # inside the quadratic basin the ascent test is at round-off level
            x = x + step
            c, dc, H = od.correlation(x, order=2)
            f = abs(c) ** 2
            if nrm < tol * max(1.0, np.linalg.norm(x)):
                return x, c, True
            continue
        if nrm > h:
            step *= h / nrm
        t = 1.0
        while t > 1e-6:
            c_new, dc_new, H_new = od.correlation(x + t * step, order=2)
            if abs(c_new) ** 2 >= f:
                break
            t *= 0.5
        else:
            return x, c, True
        x = x + t * step
        c, dc, H = c_new, dc_new, H_new
        f = abs(c) ** 2
        if t * nrm < tol * max(1.0, np.linalg.norm(x)):
            return x, c, True
    return x, c, False


def minimize_modulation(phi: Field3, state: GroundState, n_restarts: int = 3, grad_tol: float = 1e-8) -> ModulationFrame:
    """Minimise ``Upsilon`` over translations and phases.

    Seeds are the largest local maxima of ``|c|`` on the lattice; each is
    refined by Newton on ``|c(x)|^2`` (the optimal phase is ``-arg c``).
    The reported distance is evaluated directly, not through the expansion.
    """
    od = OrbitDistance(state, phi)
    g = state.grid
    m_phi = g.dot(phi.values, phi.values)
    m_r = g.dot(state.values, state.values)
    if abs(m_phi - m_r) > 0.01 * m_r:
        warnings.warn(f"field mass {m_phi:.4g} differs from ground-state mass {m_r:.4g} by >1%", MassMismatchWarning, stacklevel=2)
    lat = np.abs(od.correlation_on_lattice())
    # local maxima over the 26-neighbourhood (periodic)
    is_max = np.ones(lat.shape, dtype=bool)
    for s in np.ndindex(3, 3, 3):
        if s == (1, 1, 1):
            continue
        is_max &= lat >= np.roll(lat, (s[0] - 1, s[1] - 1, s[2] - 1), axis=(0, 1, 2))
    cand = np.flatnonzero(is_max)
    cand = cand[np.argsort(lat.ravel()[cand])[::-1]][: max(1, n_restarts)]
    best = None
    seed_values = []
    for used, flat in enumerate(cand, start=1):
        idx = np.unravel_index(flat, lat.shape)
        x0 = od.lattice_offsets(idx)
        c0 = od.correlation(x0)
        seed_values.append(od.direct_distance(x0, -np.angle(c0)))
        x, c, ok = _refine(od, x0)
        theta = float(np.mod(-np.angle(c), TWO_PI))
        dist = od.direct_distance(x, theta)
        gx, gt = od.gradient(x, theta)
        gnorm = float(np.sqrt(gx @ gx + gt * gt))
        ok = ok and gnorm < grad_tol * max(1.0, od.r_sq)
        frame = ModulationFrame(x, theta, dist, ok, used, gnorm)
        if best is None or dist < best.distance:
            best = frame
    if not best.converged:
        log.warning("modulation refinement did not converge (gradient %.2e)", best.gradient_norm)
    return best


def orthogonality_residuals(phi: Field3, frame: ModulationFrame, state: GroundState):
    """Stationarity conditions at a frame: the ``x`` and ``theta`` derivatives of ``Upsilon``.

    Equivalently ``Re int exp(i theta) conj(phi(y + x)) Xi_j(y) dy`` (up to
    the factor 2) and the matching phase condition.
    """
    gx, gt = OrbitDistance(state, phi).gradient(frame.x_star, frame.theta_star)
    return gx, gt


# ----------------------------------------------------------------------
# coercivity experiment


def mass_projected_perturbation(state: GroundState, direction: np.ndarray, size: float) -> Field3:
    """``r + size * direction`` rescaled to the ground-state mass."""
    g = state.grid
    phi = state.values + size * direction
    m_r = g.dot(state.values, state.values)
    phi = phi * np.sqrt(m_r / g.dot(phi, phi))
    return Field3(g, phi)


def random_direction(state: GroundState, rng: np.random.Generator, sector: str = "mixed", decay: float = 3.0) -> np.ndarray:
    """Smooth random direction with unit ``H1`` norm.

    ``sector`` is ``"real"`` (L+ block), ``"imag"`` (L- block) or ``"mixed"``.
    """
    g = state.grid
    width = float(rng.uniform(1.5, 4.0))
    re = smooth_random_field(g, rng, decay=decay, envelope=width)
    im = smooth_random_field(g, rng, decay=decay, envelope=width)
    if sector == "real":
        d = re.astype(complex)
    elif sector == "imag":
        d = 1j * im
    elif sector == "mixed":
        a = float(rng.uniform(0, TWO_PI))
        d = np.cos(a) * re + 1j * np.sin(a) * im
    else:
        raise ValueError(f"unknown sector {sector!r}")
    n2 = g.dot(d, d) + 0.5 * g.grad_sq_integral(d)
    return d / np.sqrt(n2)


@dataclass(frozen=True)
class CoercivityRow:
    d_target: float
    d_star: float
    delta_E: float
    ratio: float
    seed: int
    sector: str = "mixed"


def coercivity_experiment(
    state: GroundState,
    distances,
    n_per_distance: int,
    *,
    seed: int = 0,
    sectors=("mixed", "real", "imag"),
) -> list[CoercivityRow]:
    """Sample ``E(phi) - E(r)`` against the orbit distance on the mass sphere.

    For each target distance the perturbation size is corrected once by
    the ratio of target to achieved distance (the component along the
    orbit tangent is removed by the modulation, so the raw size overshoots).
    """
    g = state.grid
    r_norm = float(np.sqrt(g.dot(state.values, state.values) + 0.5 * g.grad_sq_integral(state.values)))
    e_r = energy(Field3(g, state.values), check_tail=False)
    rows = []
    for i, d in enumerate(distances):
        if not 0 < d <= r_norm:
            raise ValueError(f"target distance {d} outside (0, ||r||]")
        for j in range(n_per_distance):
            sample_seed = seed * 1_000_003 + i * 10_007 + j
            rng = np.random.default_rng(sample_seed)
            sector = sectors[j % len(sectors)]
            direction = random_direction(state, rng, sector)
            size = d
            for _ in range(3):
                phi = mass_projected_perturbation(state, direction, size)
                frame = minimize_modulation(phi, state)
                if frame.distance == 0:
                    raise ModulationCollapseError(f"sample {sample_seed} collapsed onto the orbit")
                if abs(frame.distance / d - 1) < 0.05:
                    break
                size *= d / frame.distance
            dE = energy(phi, check_tail=False) - e_r
            rows.append(CoercivityRow(d, frame.distance, dE, dE / frame.distance**2, sample_seed, sector))
    return rows


def write_coercivity_csv(rows, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["d_target", "d_star", "delta_E", "ratio", "seed", "sector"])
        for r in rows:
            w.writerow([f"{r.d_target:.10e}", f"{r.d_star:.10e}", f"{r.delta_E:.10e}", f"{r.ratio:.10e}", r.seed, r.sector])
