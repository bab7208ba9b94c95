"""Ground state of ``-0.5 Lap r + r - (|x|^-1 * r^2) r = 0``.

Two independent routes:

* :func:`relax` minimises the energy on a mass sphere by a preconditioned,
  normalised gradient flow on the 3D grid; :func:`rescale_to_ground_state`
  maps the constrained minimiser with multiplier ``lam`` to the unit
  problem through ``r(x) = ū(x / sqrt(lam)) / lam``.
* :func:`radial_shooting_oracle` solves the radial ODE system by shooting.

:func:`compute_ground_state` chains the 3D route with a fixed-point
iteration on the mass (the multiplier scales as the square of the mass).
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .observables import energy
from .spectral import Field3, Grid3

log = logging.getLogger(__name__)

__all__ = [
    "ConvergenceError",
    "CacheMismatchError",
    "GroundState",
    "DecayReport",
    "RelaxResult",
    "RadialProfile",
    "relax",
    "rescale_to_ground_state",
    "compute_ground_state",
    "radial_shooting_oracle",
    "decay_report",
    "radial_average",
    "residual",
    "save_field",
    "load_field",
    "load_or_compute",
]


class ConvergenceError(RuntimeError):
    pass


class CacheMismatchError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class RadialProfile:
    s: np.ndarray
    r: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.s, self.r)


@dataclass(frozen=True, eq=False)
class GroundState:
    field: Field3
    radial_profile: RadialProfile
    mass: float
    multiplier: float
    residual_l2: float

    @property
    def grid(self) -> Grid3:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def peak(self) -> float:
        return float(self.field.values.max())


@dataclass(frozen=True)
class DecayReport:
    lambda0_estimate: float
    slope_estimate: float
    fit_window: tuple
    asymptotic_rate: float
    power_correction: float


@dataclass
class RelaxResult:
    profile: Field3
    multiplier: float
    iterations: int
    gradient_norm: float
    energies: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.profile, self.multiplier))


# ---------------------------------------------------------------------------
# 3D route


def residual(grid: Grid3, r: np.ndarray) -> np.ndarray:
    """``-0.5 Lap r + r - (|x|^-1 * r^2) r`` on the grid."""
    return -0.5 * grid.laplacian(r) + r - grid.coulomb(r * r) * r


def gaussian_guess(grid: Grid3, mass: float, width: float = 1.5) -> np.ndarray:
    r2 = grid.radius() ** 2
    g = np.exp(-r2 / (2 * width**2))
    return g * math.sqrt(mass / grid.dot(g, g))


def relax(
    grid: Grid3,
    initial_mass: float,
    tol: float = 1e-10,
    *,
    initial: np.ndarray | None = None,
    step: float = 0.1,
    max_step: float = 2.0,
    max_iter: int = 5000,
) -> RelaxResult:
    """Minimise the energy on ``{||u||_2^2 = initial_mass}``.

    Preconditioned gradient flow: the constrained gradient
    ``g = H u - mu u`` (``H = -0.5 Lap - Phi_u``, ``mu`` its Rayleigh
    quotient) is smoothed by ``(1 - 0.5 Lap)^-1``, a step is taken, and the
    iterate is rescaled back onto the mass sphere. The step grows by 20% on
    success and is halved whenever the energy would increase. Stops when
    ``||g||_2 / ||u||_2 <= tol``.

    Returns a :class:`RelaxResult`, which unpacks as ``(profile, multiplier)``
    with ``multiplier = -mu``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not initial_mass > 0:
        raise ValueError("initial_mass must be positive")
    u = gaussian_guess(grid, initial_mass) if initial is None else np.array(initial, dtype=float)
    u *= math.sqrt(initial_mass / grid.dot(u, u))
    precond = 1.0 / (1.0 + 0.5 * grid.k2_half)

    def evaluate(u):
        phi = grid.coulomb(u * u)
        lap = grid.laplacian(u)
        Hu = -0.5 * lap - phi * u
        e = 0.5 * grid.dot(-lap, u) - 0.5 * grid.dot(phi * u, u)
        return Hu, e

    Hu, e = evaluate(u)
    energies = [e]
    tau = step
    norm_u = math.sqrt(initial_mass)
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        mu = grid.dot(Hu, u) / initial_mass
        g = Hu - mu * u
        gnorm = math.sqrt(grid.dot(g, g)) / norm_u
        if gnorm <= tol:
            break
        d = grid.apply_symbol(g, None, precond)
        while True:
            trial = u - tau * d
            trial *= math.sqrt(initial_mass / grid.dot(trial, trial))
            Hu_t, e_t = evaluate(trial)
            if e_t <= e + 1e-12 * abs(e):
                break
            tau *= 0.5
            if tau < 1e-12:
                raise ConvergenceError("step size underflow in relax")
        u, Hu, e = trial, Hu_t, e_t
        energies.append(e)
        tau = min(1.2 * tau, max_step)
        if not grid.dot(u, u) > 0 or not np.isfinite(e):
            raise ConvergenceError("relaxation collapsed")
    else:
        raise ConvergenceError(f"relax did not reach tol={tol:g} in {max_iter} iterations (|g|={gnorm:.2e})")
    if np.abs(u).max() < 1e-300:
        raise ConvergenceError("relaxation collapsed to the zero field")
    mu = grid.dot(Hu, u) / initial_mass
    log.debug("relax: mass=%g it=%d |g|=%.2e lambda=%.12f", initial_mass, it, gnorm, -mu)
    return RelaxResult(Field3(grid, u), -mu, it, gnorm, energies)


def dilate_mass(grid: Grid3, u: np.ndarray, mass_from: float, mass_to: float) -> np.ndarray:
    """Map a constrained minimiser at one mass to the guess at another.

    ``u_M'(x) = b^2 u_M(b x)`` with ``b = M'/M`` preserves the equation's form.
    """
    b = mass_to / mass_from
    return b * b * grid.dilate(u, b)


def rescale_to_ground_state(profile: Field3, multiplier: float) -> GroundState:
    """``r(x) = lam^-1 ū(lam^-1/2 x)``, spectrally resampled."""
    if not multiplier > 0:
        raise ValueError("multiplier must be positive")
    grid = profile.grid
    if multiplier == 1.0:
        r = profile.values.copy()
    else:
        r = grid.dilate(profile.values, multiplier**-0.5) / multiplier
    return _make_state(grid, r, 1.0)


def _make_state(grid: Grid3, r: np.ndarray, multiplier: float) -> GroundState:
    res = residual(grid, r)
    return GroundState(
        field=Field3(grid, r),
        radial_profile=radial_average(Field3(grid, r)),
        mass=grid.dot(r, r),
        multiplier=multiplier,
        residual_l2=math.sqrt(grid.dot(res, res)),
    )


def compute_ground_state(
    grid: Grid3,
    tol: float = 1e-10,
    *,
    mass_guess: float = 2.5,
    coarse_n: int | None = None,
    lam_tol: float = 1e-10,
    max_outer: int = 6,
) -> GroundState:
    """Relax, solve the fixed-point problem ``lam(M) = 1`` for the mass, rescale.

    The first relaxation at ``mass_guess`` (optionally on a coarser grid
    ``coarse_n``) gives ``lam`` and the next mass ``M / sqrt(lam(M))``;
    later relaxations start from the previous minimiser dilated to the new
    mass.
    """
    M = mass_guess
    if coarse_n is not None and coarse_n < grid.n:
        cg = grid.with_size(coarse_n)
        cres = relax(cg, M, tol=max(tol, 1e-8))
        u = cg.resample(cres.profile.values, grid.n)
        lam = cres.multiplier
    else:
        res = relax(grid, M, tol=tol)
        u, lam = res.profile.values, res.multiplier
    for _ in range(max_outer):
        M_new = M / math.sqrt(lam)
        u = dilate_mass(grid, u, M, M_new)
        M = M_new
        res = relax(grid, M, tol=tol, initial=u, step=1.0)
        u, lam = res.profile.values, res.multiplier
        log.info("ground state: mass=%.12f lambda-1=%.3e", M, lam - 1)
        if abs(lam - 1) < lam_tol:
            break
    state = rescale_to_ground_state(res.profile, lam) if lam != 1.0 else _make_state(grid, u, 1.0)
    return GroundState(state.field, state.radial_profile, state.mass, lam, state.residual_l2)


def radial_average(f: Field3, origin=None) -> RadialProfile:
    """Average over exact lattice shells ``i^2 + j^2 + k^2 = const``.

    Every shell contains only points at exactly the same distance, so the
    result samples the radial profile without binning bias.
    """
    g = f.grid
    idx = np.arange(g.n) - g.n // 2
    key = (idx[:, None, None] ** 2 + idx[None, :, None] ** 2 + idx[None, None, :] ** 2).ravel()
    if origin is not None:
        raise NotImplementedError("radial_average is defined about the box centre")
    vals = np.real(f.values).ravel()
    uniq, inv = np.unique(key, return_inverse=True)
    sums = np.bincount(inv, weights=vals)
    counts = np.bincount(inv)
    s = np.sqrt(uniq) * g.spacing
    keep = s <= 0.5 * g.box_length
    return RadialProfile(s[keep], (sums / counts)[keep])


def radial_symmetry_defect(f: Field3) -> float:
    """Max deviation of ``f`` from its exact-shell average, relative to max |f|."""
    g = f.grid
    idx = np.arange(g.n) - g.n // 2
    key = (idx[:, None, None] ** 2 + idx[None, :, None] ** 2 + idx[None, None, :] ** 2).ravel()
    vals = np.real(f.values).ravel()
    uniq, inv = np.unique(key, return_inverse=True)
    mean = np.bincount(inv, weights=vals) / np.bincount(inv)
    return float(np.abs(vals - mean[inv]).max() / np.abs(vals).max())


# ---------------------------------------------------------------------------
# radial shooting oracle


def _bisect_shoot(ds, s_max, lo=0.5, hi=10.0, iters=200):
    st_lo, _ = kernels.radial_shoot(lo, ds, s_max)
    st_hi, _ = kernels.radial_shoot(hi, ds, s_max)
    for _ in range(40):
        if st_lo == 1:
            break
        lo *= 0.5
        st_lo, _ = kernels.radial_shoot(lo, ds, s_max)
    for _ in range(40):
        if st_hi == -1:
            break
        hi *= 2.0
        st_hi, _ = kernels.radial_shoot(hi, ds, s_max)
    if st_lo != 1 or st_hi != -1:
        raise ConvergenceError("shooting bracket not found")
    best = None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        st, out = kernels.radial_shoot(mid, ds, s_max)
        if best is None or out[-1, 0] >= best[-1, 0]:
            best = out
        if st == 1:
            lo = mid
        elif st == -1:
            hi = mid
        else:
            best = out
            break
    return 0.5 * (lo + hi), best


def radial_shooting_oracle(s_max: float = 16.0, ds: float = 1e-3) -> RadialProfile:
    """Radial ground-state profile ``r0(s)`` by shooting.

    Writes ``Phi0 - 1 = q`` and integrates
    ``r'' + 2r'/s = -2 q r``, ``q'' + 2q'/s = -4 pi r^2`` from ``r(0) = 1``,
    bisecting on ``q(0)`` until the solution neither crosses zero nor turns
    up. The scaling ``r -> b^2 r(b s)``, ``q -> b^2 q(b s)`` then enforces
    ``q(inf) = -1``. The profile is returned on ``[0, min(s_max, s_valid)]``
    where ``s_valid`` is how far the double-precision shot stays on the
    decaying branch.
    """
    if not ds <= 1e-3 * s_max * (1 + 1e-12):
        raise ValueError("ds must be <= 1e-3 * s_max")
    # first pass for the length scale, second pass with the physical step ds
    scale = 1.0
    for _ in range(2):
        _, out = _bisect_shoot(ds * scale, s_max * scale * 1.5 + 10)
        s, r, q, qp = out[:, 0], out[:, 1], out[:, 3], out[:, 4]
        # q + s q' is constant outside the (exponentially small) density
        j = len(s) - 1 - int(0.05 * len(s))
        q_inf = q[j] + s[j] * qp[j]
        scale = math.sqrt(-1.0 / q_inf)
    s_true = s / scale
    r_true = r * scale * scale
    keep = s_true <= s_max
    s_true, r_true = s_true[keep], r_true[keep]
    # last few points before the divergence point are contaminated
    cut = np.argmax(np.diff(r_true) >= 0) if np.any(np.diff(r_true) >= 0) else len(r_true)
    return RadialProfile(s_true[:cut], r_true[:cut])


def radial_mass(profile: RadialProfile) -> float:
    """``4 pi int r0^2 s^2 ds`` by the trapezoidal rule."""
    return float(4 * np.pi * np.trapezoid(profile.r**2 * profile.s**2, profile.s))


# ---------------------------------------------------------------------------
# decay


def decay_report(state: GroundState | RadialProfile, window=None) -> DecayReport:
    """Tail fit of the radial profile.

    ``slope_estimate`` is the least-squares slope of ``log r0`` over the
    window (the limit of ``r0'/r0``); ``lambda0_estimate`` is the window
    mean of ``r0(s) e^s s``. ``asymptotic_rate`` and ``power_correction``
    come from the fit ``log r0 = c - kappa s + a log s``.

    The default window is where ``r0 / r0(0)`` lies in ``[1e-7, 1e-3]`` and
    ``s < 0.4 L`` on a grid state.
    """
    prof = state.radial_profile if isinstance(state, GroundState) else state
    s, r = prof.s, prof.r
    r_peak = r[0]
    if window is None:
        rel = r / r_peak
        s_lim = 0.4 * state.grid.box_length if isinstance(state, GroundState) else s[-1]
        ok = (rel <= 1e-3) & (rel >= 1e-7) & (s <= s_lim)
        if ok.sum() < 5:
            raise ValueError("no resolved tail window")
        window = (float(s[ok].min()), float(s[ok].max()))
    s1, s2 = window
    sel = (s >= s1) & (s <= s2)
    if sel.sum() < 5:
        raise ValueError("fit window holds too few samples")
    if np.any(r[sel] <= 1e-14 * r_peak):
        raise ValueError("fit window reaches round-off level values")
    ss, lr = s[sel], np.log(r[sel])
    slope = float(np.polyfit(ss, lr, 1)[0])
    lam0 = float(np.mean(r[sel] * np.exp(ss) * ss))
    A = np.column_stack([np.ones_like(ss), -ss, np.log(ss)])
    coef = np.linalg.lstsq(A, lr, rcond=None)[0]
    return DecayReport(lam0, slope, (s1, s2), float(coef[1]), float(coef[2]))


# ---------------------------------------------------------------------------
# binary field files

_MAGIC = b"NSFIELD1"
_HEADER = struct.Struct("<8sii7d")


def save_field(path, values: np.ndarray, grid: Grid3, *, mass=0.0, multiplier=0.0, residual=0.0, time=0.0):
    """Write ``values`` with header ``n, L, R, mass, multiplier, residual, time``.

    Payload is little-endian float64; complex fields are stored as
    interleaved real/imaginary pairs.
    """
    path = Path(path)
    ncomp = 2 if np.iscomplexobj(values) else 1
    hdr = _HEADER.pack(
        _MAGIC, grid.n, ncomp, grid.box_length, grid.truncation_radius, 0.0, mass, multiplier, residual, time
    )
    data = np.ascontiguousarray(values)
    if ncomp == 2:
        data = data.astype("<c16").view("<f8")
    else:
        data = data.astype("<f8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(hdr)
        fh.write(data.tobytes())
    os.replace(tmp, path)


def load_field(path, grid: Grid3 | None = None):
    """Read a field file; returns ``(values, header dict)``.

    Raises :class:`CacheMismatchError` if ``grid`` is given and disagrees.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n, ncomp, L, R, _, m, lam, res, t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CacheMismatchError(f"{path}: not a field file")
    header = dict(n=n, ncomp=ncomp, box_length=L, truncation_radius=R, mass=m, multiplier=lam, residual=res, time=t)
    if grid is not None and (n != grid.n or L != grid.box_length or R != grid.truncation_radius):
        raise CacheMismatchError(f"{path}: cached grid (n={n}, L={L}, R={R}) does not match {grid}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if ncomp == 2:
        values = data.view("<c16").reshape((n, n, n)).astype(complex)
    else:
        values = data.reshape((n, n, n)).astype(float)
    return values, header


def cache_dir() -> Path:
    d = os.environ.get("NEWTON_SOLITON_CACHE")
    return Path(d) if d else Path.home() / ".cache" / "newton_soliton"


def cache_path(grid: Grid3, tol: float) -> Path:
    return cache_dir() / f"ground_n{grid.n}_L{grid.box_length:g}_R{grid.truncation_radius:g}_tol{tol:g}.bin"


def load_or_compute(grid: Grid3, tol: float = 1e-10, *, rebuild: bool = False, path=None, **kwargs) -> GroundState:
    """Ground state from the cache, computing and storing it if absent.

    A cache file whose header disagrees with ``grid`` raises
    :class:`CacheMismatchError` unless ``rebuild`` is set.
    """
    path = Path(path) if path is not None else cache_path(grid, tol)
    if path.exists() and not rebuild:
        values, hdr = load_field(path, grid)
        st = _make_state(grid, values, hdr["multiplier"])
        return GroundState(st.field, st.radial_profile, st.mass, hdr["multiplier"], st.residual_l2)
    state = compute_ground_state(grid, tol, **kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_field(
        path, state.values, grid, mass=state.mass, multiplier=state.multiplier, residual=state.residual_l2
    )
    return state


def ground_energy(state: GroundState) -> float:
    return energy(state.field, check_tail=False)
