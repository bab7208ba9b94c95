import math

import numpy as np
import pytest

from newton_soliton import ground_state as gs
from newton_soliton.observables import energy
from newton_soliton.spectral import Field3, Grid3

# mass of the ground state from the radial shooting oracle (s_max = 16,
# ds = 1e-3); the 3D relaxation at n = 96 reproduces it to 4e-11
ORACLE_MASS = 2.4786424030
ORACLE_PEAK = 0.4075168


@pytest.fixture(scope="module")
def oracle():
    return gs.radial_shooting_oracle(16.0, 1e-3)


def test_oracle_positive_and_decreasing(oracle):
    assert np.all(oracle.r > 0)
    assert np.all(np.diff(oracle.r) < 0)
    assert oracle.s[-1] > 15.0


def test_oracle_mass_and_peak(oracle):
    assert gs.radial_mass(oracle) == pytest.approx(ORACLE_MASS, rel=1e-9)
    assert oracle.r[0] == pytest.approx(ORACLE_PEAK, rel=1e-6)


def test_oracle_step_restriction():
    with pytest.raises(ValueError):
        gs.radial_shooting_oracle(4.0, 1e-2)


def test_oracle_tail_rate_is_sqrt2(oracle):
    # log r0 = c - kappa s + a log s fitted on the tail; kappa is the
    # exponential rate of the unit-coefficient equation
    rep = gs.decay_report(oracle)
    assert rep.asymptotic_rate == pytest.approx(math.sqrt(2), rel=1e-2)
    assert rep.lambda0_estimate > 0


@pytest.mark.xfail(strict=True, reason="log-derivative tends to -sqrt(2) for this normalisation, not -1")
def test_oracle_log_derivative_near_minus_one(oracle):
    s0 = 0.8 * 16.0
    i = np.searchsorted(oracle.s, s0)
    ratio = np.gradient(oracle.r, oracle.s)[i] / oracle.r[i]
    assert -1.1 <= ratio <= -0.9


def test_grid_state_matches_oracle(ground64, oracle):
    st = ground64
    assert st.residual_l2 / math.sqrt(st.mass) < 1e-8
    assert st.multiplier == pytest.approx(1.0, abs=1e-8)
    prof = st.radial_profile
    inside = prof.s <= oracle.s[-1]
    diff = np.abs(prof.r[inside] - oracle(prof.s[inside])).max()
    assert diff / st.peak < 1e-3
    assert st.mass == pytest.approx(ORACLE_MASS, rel=1e-6)


def test_grid_state_shape(ground64):
    st = ground64
    r = st.values
    c = st.grid.n // 2
    # the only negative samples are the Nyquist-plane floor along the box faces
    assert r.min() > -1e-5 * r.max()
    assert st.peak == r.max() == r[c, c, c]
    assert gs.radial_symmetry_defect(st.field) < 1e-5
    prof = st.radial_profile.r
    resolved = prof > 1e-4 * prof[0]
    assert np.all(np.diff(prof[resolved]) < 0)


def test_refinement_consistency(ground48, ground64):
    assert ground48.mass == pytest.approx(ground64.mass, rel=2e-3)


def test_relax_fixed_point(ground32):
    g = ground32.grid
    res = gs.relax(g, ground32.mass, tol=1e-9)
    assert res.multiplier == pytest.approx(1.0, abs=1e-4)


def test_relax_energy_monotone_and_symmetric():
    g = Grid3(32, 24.0)
    res = gs.relax(g, 1.0, tol=1e-8)
    e = np.array(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * np.abs(e[:-1]))
    u = res.profile.values
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0)]:
        assert np.abs(np.transpose(u, perm) - u).max() < 1e-8 * u.max()
    # small mass, small multiplier
    assert 0 < res.multiplier < 1


def test_multiplier_scaling_law():
    # minimisers at masses M and 2M: lam grows like M^2
    g = Grid3(32, 24.0)
    lam1 = gs.relax(g, 1.0, tol=1e-8).multiplier
    lam2 = gs.relax(g, 2.0, tol=1e-8).multiplier
    assert math.log(lam2 / lam1) / math.log(2.0) == pytest.approx(2.0, abs=0.05)


def test_rescale_quarter_mass_minimiser():
    # lam(M) = (M/m)^2, so the rescaled quarter-mass minimiser carries mass m
    g = Grid3(48, 48.0)
    res = gs.relax(g, 0.25 * ORACLE_MASS, tol=1e-8)
    assert res.multiplier == pytest.approx(0.0625, rel=1e-2)
    st = gs.rescale_to_ground_state(res.profile, res.multiplier)
    assert st.mass == pytest.approx(ORACLE_MASS, rel=5e-3)


def test_rescale_identity_and_errors(ground32):
    st = gs.rescale_to_ground_state(ground32.field, 1.0)
    assert np.array_equal(st.values, ground32.values)
    assert st.residual_l2 < 1e-8
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            gs.rescale_to_ground_state(ground32.field, bad)


def test_relax_rejects_bad_input():
    g = Grid3(16, 12.0)
    with pytest.raises(ValueError):
        gs.relax(g, 1.0, tol=0.0)
    with pytest.raises(ValueError):
        gs.relax(g, -1.0)
    with pytest.raises(gs.ConvergenceError):
        gs.relax(g, 1.0, tol=1e-14, max_iter=3)


def test_ground_energy_negative(ground48):
    assert gs.ground_energy(ground48) < 0
    assert gs.ground_energy(ground48) == energy(ground48.field, check_tail=False)


def test_decay_report_on_grid_state(ground64):
    rep = gs.decay_report(ground64)
    assert rep.lambda0_estimate > 0
    assert rep.slope_estimate < 0
    with pytest.raises(ValueError):
        gs.decay_report(ground64, window=(2.0, 2.1))


def test_cache_round_trip_and_mismatch(tmp_path, ground32):
    path = tmp_path / "g.bin"
    gs.save_field(path, ground32.values, ground32.grid, mass=ground32.mass, multiplier=1.0)
    values, hdr = gs.load_field(path, ground32.grid)
    assert np.array_equal(values, ground32.values)
    assert hdr["mass"] == ground32.mass
    with pytest.raises(gs.CacheMismatchError):
        gs.load_field(path, Grid3(32, 20.0))
    with pytest.raises(gs.CacheMismatchError):
        gs.load_or_compute(Grid3(32, 20.0), path=path)


def test_complex_field_round_trip(tmp_path, rng):
    g = Grid3(8, 4.0)
    z = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    gs.save_field(tmp_path / "z.bin", z, g, time=1.5)
    back, hdr = gs.load_field(tmp_path / "z.bin", g)
    assert np.array_equal(back, z) and hdr["time"] == 1.5


def test_load_or_compute_is_deterministic(tmp_path):
    g = Grid3(32, 24.0)
    a = gs.load_or_compute(g, 1e-8, path=tmp_path / "a.bin")
    b = gs.load_or_compute(g, 1e-8, path=tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    c = gs.load_or_compute(g, 1e-8, path=tmp_path / "a.bin")
    assert np.array_equal(a.values, c.values) and np.array_equal(a.values, b.values)


def test_radial_average_exact_shells():
    g = Grid3(16, 8.0)
    f = Field3(g, np.exp(-g.radius() ** 2))
    prof = gs.radial_average(f)
    np.testing.assert_allclose(prof.r, np.exp(-prof.s**2), rtol=1e-14)
    assert gs.radial_symmetry_defect(f) < 1e-14
