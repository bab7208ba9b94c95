import numpy as np
import pytest

from newton_soliton import _fallback, kernels


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")
class TestCompiledMatchesFallback:
    def test_radial_shoot(self):
        for q0 in (1.0, 1.5, 3.0):
            s1, a = kernels.radial_shoot(q0, 1e-3, 10.0)
            s2, b = _fallback.radial_shoot(q0, 1e-3, 10.0)
            assert s1 == s2
            assert a.shape == b.shape
            assert np.allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_pair_interaction(self, rng):
        pa, pb = rng.normal(size=(200, 3)), rng.normal(size=(150, 3)) + 1.0
        wa, wb = rng.random(200), rng.random(150)
        assert kernels.pair_interaction(pa, wa, pb, wb) == pytest.approx(
            _fallback.pair_interaction(pa, wa, pb, wb), rel=1e-12
        )

    def test_apply_phase(self, rng):
        w = rng.normal(size=(8, 8, 8)) + 1j * rng.normal(size=(8, 8, 8))
        th = rng.normal(size=(8, 8, 8))
        a = kernels.apply_phase(w.copy(), th, 0.3)
        b = _fallback.apply_phase(w.copy(), th, 0.3)
        assert np.allclose(a, b, rtol=1e-14, atol=1e-15)


def test_pair_interaction_two_points():
    v = _fallback.pair_interaction(np.zeros((1, 3)), np.ones(1), np.array([[0.0, 0.0, 2.0]]), np.array([3.0]))
    assert v == pytest.approx(1.5)
    # coincident points are skipped
    assert _fallback.pair_interaction(np.zeros((1, 3)), np.ones(1), np.zeros((1, 3)), np.ones(1)) == 0.0


def test_apply_phase_is_unitary(rng):
    w = rng.normal(size=(6, 6, 6)) + 1j * rng.normal(size=(6, 6, 6))
    before = np.abs(w).copy()
    kernels.apply_phase(w, rng.normal(size=(6, 6, 6)), 1.7)
    assert np.allclose(np.abs(w), before, rtol=1e-14)
