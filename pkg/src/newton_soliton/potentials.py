"""External potentials ``V`` given analytically (value, gradient, Hessian).

Grid evaluation goes through :meth:`Potential.on_grid`; point evaluation
(for the Newtonian trajectory) through ``__call__`` and :meth:`grad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Potential:
    """Base class. Subclasses implement ``_value`` and ``_grad`` on arrays."""

    kind = "abstract"

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self._value(x[0], x[1], x[2]))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([float(c) for c in self._grad(x[0], x[1], x[2])])

    def hessian(self, x) -> np.ndarray:
        """Central-difference Hessian of the analytic gradient."""
        x = np.asarray(x, dtype=float)
        h = 1e-5
        H = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            H[:, j] = (self.grad(x + e) - self.grad(x - e)) / (2 * h)
        return 0.5 * (H + H.T)

    def on_grid(self, grid, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
        """Values at ``grid`` points shifted by ``offset``."""
        x1, x2, x3 = _shifted_mesh(grid, offset)
        return np.broadcast_to(self._value(x1, x2, x3), grid.shape).copy()

    def grad_on_grid(self, grid, offset=(0.0, 0.0, 0.0)):
        x1, x2, x3 = _shifted_mesh(grid, offset)
        return [np.broadcast_to(g, grid.shape).copy() for g in self._grad(x1, x2, x3)]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()})
        return d


def _shifted_mesh(grid, offset):
    x1, x2, x3 = grid.mesh()
    return x1 + offset[0], x2 + offset[1], x3 + offset[2]


@dataclass
class Constant(Potential):
    value: float = 0.0
    kind = "constant"

    def _value(self, x1, x2, x3):
        return self.value + 0.0 * (x1 + x2 + x3)

    def _grad(self, x1, x2, x3):
        z = 0.0 * (x1 + x2 + x3)
        return z, z, z


@dataclass
class Harmonic(Potential):
    """``0.5 * omega^2 |x - c|^2``."""

    omega: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    kind = "harmonic"

    def _value(self, x1, x2, x3):
        c = self.center
        return 0.5 * self.omega**2 * ((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2)

    def _grad(self, x1, x2, x3):
        c = self.center
        w2 = self.omega**2
        return w2 * (x1 - c[0]), w2 * (x2 - c[1]), w2 * (x3 - c[2])


@dataclass
class GaussianWell(Potential):
    """Inverted Gaussian ``-A exp(-|x - c|^2 / (2 s^2))``."""

    depth: float = 0.5
    width: float = 4.0
    center: tuple = (0.0, 0.0, 0.0)
    kind = "gaussian_well"

    def _value(self, x1, x2, x3):
        c = self.center
        r2 = (x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2
        return -self.depth * np.exp(-r2 / (2 * self.width**2))

    def _grad(self, x1, x2, x3):
        c = self.center
        s2 = self.width**2
        d = (x1 - c[0], x2 - c[1], x3 - c[2])
        v = -self.depth * np.exp(-(d[0] ** 2 + d[1] ** 2 + d[2] ** 2) / (2 * s2))
        return tuple(-v * dj / s2 for dj in d)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        s2 = self.width**2
        v = self(x)
        return -v / s2 * (np.eye(3) - np.outer(d, d) / s2)


@dataclass
class LinearRamp(Potential):
    """``g * x1`` (constant force ``-g e1``).

    On a grid the ramp is multiplied by a smooth window in the box-relative
    coordinate so that it returns to zero at the periodic boundary; the
    window equals 1 on ``|x1 - c1| < L/2 - window_width``, with
    ``window_width`` defaulting to ``L/8`` of whichever grid it is sampled
    on. Point evaluation is the bare ramp.
    """

    slope: float = 0.05
    window_width: float | None = None
    kind = "linear_ramp"

    def _value(self, x1, x2, x3):
        return self.slope * x1 + 0.0 * (x2 + x3)

    def _grad(self, x1, x2, x3):
        z = 0.0 * (x1 + x2 + x3)
        return self.slope + z, z, z

    def _window(self, grid):
        rel = np.abs(grid.axis)
        width = grid.box_length / 8 if self.window_width is None else self.window_width
        edge = 0.5 * grid.box_length - width
        t = np.clip((rel - edge) / width, 0.0, 1.0)
        # raised-cosine taper
        w = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, 0.5 * (1 + np.cos(np.pi * t))))
        dw = np.where((t > 0) & (t < 1), -0.5 * np.pi * np.sin(np.pi * t) / width, 0.0)
        return w, dw * np.sign(grid.axis)

    def on_grid(self, grid, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
        x1 = grid.axes()[0] + offset[0]
        w, _ = self._window(grid)
        return np.broadcast_to((self.slope * x1 * w)[:, None, None], grid.shape).copy()

    def grad_on_grid(self, grid, offset=(0.0, 0.0, 0.0)):
        x1 = grid.axes()[0] + offset[0]
        w, dw = self._window(grid)
        g1 = self.slope * (w + x1 * dw)
        z = np.zeros(grid.shape)
        return [np.broadcast_to(g1[:, None, None], grid.shape).copy(), z, z.copy()]


def from_dict(d: dict) -> Potential:
    """Build a potential from a config table (``kind`` plus parameters)."""
    d = dict(d)
    kind = d.pop("kind")
    table = {
        "constant": Constant,
        "zero": Constant,
        "harmonic": Harmonic,
        "gaussian_well": GaussianWell,
        "linear_ramp": LinearRamp,
    }
    if kind not in table:
        raise ValueError(f"unknown potential kind {kind!r}")
    for key in ("center",):
        if key in d:
            d[key] = tuple(float(c) for c in d[key])
    return table[kind](**d)
