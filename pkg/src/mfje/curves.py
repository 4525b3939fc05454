"""Piecewise-linear time curves used for rates, weights and discounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function given by knot times and values.

    Evaluation outside [times[0], times[-1]] clamps to the boundary value,
    which is the convention every rate/weight curve in this package uses.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("knot arrays must be 1-D, nonempty and equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinear":
        return cls(np.array([0.0]), np.array([float(value)]))

    @classmethod
    def from_knots(cls, knots) -> "PiecewiseLinear":
        """Build from a sequence of (time, value) pairs or a single scalar."""
        if np.isscalar(knots):
            return cls.constant(float(knots))
        arr = np.asarray(knots, dtype=float)
        if arr.ndim == 1 and arr.size == 1:
            return cls.constant(arr[0])
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("knots must be a scalar or a list of (t, value) pairs")
        return cls(arr[:, 0], arr[:, 1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b] (clamped-linear extension)."""
        if b < a:
            return -self.integral(b, a)
        # merge interval endpoints with interior knots; integrand is linear
        # between consecutive grid points so the trapezoid rule is exact
        inner = self.times[(self.times > a) & (self.times < b)]
        grid = np.concatenate(([a], inner, [b]))
        return float(np.trapezoid(self(grid), grid))
