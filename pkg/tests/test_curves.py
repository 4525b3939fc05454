import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfje.curves import PiecewiseLinear


def test_constant_curve():
    c = PiecewiseLinear.constant(3.5)
    assert c(-10.0) == 3.5
    assert c(0.0) == 3.5
    assert c(100.0) == 3.5
    assert c.max_abs() == 3.5


def test_from_knots_scalar_and_pairs():
    assert PiecewiseLinear.from_knots(2.0)(7.0) == 2.0
    c = PiecewiseLinear.from_knots([(0.0, 1.0), (1.0, 3.0)])
    assert c(0.5) == pytest.approx(2.0)


def test_clamped_outside_knot_range():
    c = PiecewiseLinear.from_knots([(0.0, 1.0), (1.0, 3.0)])
    assert c(-5.0) == 1.0
    assert c(5.0) == 3.0


def test_interpolation_exact_at_knots():
    times = [0.0, 0.5, 2.0]
    values = [1.0, -2.0, 4.0]
    c = PiecewiseLinear(np.array(times), np.array(values))
    for t, v in zip(times, values):
        assert c(t) == v


def test_vectorized_call():
    c = PiecewiseLinear.from_knots([(0.0, 0.0), (1.0, 1.0)])
    out = c(np.array([0.0, 0.25, 1.0]))
    assert np.allclose(out, [0.0, 0.25, 1.0])


def test_integral_exact_trapezoid():
    c = PiecewiseLinear.from_knots([(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)])
    # triangle of area 1 plus rectangle of area 2
    assert c.integral(0.0, 2.0) == pytest.approx(3.0, abs=1e-14)
    # sub-interval crossing a knot
    # 2t on [0.5, 1] gives 0.75; the constant 2 on [1, 1.5] gives 1.0
    assert c.integral(0.5, 1.5) == pytest.approx(1.75, abs=1e-12)


def test_integral_of_constant():
    c = PiecewiseLinear.constant(2.0)
    assert c.integral(1.0, 4.0) == pytest.approx(6.0, abs=1e-14)


def test_rejects_unsorted_times():
    with pytest.raises(ValueError):
        PiecewiseLinear(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=6),
       st.floats(0, 1))
def test_values_within_knot_range(values, frac):
    times = np.linspace(0.0, 1.0, len(values))
    c = PiecewiseLinear(times, np.array(values))
    v = c(float(frac))
    assert min(values) - 1e-12 <= v <= max(values) + 1e-12


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=5),
       st.floats(0.1, 0.9))
def test_integral_additivity(values, split):
    times = np.linspace(0.0, 1.0, len(values))
    c = PiecewiseLinear(times, np.array(values))
    whole = c.integral(0.0, 1.0)
    parts = c.integral(0.0, split) + c.integral(split, 1.0)
    assert whole == pytest.approx(parts, abs=1e-9)
