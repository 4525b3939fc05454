import numpy as np
import pytest

from mfje.metrics import fournier_rate
from mfje.stats import clt_check, lln_check, rate_fit


# ---------------------------------------------------------------------------
# law of large numbers diagnostics


def test_lln_zero_error_when_samples_hit_target():
    rows = lln_check({10: np.full(50, 2.0), 100: np.full(50, 2.0)}, 2.0)
    assert all(r.l2_error == 0.0 for r in rows)


def test_lln_iid_one_over_n_scaling():
    rng = np.random.default_rng(1)
    samples = {n: rng.normal(0.0, 1.0 / np.sqrt(n), size=4000)
               for n in (10, 100, 1000)}
    rows = lln_check(samples, 0.0)
    slope, _, r2 = rate_fit([r.n for r in rows], [r.l2_error for r in rows])
    assert -1.3 <= slope <= -0.7
    assert r2 > 0.99


def test_lln_single_n_gives_one_row():
    rows = lln_check({50: np.array([1.0, 2.0, 3.0])}, 2.0)
    assert len(rows) == 1
    assert rows[0].ci_low <= rows[0].l2_error <= rows[0].ci_high


def test_lln_requires_samples():
    with pytest.raises(ValueError):
        lln_check({}, 0.0)


# ---------------------------------------------------------------------------
# central limit theorem diagnostics


def test_clt_passes_on_exact_normals():
    rng = np.random.default_rng(2)
    u1 = rng.uniform(size=10 ** 4)
    u2 = rng.uniform(size=10 ** 4)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    report = clt_check(z)
    assert report.passed
    assert not report.degenerate


def test_clt_flags_constant_samples_as_degenerate():
    report = clt_check(np.zeros(1000))
    assert report.degenerate
    assert not report.passed


def test_clt_detects_shifted_mean():
    rng = np.random.default_rng(3)
    report = clt_check(rng.normal(loc=1.0, size=10 ** 4))
    assert not report.flags["mean"]
    assert not report.passed


def test_clt_requires_enough_samples():
    with pytest.raises(ValueError):
        clt_check(np.random.default_rng(0).normal(size=50))


# ---------------------------------------------------------------------------
# log-log rate fitting


def test_rate_fit_exact_power_law():
    ns = np.array([10.0, 100.0, 1000.0])
    slope, intercept, r2 = rate_fit(ns, ns ** -0.5)
    assert slope == pytest.approx(-0.5, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_constant_sequence():
    slope, _, _ = rate_fit([10, 100, 1000], [2.0, 2.0, 2.0])
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_rate_fit_on_mixed_exponent_rate():
    ns = [100, 1000, 10000]
    ys = [fournier_rate(n, 1, 3.0) for n in ns]
    slope, _, _ = rate_fit(ns, ys)
    assert -0.67 < slope < -0.5


def test_rate_fit_needs_three_points():
    with pytest.raises(ValueError):
        rate_fit([10, 100], [1.0, 0.5])


def test_rate_fit_rejects_nonpositive_values():
    with pytest.raises(ValueError):
        rate_fit([10, 100, 1000], [1.0, 0.0, -1.0])
