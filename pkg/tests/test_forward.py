import numpy as np
import pytest

from mfje.forward import (StabilityError, build_generator, flow_to_rows,
                          solve_linear_forward, solve_nonlinear_forward)
from mfje.kernel import (DestinationKernel, MeasureSnapshot, StateSpace,
                         jd_to_js)
from mfje.presets import sird_spec
from tests.conftest import constant_rate_kernel


def _four_state_kernel(table):
    space = StateSpace.finite([[1.0], [2.0], [3.0], [4.0]])
    dk = DestinationKernel(space=space, rates=lambda t, rho: table,
                           c_lambda=float(table.sum(axis=1).max()), c_r=9.0,
                           q=2.0, c_mu=0.0, measure_dependent=False)
    return jd_to_js(dk)


# ---------------------------------------------------------------------------
# generator construction


def test_generator_row_from_destination_rates():
    table = np.zeros((4, 4))
    table[0, 1] = 0.3
    table[0, 3] = 0.1
    kern = _four_state_kernel(table)
    Q = build_generator(kern, None, 0.0)
    np.testing.assert_allclose(Q[0], [-0.4, 0.3, 0.0, 0.1], atol=1e-15)


def test_generator_zero_kernel():
    kern = _four_state_kernel(np.zeros((4, 4)))
    Q = build_generator(kern, None, 0.0)
    np.testing.assert_array_equal(Q, np.zeros((4, 4)))


def test_generator_rows_sum_to_zero():
    spec = sird_spec({})
    rho = MeasureSnapshot.from_pmf(spec.space, spec.initial_pmf, 0.0)
    Q = build_generator(spec.kernel(), rho, 0.2)
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)


def test_generator_rejects_negative_rates():
    table = np.zeros((4, 4))
    table[1, 2] = -0.5
    kern = _four_state_kernel(np.abs(table))
    kern.finite_rates = lambda t, rho: table
    with pytest.raises(ValueError, match="negative rate"):
        build_generator(kern, None, 0.0)


# ---------------------------------------------------------------------------
# linear solver


def test_constant_flow_under_zero_kernel(two_state_space):
    kern = constant_rate_kernel(0.0, two_state_space)
    flow = solve_linear_forward(kern, None, [1.0, 0.0],
                                np.linspace(0, 1, 11))
    for snap in flow.snapshots:
        np.testing.assert_allclose(snap.probs, [1.0, 0.0], atol=1e-15)


def test_exponential_decay_oracle(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    grid = np.linspace(0.0, 1.0, 1001)
    flow = solve_linear_forward(kern, None, [1.0, 0.0], grid)
    assert flow.snapshots[-1].probs[0] == pytest.approx(np.exp(-0.5),
                                                        abs=1e-8)


def test_step_halving_fourth_order(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    exact = np.exp(-0.5)

    def err(n):
        grid = np.linspace(0.0, 1.0, n + 1)
        flow = solve_linear_forward(kern, None, [1.0, 0.0], grid)
        return abs(flow.snapshots[-1].probs[0] - exact)

    ratio = err(10) / err(20)
    assert 8.0 <= ratio <= 32.0


def test_superposition_of_initial_conditions():
    spec = sird_spec({"beta1": 0.0})
    kern = spec.kernel()
    grid = np.linspace(0.0, 1.0, 101)
    zeta = np.array([0.4, 0.3, 0.2, 0.1])
    mixed = solve_linear_forward(kern, None, zeta, grid).pmf_matrix()
    parts = np.zeros_like(mixed)
    for i in range(4):
        delta = np.zeros(4)
        delta[i] = 1.0
        parts += zeta[i] * solve_linear_forward(kern, None, delta,
                                                grid).pmf_matrix()
    np.testing.assert_allclose(mixed, parts, atol=1e-9)


def test_measure_dependent_kernel_needs_flow():
    spec = sird_spec({})
    with pytest.raises(ValueError, match="frozen flow"):
        solve_linear_forward(spec.kernel(), None, spec.initial_pmf,
                             np.linspace(0, 1, 101))


# ---------------------------------------------------------------------------
# non-linear solver


def test_nonlinear_reduces_to_linear_without_interaction():
    spec = sird_spec({"beta1": 0.0})
    kern = spec.kernel()
    grid = np.linspace(0.0, 1.0, 201)
    nl = solve_nonlinear_forward(kern, spec.initial_pmf, grid).pmf_matrix()
    lin = solve_linear_forward(kern, None, spec.initial_pmf,
                               grid).pmf_matrix()
    np.testing.assert_allclose(nl, lin, atol=1e-10)


def test_logistic_epidemic_oracle():
    spec = sird_spec({"beta1": 1.0, "recovery_rate": 0.0,
                      "death_rates": [0.0, 0.0, 0.0],
                      "initial_pmf": [0.9, 0.1, 0.0, 0.0],
                      "horizon": [0.0, 2.0]})
    grid = np.linspace(0.0, 2.0, 2001)
    flow = solve_nonlinear_forward(spec.kernel(), spec.initial_pmf, grid)
    i0 = 0.1
    exact = i0 / (i0 + (1 - i0) * np.exp(-2.0))
    assert flow.snapshots[-1].probs[1] == pytest.approx(exact, abs=1e-6)


def test_probabilities_stay_normalized():
    spec = sird_spec({})
    grid = np.linspace(0.0, 1.0, 501)
    flow = solve_nonlinear_forward(spec.kernel(), spec.initial_pmf, grid)
    mat = flow.pmf_matrix()
    assert np.all(mat >= 0.0)
    assert np.all(mat <= 1.0)
    np.testing.assert_allclose(mat.sum(axis=1), 1.0, atol=1e-8)


# ---------------------------------------------------------------------------
# guards and export


def test_coarse_grid_raises_stability_error(two_state_space):
    kern = constant_rate_kernel(10.0, two_state_space)
    with pytest.raises(StabilityError, match="use h <="):
        solve_linear_forward(kern, None, [1.0, 0.0], np.linspace(0, 1, 5))


def test_invalid_initial_pmf_rejected(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    with pytest.raises(ValueError):
        solve_linear_forward(kern, None, [0.7, 0.7], np.linspace(0, 1, 101))


def test_flow_to_rows_layout(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    flow = solve_linear_forward(kern, None, [1.0, 0.0],
                                np.linspace(0, 1, 11))
    rows = list(flow_to_rows(flow))
    assert len(rows) == 22
    t, label, p = rows[0]
    assert (t, label, p) == (0.0, "state1", 1.0)
