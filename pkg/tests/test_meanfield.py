import numpy as np
import pytest

from mfje.errors import NonContractionError
from mfje.forward import solve_nonlinear_forward
from mfje.kernel import (DestinationKernel, MeasureSnapshot, StateSpace,
                         jd_to_js)
from mfje.meanfield import (linearised_transition, mix_transitions,
                            picard_solve, scalar_fixed_point_gamma)
from mfje.presets import gamma_claims_spec, sird_spec
from tests.conftest import constant_rate_kernel


def _sird_setup(model=None, points=201):
    spec = sird_spec(model or {})
    grid = np.linspace(spec.horizon[0], spec.horizon[1], points)
    initial = MeasureSnapshot.from_pmf(spec.space, spec.initial_pmf,
                                       spec.horizon[0])
    return spec, grid, initial


# ---------------------------------------------------------------------------
# Picard iteration


def test_measure_independent_converges_immediately(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    initial = MeasureSnapshot.from_pmf(two_state_space, [1.0, 0.0], 0.0)
    flow, log = picard_solve(kern, initial, np.linspace(0, 1, 101), 1e-10)
    assert len(log) == 2
    assert log[1].sup_w1_change == pytest.approx(0.0, abs=1e-14)


def test_picard_matches_nonlinear_solver():
    spec, grid, initial = _sird_setup(points=501)
    flow, _ = picard_solve(spec.kernel(), initial, grid, 1e-6)
    direct = solve_nonlinear_forward(spec.kernel(), spec.initial_pmf, grid)
    gap = np.max(np.abs(flow.pmf_matrix() - direct.pmf_matrix()))
    assert gap < 2e-6


def test_iteration_distances_contract():
    spec, grid, initial = _sird_setup()
    _, log = picard_solve(spec.kernel(), initial, grid, 1e-10)
    dists = [r.sup_w1_change for r in log]
    assert all(b < a for a, b in zip(dists[1:], dists[2:]))


def test_noncontraction_aborts_with_advice(two_state_space):
    # steep oscillatory feedback makes Picard iterates move apart
    def rates(t, rho):
        p2 = rho.mass_at([2.0]) if rho is not None else 0.0
        return np.array([[0.0, 30 * (0.5 + 0.5 * np.sin(25 * p2))],
                         [30 * (0.5 + 0.5 * np.cos(25 * p2)), 0.0]])

    dk = DestinationKernel(space=two_state_space, rates=rates, c_lambda=30.0,
                           c_r=1.0, q=2.0, c_mu=100.0, measure_dependent=True)
    kern = jd_to_js(dk)
    initial = MeasureSnapshot.from_pmf(two_state_space, [0.7, 0.3], 0.0)
    with pytest.raises(NonContractionError, match="shorten the horizon"):
        picard_solve(kern, initial, np.linspace(0, 1, 501), 1e-12,
                     max_iter=40)


def test_picard_rejects_nonpositive_tol(two_state_space):
    kern = constant_rate_kernel(0.5, two_state_space)
    initial = MeasureSnapshot.from_pmf(two_state_space, [1.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        picard_solve(kern, initial, np.linspace(0, 1, 11), 0.0)


# ---------------------------------------------------------------------------
# linearised transitions and mixtures


def test_absorbing_start_state_stays_put():
    spec, grid, initial = _sird_setup()
    flow, _ = picard_solve(spec.kernel(), initial, grid, 1e-8)
    lin = linearised_transition(spec.kernel(), flow, [4.0], grid)
    for snap in lin.snapshots:
        np.testing.assert_allclose(snap.probs, [0, 0, 0, 1.0], atol=1e-12)


def test_start_state_outside_space_rejected():
    spec, grid, initial = _sird_setup()
    flow, _ = picard_solve(spec.kernel(), initial, grid, 1e-8)
    with pytest.raises(ValueError, match="state space"):
        linearised_transition(spec.kernel(), flow, [7.0], grid)


def test_short_time_infection_mass_first_order():
    spec, _, initial = _sird_setup(points=1001)
    grid = np.linspace(0.0, 1.0, 1001)
    flow, _ = picard_solve(spec.kernel(), initial, grid, 1e-8)
    lin = linearised_transition(spec.kernel(), flow, [1.0], grid)
    t = 1e-3
    first_order = t * spec.beta1(0.0) * spec.initial_pmf[1]
    assert lin.pmf_at(t)[1] == pytest.approx(first_order, rel=0.1)


def test_mixture_of_transitions_recovers_cohort_flow():
    spec, grid, initial = _sird_setup()
    flow, _ = picard_solve(spec.kernel(), initial, grid, 1e-8)
    flows = [linearised_transition(spec.kernel(), flow, x, grid)
             for x in spec.space.points]
    mixed = mix_transitions(flows, spec.initial_pmf, grid)
    gap = np.max(np.abs(mixed.pmf_matrix() - flow.pmf_matrix()))
    assert gap < 1e-6


# ---------------------------------------------------------------------------
# scalar fixed point for the claims model


def test_no_feedback_converges_in_one_iteration():
    spec = gamma_claims_spec({})
    grid = np.linspace(0.0, 1.0, 101)
    fp = scalar_fixed_point_gamma(spec, grid, 1e-9, 20, 5000, [1])
    assert len(fp.iteration_log) == 2
    assert fp.iteration_log[1].sup_w1_change == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(fp.theta, spec.theta_star)


def test_wald_identity_oracle():
    spec = gamma_claims_spec({})
    grid = np.linspace(0.0, 1.0, 201)
    fp = scalar_fixed_point_gamma(spec, grid, 1e-6, 20, 20000, [2])
    w = fp.final_w
    se = w.std(ddof=1) / np.sqrt(w.size)
    target = spec.claim_rate * 1.0 * spec.alpha * spec.theta_star
    assert abs(w.mean() - target) <= 3 * se


def test_theta_curve_respects_clamps():
    spec = gamma_claims_spec({"weight_fn": 1.0})
    grid = np.linspace(0.0, 1.0, 51)
    rng = np.random.default_rng(0)
    for _ in range(20):
        m_bar = rng.uniform(-5.0, 50.0, size=grid.size)
        theta = spec.theta_curve(grid, m_bar)
        assert np.all(theta >= spec.theta_min - 1e-15)
        assert np.all(theta <= spec.theta_max + 1e-15)


def test_full_feedback_self_consistency():
    # u = 1 and a huge cap: converged theta must equal clamp(m_bar / alpha)
    # exactly, and the fixed-point identity holds within Monte Carlo error
    spec = gamma_claims_spec({"weight_fn": 1.0, "cap_K": 1e12,
                              "claim_rate": 10.0})
    grid = np.linspace(0.0, 1.0, 201)
    fp = scalar_fixed_point_gamma(spec, grid, 1e-5, 50, 20000, [5])
    clamped = np.clip(fp.m_bar / spec.alpha, spec.theta_min, spec.theta_max)
    np.testing.assert_allclose(fp.theta, clamped, atol=1e-15)
    h = np.where(fp.final_m > 0,
                 np.minimum(fp.final_w / np.maximum(fp.final_m, 1),
                            spec.cap_K), 0.0)
    se = h.std(ddof=1) / np.sqrt(h.size)
    assert abs(fp.m_bar[-1] - spec.alpha * fp.theta[-1]) <= 2 * se


def test_fixed_point_unpacks_as_triple():
    spec = gamma_claims_spec({})
    grid = np.linspace(0.0, 1.0, 21)
    m_bar, theta, flow = scalar_fixed_point_gamma(spec, grid, 1e-6, 10,
                                                  1000, [3])
    assert m_bar.shape == grid.shape
    assert theta.shape == grid.shape
    assert len(flow.snapshots) == grid.size
