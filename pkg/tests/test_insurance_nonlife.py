import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfje.insurance_nonlife import (GammaClaimsSpec, expected_claim_amount_n,
                                    h_K, meanfield_expected_claim)
from mfje.presets import gamma_claims_spec
from mfje.simulate import simulate_interacting


# ---------------------------------------------------------------------------
# capped average claim size


def test_h_K_no_claims():
    assert h_K(0.0, 0, 10.0) == 0.0


def test_h_K_below_cap():
    assert h_K(6.0, 3, 10.0) == 2.0


def test_h_K_cap_binds():
    assert h_K(100.0, 2, 10.0) == 10.0


def test_h_K_vectorized():
    out = h_K(np.array([0.0, 6.0, 100.0]), np.array([0, 3, 2]), 10.0)
    np.testing.assert_allclose(out, [0.0, 2.0, 10.0])


@given(st.floats(0, 1000), st.integers(0, 50), st.floats(0.1, 100))
def test_h_K_bounded_by_cap(w, m, K):
    assert 0.0 <= h_K(w, m, K) <= K


# ---------------------------------------------------------------------------
# spec validation


def test_theta_ordering_error_names_fields():
    with pytest.raises(ValueError, match="theta_min.*theta_max"):
        GammaClaimsSpec(alpha=2.0, theta_star=0.5, theta_min=2.0,
                        theta_max=1.0, cap_K=10.0, claim_rate=1.0)


def test_weight_fn_must_stay_in_unit_interval():
    from mfje.errors import ConfigError
    with pytest.raises(ConfigError, match="weight_fn"):
        gamma_claims_spec({"weight_fn": 2.0})


def test_covariate_law_must_be_pmf():
    from mfje.errors import ConfigError
    with pytest.raises(ConfigError, match="covariate_law"):
        gamma_claims_spec({"covariate_law": [[0.0, 0.5], [1.0, 0.6]]})


def test_theta_of_blends_and_clamps():
    spec = gamma_claims_spec({"weight_fn": 0.5})
    # u=0.5: 0.5 * m/alpha + 0.5 * theta_star
    assert spec.theta_of(0.0, 2.0) == pytest.approx(0.5 * 1.0 + 0.5 * 0.5)
    assert spec.theta_of(0.0, 1e9) == spec.theta_max
    assert spec.theta_of(0.0, 0.0) == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# simulated path structure


def test_claim_paths_monotone_counts_and_amounts():
    spec = gamma_claims_spec({})
    ens = simulate_interacting(spec.kernel(), np.zeros((10, 2)), (0.0, 1.0),
                               [31, 0])
    for path in ens.paths:
        w_prev, m_prev = 0.0, 0.0
        for _, state in path.events:
            w, m = state
            assert w >= w_prev - 1e-12          # amounts never decrease
            assert m == m_prev + 1              # one claim per event
            w_prev, m_prev = w, m


# ---------------------------------------------------------------------------
# expected claim amounts


def test_zero_claim_rate_gives_zero():
    spec = gamma_claims_spec({"claim_rate": 0.0})
    est, se = expected_claim_amount_n(spec, 5, 10, rng=1)
    assert est == 0.0 and se == 0.0


def test_n_system_wald_oracle():
    spec = gamma_claims_spec({})
    est, se = expected_claim_amount_n(spec, 20, 500, rng=2)
    assert abs(est - 2.0) <= 3 * se


def test_single_individual_matches_meanfield():
    spec = gamma_claims_spec({})
    est, se = expected_claim_amount_n(spec, 1, 2000, rng=3)
    mf = meanfield_expected_claim(spec, n_particles=20000, rng=4)
    combined = np.hypot(se, mf.se)
    assert abs(est - mf.value) <= 3 * combined


def test_meanfield_wald_oracle():
    spec = gamma_claims_spec({})
    mf = meanfield_expected_claim(spec, n_particles=50000, rng=5)
    assert abs(mf.value - 2.0) <= 3 * mf.se


def test_point_mass_covariate_single_stratum():
    spec = gamma_claims_spec({"covariate_law": [[0.7, 1.0]]})
    mf = meanfield_expected_claim(spec, n_particles=2000, rng=6)
    assert set(mf.by_covariate) == {0.7}
    value, _ = mf.by_covariate[0.7]
    assert value == pytest.approx(mf.value, abs=1e-12)
