"""Compound claims with credibility-coupled Gamma severities.

Each individual carries a state (w, m): cumulative claim amount and claim
count.  Claims arrive at a constant rate; severities are Gamma(alpha, theta)
where the scale blends the cohort's capped average claim size with a
benchmark theta_star through a time-varying weight, clamped to
[theta_min, theta_max].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from .curves import PiecewiseLinear
from .kernel import IntensityKernel, StateSpace
from .meanfield import scalar_fixed_point_gamma
from .simulate import simulate_interacting


def h_K(w, m, K):
    """Capped average claim size: 0 when no claims, else min(w/m, K)."""
    w = np.asarray(w, dtype=float)
    m = np.asarray(m)
    out = np.where(np.asarray(m) > 0,
                   np.minimum(w / np.maximum(m, 1), K), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class GammaClaimsSpec:
    """Parameters of the credibility-coupled claims model."""

    alpha: float
    theta_star: float
    theta_min: float
    theta_max: float
    cap_K: float
    claim_rate: float
    weight_fn: PiecewiseLinear = field(
        default_factory=lambda: PiecewiseLinear.constant(0.0))
    horizon: tuple = (0.0, 1.0)
    covariate_law: Optional[list] = None  # [(atom, prob), ...]

    def __post_init__(self):
        if not (0 < self.theta_min < self.theta_star < self.theta_max):
            raise ValueError(
                "need 0 < theta_min < theta_star < theta_max, got "
                f"theta_min={self.theta_min}, theta_star={self.theta_star}, "
                f"theta_max={self.theta_max}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.cap_K <= 0:
            raise ValueError("cap_K must be positive")
        if self.claim_rate < 0:
            raise ValueError("claim_rate must be nonnegative")
        if not callable(self.weight_fn):
            self.weight_fn = PiecewiseLinear.from_knots(self.weight_fn)
        tau, T = self.horizon
        u = np.asarray(self.weight_fn(np.linspace(tau, T, 101)))
        if np.any(u < 0) or np.any(u > 1):
            raise ValueError("weight_fn must take values in [0, 1]")
        if self.covariate_law is not None:
            probs = np.array([p for _, p in self.covariate_law], dtype=float)
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("covariate_law must be a finite pmf")

    # -- scale parameter ----------------------------------------------------

    def theta_of(self, t: float, m_bar: float) -> float:
        u = float(self.weight_fn(t))
        raw = u * m_bar / self.alpha + (1 - u) * self.theta_star
        return min(max(raw, self.theta_min), self.theta_max)

    def theta_curve(self, grid, m_bar_curve) -> np.ndarray:
        u = np.asarray(self.weight_fn(grid))
        raw = u * np.asarray(m_bar_curve) / self.alpha + \
            (1 - u) * self.theta_star
        return np.clip(raw, self.theta_min, self.theta_max)

    def m_bar(self, snapshot) -> float:
        """Capped average claim size under a (w, m) snapshot, memoized."""
        def compute(s):
            return float(np.dot(s.weights,
                                h_K(s.points[:, 0], s.points[:, 1],
                                    self.cap_K)))
        return snapshot.cached("m_bar", compute)

    def sample_covariates(self, n: int, rng) -> Optional[np.ndarray]:
        if self.covariate_law is None:
            return None
        atoms = np.array([a for a, _ in self.covariate_law], dtype=float)
        probs = np.array([p for _, p in self.covariate_law], dtype=float)
        return rng.choice(atoms, size=n, p=probs / probs.sum())

    @property
    def measure_dependent(self) -> bool:
        return float(np.max(np.abs(self.weight_fn(
            np.linspace(*self.horizon, 101))))) > 0

    # -- kernel -------------------------------------------------------------

    def kernel(self) -> IntensityKernel:
        """Intensity kernel on the (w, m) state space.

        The jump adds (severity, 1); the severity quantile makes the mark
        monotone in a single uniform, so the comonotone coupling applies.
        """
        space = StateSpace.box(2, lower=[0.0, 0.0])
        spec = self

        def theta_at(t, rho):
            m_bar = 0.0 if rho is None else spec.m_bar(rho)
            return spec.theta_of(t, m_bar)

        def rate(t, x, rho):
            return spec.claim_rate

        def mark_sampler(t, x, rho, rng):
            return np.array([rng.gamma(spec.alpha, theta_at(t, rho)), 1.0])

        def mark_quantile(t, x, rho, u):
            z = sps.gamma.ppf(u, spec.alpha, scale=theta_at(t, rho))
            return np.array([z, 1.0])

        # q-th severity moment is alpha(alpha+1)...(alpha+q-1) theta^q; the
        # count component adds 1 to the l1 norm, bounded via (a+b)^q <= 2^(q-1)(a^q+b^q)
        q = 2.0
        sev_q = spec.alpha * (spec.alpha + 1) * spec.theta_max ** 2
        return IntensityKernel(
            rate=rate,
            mark_sampler=mark_sampler,
            mark_quantile=mark_quantile,
            c_lambda=spec.claim_rate,
            c_r=2.0 * (sev_q + 1.0),
            q=q,
            c_mu=spec.claim_rate * max(1.0, 1.0 / spec.alpha),
            measure_dependent=spec.measure_dependent,
            space=space,
        )


# ---------------------------------------------------------------------------
# expected claim amounts


def expected_claim_amount_n(spec: GammaClaimsSpec, n: int, replications: int,
                            horizon=None, rng=0):
    """Monte Carlo estimate of E[W_T] for individual 1 in the n-system."""
    if n < 1:
        raise ValueError("n must be >= 1")
    horizon = horizon or spec.horizon
    kern = spec.kernel()
    key = [rng] if np.isscalar(rng) else list(rng)
    initials = np.zeros((n, 2))
    T = horizon[1]
    values = np.empty(replications)
    for r in range(replications):
        ens = simulate_interacting(kern, initials, horizon, key + [r])
        values[r] = ens.paths[0].state_at(T)[0]
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(replications)) \
        if replications > 1 else 0.0
    return mean, se


@dataclass
class MeanfieldClaimReport:
    value: float
    se: float
    by_covariate: Optional[dict]
    fixed_point: object


def meanfield_expected_claim(spec: GammaClaimsSpec, grid=None, tol: float = 1e-4,
                             n_particles: int = 10 ** 5, rng=0,
                             max_iter: int = 50) -> MeanfieldClaimReport:
    """Mean-field E[W_T] from the scalar fixed point of the m_bar curve."""
    if grid is None:
        grid = np.linspace(*spec.horizon, 201)
    fp = scalar_fixed_point_gamma(spec, grid, tol, max_iter, n_particles, rng)
    value = float(fp.final_w.mean())
    se = float(fp.final_w.std(ddof=1) / np.sqrt(fp.final_w.size))
    by_cov = None
    if fp.covariates is not None:
        by_cov = {}
        for atom in np.unique(fp.covariates):
            sel = fp.covariates == atom
            stratum = fp.final_w[sel]
            by_cov[float(atom)] = (
                float(stratum.mean()),
                float(stratum.std(ddof=1) / np.sqrt(stratum.size))
                if stratum.size > 1 else 0.0)
    return MeanfieldClaimReport(value, se, by_cov, fp)
