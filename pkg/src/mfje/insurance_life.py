"""Four-state epidemic life model with payments and reserves.

States are embedded as the reals 1 (susceptible), 2 (infected),
3 (recovered), 4 (dead).  The infection rate is beta1(t) times the infected
fraction of the cohort, which makes the model measure dependent; recovery
and death rates are plain time curves.  Reserves are computed by the
forward method: solve the non-linear law flow, solve the per-start-state
linearised flows, and integrate discounted expected payments forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import stats as statsmod
from .curves import PiecewiseLinear
from .forward import solve_nonlinear_forward
from .kernel import DestinationKernel, IntensityKernel, StateSpace, jd_to_js
from .meanfield import linearised_transition
from .simulate import Ensemble, JumpPath, simulate_interacting

STATE_LABELS = ["susceptible", "infected", "recovered", "dead"]


def _curve(value) -> PiecewiseLinear:
    return value if isinstance(value, PiecewiseLinear) \
        else PiecewiseLinear.from_knots(value)


@dataclass
class SirdSpec:
    """Rates and initial distribution of the four-state epidemic model."""

    beta1: PiecewiseLinear
    recovery_rate: PiecewiseLinear
    death_rates: tuple  # curves for states 1, 2, 3
    initial_pmf: np.ndarray
    horizon: tuple = (0.0, 1.0)

    def __post_init__(self):
        self.beta1 = _curve(self.beta1)
        self.recovery_rate = _curve(self.recovery_rate)
        self.death_rates = tuple(_curve(c) for c in self.death_rates)
        if len(self.death_rates) != 3:
            raise ValueError("death_rates needs one curve per live state")
        for c in (self.beta1, self.recovery_rate, *self.death_rates):
            if np.any(c.values < 0):
                raise ValueError("rate curves must be nonnegative")
        p = np.asarray(self.initial_pmf, dtype=float)
        if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("initial_pmf must be a probability vector on 4 states")
        self.initial_pmf = p
        self.space = StateSpace.finite([[1.0], [2.0], [3.0], [4.0]],
                                       labels=STATE_LABELS)

    @property
    def measure_dependent(self) -> bool:
        return self.beta1.max_abs() > 0

    @property
    def time_homogeneous(self) -> bool:
        return all(c.values.size == 1 or np.ptp(c.values) == 0
                   for c in (self.beta1, self.recovery_rate,
                             *self.death_rates))

    def infected_fraction(self, rho) -> float:
        def compute(s):
            if s.is_pmf:
                return float(s.probs[1])
            return float(np.dot(s.weights, s.points[:, 0] == 2.0))
        return 0.0 if rho is None else rho.cached("infected_fraction", compute)

    def rate_table(self, t: float, rho) -> np.ndarray:
        table = np.zeros((4, 4))
        table[0, 1] = float(self.beta1(t)) * self.infected_fraction(rho)
        table[0, 3] = float(self.death_rates[0](t))
        table[1, 2] = float(self.recovery_rate(t))
        table[1, 3] = float(self.death_rates[1](t))
        table[2, 3] = float(self.death_rates[2](t))
        return table

    @property
    def c_lambda(self) -> float:
        exit_1 = self.beta1.max_abs() + self.death_rates[0].max_abs()
        exit_2 = self.recovery_rate.max_abs() + self.death_rates[1].max_abs()
        exit_3 = self.death_rates[2].max_abs()
        return max(exit_1, exit_2, exit_3)

    def destination_kernel(self) -> DestinationKernel:
        return DestinationKernel(
            space=self.space,
            rates=self.rate_table,
            c_lambda=self.c_lambda,
            c_r=9.0,  # largest jump is 3 states down to dead; q = 2
            q=2.0,
            c_mu=self.beta1.max_abs(),
            measure_dependent=self.measure_dependent,
        )

    def kernel(self) -> IntensityKernel:
        return jd_to_js(self.destination_kernel())

    def initial_sampler(self):
        points = self.space.points
        pmf = self.initial_pmf

        def sample(rng):
            return points[rng.choice(4, p=pmf)]
        return sample


# ---------------------------------------------------------------------------
# payments


@dataclass
class PaymentStream:
    """Sojourn payment rates, transition lump sums, and discounting.

    General form: ``sojourn(t, x)`` and ``transition(t, x_pre, z)`` callables
    plus a short-rate curve.  Streams built from per-state tables keep the
    tables around so present values of finite-state paths can be computed in
    closed form.
    """

    sojourn: callable
    transition: Optional[callable] = None
    discount: PiecewiseLinear = field(
        default_factory=lambda: PiecewiseLinear.constant(0.0))
    sojourn_table: Optional[np.ndarray] = None
    transition_table: Optional[np.ndarray] = None
    space: Optional[StateSpace] = None

    def __post_init__(self):
        self.discount = _curve(self.discount)

    @property
    def flat_rate(self) -> Optional[float]:
        vals = self.discount.values
        if vals.size == 1 or np.ptp(vals) == 0:
            return float(vals[0])
        return None

    def accumulated_rate(self, tau, t):
        """Integral of the short rate from tau to t (t may be an array)."""
        r = self.flat_rate
        if r is not None:
            return r * (np.asarray(t, dtype=float) - tau)
        if np.isscalar(t):
            return self.discount.integral(tau, float(t))
        return np.array([self.discount.integral(tau, float(v)) for v in t])

    def discount_integral(self, tau, a, b, panels: int = 64):
        """Integral of exp(-R(t)) over [a, b] (exact for a flat rate)."""
        r = self.flat_rate
        if r is not None:
            if r == 0:
                return np.asarray(b, dtype=float) - a
            return (np.exp(-r * (np.asarray(a, dtype=float) - tau)) -
                    np.exp(-r * (np.asarray(b, dtype=float) - tau))) / r
        ts = np.linspace(a, b, 2 * panels + 1)
        vals = np.exp(-self.accumulated_rate(tau, ts))
        h = (b - a) / (2 * panels)
        return float(h / 3 * (vals[0] + vals[-1] + 4 * vals[1::2].sum()
                              + 2 * vals[2:-1:2].sum()))

    @classmethod
    def per_state(cls, space: StateSpace, sojourn_values,
                  transition_values=None, discount=0.0) -> "PaymentStream":
        sv = np.asarray(sojourn_values, dtype=float)
        tv = None if transition_values is None \
            else np.asarray(transition_values, dtype=float)

        def sojourn(t, x):
            return float(sv[space.index_of(x)])

        transition = None
        if tv is not None:
            def transition(t, x_pre, z):
                i = space.index_of(x_pre)
                j = space.index_of(np.atleast_1d(x_pre) + np.atleast_1d(z))
                return float(tv[i, j])

        return cls(sojourn, transition, _curve(discount),
                   sojourn_table=sv, transition_table=tv, space=space)

    @classmethod
    def premium_benefit(cls, space: StateSpace, premium: float,
                        benefit: float, discount=0.0) -> "PaymentStream":
        """Premium paid while susceptible, benefit received while infected."""
        values = np.zeros(space.n_points)
        values[0] = -premium
        values[1] = benefit
        return cls.per_state(space, values, discount=discount)


def present_value(path: JumpPath, payments: PaymentStream,
                  tau: float = None) -> float:
    """Discounted payments along one path.

    Sojourn payments are integrated exactly for per-state tables under a
    flat rate, otherwise by composite Simpson within each constant-state
    interval; transition payments are discounted lump sums at event times.
    """
    tau = path.horizon[0] if tau is None else tau
    T = path.horizon[1]
    exact = (payments.sojourn_table is not None
             and payments.flat_rate is not None
             and payments.space is not None)
    total = 0.0
    t_prev = tau
    state = path.initial
    for et, new_state in path.events + [(T, None)]:
        et = min(et, T)
        if et > t_prev:
            if exact:
                rate = payments.sojourn_table[payments.space.index_of(state)]
                total += rate * payments.discount_integral(tau, t_prev, et)
            else:
                n_panels = max(4, int(np.ceil((et - t_prev) * 32)))
                ts = np.linspace(t_prev, et, 2 * n_panels + 1)
                vals = np.array([payments.sojourn(t, state) for t in ts])
                vals = vals * np.exp(-payments.accumulated_rate(tau, ts))
                h = (et - t_prev) / (2 * n_panels)
                total += h / 3 * (vals[0] + vals[-1] + 4 * vals[1::2].sum()
                                  + 2 * vals[2:-1:2].sum())
        if new_state is not None:
            if payments.transition is not None:
                z = np.atleast_1d(new_state) - np.atleast_1d(state)
                total += payments.transition(et, state, z) * \
                    np.exp(-payments.accumulated_rate(tau, et))
            state = new_state
            t_prev = et
        else:
            break
        if et >= T:
            break
        t_prev = et
    return float(total)


# ---------------------------------------------------------------------------
# reserves


@dataclass
class ReserveReport:
    cohort: float
    se: Optional[float]
    statewise: Dict[str, Optional[float]]
    method: str
    metadata: dict = field(default_factory=dict)


def _payment_vector(spec: SirdSpec, payments: PaymentStream, t: float,
                    eta_bar) -> np.ndarray:
    """Expected payment rate per current state, transitions folded in."""
    pts = spec.space.points
    if payments.sojourn_table is not None:
        vec = payments.sojourn_table.astype(float).copy()
    else:
        vec = np.array([payments.sojourn(t, pts[i]) for i in range(4)])
    if payments.transition is not None:
        table = spec.rate_table(t, eta_bar)
        for i in range(4):
            for j in range(4):
                if j != i and table[i, j] > 0:
                    vec[i] += payments.transition(
                        t, pts[i], pts[j] - pts[i]) * table[i, j]
    return vec


def meanfield_reserves(spec: SirdSpec, payments: PaymentStream,
                       grid) -> ReserveReport:
    """Reserves by the forward method.

    Cohort value integrates discounted expected payments under the
    non-linear law flow; state-wise values do the same under the linearised
    transition flows from each start state, with the infection rate always
    evaluated at the cohort flow.
    """
    grid = np.asarray(grid, dtype=float)
    tau = grid[0]
    kern = spec.kernel()
    eta_bar = solve_nonlinear_forward(kern, spec.initial_pmf, grid)
    disc = np.exp(-payments.accumulated_rate(tau, grid))
    pay = np.stack([_payment_vector(spec, payments, t, eta_bar.at(t))
                    for t in grid])  # (M, 4)

    cohort_integrand = disc * np.einsum("ms,ms->m", eta_bar.pmf_matrix(), pay)
    cohort = float(np.trapezoid(cohort_integrand, grid))

    statewise: Dict[str, Optional[float]] = {}
    for i, label in enumerate(STATE_LABELS):
        tilde = linearised_transition(kern, eta_bar, spec.space.points[i],
                                      grid)
        integrand = disc * np.einsum("ms,ms->m", tilde.pmf_matrix(), pay)
        statewise[label] = float(np.trapezoid(integrand, grid))

    return ReserveReport(cohort, None, statewise, "forward-analytic",
                         {"grid_points": int(grid.size),
                          "horizon": [float(grid[0]), float(grid[-1])]})


def _statewise_from_pvs(initial_idx: np.ndarray, pvs: np.ndarray):
    out: Dict[str, Optional[float]] = {}
    for i, label in enumerate(STATE_LABELS):
        sel = initial_idx == i
        out[label] = float(pvs[sel].mean()) if np.any(sel) else None
    return out


def n_individual_reserves(spec: SirdSpec, payments: PaymentStream, n: int,
                          replications: int, rng=0,
                          estimator: str = "individual") -> ReserveReport:
    """Monte Carlo reserves in the n-individual system.

    estimator "individual" follows the first individual only; "cohort"
    averages present values over all n individuals of each replication
    (same expectation by exchangeability, smaller variance).  State-wise
    values condition on realized initial states and are reported as missing
    when a stratum is empty.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    key = [rng] if np.isscalar(rng) else list(rng)
    kern = spec.kernel()
    sampler = spec.initial_sampler()
    tau = spec.horizon[0]
    values = np.empty(replications)
    all_pvs: List[np.ndarray] = []
    all_idx: List[np.ndarray] = []
    for r in range(replications):
        ens = simulate_interacting(kern, sampler, spec.horizon, key + [r], n=n)
        if estimator == "cohort":
            pvs = np.array([present_value(p, payments, tau)
                            for p in ens.paths])
            idx = np.array([int(p.initial[0]) - 1 for p in ens.paths])
        else:
            pvs = np.array([present_value(ens.paths[0], payments, tau)])
            idx = np.array([int(ens.paths[0].initial[0]) - 1])
        values[r] = pvs.mean()
        all_pvs.append(pvs)
        all_idx.append(idx)
    pvs = np.concatenate(all_pvs)
    idx = np.concatenate(all_idx)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(replications)) \
        if replications > 1 else 0.0
    return ReserveReport(mean, se, _statewise_from_pvs(idx, pvs),
                         "monte-carlo",
                         {"n": n, "replications": replications,
                          "estimator": estimator})


# ---------------------------------------------------------------------------
# vectorized batch simulation for measure-independent homogeneous models


def _batch_pvs(spec: SirdSpec, payments: PaymentStream, n_paths: int,
               seed_key) -> tuple:
    """Present values of iid paths, fully vectorized via thinning.

    Requires a measure-independent, time-homogeneous spec and per-state
    payment tables with a flat discount rate.  Returns (pvs, initial_idx).
    """
    tau, T = spec.horizon
    table = spec.rate_table(tau, None)
    exit_rate = table.sum(axis=1)
    C = spec.c_lambda
    probs = table / C if C > 0 else np.zeros_like(table)
    np.fill_diagonal(probs, 0.0)
    stay = 1.0 - probs.sum(axis=1)
    cum = np.cumsum(np.column_stack([stay, probs]), axis=1)  # col 0 = no jump
    b = payments.sojourn_table
    r = payments.flat_rate

    def disc_int(a, bb):
        if r == 0:
            return bb - a
        return (np.exp(-r * (a - tau)) - np.exp(-r * (bb - tau))) / r

    rng = np.random.default_rng(seed_key)
    state = rng.choice(4, size=n_paths, p=spec.initial_pmf)
    initial_idx = state.copy()
    pv = np.zeros(n_paths)
    t = np.full(n_paths, tau)
    alive = np.arange(n_paths)
    # paths whose current state cannot jump collect their sojourn to T at once
    while alive.size:
        absorbed = exit_rate[state[alive]] <= 0
        if np.any(absorbed):
            ai = alive[absorbed]
            pv[ai] += b[state[ai]] * disc_int(t[ai], T)
            alive = alive[~absorbed]
            if alive.size == 0:
                break
        t_next = t[alive] + rng.exponential(1.0 / C, size=alive.size)
        over = t_next > T
        oi = alive[over]
        pv[oi] += b[state[oi]] * disc_int(t[oi], T)
        keep = alive[~over]
        t_next = t_next[~over]
        pv[keep] += b[state[keep]] * disc_int(t[keep], t_next)
        t[keep] = t_next
        u = rng.random(keep.size)
        choice = (u[:, None] >= cum[state[keep]]).sum(axis=1)
        jumped = choice > 0
        ji = keep[jumped]
        if ji.size:
            # column 0 of cum is "no jump", columns 1..4 are destinations
            new_state = choice[jumped] - 1
            if payments.transition_table is not None:
                pv[ji] += payments.transition_table[state[ji], new_state] * \
                    np.exp(-r * (t[ji] - tau))
            state[ji] = new_state
        alive = keep
    return pv, initial_idx


@dataclass
class LlnCltReport:
    target: float
    lln_rows: List[statsmod.LlnRow]
    lln_slope: Optional[float]
    clt: Optional[statsmod.CltReport]
    clt_n: Optional[int]
    sigma_hat: Optional[float]
    n_cov: Dict[int, float]
    statewise_ratio: Dict[str, Optional[float]]
    clt_samples: Optional[np.ndarray] = None


def reserve_lln_clt(spec: SirdSpec, payments: PaymentStream, n_list,
                    replications: int, rng=0, grid=None,
                    chunk: int = 1 << 20) -> LlnCltReport:
    """LLN/CLT diagnostics for cohort present values against the mean field.

    For each n, cohort PV averages over ``replications`` runs are compared
    with the forward-method reserve (L2 error with jackknife CI plus a
    log-log slope); standardized sums at the largest n are checked for
    normality, the between-individual covariance scaled by n is estimated,
    and the state-wise ratio estimator is reported.
    """
    n_list = sorted(int(n) for n in n_list)
    if n_list != sorted(set(n_list)) or n_list[0] < 1:
        raise ValueError("n_list must be increasing positive integers")
    if grid is None:
        grid = np.linspace(*spec.horizon, 201)
    vbar = meanfield_reserves(spec, payments, grid).cohort
    key = [rng] if np.isscalar(rng) else list(rng)
    tau = spec.horizon[0]

    fast = (not spec.measure_dependent and spec.time_homogeneous
            and payments.sojourn_table is not None
            and payments.flat_rate is not None)
    samples_by_n = {}
    n_cov = {}
    sigma_hat = None
    clt_report = None
    clt_samples = None
    statewise = {label: None for label in STATE_LABELS}
    clt_n = n_list[-1]
    sampler = spec.initial_sampler()
    kern = None if fast else spec.kernel()

    for n in n_list:
        total = n * replications
        pvs = np.empty(total)
        idx = np.empty(total, dtype=int)
        if fast:
            pos = 0
            ci = 0
            while pos < total:
                count = min(chunk, total - pos)
                p, s0 = _batch_pvs(spec, payments, count, key + [n, ci])
                pvs[pos:pos + count] = p
                idx[pos:pos + count] = s0
                pos += count
                ci += 1
        else:
            for rep in range(replications):
                ens = simulate_interacting(kern, sampler, spec.horizon,
                                           key + [n, rep], n=n)
                for i, p in enumerate(ens.paths):
                    pvs[rep * n + i] = present_value(p, payments, tau)
                    idx[rep * n + i] = int(p.initial[0]) - 1
        pv_mat = pvs.reshape(replications, n)
        avgs = pv_mat.mean(axis=1)
        samples_by_n[n] = avgs
        if n >= 2:
            c1, c2 = pv_mat[:, 0] - vbar, pv_mat[:, 1] - vbar
            n_cov[n] = float(n * np.mean(c1 * c2))
        if n == clt_n:
            sigma_hat = float(pvs.std(ddof=1))
            # deterministic PVs give sigma 0; report a degenerate CLT rather
            # than fail (the zero sums trip clt_check's degenerate flag)
            std_sums = np.zeros_like(avgs) if sigma_hat <= 0 else \
                np.sqrt(n) * (avgs - vbar) / sigma_hat
            clt_samples = std_sums
            clt_report = (statsmod.clt_check(std_sums)
                          if std_sums.size >= 200 else None)
            # ratio estimator: stratum-average PV over realized initials
            num = np.zeros(4)
            den = np.zeros(4)
            np.add.at(num, idx, pvs)
            np.add.at(den, idx, 1.0)
            for i, label in enumerate(STATE_LABELS):
                statewise[label] = float(num[i] / den[i]) if den[i] else None

    rows = statsmod.lln_check(samples_by_n, vbar)
    slope = None
    errs = [row.l2_error for row in rows]
    if len(rows) >= 3 and all(e > 0 for e in errs):
        slope = statsmod.rate_fit([row.n for row in rows], errs)[0]
    return LlnCltReport(vbar, rows, slope, clt_report, clt_n, sigma_hat,
                        n_cov, statewise, clt_samples)
