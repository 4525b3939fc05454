"""Picard fixed-point computation of the mean-field law flow.

The non-linear law flow is the fixed point of "solve the linear forward
problem with the measure argument frozen at the previous iterate".  Stopping
is by sup-over-grid W1 change; contraction holds on short horizons
(c_mu * T * exp(c_mu * T) < 1), and the solver aborts with horizon-splitting
advice when iterates move apart instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import metrics
from .errors import NonContractionError
from .forward import solve_linear_forward
from .kernel import IntensityKernel, MarginalFlow, MeasureSnapshot
from .simulate import simulate_linear


@dataclass
class IterationRecord:
    iteration: int
    sup_w1_change: float
    wall_time_ms: float


def _noncontraction_message(kernel, horizon_len):
    hint = ""
    if kernel is not None and kernel.c_mu is not None:
        k = kernel.c_mu * horizon_len * np.exp(kernel.c_mu * horizon_len)
        hint = (f" (contraction factor c_mu*T*exp(c_mu*T) = {k:.3g}; "
                "values >= 1 are not guaranteed to contract)")
    return ("fixed-point distances increased for 3 consecutive iterations" +
            hint + "; shorten the horizon, solve on [tau, T*], and chain the "
            "result as the initial law on [T*, T]")


def _flow_distance(flow_a: MarginalFlow, flow_b: MarginalFlow) -> float:
    return max(metrics.snapshot_w1(a, b)
               for a, b in zip(flow_a.snapshots, flow_b.snapshots))


def _empirical_flow(kernel, frozen, initials, grid, rng_keys) -> MarginalFlow:
    """Snapshot the empirical law of iid linearised paths on the grid."""
    paths = [simulate_linear(kernel, frozen, x0, (grid[0], grid[-1]), key)
             for x0, key in zip(initials, rng_keys)]
    snaps = []
    for t in grid:
        pts = np.stack([p.state_at(t) for p in paths])
        snaps.append(MeasureSnapshot(t, points=pts))
    return MarginalFlow(grid, snaps)


def picard_solve(kernel: IntensityKernel, initial_law: MeasureSnapshot, grid,
                 tol: float, max_iter: int = 50, n_particles: int = 10 ** 5,
                 seed: int = 0, w1_cap: int = 256):
    """Mean-field law flow by Picard iteration; returns (flow, iteration_log).

    Iterate 0 is the initial law held constant in time; iterate k solves the
    linear forward problem against iterate k-1.  Finite state spaces use the
    deterministic solver; particle clouds use n_particles iid linearised
    paths with common random numbers across iterations, so the stopping
    distance reflects the flow change rather than Monte Carlo noise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = np.asarray(grid, dtype=float)
    finite = initial_law.is_pmf
    flow = MarginalFlow.constant(grid, initial_law)
    log: List[IterationRecord] = []

    if not finite:
        # resample initial particles once; reuse streams every iteration (CRN)
        init_rng = np.random.default_rng([seed, 0])
        idx = init_rng.choice(initial_law.points.shape[0], size=n_particles,
                              p=initial_law.weights / initial_law.weights.sum())
        initials = initial_law.points[idx]
        rng_keys = [[seed, 1, i] for i in range(n_particles)]

    increases = 0
    prev_dist = None
    for k in range(1, max_iter + 1):
        start = time.perf_counter()
        if finite:
            new_flow = solve_linear_forward(kernel, flow, initial_law.probs,
                                            grid)
            dist = _flow_distance(new_flow, flow)
        else:
            new_flow = _empirical_flow(kernel, flow, initials, grid, rng_keys)
            dist = max(metrics.w1_empirical_rd(
                metrics.subsample_cloud(a.points, w1_cap, seed),
                metrics.subsample_cloud(b.points, w1_cap, seed))
                for a, b in zip(new_flow.snapshots, flow.snapshots))
        log.append(IterationRecord(k, dist,
                                   (time.perf_counter() - start) * 1e3))
        flow = new_flow
        if dist <= tol:
            return flow, log
        if prev_dist is not None and dist > prev_dist:
            increases += 1
            if increases >= 3:
                raise NonContractionError(
                    _noncontraction_message(kernel, grid[-1] - grid[0]))
        else:
            increases = 0
        prev_dist = dist
    return flow, log


def linearised_transition(kernel: IntensityKernel, frozen_flow: MarginalFlow,
                          x, grid, n_particles: int = 10 ** 4,
                          seed: int = 0) -> MarginalFlow:
    """Law flow started from a single state x against a frozen mean-field flow."""
    grid = np.asarray(grid, dtype=float)
    space = kernel.space
    if space is not None and space.kind == "finite":
        if not space.contains(x):
            raise ValueError(f"start state {x!r} is not in the state space")
        probs = np.zeros(space.n_points)
        probs[space.index_of(x)] = 1.0
        return solve_linear_forward(kernel, frozen_flow, probs, grid)
    initials = [np.atleast_1d(x)] * n_particles
    keys = [[seed, 2, i] for i in range(n_particles)]
    return _empirical_flow(kernel, frozen_flow, initials, grid, keys)


def mix_transitions(flows, weights, grid) -> MarginalFlow:
    """Mixture of finite-state transition flows under initial weights."""
    weights = np.asarray(weights, dtype=float)
    space = flows[0].snapshots[0].space
    pmfs = sum(w * f.pmf_matrix() for w, f in zip(weights, flows))
    snaps = [MeasureSnapshot.from_pmf(space, pmfs[i], grid[i])
             for i in range(len(grid))]
    return MarginalFlow(grid, snaps)


# ---------------------------------------------------------------------------
# scalar fixed point for the credibility-coupled claims model


@dataclass
class GammaFixedPoint:
    """Converged scalar fixed point of the claims model.

    The measure enters the dynamics only through the capped average claim
    size m_bar(t), so the fixed point lives on that scalar curve.
    """

    grid: np.ndarray
    m_bar: np.ndarray
    theta: np.ndarray
    flow: MarginalFlow  # subsampled (w, m) particle flow
    final_w: np.ndarray
    final_m: np.ndarray
    covariates: Optional[np.ndarray]
    iteration_log: List[IterationRecord]

    def __iter__(self):
        # unpack like the documented (m_bar curve, theta curve, flow) triple
        return iter((self.m_bar, self.theta, self.flow))


def scalar_fixed_point_gamma(claims_spec, grid, tol: float, max_iter: int,
                             n_particles: int, rng,
                             flow_cap: int = 2048) -> GammaFixedPoint:
    """Fixed point of t -> m_bar(t) for credibility-coupled Gamma claims.

    Event times and base Gamma(alpha, 1) draws are frozen across iterations;
    each iteration only rescales severities by the theta curve implied by the
    previous m_bar curve (common random numbers, and simultaneously the exact
    comonotone coupling across iterations).
    """
    grid = np.asarray(grid, dtype=float)
    tau, T = grid[0], grid[-1]
    gen = rng if isinstance(rng, np.random.Generator) else \
        np.random.default_rng(rng)
    lam = claims_spec.claim_rate
    alpha = claims_spec.alpha

    counts = gen.poisson(lam * (T - tau), size=n_particles)
    total = int(counts.sum())
    owner = np.repeat(np.arange(n_particles), counts)
    times = tau + gen.uniform(0.0, T - tau, size=total)
    # events must be particle-wise time ordered for the running sums
    order = np.lexsort((times, owner))
    owner, times = owner[order], times[order]
    base = gen.gamma(alpha, 1.0, size=total)
    covariates = claims_spec.sample_covariates(n_particles, gen)
    bins = np.searchsorted(grid, times, side="right") - 1  # event in [t_b, t_{b+1})

    m_bar = np.zeros(grid.size)  # all particles start at (w, m) = (0, 0)
    log: List[IterationRecord] = []
    increases = 0
    prev_dist = None
    w = m = None
    for k in range(1, max_iter + 1):
        start = time.perf_counter()
        theta = claims_spec.theta_curve(grid, m_bar)
        sev = base * np.interp(times, grid, theta)
        # running (w, m) per particle, swept across grid cells
        w = np.zeros(n_particles)
        m = np.zeros(n_particles, dtype=np.int64)
        new_m_bar = np.empty(grid.size)
        new_m_bar[0] = 0.0
        for b in range(grid.size - 1):
            sel = bins == b
            if np.any(sel):
                np.add.at(w, owner[sel], sev[sel])
                np.add.at(m, owner[sel], 1)
            h = np.where(m > 0, np.minimum(w / np.maximum(m, 1),
                                           claims_spec.cap_K), 0.0)
            new_m_bar[b + 1] = h.mean()
        dist = float(np.max(np.abs(new_m_bar - m_bar)))
        m_bar = new_m_bar
        log.append(IterationRecord(k, dist,
                                   (time.perf_counter() - start) * 1e3))
        if dist <= tol:
            break
        if prev_dist is not None and dist > prev_dist:
            increases += 1
            if increases >= 3:
                raise NonContractionError(
                    _noncontraction_message(None, T - tau))
        else:
            increases = 0
        prev_dist = dist

    theta = claims_spec.theta_curve(grid, m_bar)
    # rebuild the full (w, m) trajectory once for the subsampled flow
    sev = base * np.interp(times, grid, theta)
    keep = np.arange(min(n_particles, flow_cap))
    w = np.zeros(n_particles)
    m = np.zeros(n_particles, dtype=np.int64)
    snaps = [MeasureSnapshot(grid[0],
                             points=np.zeros((keep.size, 2)))]
    for b in range(grid.size - 1):
        sel = bins == b
        if np.any(sel):
            np.add.at(w, owner[sel], sev[sel])
            np.add.at(m, owner[sel], 1)
        snaps.append(MeasureSnapshot(
            grid[b + 1], points=np.column_stack([w[keep], m[keep]])))
    flow = MarginalFlow(grid, snaps)
    return GammaFixedPoint(grid, m_bar, theta, flow, w.copy(),
                           m.copy(), covariates, log)
