"""Event-driven Monte Carlo for jump processes.

All simulators use the thinning construction: candidate times come from a
homogeneous Poisson clock at the declared rate bound c_lambda, and a
candidate at time t is accepted with probability rate(t, x, rho)/c_lambda.
Accepted jumps then draw a mark from the jump-size law, so paths carry no
time-discretization error.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import BoundViolationError
from .kernel import IntensityKernel, MarginalFlow, MeasureSnapshot


# ---------------------------------------------------------------------------
# paths and ensembles


@dataclass
class JumpPath:
    """Piecewise-constant cadlag path: initial value plus (time, state) events."""

    initial: np.ndarray
    events: List[Tuple[float, np.ndarray]]
    horizon: Tuple[float, float]

    def __post_init__(self):
        self.initial = np.atleast_1d(np.asarray(self.initial, dtype=float))

    def state_at(self, t: float) -> np.ndarray:
        """Cadlag evaluation: the post-jump state of the last event <= t."""
        state = self.initial
        for et, es in self.events:
            if et > t:
                break
            state = es
        return state

    @property
    def event_times(self) -> np.ndarray:
        return np.array([et for et, _ in self.events])

    def validate(self, space=None):
        tau, T = self.horizon
        times = self.event_times
        if times.size:
            if not np.all(np.diff(times) > 0):
                raise ValueError("event times must be strictly increasing")
            if times[0] <= tau or times[-1] > T:
                raise ValueError("event times must lie in (tau, T]")
        if space is not None:
            if not space.contains(self.initial):
                raise ValueError("initial state outside the state space")
            for _, s in self.events:
                if not space.contains(s):
                    raise ValueError("path visits a state outside the space")


@dataclass
class Ensemble:
    """n synchronized paths sharing a horizon, with empirical snapshots."""

    paths: List[JumpPath]
    horizon: Tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.paths)

    def empirical_snapshot(self, t: float) -> MeasureSnapshot:
        points = np.stack([p.state_at(t) for p in self.paths])
        return MeasureSnapshot(t, points=points)


@dataclass
class CoupledPair:
    """One coordinate of the n-system and its mean-field companion.

    Both paths jump only at times of their shared Poisson clock; the mean
    sup-distance across pairs upper-bounds the path-law Wasserstein gap.
    """

    interacting: JumpPath
    meanfield: JumpPath
    sup_distance: float
    clock_times: np.ndarray
    coupling: str = "comonotone"


# ---------------------------------------------------------------------------
# rng plumbing


def _as_key(rng) -> Optional[list]:
    """Seed key for counter-based streams, or None if rng is a Generator."""
    if isinstance(rng, np.random.Generator):
        return None
    if np.isscalar(rng):
        return [int(rng)]
    return [int(v) for v in rng]


def _single_stream(rng) -> np.random.Generator:
    key = _as_key(rng)
    return rng if key is None else np.random.default_rng(key)


def _individual_streams(rng, n: int) -> List[np.random.Generator]:
    """One independent stream per individual, stable under any scheduling."""
    key = _as_key(rng)
    if key is None:
        return rng.spawn(n)
    return [np.random.default_rng(key + [i]) for i in range(n)]


# ---------------------------------------------------------------------------
# thinning primitives


def _checked_rate(kernel, t, x, rho) -> float:
    lam = float(kernel.rate(t, x, rho))
    if lam > kernel.c_lambda * (1 + 1e-12):
        raise BoundViolationError(
            f"rate {lam} exceeds declared bound {kernel.c_lambda} at "
            f"t={t}, x={np.atleast_1d(x).tolist()}")
    return lam


def _mark(kernel, t, x, rho, rng) -> np.ndarray:
    return np.atleast_1d(np.asarray(
        kernel.mark_sampler(t, x, rho, rng), dtype=float))


def _mixture_quantile_mark(kernel, t, x, rho, accept_prob, u) -> np.ndarray:
    """Quantile of the thinned mark mixture (atom at 0 plus accepted marks).

    Placing the zero atom at the bottom of the common uniform makes the
    coupling comonotone for nonnegative 1-D marks; the marginal law is
    correct for any sign.
    """
    if accept_prob <= 0 or u < 1.0 - accept_prob:
        return None
    v = min((u - (1.0 - accept_prob)) / accept_prob, 1.0 - 1e-15)
    return np.atleast_1d(np.asarray(
        kernel.mark_quantile(t, x, rho, v), dtype=float))


# ---------------------------------------------------------------------------
# simulators


def simulate_linear(kernel: IntensityKernel, flow, initial, horizon,
                    rng) -> JumpPath:
    """Single path of the (linearised) process by thinning.

    Measure-dependent kernels require a frozen flow; the measure argument at
    a candidate time t is then flow.at(t).
    """
    if kernel.measure_dependent and flow is None:
        raise ValueError("measure-dependent kernel needs a frozen flow")
    gen = _single_stream(rng)
    tau, T = horizon
    c = kernel.c_lambda
    x = np.atleast_1d(np.asarray(initial, dtype=float))
    events: List[Tuple[float, np.ndarray]] = []
    if c <= 0:
        return JumpPath(x, events, (tau, T))
    t = tau + gen.exponential(1.0 / c)
    while t <= T:
        rho = flow.at(t) if flow is not None else None
        lam = _checked_rate(kernel, t, x, rho)
        if gen.uniform() < lam / c:
            x = x + _mark(kernel, t, x, rho, gen)
            events.append((t, x))
        t += gen.exponential(1.0 / c)
    return JumpPath(np.atleast_1d(np.asarray(initial, dtype=float)),
                    events, (tau, T))


def simulate_interacting(kernel: IntensityKernel, initials, horizon,
                         rng, n: int = None) -> Ensemble:
    """n-individual system coupled through the running empirical measure.

    Each individual has its own Poisson clock at rate c_lambda; candidate
    events are processed in global time order (ties broken by lowest
    individual index) and thinning sees the pre-jump empirical measure.
    """
    tau, T = horizon
    if callable(initials):
        if n is None:
            raise ValueError("n required when initials is a sampler")
        streams = _individual_streams(rng, n)
        states = np.stack([np.atleast_1d(np.asarray(initials(streams[i]),
                                                    dtype=float))
                           for i in range(n)])
    else:
        # always copy: states is mutated in place during the run and must
        # never alias a caller-owned array reused across replications
        states = np.atleast_2d(np.array(initials, dtype=float, copy=True))
        if states.shape[0] == 1 and np.asarray(initials).ndim == 1 and n is None:
            # a flat list of scalars is n 1-D individuals, not one vector
            states = np.asarray(initials, dtype=float).reshape(-1, 1)
        n = states.shape[0]
        streams = _individual_streams(rng, n)
    if n < 1:
        raise ValueError("need at least one individual")

    initials_copy = states.copy()
    events: List[List[Tuple[float, np.ndarray]]] = [[] for _ in range(n)]
    c = kernel.c_lambda
    if c <= 0:
        paths = [JumpPath(initials_copy[i], [], (tau, T)) for i in range(n)]
        return Ensemble(paths, (tau, T))

    snap = MeasureSnapshot(tau, points=states)
    heap = [(tau + streams[i].exponential(1.0 / c), i) for i in range(n)]
    heapq.heapify(heap)
    while heap:
        t, i = heapq.heappop(heap)
        if t > T:
            continue
        snap.timestamp = t
        lam = _checked_rate(kernel, t, states[i], snap)
        if streams[i].uniform() < lam / c:
            z = _mark(kernel, t, states[i], snap, streams[i])
            states[i] = states[i] + z
            events[i].append((t, states[i].copy()))
            snap.cache.clear()
        heapq.heappush(heap, (t + streams[i].exponential(1.0 / c), i))

    paths = [JumpPath(initials_copy[i], events[i], (tau, T)) for i in range(n)]
    return Ensemble(paths, (tau, T))


def simulate_coupled(kernel: IntensityKernel, meanfield_flow: MarginalFlow,
                     n: int, initials_joint, horizon, rng) -> List[CoupledPair]:
    """n-system plus mean-field companions driven by shared clocks.

    initials_joint is either a list of (y, y_bar) pairs or a sampler
    rng -> (y, y_bar).  At each candidate time the interacting mark (against
    the pre-jump empirical measure) and the companion mark (against the
    frozen mean-field flow) are drawn from a coupling of the two thinned
    mixtures: comonotone through a common uniform when mark_quantile exists
    for 1-D marks, common random numbers otherwise (flagged).
    """
    tau, T = horizon
    streams = _individual_streams(rng, n)
    if callable(initials_joint):
        pairs0 = [initials_joint(streams[i]) for i in range(n)]
    else:
        pairs0 = list(initials_joint)
        if len(pairs0) != n:
            raise ValueError("need one initial pair per individual")
    states = np.stack([np.atleast_1d(np.asarray(y, dtype=float))
                       for y, _ in pairs0])
    bars = np.stack([np.atleast_1d(np.asarray(yb, dtype=float))
                     for _, yb in pairs0])
    # kernels supply mark_quantile only when marks are monotone in a single
    # uniform, so its presence is the comonotone-coupling capability flag
    comonotone = kernel.mark_quantile is not None
    coupling = "comonotone" if comonotone else "crn"

    init_states = states.copy()
    init_bars = bars.copy()
    ev_int: List[List] = [[] for _ in range(n)]
    ev_bar: List[List] = [[] for _ in range(n)]
    clocks: List[List[float]] = [[] for _ in range(n)]
    sup = np.abs(states - bars).sum(axis=1)

    c = kernel.c_lambda
    if c > 0:
        snap = MeasureSnapshot(tau, points=states)
        heap = [(tau + streams[i].exponential(1.0 / c), i) for i in range(n)]
        heapq.heapify(heap)
        while heap:
            t, i = heapq.heappop(heap)
            if t > T:
                continue
            clocks[i].append(t)
            snap.timestamp = t
            rho_bar = meanfield_flow.at(t)
            lam1 = _checked_rate(kernel, t, states[i], snap)
            lam2 = _checked_rate(kernel, t, bars[i], rho_bar)
            u = streams[i].uniform()
            if comonotone:
                z1 = _mixture_quantile_mark(kernel, t, states[i], snap,
                                            lam1 / c, u)
                z2 = _mixture_quantile_mark(kernel, t, bars[i], rho_bar,
                                            lam2 / c, u)
            else:
                crn_seed = int(streams[i].integers(2 ** 63))
                z1 = z2 = None
                if u < lam1 / c:
                    z1 = _mark(kernel, t, states[i], snap,
                               np.random.default_rng(crn_seed))
                if u < lam2 / c:
                    z2 = _mark(kernel, t, bars[i], rho_bar,
                               np.random.default_rng(crn_seed))
            if z1 is not None and np.any(z1 != 0):
                states[i] = states[i] + z1
                ev_int[i].append((t, states[i].copy()))
                snap.cache.clear()
            if z2 is not None and np.any(z2 != 0):
                bars[i] = bars[i] + z2
                ev_bar[i].append((t, bars[i].copy()))
            gap = float(np.abs(states[i] - bars[i]).sum())
            if gap > sup[i]:
                sup[i] = gap
            heapq.heappush(heap, (t + streams[i].exponential(1.0 / c), i))

    return [CoupledPair(JumpPath(init_states[i], ev_int[i], (tau, T)),
                        JumpPath(init_bars[i], ev_bar[i], (tau, T)),
                        float(sup[i]), np.array(clocks[i]), coupling)
            for i in range(n)]


# ---------------------------------------------------------------------------
# export


def ensemble_to_rows(ensemble: Ensemble, replication: int):
    """Yield (replication, individual, event_time, *state) CSV rows.

    The initial state appears as a row at the horizon start.
    """
    tau, _ = ensemble.horizon
    for i, path in enumerate(ensemble.paths):
        yield (replication, i, float(tau), *path.initial.tolist())
        for t, s in path.events:
            yield (replication, i, float(t), *np.atleast_1d(s).tolist())
