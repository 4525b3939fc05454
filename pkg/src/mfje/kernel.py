"""State spaces, probability snapshots, intensity kernels and regularity audits.

A jump process is driven by an intensity kernel mu_t(x, rho, dz) factored as a
rate lambda_t(x, rho) times a jump-size law r_t(x, rho, dz).  Kernels carry
declared bounds (rate bound, q-th mark-moment bound, Lipschitz constant) that
are checked numerically by :func:`audit_regularity` rather than symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# state spaces


class StateSpace:
    """Either a finite set of points in R^d or a boxed subset of R^d.

    Finite spaces carry the point list and per-point labels; the admissible
    jump sizes from x are exactly {y - x : y in E}, so every jump lands in E.
    """

    def __init__(self, kind: str, *, points=None, labels=None, dim=None,
                 lower=None, upper=None):
        if kind not in ("finite", "box"):
            raise ValueError(f"unknown state-space kind {kind!r}")
        self.kind = kind
        if kind == "finite":
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            if pts.shape[0] < 1:
                raise ValueError("finite space needs at least one point")
            if len(np.unique(pts, axis=0)) != pts.shape[0]:
                raise ValueError("finite-space points must be distinct")
            self.points = pts
            self.dim = pts.shape[1]
            self.labels = list(labels) if labels is not None else [
                str(i) for i in range(pts.shape[0])]
            if len(self.labels) != pts.shape[0]:
                raise ValueError("one label per point required")
            self._index = {tuple(p): i for i, p in enumerate(pts)}
        else:
            if dim is None or dim < 1:
                raise ValueError("boxed space needs a positive dimension")
            self.points = None
            self.labels = None
            self.dim = int(dim)
            self.lower = None if lower is None else np.asarray(lower, float)
            self.upper = None if upper is None else np.asarray(upper, float)

    @classmethod
    def finite(cls, points, labels=None) -> "StateSpace":
        return cls("finite", points=points, labels=labels)

    @classmethod
    def box(cls, dim, lower=None, upper=None) -> "StateSpace":
        return cls("box", dim=dim, lower=lower, upper=upper)

    @property
    def n_points(self) -> int:
        if self.kind != "finite":
            raise ValueError("n_points only defined for finite spaces")
        return self.points.shape[0]

    def index_of(self, x) -> int:
        key = tuple(np.atleast_1d(np.asarray(x, dtype=float)))
        try:
            return self._index[key]
        except KeyError:
            raise ValueError(f"state {x!r} is not a point of this space") from None

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "finite":
            return tuple(x) in self._index
        if self.lower is not None and np.any(x < self.lower):
            return False
        if self.upper is not None and np.any(x > self.upper):
            return False
        return True

    def jump_value_set(self):
        """All admissible jump sizes (pairwise differences) on finite spaces."""
        if self.kind != "finite":
            raise ValueError("jump_value_set enumerable only for finite spaces")
        diffs = self.points[None, :, :] - self.points[:, None, :]
        return np.unique(diffs.reshape(-1, self.dim), axis=0)


# ---------------------------------------------------------------------------
# probability snapshots


class MeasureSnapshot:
    """A probability distribution at a fixed time.

    Two supports: a pmf over a finite state space, or a weighted particle
    cloud in R^d.  A small cache dict lets simulations memoize derived
    statistics (e.g. an infected fraction) between mutations; the simulate
    module is responsible for clearing it whenever the measure changes.
    """

    __slots__ = ("timestamp", "space", "probs", "points", "weights", "cache")

    def __init__(self, timestamp: float, *, space: StateSpace = None, probs=None,
                 points=None, weights=None):
        self.timestamp = float(timestamp)
        self.cache: dict = {}
        if probs is not None:
            if space is None or space.kind != "finite":
                raise ValueError("pmf snapshots need a finite state space")
            p = np.asarray(probs, dtype=float)
            if p.shape != (space.n_points,):
                raise ValueError("pmf length must match the state space")
            self.space = space
            self.probs = p
            self.points = space.points
            self.weights = p
        else:
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            if pts.shape[0] == 0:
                raise ValueError("particle cloud must be nonempty")
            if weights is None:
                w = np.full(pts.shape[0], 1.0 / pts.shape[0])
            else:
                w = np.asarray(weights, dtype=float)
            self.space = space
            self.probs = None
            self.points = pts
            self.weights = w
        self.validate()

    def validate(self):
        if np.any(self.weights < -1e-15):
            raise ValueError("snapshot weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"snapshot weights sum to {total!r}, not 1")

    @property
    def is_pmf(self) -> bool:
        return self.probs is not None

    def cached(self, key, compute: Callable[["MeasureSnapshot"], object]):
        """Memoized derived statistic; caller clears cache on mutation."""
        try:
            return self.cache[key]
        except KeyError:
            value = compute(self)
            self.cache[key] = value
            return value

    def mass_at(self, x) -> float:
        """Probability of the single point x."""
        if self.is_pmf:
            return float(self.probs[self.space.index_of(x)])
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hit = np.all(self.points == x, axis=1)
        return float(self.weights[hit].sum())

    @classmethod
    def from_pmf(cls, space: StateSpace, probs, timestamp=0.0) -> "MeasureSnapshot":
        return cls(timestamp, space=space, probs=probs)

    @classmethod
    def empirical(cls, points, timestamp=0.0, space=None) -> "MeasureSnapshot":
        return cls(timestamp, space=space, points=points)

    @classmethod
    def dirac(cls, x, timestamp=0.0, space=None) -> "MeasureSnapshot":
        if space is not None and space.kind == "finite":
            probs = np.zeros(space.n_points)
            probs[space.index_of(x)] = 1.0
            return cls(timestamp, space=space, probs=probs)
        return cls(timestamp, space=space, points=[np.atleast_1d(x)])


# ---------------------------------------------------------------------------
# marginal flows


class MarginalFlow:
    """Time-gridded sequence of snapshots with piecewise-constant-left lookup."""

    def __init__(self, grid, snapshots: Sequence[MeasureSnapshot]):
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 1:
            raise ValueError("grid must be a nonempty 1-D array")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if len(snapshots) != grid.size:
            raise ValueError("one snapshot per grid point required")
        if abs(snapshots[0].timestamp - grid[0]) > 1e-12:
            raise ValueError("first snapshot must sit at the grid start")
        for s in snapshots:
            s.validate()
        self.grid = grid
        self.snapshots = list(snapshots)

    def at(self, t: float) -> MeasureSnapshot:
        """Snapshot at the largest grid point <= t (clamped at the ends)."""
        i = int(np.searchsorted(self.grid, t + 1e-15, side="right")) - 1
        return self.snapshots[max(0, min(i, len(self.snapshots) - 1))]

    def pmf_matrix(self) -> np.ndarray:
        """(M+1, m) array of pmfs for finite-state flows."""
        if getattr(self, "_pmf_cache", None) is None:
            self._pmf_cache = np.array([s.probs for s in self.snapshots])
        return self._pmf_cache

    def pmf_at(self, t: float) -> np.ndarray:
        """Smooth in-time pmf evaluation (cubic Lagrange on 4 nodes).

        Used by ODE solvers that need the frozen flow between grid points at
        better than the piecewise-constant accuracy of :meth:`at`; the law
        flows being interpolated are smooth in time.
        """
        if self.snapshots[0].probs is None:
            raise ValueError("pmf_at requires a finite-state flow")
        g = self.grid
        mat = self.pmf_matrix()
        if g.size < 4:
            # too few nodes for a cubic; fall back to linear interpolation
            out = np.array([np.interp(t, g, mat[:, j])
                            for j in range(mat.shape[1])])
        else:
            i = int(np.searchsorted(g, t, side="right")) - 1
            lo = min(max(i - 1, 0), g.size - 4)
            xs = g[lo:lo + 4]
            w = np.ones(4)
            for a in range(4):
                for b in range(4):
                    if a != b:
                        w[a] *= (t - xs[b]) / (xs[a] - xs[b])
            out = w @ mat[lo:lo + 4]
        out = np.clip(out, 0.0, None)
        total = out.sum()
        return out / total if total > 0 else np.full(out.size, 1.0 / out.size)

    @classmethod
    def constant(cls, grid, snapshot: MeasureSnapshot) -> "MarginalFlow":
        grid = np.asarray(grid, dtype=float)
        snaps = []
        for t in grid:
            if snapshot.is_pmf:
                snaps.append(MeasureSnapshot.from_pmf(snapshot.space,
                                                      snapshot.probs, t))
            else:
                snaps.append(MeasureSnapshot(t, space=snapshot.space,
                                             points=snapshot.points,
                                             weights=snapshot.weights))
        return cls(grid, snaps)


# ---------------------------------------------------------------------------
# intensity kernels


@dataclass
class IntensityKernel:
    """Measure-dependent intensity kernel lambda_t(x, rho) * r_t(x, rho, dz).

    ``rate(t, x, rho)`` returns the jump rate; ``mark_sampler(t, x, rho, rng)``
    draws one jump size.  ``mark_quantile(t, x, rho, u)``, when available for
    1-D marks, is the inverse CDF of the jump-size law and enables the
    comonotone mark coupling in the simulate module.  Declared constants:
    ``c_lambda`` bounds the rate, ``c_r`` bounds the q-th absolute mark
    moment, ``c_mu`` (optional) is the joint Lipschitz constant in (x, rho).
    """

    rate: Callable[[float, np.ndarray, Optional[MeasureSnapshot]], float]
    mark_sampler: Callable
    c_lambda: float
    c_r: float
    q: float
    c_mu: Optional[float] = None
    mark_quantile: Optional[Callable] = None
    measure_dependent: bool = True
    space: Optional[StateSpace] = None
    # off-diagonal destination-rate table (t, rho) -> (m, m) array; present on
    # finite-space kernels so forward solvers avoid per-entry rate calls
    finite_rates: Optional[Callable[[float, Optional[MeasureSnapshot]], np.ndarray]] = None

    def __post_init__(self):
        if self.c_lambda < 0 or self.c_r < 0:
            raise ValueError("declared bounds must be nonnegative")
        if self.q < 1:
            raise ValueError("moment order q must be >= 1")


@dataclass
class DestinationKernel:
    """Finite-space kernel expressed as destination rates y -> rate table.

    ``rates(t, rho)`` returns the (m, m) matrix of rates from state i to
    state j; the diagonal is ignored.
    """

    space: StateSpace
    rates: Callable[[float, Optional[MeasureSnapshot]], np.ndarray]
    c_lambda: float
    c_r: float
    q: float
    c_mu: Optional[float] = None
    measure_dependent: bool = True

    def rate_table(self, t, rho) -> np.ndarray:
        table = np.asarray(self.rates(t, rho), dtype=float)
        m = self.space.n_points
        if table.shape != (m, m):
            raise ValueError("rate table shape must match the state space")
        return table


def jd_to_js(destination_kernel: DestinationKernel,
             space: StateSpace = None) -> IntensityKernel:
    """Convert destination rates to a jump-size kernel (z = y - x).

    The total rate from x is the row sum of the destination table, and the
    mark law puts mass proportional to the destination rates on the
    differences y - x; the process law is unchanged.
    """
    space = space or destination_kernel.space
    if space.kind != "finite":
        raise ValueError("destination kernels require a finite space")
    dk = destination_kernel
    pts = space.points

    def rate(t, x, rho):
        i = space.index_of(x)
        table = dk.rate_table(t, rho)
        return float(table[i].sum() - table[i, i])

    def _row(t, x, rho):
        i = space.index_of(x)
        row = dk.rate_table(t, rho)[i].copy()
        row[i] = 0.0
        return i, row

    def mark_sampler(t, x, rho, rng):
        i, row = _row(t, x, rho)
        total = row.sum()
        if total <= 0:
            raise ValueError(f"mark requested from state {x!r} with zero rate")
        j = rng.choice(row.size, p=row / total)
        z = pts[j] - pts[i]
        return z if space.dim > 1 else float(z[0])

    def mark_quantile(t, x, rho, u):
        # inverse CDF over jump sizes ordered by value (1-D embeddings only)
        i, row = _row(t, x, rho)
        total = row.sum()
        if total <= 0:
            raise ValueError(f"mark requested from state {x!r} with zero rate")
        sizes = (pts[:, 0] - pts[i, 0])
        order = np.argsort(sizes)
        cum = np.cumsum(row[order]) / total
        j = order[int(np.searchsorted(cum, u, side="left"))]
        return float(pts[j, 0] - pts[i, 0])

    def finite_rates(t, rho):
        table = dk.rate_table(t, rho).copy()
        np.fill_diagonal(table, 0.0)
        return table

    return IntensityKernel(
        rate=rate,
        mark_sampler=mark_sampler,
        mark_quantile=mark_quantile if space.dim == 1 else None,
        c_lambda=dk.c_lambda,
        c_r=dk.c_r,
        q=dk.q,
        c_mu=dk.c_mu,
        measure_dependent=dk.measure_dependent,
        space=space,
        finite_rates=finite_rates,
    )


def js_to_jd(kernel: IntensityKernel, space: StateSpace = None) -> DestinationKernel:
    """Convert a finite-space jump-size kernel back to destination rates."""
    space = space or kernel.space
    if space is None or space.kind != "finite":
        raise ValueError("js_to_jd requires a finite space")
    if kernel.finite_rates is None:
        raise ValueError("kernel does not expose a finite rate table")
    table_fn = kernel.finite_rates

    def rates(t, rho):
        return table_fn(t, rho)

    return DestinationKernel(
        space=space,
        rates=rates,
        c_lambda=kernel.c_lambda,
        c_r=kernel.c_r,
        q=kernel.q,
        c_mu=kernel.c_mu,
        measure_dependent=kernel.measure_dependent,
    )


# ---------------------------------------------------------------------------
# regularity audit


@dataclass
class AuditReport:
    """Numeric audit of the declared kernel bounds; report-only."""

    max_rate: float
    max_mark_moment: float
    rate_violations: list = field(default_factory=list)
    moment_violations: list = field(default_factory=list)
    off_space_jumps: list = field(default_factory=list)
    lipschitz_ratios: list = field(default_factory=list)
    lipschitz_violations: list = field(default_factory=list)

    @property
    def max_lipschitz_ratio(self) -> Optional[float]:
        return max(self.lipschitz_ratios) if self.lipschitz_ratios else None

    @property
    def ok(self) -> bool:
        return not (self.rate_violations or self.moment_violations
                    or self.off_space_jumps or self.lipschitz_violations)


def _sampled_marks(kernel, t, x, rho, count, rng):
    marks = [np.atleast_1d(np.asarray(
        kernel.mark_sampler(t, x, rho, rng), dtype=float)) for _ in range(count)]
    return np.stack(marks)


def audit_regularity(kernel: IntensityKernel, probe_set,
                     pairs=None, samples_per_probe: int = 1000,
                     seed: int = 0, slack: float = 0.1) -> AuditReport:
    """Check declared bounds on a probe set of (t, x, rho) triples.

    For each probe the rate is compared against ``c_lambda`` and the sampled
    q-th absolute mark moment (l1 norm) against ``c_r * (1 + slack)``; on
    finite spaces sampled jumps must land back in the space.  For each probe
    pair (given as two indices into probe_set) an empirical lower bound on
    the Kantorovich–Rubinstein distance between the two intensity measures
    is divided by the probe separation ``||x1 - x2||_1 + W1(rho1, rho2)``
    and compared against ``c_mu``.

    The audit never mutates the kernel, and a fixed seed gives an identical
    report on repeated runs.
    """
    from . import metrics

    if not probe_set:
        raise ValueError("probe_set must be nonempty")
    rng = np.random.default_rng(seed)
    report = AuditReport(max_rate=0.0, max_mark_moment=0.0)

    mark_cache = {}
    for idx, (t, x, rho) in enumerate(probe_set):
        lam = float(kernel.rate(t, x, rho))
        report.max_rate = max(report.max_rate, lam)
        if lam > kernel.c_lambda * (1 + 1e-12):
            report.rate_violations.append((idx, t, np.atleast_1d(x).tolist(), lam))
        if lam <= 0:
            continue
        marks = _sampled_marks(kernel, t, x, rho, samples_per_probe, rng)
        mark_cache[idx] = (lam, marks)
        moment = float(np.mean(np.sum(np.abs(marks), axis=1) ** kernel.q))
        report.max_mark_moment = max(report.max_mark_moment, moment)
        if moment > kernel.c_r * (1 + slack):
            report.moment_violations.append((idx, t, np.atleast_1d(x).tolist(), moment))
        if kernel.space is not None and kernel.space.kind == "finite":
            xv = np.atleast_1d(np.asarray(x, dtype=float))
            for z in np.unique(marks, axis=0):
                if not kernel.space.contains(xv + z):
                    report.off_space_jumps.append(
                        (idx, np.atleast_1d(x).tolist(), z.tolist()))

    for ia, ib in (pairs or []):
        _, xa, ra = probe_set[ia]
        _, xb, rb = probe_set[ib]
        if ia not in mark_cache or ib not in mark_cache:
            continue
        lam_a, marks_a = mark_cache[ia]
        lam_b, marks_b = mark_cache[ib]
        sep = float(np.sum(np.abs(np.atleast_1d(xa) - np.atleast_1d(xb))))
        sep += metrics.snapshot_w1(ra, rb)
        if sep <= 0:
            continue
        # per-coordinate exact KR distance between the sampled intensity
        # measures lambda * empirical(marks); max over coordinates is a valid
        # lower bound under the l1 ground metric
        kr = 0.0
        for c in range(marks_a.shape[1]):
            kr = max(kr, metrics.kr0_signed_1d(
                np.concatenate([marks_a[:, c], marks_b[:, c]]),
                np.concatenate([np.full(len(marks_a), lam_a / len(marks_a)),
                                np.full(len(marks_b), -lam_b / len(marks_b))])))
        ratio = kr / sep
        report.lipschitz_ratios.append(ratio)
        if kernel.c_mu is not None and ratio > kernel.c_mu * (1 + slack):
            report.lipschitz_violations.append((ia, ib, ratio))

    return report
