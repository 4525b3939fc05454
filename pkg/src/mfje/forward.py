"""Forward-equation solvers for finite state spaces.

The linear solver integrates dp/dt = Q(t, frozen flow)^T p; the non-linear
solver rebuilds the generator from the current stage pmf, so the measure
argument is the unknown itself.  Both use classical fixed-step RK4 for
bit-reproducibility; step size is guarded by h * 2 * c_lambda < 1.
"""

from __future__ import annotations

import numpy as np

from .errors import MfjeError
from .kernel import IntensityKernel, MarginalFlow, MeasureSnapshot, StateSpace


class StabilityError(MfjeError):
    """Grid step too coarse for the declared rate bound."""


def build_generator(kernel: IntensityKernel, snapshot, t: float,
                    space: StateSpace = None) -> np.ndarray:
    """Generator matrix Q(t, rho): off-diagonal jump rates, balanced diagonal."""
    space = space or kernel.space
    if space is None or space.kind != "finite":
        raise ValueError("generator matrices require a finite state space")
    if kernel.finite_rates is None:
        raise ValueError(
            "kernel does not expose a finite rate table; build it from a "
            "DestinationKernel via jd_to_js")
    table = np.asarray(kernel.finite_rates(t, snapshot), dtype=float)
    m = space.n_points
    if table.shape != (m, m):
        raise ValueError("rate table shape must match the state space")
    if np.any(table < 0):
        i, j = np.argwhere(table < 0)[0]
        raise ValueError(f"negative rate from state {i} to state {j}")
    Q = table.copy()
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def _check_grid(grid, c_lambda):
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or not np.all(np.diff(grid) > 0):
        raise ValueError("grid must have >= 2 strictly increasing points")
    h = float(np.max(np.diff(grid)))
    if h * 2.0 * c_lambda >= 1.0 and c_lambda > 0:
        suggested = 0.5 / (2.0 * c_lambda)
        raise StabilityError(
            f"grid step {h} violates h * 2 * c_lambda < 1 for c_lambda = "
            f"{c_lambda}; use h <= {suggested}")
    return grid


def _normalize_step(p, t, flags):
    np.clip(p, 0.0, 1.0, out=p)
    drift = abs(p.sum() - 1.0)
    if drift > 1e-10:
        flags.append((float(t), float(drift)))
        p /= p.sum()
    return p


def _rk4(grid, rhs, p0):
    """Fixed-step RK4 over the grid; rhs(t, p) -> dp/dt."""
    pmfs = np.empty((grid.size, p0.size))
    flags = []
    p = np.asarray(p0, dtype=float).copy()
    pmfs[0] = p
    for k in range(grid.size - 1):
        t, h = grid[k], grid[k + 1] - grid[k]
        k1 = rhs(t, p)
        k2 = rhs(t + h / 2, p + (h / 2) * k1)
        k3 = rhs(t + h / 2, p + (h / 2) * k2)
        k4 = rhs(t + h, p + h * k3)
        p = p + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = _normalize_step(p, grid[k + 1], flags)
        pmfs[k + 1] = p
    return pmfs, flags


def _flow_from_pmfs(space, grid, pmfs, flags) -> MarginalFlow:
    snaps = [MeasureSnapshot.from_pmf(space, pmfs[i], grid[i])
             for i in range(grid.size)]
    flow = MarginalFlow(grid, snaps)
    flow.renormalization_flags = flags
    return flow


def solve_linear_forward(kernel: IntensityKernel, flow, initial_pmf,
                         grid) -> MarginalFlow:
    """Solve the linear forward equation, optionally against a frozen flow.

    With flow=None the kernel must not be measure dependent; otherwise the
    measure argument at time t is flow.at(t) (piecewise-constant-left).
    """
    space = kernel.space
    if space is None or space.kind != "finite":
        raise ValueError("finite state space required")
    if flow is None and kernel.measure_dependent:
        raise ValueError("measure-dependent kernel needs a frozen flow")
    grid = _check_grid(grid, kernel.c_lambda)
    p0 = np.asarray(initial_pmf, dtype=float)
    if abs(p0.sum() - 1.0) > 1e-9 or np.any(p0 < 0):
        raise ValueError("initial pmf must be a probability vector")

    # a finite-state frozen flow is evaluated smoothly in time at RK4 stage
    # points; piecewise-constant lookup there would drop the order to one
    smooth = flow is not None and flow.snapshots[0].probs is not None

    def rhs(t, p):
        if flow is None:
            snap = None
        elif smooth:
            snap = MeasureSnapshot.from_pmf(flow.snapshots[0].space,
                                            flow.pmf_at(t), t)
        else:
            snap = flow.at(t)
        Q = build_generator(kernel, snap, t, space)
        return Q.T @ p

    pmfs, flags = _rk4(grid, rhs, p0)
    return _flow_from_pmfs(space, grid, pmfs, flags)


def solve_nonlinear_forward(kernel: IntensityKernel, initial_pmf,
                            grid) -> MarginalFlow:
    """Solve the non-linear forward equation (generator fed its own pmf)."""
    space = kernel.space
    if space is None or space.kind != "finite":
        raise ValueError("finite state space required")
    grid = _check_grid(grid, kernel.c_lambda)
    p0 = np.asarray(initial_pmf, dtype=float)
    if abs(p0.sum() - 1.0) > 1e-9 or np.any(p0 < 0):
        raise ValueError("initial pmf must be a probability vector")

    def rhs(t, p):
        # RK4 stage values may drift slightly outside the simplex; project
        # before handing them to the kernel as a measure argument
        stage = np.clip(p, 0.0, None)
        total = stage.sum()
        snap = MeasureSnapshot.from_pmf(
            space, stage / total if total > 0 else np.full_like(p, 1 / p.size), t)
        Q = build_generator(kernel, snap, t, space)
        return Q.T @ p

    pmfs, flags = _rk4(grid, rhs, p0)
    return _flow_from_pmfs(space, grid, pmfs, flags)


def flow_to_rows(flow: MarginalFlow):
    """Yield (t, state_label, probability) rows for CSV export."""
    labels = flow.snapshots[0].space.labels
    for t, snap in zip(flow.grid, flow.snapshots):
        for label, p in zip(labels, snap.probs):
            yield float(t), label, float(p)
