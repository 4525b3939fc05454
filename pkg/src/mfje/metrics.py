"""Wasserstein-1 distances, Kantorovich–Rubinstein diagnostics, decay rates.

All R^d distances use the l1 ground metric; this is fixed, not configurable.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


# ---------------------------------------------------------------------------
# one-dimensional exact distance


def w1_1d(samples_a, samples_b, weights_a=None, weights_b=None) -> float:
    """Exact W1 between two weighted 1-D empirical measures.

    Computed as the area between the two CDFs, which equals the quantile
    coupling cost for equal total mass.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    wa = (np.full(a.size, 1.0 / a.size) if weights_a is None
          else np.asarray(weights_a, dtype=float))
    wb = (np.full(b.size, 1.0 / b.size) if weights_b is None
          else np.asarray(weights_b, dtype=float))
    if abs(wa.sum() - wb.sum()) > 1e-9:
        raise ValueError("total masses differ")
    grid = np.concatenate([a, b])
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    # signed CDF difference F_a - F_b, stepping at each sample point
    deltas = np.concatenate([wa, -wb])[order]
    cdf_diff = np.cumsum(deltas)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(grid)))


# ---------------------------------------------------------------------------
# exact discrete optimal transport


def w1_discrete(pmf_a, pmf_b, cost_matrix, return_plan: bool = False):
    """Exact optimal transport cost between two finite pmfs.

    Solved as the transportation linear program (HiGHS network-capable
    simplex); the optimal plan is returned on request.
    """
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    cost = np.asarray(cost_matrix, dtype=float)
    n, m = a.size, b.size
    if n > 256 or m > 256:
        raise ValueError("supports larger than 256 points are not supported")
    if cost.shape != (n, m):
        raise ValueError("cost matrix shape must match the two supports")
    if np.any(cost < 0):
        raise ValueError("cost matrix must be nonnegative")
    if n == m and np.any(np.diagonal(cost) != 0):
        raise ValueError("cost matrix must vanish on the diagonal")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError(f"mass mismatch: {a.sum()!r} vs {b.sum()!r}")

    # marginal constraints; drop the last column equation (redundant)
    A_eq = np.zeros((n + m - 1, n * m))
    b_eq = np.zeros(n + m - 1)
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
        b_eq[i] = a[i]
    for j in range(m - 1):
        A_eq[n + j, j::m] = 1.0
        b_eq[n + j] = b[j]
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    value = float(res.fun)
    if return_plan:
        return value, res.x.reshape(n, m)
    return value


def subsample_cloud(points, cap: int, seed: int = 0) -> np.ndarray:
    """Deterministic seeded subsample of a particle cloud down to cap points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] <= cap:
        return pts
    rng = np.random.default_rng(seed)
    idx = rng.choice(pts.shape[0], size=cap, replace=False)
    return pts[np.sort(idx)]


def w1_empirical_rd(cloud_a, cloud_b, weights_a=None, weights_b=None,
                    cap: int = 2048) -> float:
    """Exact W1 (l1 ground metric) between two weighted clouds in R^d."""
    a = np.atleast_2d(np.asarray(cloud_a, dtype=float))
    b = np.atleast_2d(np.asarray(cloud_b, dtype=float))
    if a.shape[0] > cap or b.shape[0] > cap:
        raise ValueError(
            f"cloud exceeds cap {cap}; subsample first (see subsample_cloud)")
    wa = (np.full(a.shape[0], 1.0 / a.shape[0]) if weights_a is None
          else np.asarray(weights_a, dtype=float))
    wb = (np.full(b.shape[0], 1.0 / b.shape[0]) if weights_b is None
          else np.asarray(weights_b, dtype=float))
    if a.shape[1] == 1:
        return w1_1d(a[:, 0], b[:, 0], wa, wb)
    # collapse duplicate support points so the LP stays small
    ua, inv_a = np.unique(a, axis=0, return_inverse=True)
    ub, inv_b = np.unique(b, axis=0, return_inverse=True)
    pa = np.bincount(inv_a, weights=wa, minlength=ua.shape[0])
    pb = np.bincount(inv_b, weights=wb, minlength=ub.shape[0])
    cost = np.abs(ua[:, None, :] - ub[None, :, :]).sum(axis=2)

    n, m = pa.size, pb.size
    A_eq = np.zeros((n + m - 1, n * m))
    b_eq = np.zeros(n + m - 1)
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
        b_eq[i] = pa[i]
    for j in range(m - 1):
        A_eq[n + j, j::m] = 1.0
        b_eq[n + j] = pb[j]
    res = linprog(cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def snapshot_w1(a, b) -> float:
    """W1 between two MeasureSnapshots (pmf or cloud support)."""
    if a.is_pmf and b.is_pmf and a.space is b.space:
        pts = a.space.points
        if pts.shape[1] == 1:
            return w1_1d(pts[:, 0], pts[:, 0], a.probs, b.probs)
        cost = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
        return w1_discrete(a.probs, b.probs, cost)
    return w1_empirical_rd(a.points, b.points, a.weights, b.weights)


# ---------------------------------------------------------------------------
# Kantorovich–Rubinstein diagnostics


def kr0_signed_1d(points, signed_weights) -> float:
    """Exact sup of integral f d(nu) over 1-Lipschitz f with f(0)=0.

    nu is the signed measure sum_i w_i * delta_{p_i}.  Used to lower-bound
    KR distances between (sub)probability intensity measures of unequal
    total mass, for which f(0)=0 pins the free constant.
    """
    pts = np.asarray(points, dtype=float).ravel()
    w = np.asarray(signed_weights, dtype=float).ravel()
    total = 0.0
    # positive half-line: integrate |nu((t, inf))| over t in (0, max)
    pos = pts > 0
    if np.any(pos):
        p, pw = pts[pos], w[pos]
        order = np.argsort(p, kind="stable")
        p, pw = p[order], pw[order]
        grid = np.concatenate([[0.0], p])
        tail = np.concatenate([np.cumsum(pw[::-1])[::-1], [0.0]])
        total += float(np.sum(np.abs(tail[:-1]) * np.diff(grid)))
    # negative half-line: integrate |nu((-inf, t))| over t in (min, 0)
    neg = pts < 0
    if np.any(neg):
        p, pw = pts[neg], w[neg]
        order = np.argsort(p, kind="stable")
        p, pw = p[order], pw[order]
        grid = np.concatenate([p, [0.0]])
        head = np.concatenate([[0.0], np.cumsum(pw)])
        total += float(np.sum(np.abs(head[1:]) * np.diff(grid)))
    return total


def kr_dual_lower_bound(samples_a, samples_b, weights_a=None, weights_b=None,
                        n_functions: int = 64, grid_size: int = 64,
                        seed: int = 0) -> float:
    """Dual W1 estimate over a random family of 1-Lipschitz functions.

    Piecewise-linear test functions with segment slopes uniform in [-1, 1];
    always a lower bound on the primal 1-D W1 value.  Diagnostic only.
    """
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    wa = (np.full(a.size, 1.0 / a.size) if weights_a is None
          else np.asarray(weights_a, dtype=float))
    wb = (np.full(b.size, 1.0 / b.size) if weights_b is None
          else np.asarray(weights_b, dtype=float))
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 0.0
    rng = np.random.default_rng(seed)
    grid = np.linspace(lo, hi, grid_size + 1)
    best = 0.0
    for _ in range(n_functions):
        slopes = rng.uniform(-1.0, 1.0, grid_size)
        vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(grid))])
        fa = np.interp(a, grid, vals)
        fb = np.interp(b, grid, vals)
        best = max(best, abs(float(np.dot(wa, fa) - np.dot(wb, fb))))
    return best


# ---------------------------------------------------------------------------
# empirical-measure convergence rate


def fournier_rate(n: int, d: int, q: float) -> float:
    """Dimension/moment case-split rate for W1 of empirical measures.

    Excluded parameter combinations (q = 2 for d <= 2; q = d/(d-1) for
    d > 2) are boundary cases of the underlying moment bound and are
    rejected rather than patched with logarithmic corrections.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if q <= 1:
        raise ValueError("moment order q must exceed 1")
    if d < 1:
        raise ValueError("dimension must be positive")
    moment_term = n ** (-(q - 1) / q)
    if d <= 2:
        if q == 2:
            raise ValueError(
                "q = 2 is excluded for d <= 2 (boundary of the rate cases)")
        if d == 1:
            return n ** -0.5 + moment_term
        return float(np.log1p(n) / np.sqrt(n)) + moment_term
    if q == d / (d - 1):
        raise ValueError(
            f"q = d/(d-1) = {q} is excluded for d = {d} (boundary case)")
    return n ** (-1.0 / d) + moment_term


# ---------------------------------------------------------------------------
# chaos-gap summary


def chaos_gap(pairs):
    """Mean sup-path-distance over coupled pairs with a normal 95% CI.

    The coupling realizes one admissible joint law, so this is an upper
    bound on the Wasserstein distance between the path laws.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two coupled pairs")
    gaps = np.array([p.sup_distance for p in pairs], dtype=float)
    mean = float(gaps.mean())
    se = float(gaps.std(ddof=1) / np.sqrt(gaps.size))
    return mean, (mean - 1.96 * se, mean + 1.96 * se)
