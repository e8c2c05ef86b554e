"""Numerical kernels: spectral norm, classical MDS, hull scoring, assignment, OLS."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import NumericalError


class DegenerateHullWarning(UserWarning):
    """The corner points span no area, so the hull score is reported as 0."""


def check_distance_matrix(dist, atol: float = 1e-12) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise NumericalError(f"distance matrix must be square, got {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise NumericalError("distance matrix has non-finite entries")
    if np.any(np.diag(dist) != 0) or np.any(dist < 0):
        raise NumericalError("distance matrix needs a zero diagonal and nonnegative entries")
    if np.max(np.abs(dist - dist.T), initial=0.0) > atol:
        raise NumericalError("distance matrix is not symmetric")
    return dist


def operator_norm(matrix, rtol: float = 1e-12, max_iter: int = 10000) -> float:
    """Spectral norm of a symmetric matrix by power iteration.

    The estimate at each step is the largest absolute Ritz value on
    ``span{v, A v}``. Once ``v`` has settled into the plane of the ``+l`` and
    ``-l`` eigenvectors this is exact, so nearly balanced pairs do not slow
    convergence the way the plain ``|A v|`` estimate does.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericalError("operator_norm needs a square matrix")
    if not np.all(np.isfinite(a)):
        raise NumericalError("operator_norm got non-finite entries")
    scale = float(np.abs(a).max(initial=0.0))
    if scale == 0:
        return 0.0
    # iterate on a unit-scale copy so tiny or huge entries cannot under/overflow
    a = a / scale
    n = a.shape[0]
    v = np.ones(n) + 0.01 * np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = a @ v
        wn = float(np.linalg.norm(w))
        if wn == 0:
            # v landed in the null space; restart elsewhere
            v = np.random.default_rng(1).standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        vav = float(v @ w)
        resid = w - vav * v
        rn = float(np.linalg.norm(resid))
        if rn <= 1e-14 * wn:
            new = abs(vav)
        else:
            q = resid / rn
            aq = a @ q
            off = float(v @ aq)
            new = float(np.abs(np.linalg.eigvalsh([[vav, off], [off, float(q @ aq)]])).max())
        if abs(new - est) <= rtol * new:
            return new * scale
        est = new
        v = w / wn
    raise NumericalError("power iteration did not converge")


def classical_mds(dist, dims: int = 2) -> np.ndarray:
    """Torgerson scaling of a distance matrix.

    Negative and round-off-sized eigenvalues of the double-centred Gram
    matrix are set to zero, and each eigenvector is signed so its first
    nonzero entry is positive.

    Returns
    -------
    (n, dims) ndarray
    """
    d = np.asarray(dist, dtype=float)
    n = d.shape[0]
    if n < 3:
        raise NumericalError("classical MDS needs at least 3 points")
    d2 = d**2
    # double centring without forming J explicitly
    b = -0.5 * (d2 - d2.mean(axis=0) - d2.mean(axis=1)[:, None] + d2.mean())
    b = 0.5 * (b + b.T)
    evals, evecs = np.linalg.eigh(b)
    # eigenvalues at round-off level would turn into sqrt(eps)-sized coordinates
    floor = n * np.finfo(float).eps * np.abs(evals).max()
    order = np.argsort(evals, kind="stable")[::-1][:dims]
    evals = np.where(evals[order] > floor, evals[order], 0.0)
    evecs = evecs[:, order]
    for j in range(evecs.shape[1]):
        nz = np.flatnonzero(np.abs(evecs[:, j]) > 1e-12)
        if nz.size and evecs[nz[0], j] < 0:
            evecs[:, j] = -evecs[:, j]
    return evecs * np.sqrt(evals)


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def convex_hull_fraction(points, corners, tol: float = 1e-9) -> float:
    """Fraction of ``points`` inside or on the convex hull of ``corners``.

    A point counts as inside when it is no further than ``tol`` outside every
    hull edge. Corners spanning no area give 0 and a ``DegenerateHullWarning``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    hull = convex_hull(corners)
    if len(hull) < 3:
        warnings.warn("hull corners are collinear", DegenerateHullWarning, stacklevel=2)
        return 0.0
    if len(points) == 0:
        return 0.0
    inside = np.ones(len(points), dtype=bool)
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        edge = b - a
        length = np.hypot(*edge)
        # signed distance to the edge line, positive on the interior (left) side
        signed = (edge[0] * (points[:, 1] - a[1]) - edge[1] * (points[:, 0] - a[0])) / length
        inside &= signed >= -tol
    return float(inside.mean())


def _hungarian_core(cost: np.ndarray) -> np.ndarray:
    """Shortest augmenting path assignment with row/column potentials.

    Returns ``col_of_row`` for a square matrix.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _assignment_cost(cost: np.ndarray, perm) -> float:
    return float(sum(cost[i, perm[i]] for i in range(len(perm))))


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment of rows to columns.

    Among optimal assignments the lexicographically smallest ``perm`` is
    returned, found by fixing rows one at a time to the smallest column that
    still admits an optimal completion.

    Returns
    -------
    ndarray of int
        ``perm[i]`` is the 0-based column assigned to row ``i``.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise NumericalError(f"assignment cost must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise NumericalError("assignment cost has non-finite entries")
    k = cost.shape[0]
    if k == 0:
        return np.empty(0, dtype=int)
    best = _assignment_cost(cost, _hungarian_core(cost))
    slack = 1e-12 * max(1.0, np.abs(cost).sum())
    perm = np.empty(k, dtype=int)
    free_cols = list(range(k))
    fixed = 0.0
    for i in range(k):
        rest_rows = list(range(i + 1, k))
        for j in free_cols:
            cols = [c for c in free_cols if c != j]
            total = fixed + cost[i, j]
            if rest_rows:
                sub = cost[np.ix_(rest_rows, cols)]
                total += _assignment_cost(sub, _hungarian_core(sub))
            if total <= best + slack:
                perm[i] = j
                fixed += cost[i, j]
                free_cols.remove(j)
                break
        else:  # pragma: no cover - the optimum always has a completion
            raise NumericalError("assignment tie-breaking failed")
    return perm


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    slope_std_err: float
    t_stat: float
    p_value: float
    n_pairs: int


def linear_regression(x, y) -> RegressionFit:
    """Ordinary least squares of ``y`` on ``x`` with a two-sided slope t-test."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise NumericalError("x and y must be 1-d and the same length")
    n = len(x)
    if n < 3:
        raise NumericalError("linear regression needs at least 3 points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise NumericalError("predictor is constant")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    dof = n - 2
    se = float(np.sqrt((resid @ resid) / dof / sxx)) if dof > 0 else np.inf
    if se == 0:
        t = 0.0 if slope == 0 else np.copysign(np.inf, slope)
    else:
        t = slope / se
    p = 1.0 if t == 0 else float(min(1.0, 2 * stats.t.sf(abs(t), dof)))
    return RegressionFit(slope, intercept, se, float(t), p, n)
