"""Finite empirical measures, exact Wasserstein distances and concentration bounds.

The p-Wasserstein distance between two finitely supported measures is the
optimal value of a transportation linear program on the dense cost matrix
``C[i, j] = ||x_i - y_j||**p``. It is solved exactly with the HiGHS simplex
solver shipped with scipy; the p-th root is taken once, at the end.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_array

from ._random import as_generator
from ._validation import BoundConditionError, check_int, check_points, check_positive

WEIGHT_SUM_TOL = 1e-12
MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Probability measure with finite support in R^q.

    Parameters
    ----------
    points : array-like of shape (n, q)
        Support atoms. A 1-D input is read as ``n`` scalar atoms (q = 1).
    weights : array-like of shape (n,), optional
        Nonnegative masses summing to one. Omitted weights mean uniform.
        Atoms of zero weight are dropped.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None):
        pts = check_points(points)
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=float).reshape(-1)
            if w.shape[0] != pts.shape[0]:
                raise ValueError(f"got {w.shape[0]} weights for {pts.shape[0]} points")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")
            if abs(math.fsum(w) - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError(f"weights sum to {math.fsum(w)!r}, expected 1")
            keep = w > 0
            pts, w = pts[keep], w[keep]
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_counts(cls, points, counts):
        counts = np.asarray(counts, dtype=float)
        return cls(points, counts / counts.sum())

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def merged(self):
        """Equivalent measure with duplicate atoms combined."""
        uniq, inverse = np.unique(self.points, axis=0, return_inverse=True)
        w = np.zeros(uniq.shape[0])
        np.add.at(w, inverse.reshape(-1), self.weights)
        return EmpiricalMeasure._trusted(uniq, w)

    @classmethod
    def _trusted(cls, points, weights):
        obj = object.__new__(cls)
        object.__setattr__(obj, "points", points)
        object.__setattr__(obj, "weights", weights)
        return obj

    def same_as(self, other):
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, dim={self.dim})"


@dataclass(frozen=True)
class Coupling:
    """Joint measure on support(mu1) x support(mu2), stored as a dense matrix."""

    matrix: np.ndarray

    def check_marginals(self, mu1, mu2, tol=MARGINAL_TOL):
        g = self.matrix
        return bool(
            g.shape == (mu1.n, mu2.n)
            and np.all(g >= 0)
            and np.max(np.abs(g.sum(axis=1) - mu1.weights)) <= tol
            and np.max(np.abs(g.sum(axis=0) - mu2.weights)) <= tol
        )


def _check_pair(mu1, mu2, p):
    if not isinstance(mu1, EmpiricalMeasure) or not isinstance(mu2, EmpiricalMeasure):
        raise TypeError("wasserstein expects two EmpiricalMeasure instances")
    if mu1.n == 0 or mu2.n == 0:
        raise ValueError("empty support")
    if mu1.dim != mu2.dim:
        raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
    p = float(p)
    if not p >= 1 or math.isinf(p):
        raise ValueError(f"p must satisfy 1 <= p < inf, got {p}")
    return p


def cost_matrix(points1, points2, p):
    diff = points1[:, None, :] - points2[None, :, :]
    return np.linalg.norm(diff, axis=2) ** p


def _transport(a, b, cost):
    n, m = cost.shape
    if n == 1 or m == 1:
        # the product measure is the only coupling
        gamma = np.outer(a, b)
        return gamma, float(np.sum(gamma * cost))
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    a_eq = coo_array((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m))
    # one equality is redundant (both marginals sum to 1); HiGHS presolve handles it
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    gamma = np.maximum(res.x.reshape(n, m), 0.0)
    return gamma, float(np.sum(gamma * cost))


def optimal_coupling(mu1, mu2, p=1.0):
    """Return a coupling attaining the p-Wasserstein transport cost."""
    p = _check_pair(mu1, mu2, p)
    cost = cost_matrix(mu1.points, mu2.points, p)
    gamma, _ = _transport(mu1.weights, mu2.weights, cost)
    return Coupling(gamma)


def wasserstein(mu1, mu2, p=1.0):
    """Exact p-Wasserstein distance between two finitely supported measures.

    >>> wasserstein(EmpiricalMeasure([[0.0]]), EmpiricalMeasure([[3.0]]), p=1)
    3.0
    """
    p = _check_pair(mu1, mu2, p)
    if mu1.same_as(mu2):
        return 0.0
    m1, m2 = mu1.merged(), mu2.merged()
    cost = cost_matrix(m1.points, m2.points, p)
    _, value = _transport(m1.weights, m2.weights, cost)
    return max(value, 0.0) ** (1.0 / p)


def sample_empirical(mu, N, rng):
    """Uniform measure on ``N`` i.i.d. draws from ``mu`` (with replacement)."""
    N = check_int(N, "N", minimum=1)
    rng = as_generator(rng)
    idx = rng.choice(mu.n, size=N, p=mu.weights)
    return EmpiricalMeasure(mu.points[idx])


def third_moment(mu):
    """J = (E ||y||^3)^(1/3) under ``mu``."""
    if mu.n == 0:
        raise ValueError("empty measure")
    norms = np.linalg.norm(mu.points, axis=1)
    return math.fsum(mu.weights * norms**3) ** (1.0 / 3.0)


def dereich_bound(kappa_d, J, N, d):
    """Upper bound ``kappa_d * J * N**(-3/d)`` on E[d_2(mu, mu_N)^2], valid for d >= 3."""
    d = check_int(d, "d", minimum=1)
    if d < 3:
        raise BoundConditionError(f"the continuous concentration bound needs d >= 3, got d={d}")
    kappa_d = check_positive(kappa_d, "kappa_d")
    J = check_positive(J, "J", strict=False)
    N = check_int(N, "N", minimum=1)
    return kappa_d * J * N ** (-3.0 / d)


def discrete_support_bound(m, N):
    """``84 * sqrt(m / N)`` for measures on at most m points of the unit ball."""
    m = check_int(m, "m", minimum=1)
    N = check_int(N, "N", minimum=1)
    return 84.0 * math.sqrt(m / N)


def load_measure_csv(path):
    """Read a measure from CSV: one atom per row, optional trailing ``weight`` column.

    A header row is optional; weights are only read from a column whose header
    is ``weight``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no rows")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no atoms")
    if header is not None and header[-1].lower() == "weight":
        return EmpiricalMeasure(data[:, :-1], data[:, -1])
    return EmpiricalMeasure(data)


def save_measure_csv(mu, path, with_weights=True):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        cols = [f"x{i}" for i in range(mu.dim)]
        writer.writerow(cols + (["weight"] if with_weights else []))
        for pt, w in zip(mu.points, mu.weights):
            row = [repr(float(v)) for v in pt]
            writer.writerow(row + ([repr(float(w))] if with_weights else []))
