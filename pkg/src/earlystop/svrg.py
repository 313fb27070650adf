"""SVRG with early stopping on the exact training gradient.

Each epoch computes the full gradient ``g`` at the anchor, returns the anchor
if ``||g||^2 <= epsilon``, and otherwise runs ``m`` inner steps along the
variance-reduced direction

    v = grad f(y, x_t) - grad f(y, anchor) + g,      y uniform on the training set.

The epoch-level descent guarantee rests on the constants of a backward
recursion (:func:`gamma_from_recursion`).
"""

import math
from dataclasses import dataclass

import numpy as np

from ._random import as_generator
from ._validation import check_int, check_positive, check_vector
from .records import RunRecord

DEFAULT_MAX_EPOCHS = 100_000
BETA_GRID = np.logspace(-3, 3, 61)


@dataclass(frozen=True)
class SvrgConfig:
    eta: float
    m: int
    epsilon: float
    max_epochs: int = DEFAULT_MAX_EPOCHS

    def __post_init__(self):
        check_positive(self.eta, "eta")
        check_int(self.m, "m", minimum=1)
        check_positive(self.epsilon, "epsilon")
        check_int(self.max_epochs, "max_epochs", minimum=1)

    @classmethod
    def from_theory(cls, n_T, L, epsilon, max_epochs=DEFAULT_MAX_EPOCHS):
        eta, m = svrg_hyperparams(n_T, L)
        return cls(eta, m, epsilon, max_epochs)


def _n23(n):
    # cube root first so perfect cubes give exact powers
    return float(np.cbrt(n)) ** 2


def svrg_hyperparams(n_T, L):
    """``eta = 1 / (4 L n_T^(2/3))`` and ``m = floor(4 n_T / 3)``."""
    n_T = check_int(n_T, "n_T", minimum=1)
    L = check_positive(L, "L")
    return 1.0 / (4.0 * L * _n23(n_T)), (4 * n_T) // 3


def run_svrg(obj_T, config, rng=0, x0=None, record_inner=0):
    """Run SVRG with early stopping; ``tau`` counts epochs (full-gradient checks).

    IFO cost: ``n_T`` per epoch plus ``2`` per inner step. The first
    ``record_inner`` inner steps are kept in ``audit["inner"]`` as
    ``(x_t, anchor, g, direction)`` tuples.
    """
    rng = as_generator(rng)
    obj = obj_T.fork()
    grad = obj.loss.grad
    pts = obj.points
    anchor = np.zeros(obj.dim) if x0 is None else check_vector(x0, obj.dim, "x0")
    eta, m, eps = config.eta, config.m, config.epsilon

    trace, inner = [], []
    s = 1
    cap_hit = False
    while True:
        g = obj.grad(anchor)
        gsq = float(g @ g)
        trace.append(gsq)
        if gsq <= eps:
            break
        if s >= config.max_epochs:
            cap_hit = True
            break
        x = anchor.copy()
        for _ in range(m):
            i = int(rng.integers(obj.n))
            obj.ifo_count += 2
            v = grad(pts[i], x) - grad(pts[i], anchor) + g
            if len(inner) < record_inner:
                inner.append((x.copy(), anchor.copy(), g.copy(), v))
            x = x - eta * v
        anchor = x
        s += 1

    return RunRecord(
        algorithm="svrg",
        tau=None if cap_hit else s,
        cap_hit=cap_hit,
        iterations=s,
        ifo_count=obj.ifo_count,
        final_x=anchor,
        trace=trace,
        epsilon=eps,
        audit={"inner": inner},
    )


def svrg_epoch(obj_T, anchor, eta, m, rng):
    """One epoch from ``anchor`` without stopping; returns (inner iterates x_0..x_{m-1}, next anchor)."""
    grad = obj_T.loss.grad
    pts = obj_T.points
    g = obj_T.grad(anchor, count=False)
    x = np.array(anchor, dtype=float)
    xs = []
    for _ in range(m):
        xs.append(x)
        i = int(rng.integers(obj_T.n))
        x = x - eta * (grad(pts[i], x) - grad(pts[i], anchor) + g)
    return np.array(xs), x


@dataclass(frozen=True)
class GammaCertificate:
    beta_analysis: float
    c_sequence: np.ndarray
    Gamma: np.ndarray
    gamma: float
    valid: bool


def gamma_from_recursion(eta, beta_analysis, m, L):
    """Backward recursion ``c_m = 0``, ``c_t = c_{t+1}(1 + eta beta + 2 eta^2 L^2) + eta^2 L^3``.

    ``Gamma_t = eta - c_{t+1} eta / beta - eta^2 L - 2 c_{t+1} eta^2`` and
    ``gamma = min_t Gamma_t``; the certificate is valid when every Gamma_t > 0.
    """
    eta = check_positive(eta, "eta")
    if beta_analysis == 0:
        raise ValueError("beta_analysis must be nonzero (Gamma_t divides by it)")
    beta = check_positive(beta_analysis, "beta_analysis")
    m = check_int(m, "m", minimum=1)
    L = check_positive(L, "L")
    growth = 1.0 + eta * beta + 2.0 * eta**2 * L**2
    c = np.zeros(m + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(m - 1, -1, -1):
            c[t] = c[t + 1] * growth + eta**2 * L**3
        nxt = c[1:]
        Gamma = eta - nxt * eta / beta - eta**2 * L - 2.0 * nxt * eta**2
    Gamma = np.where(np.isfinite(Gamma), Gamma, -np.inf)
    gamma = float(Gamma.min())
    return GammaCertificate(beta, c, Gamma, gamma, bool(np.all(Gamma > 0)))


def gamma_lower_bound_check(n, L, xi=0.25, betas=BETA_GRID):
    """Search the analysis constant beta on a log grid to certify ``gamma >= 1/(40 L n^(2/3))``.

    Uses ``eta = xi / (L n^(2/3))`` and ``m = floor(n / (3 xi))``. The target
    constant is only established for ``xi = 1/4``; other values are reported
    with ``certified = False``.
    """
    n = check_int(n, "n", minimum=1)
    L = check_positive(L, "L")
    eta = xi / (L * _n23(n))
    m = max(1, math.floor(n / (3.0 * xi) + 1e-12))
    best = max((gamma_from_recursion(eta, b, m, L) for b in betas), key=lambda cert: cert.gamma)
    target = 1.0 / (40.0 * L * _n23(n))
    return {
        "gamma_star": best.gamma,
        "beta_star": best.beta_analysis,
        "target": target,
        "eta": eta,
        "m": m,
        "passes": bool(best.valid and best.gamma >= target),
        "certified": xi == 0.25,
    }


def tau_bound_svrg(L, n_T, f_gap, epsilon):
    """``1 + 40 L n_T^(2/3) f_gap / epsilon`` (epochs)."""
    epsilon = check_positive(epsilon, "epsilon")
    return 1.0 + 40.0 * L * _n23(n_T) * f_gap / epsilon


def ifo_bound_svrg(tau_bound, n_T, m):
    if tau_bound < 1:
        raise ValueError("tau_bound must be >= 1")
    check_int(m, "m", minimum=1)
    return tau_bound * (n_T + 2 * m)
