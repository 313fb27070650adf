"""SGD with validation-gradient early stopping, bias models and run-time bounds.

The iteration is ``x_{n+1} = x_n - eta * (v_n + Delta_n)`` where ``v_n`` is the
gradient of one uniformly sampled training example and ``Delta_n`` an optional
bias term obeying the geometric drift condition

    V_1 <= beta,   V_t <= alpha V_{t-1} + U_{t-1},   E[U_t | past] <= beta,
    ||Delta_t||^2 <= V_t.

``||grad f_V(x_t)||^2`` is checked at t = 1, m + 1, 2m + 1, ...; the run stops
at the first check that is at most ``epsilon``.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._random import as_generator
from ._validation import (
    BoundConditionError,
    check_int,
    check_positive,
    check_unit_interval,
    check_vector,
)
from .records import BoundReport, RunRecord

DEFAULT_MAX_ITERS = 1_000_000


@dataclass(frozen=True)
class SgdConfig:
    eta: float
    m: int
    epsilon: float
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        check_positive(self.eta, "eta")
        check_int(self.m, "m", minimum=1)
        check_positive(self.epsilon, "epsilon")
        check_int(self.max_iters, "max_iters", minimum=1)


class ZeroBias:
    """Unbiased updates: Delta_t = 0 and V_t = U_t = 0."""

    alpha = 0.0
    beta = 0.0

    def start(self, eta, dim):
        self._zero = np.zeros(dim)
        return self

    def draw(self, rng):
        return self._zero, 0.0, 0.0


class SyntheticDriftBias:
    """Random bias with an exactly tracked drift certificate.

    ``V_1 = beta * u`` with ``u ~ U(0, 1)``; afterwards ``V_t = alpha V_{t-1} + U_{t-1}``
    with ``U_t = beta * Exp(1)``, so ``E[U_t] = beta``. The direction of
    ``Delta_t`` follows an AR(1) process and ``||Delta_t||^2 = V_t``.

    Pass either ``beta`` or a rate ``R``; in the latter case ``beta = eta * R``
    is fixed when the run starts.
    """

    def __init__(self, alpha, beta=None, R=None):
        self.alpha = check_unit_interval(alpha, "alpha")
        if (beta is None) == (R is None):
            raise ValueError("give exactly one of beta or R")
        self.R = None if R is None else check_positive(R, "R", strict=False)
        self.beta = None if beta is None else check_positive(beta, "beta", strict=False)
        self._beta_fixed = beta

    def start(self, eta, dim):
        if self._beta_fixed is None:
            self.beta = eta * self.R
        self._dim = dim
        self._V = None
        self._U = None
        self._w = None
        return self

    def draw(self, rng):
        if self._V is None:
            V = self.beta * rng.uniform()
            w = rng.normal(size=self._dim)
        else:
            V = self.alpha * self._V + self._U
            w = math.sqrt(self.alpha) * self._w + rng.normal(size=self._dim)
        U = self.beta * rng.exponential()
        self._V, self._U, self._w = V, U, w
        norm = np.linalg.norm(w)
        delta = (math.sqrt(V) / norm) * w if norm > 0 else np.zeros(self._dim)
        return delta, V, U


def check_drift(V, U, delta_sq, alpha, beta, rtol=1e-12):
    """True when the recorded traces satisfy the geometric drift condition."""
    V, U, delta_sq = map(np.asarray, (V, U, delta_sq))
    if V.size == 0:
        return True
    slack = rtol * (1.0 + np.abs(V))
    if V[0] > beta + slack[0]:
        return False
    if np.any(V[1:] > alpha * V[:-1] + U[:-1] + slack[1:]):
        return False
    return bool(np.all(delta_sq <= V + slack))


def run_sgd(obj_T, obj_V, config, bias=None, rng=0, x0=None, record_trajectory=False):
    """Run SGD with early stopping and return a :class:`RunRecord`.

    IFO cost: ``n_V`` per stopping check plus one per update.
    """
    if obj_T.dim != obj_V.dim:
        raise ValueError(f"training dimension {obj_T.dim} != validation dimension {obj_V.dim}")
    rng = as_generator(rng)
    obj_T, obj_V = obj_T.fork(), obj_V.fork()
    bias = (bias or ZeroBias()).start(config.eta, obj_T.dim)
    x = np.zeros(obj_T.dim) if x0 is None else check_vector(x0, obj_T.dim, "x0")
    eta, m, eps = config.eta, config.m, config.epsilon

    trace, V_tr, U_tr, dsq_tr = [], [], [], []
    traj = [x.copy()] if record_trajectory else None
    t = 1
    cap_hit = False
    while True:
        gv = obj_V.grad(x)
        gsq = float(gv @ gv)
        trace.append(gsq)
        if gsq <= eps:
            break
        if t + m > config.max_iters:
            cap_hit = True
            break
        for _ in range(m):
            v = obj_T.stochastic_grad(x, rng)
            delta, V, U = bias.draw(rng)
            x = x - eta * (v + delta)
            V_tr.append(V)
            U_tr.append(U)
            dsq_tr.append(float(delta @ delta))
            if traj is not None:
                traj.append(x.copy())
        t += m

    audit = {
        "V": np.array(V_tr),
        "U": np.array(U_tr),
        "delta_sq": np.array(dsq_tr),
        "alpha": bias.alpha,
        "beta": bias.beta,
    }
    if traj is not None:
        audit["trajectory"] = np.array(traj)
    return RunRecord(
        algorithm="sgd",
        tau=None if cap_hit else t,
        cap_hit=cap_hit,
        iterations=t,
        ifo_count=obj_T.ifo_count + obj_V.ifo_count,
        final_x=x,
        trace=trace,
        epsilon=eps,
        audit=audit,
    )


# -- bound calculators --------------------------------------------------------


def _gap_margin(epsilon, G, d1):
    margin = epsilon / 2.0 - (G * d1) ** 2
    if margin <= 0:
        raise BoundConditionError(
            "threshold below irreducible validation-training gap: "
            f"epsilon={epsilon} <= 2 G^2 d1^2={2 * (G * d1) ** 2}"
        )
    return margin


def step_size_cor32(c, L, epsilon, m, G, d1, sigma2, R=0.0, alpha=0.0):
    """Constant step-size ``c * min{1/L, (eps/2 - G^2 d1^2) / (m (2 L sigma2 + 2R/(1-alpha)))}``."""
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    alpha = check_unit_interval(alpha, "alpha")
    L = check_positive(L, "L")
    margin = _gap_margin(epsilon, G, d1)
    denom = m * (2.0 * L * sigma2 + 2.0 * R / (1.0 - alpha))
    if denom == 0:
        return c / L
    return c * min(1.0 / L, margin / denom)


def tau_bound_prop31(L, eta, m, epsilon, sigma2, alpha, beta, G, d1, f_gap):
    """Bound on the expected stopping time of (biased) SGD for a given step-size."""
    if eta > 1.0 / L:
        raise BoundConditionError(f"step-size {eta} exceeds 1/L = {1.0 / L}")
    alpha = check_unit_interval(alpha, "alpha")
    gd2 = (G * d1) ** 2
    drift = beta / (1.0 - alpha)
    params = dict(L=L, eta=eta, m=m, epsilon=epsilon, sigma2=sigma2, alpha=alpha,
                  beta=beta, G=G, d1=d1, f_gap=f_gap)
    condition = epsilon - 4 * L * m * eta * sigma2 - 4 * m * drift - 2 * gd2
    cond_text = "eps - 4Lm*eta*sigma2 - 4m*beta/(1-alpha) - 2G^2 d1^2 > 0"
    if not condition > 0:
        return BoundReport("tau_prop31", None, False, cond_text, params,
                           {"condition_value": condition})
    num = gd2 + 2.0 * f_gap / eta + epsilon + 2.0 * drift
    den = epsilon / (2.0 * m) - 2.0 * L * eta * sigma2 - 2.0 * drift - gd2 / m
    return BoundReport("tau_prop31", num / den, True, cond_text, params,
                       {"condition_value": condition})


def tau_bound_cor32(c, L, epsilon, m, G, d1, sigma2, R, alpha, f_gap):
    """Exact pre-asymptotic stopping-time bound when ``beta = eta R`` and eta is the Cor. step-size."""
    eta = step_size_cor32(c, L, epsilon, m, G, d1, sigma2, R, alpha)
    margin = _gap_margin(epsilon, G, d1)
    gd2 = (G * d1) ** 2
    cc = (1.0 - c) * c
    first = 4.0 * m**2 * f_gap * (L * sigma2 + R / (1.0 - alpha)) / (cc * margin**2)
    second = (2.0 * L * m * f_gap + m * c * gd2 + c * epsilon / 2.0) / (cc * margin)
    value = first + second + c / (1.0 - c)
    params = dict(c=c, L=L, epsilon=epsilon, m=m, G=G, d1=d1, sigma2=sigma2, R=R,
                  alpha=alpha, f_gap=f_gap)
    return BoundReport("tau_cor32", value, True, "eps > 2 G^2 d1^2", params, {"eta": eta})


def post_stationarity_bound(epsilon, G, d1):
    """Bound ``(sqrt(eps) + G d1)^2`` on the training gradient at the stopped iterate."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return (math.sqrt(epsilon) + G * d1) ** 2


def ifo_bound_sgd(tau_bound, m, n_V):
    if tau_bound < 1:
        raise ValueError("tau_bound must be >= 1")
    return tau_bound * (n_V / m + 1.0) + n_V
