"""Generalization bounds for early-stopped iterates and their Monte Carlo check.

The test distribution is a finitely supported measure, so the population
gradient ``grad f_G(x) = E_{y ~ mu} grad_x f(y, x)`` is an exact weighted sum.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._random import DATA_NODE, make_stream
from ._stats import mean_ci
from ._validation import BoundConditionError, check_int
from .measures import EmpiricalMeasure, sample_empirical, third_moment
from .problems import FiniteSumObjective
from .sgd import SgdConfig, run_sgd
from .svrg import SvrgConfig, run_svrg


@dataclass(frozen=True, eq=False)
class TestDistribution:
    mu: EmpiricalMeasure
    J: float

    __test__ = False  # not a pytest class

    def __init__(self, mu):
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "J", third_moment(mu))

    def population_grad(self, loss, x):
        return self.mu.weights @ loss.grad(self.mu.points, np.asarray(x, dtype=float))

    def population_value(self, loss, x):
        return float(self.mu.weights @ loss.value(self.mu.points, np.asarray(x, dtype=float)))


def generalization_bound_continuous(epsilon, G, kappa_d, J, n_T, d):
    """``2 eps + 2 G^2 kappa_d J n_T^(-3/d)``; requires d >= 3."""
    if d < 3:
        raise BoundConditionError(f"the continuous-measure bound needs d >= 3, got d={d}")
    return 2.0 * epsilon + 2.0 * G**2 * kappa_d * J * n_T ** (-3.0 / d)


def generalization_bound_discrete(epsilon, G, m_support, n_T):
    """``2 eps + 168 G^2 sqrt(m / n_T)`` for a test measure on at most m points."""
    m_support = check_int(m_support, "m_support", minimum=1)
    n_T = check_int(n_T, "n_T", minimum=1)
    return 2.0 * epsilon + 168.0 * G**2 * math.sqrt(m_support / n_T)


def svrg_runner(epsilon, x0=None, max_epochs=100_000):
    """Runner using the theory step-size and epoch length for the sampled training set."""

    def run(obj_T, obj_V, rng):
        cfg = SvrgConfig.from_theory(obj_T.n, obj_T.loss.L, epsilon, max_epochs)
        return run_svrg(obj_T, cfg, rng=rng, x0=x0)

    run.needs_validation = False
    return run


def sgd_runner(eta, m, epsilon, x0=None, max_iters=1_000_000):
    cfg = SgdConfig(eta, m, epsilon, max_iters)

    def run(obj_T, obj_V, rng):
        return run_sgd(obj_T, obj_V, cfg, rng=rng, x0=x0)

    run.needs_validation = True
    return run


def mc_generalization_gap(dist, loss, runner, trials, seed, n_T, n_V=None):
    """Monte Carlo estimate of ``E ||grad f_G(x_tau)||^2`` over datasets and algorithm noise.

    Trial ``k`` draws its datasets from stream ``(seed, k, DATA_NODE)`` and runs
    the algorithm on stream ``(seed, k, 0)``.
    """
    trials = check_int(trials, "trials", minimum=1)
    if trials < 2:
        raise ValueError("at least 2 trials are needed for a confidence interval")
    n_T = check_int(n_T, "n_T", minimum=1)
    needs_val = getattr(runner, "needs_validation", True)
    if needs_val and n_V is None:
        n_V = n_T
    values, taus, cap_hits = [], [], 0
    for k in range(trials):
        data_rng = make_stream(seed, k, DATA_NODE)
        obj_T = FiniteSumObjective(loss, sample_empirical(dist.mu, n_T, data_rng))
        obj_V = obj_T
        if needs_val:
            obj_V = FiniteSumObjective(loss, sample_empirical(dist.mu, n_V, data_rng))
        rec = runner(obj_T, obj_V, make_stream(seed, k, 0))
        cap_hits += int(rec.cap_hit)
        g = dist.population_grad(loss, rec.final_x)
        values.append(float(g @ g))
        taus.append(rec.iterations)
    mean, ci = mean_ci(values)
    return {
        "mean_grad_sq_G": mean,
        "ci": ci,
        "trials": trials,
        "n_T": n_T,
        "cap_hits": cap_hits,
        "mean_tau": mean_ci(taus)[0],
        "values": values,
    }
