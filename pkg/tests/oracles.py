"""Independent reference implementations used by the tests.

Nothing here imports the package: distances come from enumerating
permutation matchings, bound formulas are re-derived in exact rational
arithmetic where the inputs allow it.
"""

import itertools
import math
from fractions import Fraction as F


def brute_force_wasserstein(xs, ys, p):
    """d_p between uniform measures on equal-size point lists via all n! matchings.

    Uniform measures with equal support size have a permutation matrix among
    their optimal couplings (Birkhoff), so the minimum over matchings is exact.
    """
    n = len(xs)
    assert n == len(ys)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = 0.0
        for i, j in enumerate(perm):
            cost += math.dist(xs[i], ys[j]) ** p
        best = min(best, cost / n)
    return best ** (1.0 / p)


def prop31_fraction(L, eta, m, eps, sigma2, alpha, beta, gd, f_gap):
    """Stopping-time bound numerator / denominator in rationals (gd = G * d1)."""
    L, eta, eps, sigma2, alpha, beta, gd, f_gap = map(F, (L, eta, eps, sigma2, alpha, beta, gd, f_gap))
    drift = beta / (1 - alpha)
    num = gd**2 + 2 * f_gap / eta + eps + 2 * drift
    den = eps / (2 * m) - 2 * L * eta * sigma2 - 2 * drift - gd**2 / m
    cond = eps - 4 * L * m * eta * sigma2 - 4 * m * drift - 2 * gd**2
    return num, den, cond


def cor32_step(c, L, eps, m, gd, sigma2, R, alpha):
    c, L, eps, gd, sigma2, R, alpha = map(F, (c, L, eps, gd, sigma2, R, alpha))
    den = m * (2 * L * sigma2 + 2 * R / (1 - alpha))
    second = (eps / 2 - gd**2) / den if den else None
    return c * (1 / L if second is None else min(1 / L, second))


def cor32_bound(c, L, eps, m, gd, sigma2, R, alpha, f_gap):
    c, L, eps, gd, sigma2, R, alpha, f_gap = map(F, (c, L, eps, gd, sigma2, R, alpha, f_gap))
    q = eps / 2 - gd**2
    t1 = 4 * m * m * f_gap * (L * sigma2 + R / (1 - alpha)) / ((1 - c) * c * q * q)
    t2 = (2 * L * m * f_gap + m * c * gd**2 + c * eps / 2) / ((1 - c) * c * q)
    return t1 + t2 + c / (1 - c)


def gamma_hand(eta, beta, m, L):
    """Backward c_t recursion and min Gamma_t in exact rationals."""
    eta, beta, L = F(eta), F(beta), F(L)
    c = [F(0)] * (m + 1)
    for t in range(m - 1, -1, -1):
        c[t] = c[t + 1] * (1 + eta * beta + 2 * eta**2 * L**2) + eta**2 * L**3
    gammas = [eta - c[t + 1] * eta / beta - eta**2 * L - 2 * c[t + 1] * eta**2 for t in range(m)]
    return c, gammas


def ring_eigenvalues(M, s):
    """Circulant spectrum of the ring with self weight s and neighbour weights (1-s)/2."""
    w = (1 - s) / 2
    return sorted((s + 2 * w * math.cos(2 * math.pi * k / M) for k in range(M)), reverse=True)
