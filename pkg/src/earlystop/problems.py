"""Loss oracles and finite-sum objectives with IFO accounting.

A loss ``f(y, x)`` maps a data point ``y`` in R^q and parameters ``x`` in R^d to
a real number. Oracles are vectorised with numpy broadcasting: ``y`` of shape
(..., q) and ``x`` of shape (..., d) give values of shape (...) and gradients
(with respect to ``x``) of shape (..., d).

One IFO (incremental first-order oracle) call is one per-example evaluation of
``(f(y, x), grad_x f(y, x))``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._random import as_generator, make_stream
from ._validation import check_points, check_positive, check_vector
from .measures import EmpiricalMeasure

LIPSCHITZ_SAFETY = 1.25
SIGMA2_SAFETY = 1.1
FD_REL_FLOOR = 1e-3


@dataclass(frozen=True)
class LossFunction:
    """Per-example loss with certified smoothness constants.

    Attributes
    ----------
    value, grad : callable
        ``value(y, x)`` and ``grad(y, x)`` (gradient in ``x``), both broadcasting.
    L : float
        Lipschitz constant of ``grad`` in ``x``.
    G : float
        Lipschitz constant of ``grad`` in ``y``.
    f_star : float
        Known lower bound on the loss.
    """

    name: str
    value: Callable
    grad: Callable
    L: float
    G: float
    f_star: float = 0.0
    info: dict = field(default_factory=dict, compare=False)


def _quad_value(y, x):
    return 0.5 * np.sum((x - y) ** 2, axis=-1)


def _quad_grad(y, x):
    return np.broadcast_to(x, np.broadcast_shapes(np.shape(x), np.shape(y))) - y


def quadratic_problem():
    """f(y, x) = ||x - y||^2 / 2 with L = G = 1 and f* = 0."""
    return LossFunction("quadratic", _quad_value, _quad_grad, L=1.0, G=1.0, f_star=0.0)


def _tanh_value(y, x):
    return 0.5 * np.sum((np.tanh(x) - y) ** 2, axis=-1)


def _tanh_grad(y, x):
    t = np.tanh(x)
    return (t - y) * (1.0 - t * t)


def tanh_hessian_entry(x, y):
    """Diagonal Hessian entry of the tanh-composite loss for one coordinate."""
    t = np.tanh(x)
    s2 = 1.0 - t * t
    return s2 * (s2 - 2.0 * t * (t - y))


def _lipschitz_grid(J, n_probe, x_radius):
    # The Hessian is diagonal and separable across coordinates, so probing a single
    # coordinate over |x_j| <= x_radius, |y_j| <= J covers every probe in the balls.
    side = int(round(math.sqrt(n_probe)))
    xs = np.linspace(-x_radius, x_radius, side)
    ys = np.linspace(-J, J, side)
    xg, yg = np.meshgrid(xs, ys, indexing="ij")
    xg, yg = xg.ravel(), yg.ravel()
    h = 1e-5 * (1.0 + np.abs(xg))
    ratios = np.abs(_tanh_grad(yg, xg + h) - _tanh_grad(yg, xg - h)) / (2.0 * h)
    return float(ratios.max())


def tanh_composite_problem(targets, J, n_probe=10_000, x_radius=3.0):
    """f(y, x) = ||tanh(x) - y||^2 / 2 with tanh applied componentwise.

    ``G = 1`` because the mixed derivative is ``-diag(tanh'(x))``. ``L`` is
    certified as 1.25 times the largest central-difference Lipschitz ratio of
    the gradient over a probe grid on ``|x| <= x_radius``, ``|y| <= J``.
    """
    J = check_positive(J, "J")
    pts = check_points(targets, "targets")
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms > J * (1 + 1e-12)):
        raise ValueError(f"target norm {norms.max():.6g} exceeds radius J={J}")
    ratio = _lipschitz_grid(J, n_probe, x_radius)
    return LossFunction(
        "tanh_composite",
        _tanh_value,
        _tanh_grad,
        L=LIPSCHITZ_SAFETY * ratio,
        G=1.0,
        f_star=0.0,
        info={"J": J, "max_fd_ratio": ratio, "n_probe": n_probe},
    )


def make_problem(name, data_points=None, J=None):
    if name == "quadratic":
        return quadratic_problem()
    if name == "tanh_composite":
        if data_points is None:
            raise ValueError("tanh_composite needs the targets to certify against")
        pts = check_points(data_points)
        if J is None:
            J = float(np.linalg.norm(pts, axis=1).max()) or 1.0
        return tanh_composite_problem(pts, J)
    raise ValueError(f"unknown problem {name!r}; expected 'quadratic' or 'tanh_composite'")


class FiniteSumObjective:
    """f(x) = (1/n) sum_y f(y, x) over a dataset, counting IFO calls.

    The counter only ever increases. Algorithms take a :meth:`fork` so every
    run owns a private counter.
    """

    def __init__(self, loss, data):
        if isinstance(data, EmpiricalMeasure):
            if not data.is_uniform:
                raise ValueError("a finite-sum objective needs a uniformly weighted dataset")
            points = np.asarray(data.points)
        else:
            points = check_points(data, "dataset")
        self.loss = loss
        self.points = points
        self.ifo_count = 0

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def measure(self):
        return EmpiricalMeasure(self.points)

    def fork(self):
        clone = FiniteSumObjective.__new__(FiniteSumObjective)
        clone.loss, clone.points, clone.ifo_count = self.loss, self.points, 0
        return clone

    def _x(self, x):
        return check_vector(x, self.dim)

    def value(self, x, count=True):
        x = self._x(x)
        if count:
            self.ifo_count += self.n
        return math.fsum(self.loss.value(self.points, x)) / self.n

    def per_example_grads(self, x, count=True):
        x = self._x(x)
        if count:
            self.ifo_count += self.n
        return self.loss.grad(self.points, x)

    def grad(self, x, count=True):
        return self.per_example_grads(x, count=count).mean(axis=0)

    def example_grads(self, idx, x):
        """Gradients for examples ``idx`` at parameters ``x`` (one row per index)."""
        idx = np.asarray(idx)
        self.ifo_count += idx.size
        return self.loss.grad(self.points[idx], x)

    def stochastic_grad(self, x, rng):
        if self.n == 0:
            raise ValueError("empty dataset")
        x = self._x(x)
        i = int(rng.integers(self.n))
        self.ifo_count += 1
        return self.loss.grad(self.points[i], x)

    def gradient_variance(self, x):
        g = self.per_example_grads(x, count=False)
        return float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))


def objective_grad(obj, x):
    """Full gradient of ``obj`` at ``x``; costs ``obj.n`` IFO calls."""
    return obj.grad(x)


def stochastic_grad(obj, x, rng):
    """Gradient of one uniformly drawn example; costs one IFO call."""
    return obj.stochastic_grad(x, as_generator(rng))


def empirical_variance_bound(obj, probes):
    """Largest per-example gradient variance over ``probes`` (certificate for sigma_v^2)."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.shape[0] == 0:
        raise ValueError("probes must be nonempty")
    return max(obj.gradient_variance(p) for p in probes)


def default_probes(dim, n_random=100, radius=3.0, seed=0):
    rng = make_stream(seed, 0, 0)
    dirs = rng.normal(size=(n_random, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=(n_random, 1)) ** (1.0 / dim)
    return np.vstack([np.zeros((1, dim)), dirs * radii])


def sigma2_certificate(obj, probes=None, safety=SIGMA2_SAFETY):
    """Variance constant for the bound calculators: safety factor times the probe maximum."""
    if probes is None:
        probes = default_probes(obj.dim)
    return safety * empirical_variance_bound(obj, probes)


# -- numerical audits --------------------------------------------------------


def fd_step(x):
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


def finite_difference_grad(fun, x, h=None):
    """Central-difference gradient of the scalar function ``fun`` at ``x``."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if h is None else h
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def relative_error(approx, exact):
    """Relative error with a floor of 1e-3 on the reference norm."""
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), FD_REL_FLOOR))


def gradient_check(loss, y, x):
    """Relative error between ``loss.grad(y, x)`` and central differences of ``loss.value``."""
    fd = finite_difference_grad(lambda z: float(loss.value(y, z)), x)
    return relative_error(fd, loss.grad(y, x))


def lipschitz_ratio(grad, a, b):
    den = np.linalg.norm(a - b)
    return float(np.linalg.norm(grad(a) - grad(b)) / den) if den > 0 else 0.0


def quadratic_growth_gap(obj, x, v):
    """``f(x) + <grad f(x), v> + L/2 ||v||^2 - f(x + v)``; nonnegative under L-smoothness."""
    fx = obj.value(x, count=False)
    g = obj.grad(x, count=False)
    return fx + float(g @ v) + 0.5 * obj.loss.L * float(v @ v) - obj.value(x + v, count=False)
