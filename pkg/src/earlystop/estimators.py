"""scikit-learn style estimators over the functional algorithms.

The "data" passed to :meth:`fit` are the loss targets ``y`` (rows of ``Y``);
the fitted parameter vector is ``x_``. Scores are the negated squared gradient
norm of the empirical objective, so larger is better.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._random import make_stream
from .dsgd import dsgd_step_size, make_topology, run_dsgd, tau_bound_dsgd
from .measures import wasserstein
from .problems import FiniteSumObjective, make_problem, sigma2_certificate
from .sgd import SgdConfig, ZeroBias, run_sgd, step_size_cor32, tau_bound_prop31
from .svrg import SvrgConfig, run_svrg, svrg_hyperparams, tau_bound_svrg


class _EarlyStoppingBase(BaseEstimator):
    def _objectives(self, Y_train, Y_val):
        Y_T = check_array(Y_train, dtype=float, ensure_2d=True)
        Y_V = Y_T if Y_val is None else check_array(Y_val, dtype=float, ensure_2d=True)
        if Y_V.shape[1] != Y_T.shape[1]:
            raise ValueError(f"Y_val has {Y_V.shape[1]} columns, Y_train has {Y_T.shape[1]}")
        self.loss_ = make_problem(self.problem, np.vstack([Y_T, Y_V]))
        self.n_features_in_ = Y_T.shape[1]
        return FiniteSumObjective(self.loss_, Y_T), FiniteSumObjective(self.loss_, Y_V)

    def _x0(self, dim):
        return np.zeros(dim) if self.x0 is None else np.asarray(self.x0, dtype=float)

    def _constants(self, obj_T, obj_V, x0):
        self.d1_ = wasserstein(obj_V.measure(), obj_T.measure(), 1.0)
        self.sigma2_ = sigma2_certificate(obj_T)
        self.f_gap_ = obj_T.value(x0, count=False) - self.loss_.f_star

    def _store(self, rec):
        self.record_ = rec
        self.x_ = rec.final_x
        self.tau_ = rec.tau
        self.n_ifo_ = rec.ifo_count
        return self

    def gradient_norm_sq(self, Y):
        """Squared norm of the empirical gradient on ``Y`` at the fitted parameters."""
        check_is_fitted(self, "x_")
        Y = check_array(Y, dtype=float)
        g = FiniteSumObjective(self.loss_, Y).grad(self.x_, count=False)
        return float(g @ g)

    def score(self, Y, y=None):
        return -self.gradient_norm_sq(Y)


class EarlyStoppingSGD(_EarlyStoppingBase):
    """SGD stopped on the validation gradient.

    Parameters
    ----------
    problem : {"quadratic", "tanh_composite"}
    epsilon : float
        Threshold on the squared validation-gradient norm.
    m : int
        Updates between stopping checks.
    eta : float, optional
        Step-size. When omitted it is ``c`` times the theory step-size.
    c : float
        Fraction of the theory step-size used when ``eta`` is None.
    bias : object, optional
        Bias model with ``start``/``draw`` (defaults to no bias).
    """

    def __init__(self, problem="quadratic", epsilon=0.1, m=10, eta=None, c=0.5,
                 max_iters=1_000_000, bias=None, x0=None, random_state=0):
        self.problem = problem
        self.epsilon = epsilon
        self.m = m
        self.eta = eta
        self.c = c
        self.max_iters = max_iters
        self.bias = bias
        self.x0 = x0
        self.random_state = random_state

    def fit(self, Y_train, Y_val=None):
        obj_T, obj_V = self._objectives(Y_train, Y_val)
        x0 = self._x0(obj_T.dim)
        self._constants(obj_T, obj_V, x0)
        L, G = self.loss_.L, self.loss_.G
        self.eta_ = self.eta
        if self.eta_ is None:
            self.eta_ = step_size_cor32(self.c, L, self.epsilon, self.m, G, self.d1_, self.sigma2_)
        self.bound_ = None
        bias = self.bias if self.bias is not None else ZeroBias()
        cfg = SgdConfig(self.eta_, self.m, self.epsilon, self.max_iters)
        rec = run_sgd(obj_T, obj_V, cfg, bias, make_stream(self.random_state), x0)
        if self.bias is None:
            self.bound_ = tau_bound_prop31(L, self.eta_, self.m, self.epsilon, self.sigma2_,
                                           0.0, 0.0, G, self.d1_, self.f_gap_).value
        return self._store(rec)


class DecentralizedSGD(_EarlyStoppingBase):
    """Decentralized SGD over ``M`` nodes, stopped on the validation gradient of the node average."""

    def __init__(self, problem="quadratic", epsilon=0.1, m=10, eta=None, c=0.05,
                 topology="ring", M=4, self_weight=None, max_iters=1_000_000, x0=None,
                 random_state=0):
        self.problem = problem
        self.epsilon = epsilon
        self.m = m
        self.eta = eta
        self.c = c
        self.topology = topology
        self.M = M
        self.self_weight = self_weight
        self.max_iters = max_iters
        self.x0 = x0
        self.random_state = random_state

    def fit(self, Y_train, Y_val=None):
        obj_T, obj_V = self._objectives(Y_train, Y_val)
        x0 = self._x0(obj_T.dim)
        self._constants(obj_T, obj_V, x0)
        self.conn_ = make_topology(self.topology, self.M, self.self_weight)
        L, G = self.loss_.L, self.loss_.G
        args = (L, self.epsilon, self.m, G, self.d1_, self.sigma2_)
        self.eta_, self.bound_ = self.eta, None
        if self.eta_ is None:
            self.eta_ = dsgd_step_size(self.c, *args, self.conn_.rho)
            self.bound_ = tau_bound_dsgd(*args, self.conn_.rho, self.c, self.f_gap_).value
        cfg = SgdConfig(self.eta_, self.m, self.epsilon, self.max_iters)
        streams = [make_stream(self.random_state, 0, i) for i in range(self.conn_.M)]
        return self._store(run_dsgd(obj_T, obj_V, self.conn_, cfg, streams, x0))


class EarlyStoppingSVRG(_EarlyStoppingBase):
    """SVRG stopped on the exact training gradient at epoch anchors.

    ``eta`` and ``m`` default to ``1/(4 L n^(2/3))`` and ``floor(4 n / 3)``;
    ``bound_`` (in epochs) is only set for those defaults.
    """

    def __init__(self, problem="quadratic", epsilon=0.1, eta=None, m=None, max_epochs=100_000,
                 x0=None, random_state=0):
        self.problem = problem
        self.epsilon = epsilon
        self.eta = eta
        self.m = m
        self.max_epochs = max_epochs
        self.x0 = x0
        self.random_state = random_state

    def fit(self, Y_train, Y_val=None):
        obj_T, _ = self._objectives(Y_train, None)
        x0 = self._x0(obj_T.dim)
        eta, m = svrg_hyperparams(obj_T.n, self.loss_.L)
        self.eta_ = eta if self.eta is None else self.eta
        self.m_ = m if self.m is None else self.m
        self.f_gap_ = obj_T.value(x0, count=False) - self.loss_.f_star
        self.bound_ = None
        if (self.eta_, self.m_) == (eta, m):
            self.bound_ = tau_bound_svrg(self.loss_.L, obj_T.n, self.f_gap_, self.epsilon)
        cfg = SvrgConfig(self.eta_, self.m_, self.epsilon, self.max_epochs)
        return self._store(run_svrg(obj_T, cfg, make_stream(self.random_state), x0))
