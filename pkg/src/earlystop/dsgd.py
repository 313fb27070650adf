"""Decentralized SGD with early stopping on a synchronous gossip network.

Every node ``i`` holds ``x^i`` and updates

    x^i_{n+1} = sum_j a_ij x^j_n - eta * v^i_n

with ``v^i_n`` the gradient of one training example drawn independently by
that node. The stopping check is applied to the system average
``xbar = mean_i x^i`` every ``m`` steps.

The average obeys ``xbar_{t+1} = xbar_t - (eta/M) sum_i v^i_t`` (descent sign,
as in the node update above).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._random import make_stream
from ._validation import BoundConditionError, check_int, check_vector
from .records import BoundReport, RunRecord
from .sgd import tau_bound_cor32

MATRIX_TOL = 1e-12


def _eigenvalues_desc(a):
    return np.linalg.eigvalsh(a)[::-1]


def check_connectivity(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"connectivity matrix must be square and nonempty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("connectivity matrix has non-finite entries")
    if np.max(np.abs(a - a.T)) > MATRIX_TOL:
        raise ValueError("connectivity matrix is not symmetric")
    if np.any(a < 0):
        raise ValueError("connectivity matrix has negative entries")
    if np.max(np.abs(a.sum(axis=1) - 1.0)) > MATRIX_TOL:
        raise ValueError("connectivity matrix rows do not sum to 1")
    return a


def diffusion_coefficient(a):
    """rho = max_{i >= 2} |lambda_i(a)|^2, eigenvalues sorted by value, descending."""
    a = check_connectivity(a)
    lam = _eigenvalues_desc(a)
    if lam.size == 1:
        return 0.0
    return float(min(1.0, np.max(lam[1:] ** 2)))


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    a: np.ndarray
    rho: float

    def __init__(self, a):
        a = check_connectivity(a).copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "rho", diffusion_coefficient(a))

    @property
    def M(self):
        return self.a.shape[0]

    @property
    def admissible(self):
        return self.rho < 1.0

    @property
    def eigenvalues(self):
        return _eigenvalues_desc(self.a)

    def power_gap_sq(self, k):
        """Squared spectral norm of ``a^k - a_inf``, with ``a_inf`` the all-1/M matrix."""
        ak = np.linalg.matrix_power(self.a, k)
        return float(np.linalg.norm(ak - 1.0 / self.M, ord=2) ** 2)


def make_topology(kind, M, self_weight=None):
    """Symmetric stochastic matrices for standard graphs.

    complete
        ``self_weight`` on the diagonal (default 1/M), the rest spread evenly.
    ring
        ``self_weight`` (default 1/2) on the diagonal, ``(1 - self_weight)/2``
        to each neighbour (``1 - self_weight`` when M = 2).
    star
        Leaves keep ``self_weight`` (default 1 - 1/M) and send the rest to the
        hub; the hub keeps whatever remains.
    """
    M = check_int(M, "M", minimum=1)
    if M == 1:
        return ConnectivityMatrix(np.ones((1, 1)))
    if kind == "complete":
        s = 1.0 / M if self_weight is None else float(self_weight)
        a = np.full((M, M), (1.0 - s) / (M - 1))
        np.fill_diagonal(a, s)
    elif kind == "ring":
        s = 0.5 if self_weight is None else float(self_weight)
        a = np.zeros((M, M))
        for i in range(M):
            a[i, (i + 1) % M] += (1.0 - s) / 2.0
            a[i, (i - 1) % M] += (1.0 - s) / 2.0
        np.fill_diagonal(a, s)
    elif kind == "star":
        s = 1.0 - 1.0 / M if self_weight is None else float(self_weight)
        a = np.zeros((M, M))
        a[0, 1:] = a[1:, 0] = 1.0 - s
        np.fill_diagonal(a, s)
        a[0, 0] = 1.0 - (M - 1) * (1.0 - s)
    else:
        raise ValueError(f"unknown topology {kind!r}; expected complete, ring or star")
    if not 0.0 <= s <= 1.0 or np.any(a < -MATRIX_TOL):
        raise ValueError(f"self_weight={s} does not give a stochastic {kind} matrix for M={M}")
    return ConnectivityMatrix(np.maximum(a, 0.0))


def load_connectivity_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    return ConnectivityMatrix(np.array([[float(c) for c in r] for r in rows]))


def drift_constants(rho, eta=None, L=None, sigma2=None):
    """Contraction ``alpha = (3 + sqrt(rho))^2 / 16`` and drift level ``beta = 8 eta L sigma2 / (1 - sqrt(rho))``."""
    sr = math.sqrt(rho)
    alpha = (3.0 + sr) ** 2 / 16.0
    beta = None
    if eta is not None and L is not None and sigma2 is not None:
        beta = eta * 8.0 * L * sigma2 / (1.0 - sr)
    return alpha, beta


def dispersion_quantities(states, stoch_grads, full_grads, conn, eta, L):
    """Dispersion ``V_t`` of the node states and noise term ``U_t``.

    ``V_t = (L^2/M) sum_i ||x^i - xbar||^2`` and
    ``U_t = 32 eta^2 L^2 / (M (1 - sqrt(rho))) sum_i ||v^i - grad f_T(x^i)||^2``.
    """
    X = np.atleast_2d(states)
    M = X.shape[0]
    r = X - X.mean(axis=0)
    V = L**2 / M * float(np.sum(r * r))
    noise = np.atleast_2d(stoch_grads) - np.atleast_2d(full_grads)
    U = 32.0 * eta**2 * L**2 / (M * (1.0 - math.sqrt(conn.rho))) * float(np.sum(noise * noise))
    return V, U


def max_admissible_eta(rho, L):
    return (1.0 - math.sqrt(rho)) / (4.0 * L * math.sqrt(2.0))


def _node_streams(rng, M):
    if isinstance(rng, np.random.Generator):
        if M != 1:
            raise ValueError("pass one Generator per node (or an integer seed) when M > 1")
        return [rng]
    if isinstance(rng, (list, tuple)):
        if len(rng) != M:
            raise ValueError(f"got {len(rng)} node streams for M={M}")
        return list(rng)
    return [make_stream(int(rng), 0, i) for i in range(M)]


def run_dsgd(obj_T, obj_V, conn, config, rng=0, x0=None, audit=True, record_trajectory=False):
    """Run DSGD with early stopping; returns the system average at termination.

    ``rng`` is an integer seed (node ``i`` uses stream ``(seed, 0, i)``) or a
    list of one numpy Generator per node. IFO cost: ``n_V`` per check plus
    ``M`` per step. With ``audit`` the record holds the per-step dispersion
    ``V_t``, noise ``U_t`` and consensus drift.
    """
    if not conn.admissible:
        raise ValueError(f"diffusion coefficient rho={conn.rho} >= 1; the network does not mix")
    if obj_T.dim != obj_V.dim:
        raise ValueError(f"training dimension {obj_T.dim} != validation dimension {obj_V.dim}")
    M, d = conn.M, obj_T.dim
    streams = _node_streams(rng, M)
    obj_T, obj_V = obj_T.fork(), obj_V.fork()
    x1 = np.zeros(d) if x0 is None else check_vector(x0, d, "x0")
    X = np.tile(x1, (M, 1))
    a, eta, m, eps = conn.a, config.eta, config.m, config.epsilon
    L = obj_T.loss.L
    data = obj_T.points

    trace, V_tr, U_tr = [], [], []
    traj = [X.copy()] if record_trajectory else None
    xbar_inc = X.mean(axis=0)
    consensus_err = 0.0
    t = 1
    cap_hit = False
    while True:
        xbar = X.mean(axis=0)
        consensus_err = max(consensus_err, float(np.max(np.abs(xbar - xbar_inc))))
        gv = obj_V.grad(xbar)
        gsq = float(gv @ gv)
        trace.append(gsq)
        if gsq <= eps:
            break
        if t + m > config.max_iters:
            cap_hit = True
            break
        for _ in range(m):
            idx = [int(s.integers(obj_T.n)) for s in streams]
            Vg = obj_T.example_grads(idx, X)
            if audit:
                full = obj_T.loss.grad(data[None, :, :], X[:, None, :]).mean(axis=1)
                Vt, Ut = dispersion_quantities(X, Vg, full, conn, eta, L)
                V_tr.append(Vt)
                U_tr.append(Ut)
            X = a @ X - eta * Vg
            xbar_inc = xbar_inc - eta * Vg.mean(axis=0)
            if traj is not None:
                traj.append(X.copy())
        t += m

    xbar = X.mean(axis=0)
    alpha, _ = drift_constants(conn.rho)
    audit_out = {"consensus_error": consensus_err, "alpha": alpha}
    if audit:
        # V of the final state closes the recursion V_{t+1} <= alpha V_t + U_t
        if V_tr:
            r = X - xbar
            V_tr.append(L**2 / M * float(np.sum(r * r)))
        audit_out["V"] = np.array(V_tr)
        audit_out["U"] = np.array(U_tr)
    if traj is not None:
        audit_out["trajectory"] = np.array(traj)
    return RunRecord(
        algorithm="dsgd",
        tau=None if cap_hit else t,
        cap_hit=cap_hit,
        iterations=t,
        ifo_count=obj_T.ifo_count + obj_V.ifo_count,
        final_x=xbar,
        trace=trace,
        epsilon=eps,
        audit=audit_out,
    )


def check_dispersion_drift(V, U, alpha, atol=1e-9):
    """``V_{t+1} <= alpha V_t + U_t + atol`` along a recorded run."""
    V, U = np.asarray(V), np.asarray(U)
    if V.size < 2:
        return True
    return bool(np.all(V[1:] <= alpha * V[:-1] + U[: V.size - 1] + atol))


# -- bound calculators --------------------------------------------------------


def _dsgd_factor(rho):
    sr = math.sqrt(rho)
    return 7.0 + 5.0 * rho + rho * sr - 13.0 * sr


def _check_c(c, rho):
    cmax = max_admissible_eta(rho, 1.0)
    if not 0 < c <= cmax * (1 + 1e-12):
        raise BoundConditionError(
            f"c={c} violates c <= (1 - sqrt(rho)) / (4 sqrt 2) = {cmax}; "
            "the step-size would break eta <= (1 - sqrt(rho)) / (4 L sqrt 2)"
        )


def dsgd_step_size(c, L, epsilon, m, G, d1, sigma2, rho):
    """``(c/L) min{1, (eps/2 - G^2 d1^2) / (2 m sigma2 (1 + 128/(7 + 5 rho + rho^1.5 - 13 sqrt rho)))}``."""
    _check_c(c, rho)
    margin = epsilon / 2.0 - (G * d1) ** 2
    if margin <= 0:
        raise BoundConditionError(
            f"threshold below irreducible validation-training gap: epsilon={epsilon}"
        )
    if sigma2 == 0:
        return c / L
    return (c / L) * min(1.0, margin / (2.0 * m * sigma2 * (1.0 + 128.0 / _dsgd_factor(rho))))


def tau_bound_dsgd(L, epsilon, m, G, d1, sigma2, rho, c, f_gap):
    """Stopping-time bound for DSGD (biased-SGD bound with the network's drift constants)."""
    eta = dsgd_step_size(c, L, epsilon, m, G, d1, sigma2, rho)
    sr = math.sqrt(rho)
    R = 8.0 * L * sigma2 / (1.0 - sr)
    alpha = (3.0 + sr) ** 2 / 16.0
    exact = tau_bound_cor32(c, L, epsilon, m, G, d1, sigma2, R, alpha, f_gap).value
    # R/(1-alpha) <= 128 L sigma2 / (7 (1 - sqrt rho)^2)
    r_over = 128.0 * L * sigma2 / (7.0 * (1.0 - sr) ** 2)
    simplified = tau_bound_cor32(c, L, epsilon, m, G, d1, sigma2, r_over, 0.0, f_gap).value
    params = dict(L=L, epsilon=epsilon, m=m, G=G, d1=d1, sigma2=sigma2, rho=rho, c=c, f_gap=f_gap)
    extras = {"eta": eta, "R": R, "alpha": alpha, "simplified": simplified}
    return BoundReport("tau_dsgd", exact, True, "eps > 2 G^2 d1^2 and c <= (1-sqrt rho)/(4 sqrt 2)",
                       params, extras)


def ifo_bound_dsgd(tau_bound, m, n_V, M):
    if tau_bound < 1:
        raise ValueError("tau_bound must be >= 1")
    return tau_bound * (n_V / m + M) + n_V
