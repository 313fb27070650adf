import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlystop._random import make_stream
from earlystop._validation import BoundConditionError
from earlystop.dsgd import (
    ConnectivityMatrix,
    check_dispersion_drift,
    diffusion_coefficient,
    dispersion_quantities,
    drift_constants,
    dsgd_step_size,
    ifo_bound_dsgd,
    load_connectivity_csv,
    make_topology,
    max_admissible_eta,
    run_dsgd,
    tau_bound_dsgd,
)
from earlystop.problems import FiniteSumObjective, quadratic_problem, tanh_composite_problem
from earlystop.sgd import SgdConfig, ifo_bound_sgd, run_sgd, tau_bound_cor32
from oracles import cor32_bound, ring_eigenvalues

QUAD = quadratic_problem()


# -- connectivity -------------------------------------------------------------------


def test_identity_is_inadmissible():
    conn = ConnectivityMatrix(np.eye(2))
    np.testing.assert_allclose(conn.eigenvalues, [1, 1])
    assert conn.rho == 1.0 and not conn.admissible
    obj = FiniteSumObjective(QUAD, [[0.0]])
    with pytest.raises(ValueError):
        run_dsgd(obj, obj, conn, SgdConfig(0.1, 1, 0.1))


@pytest.mark.parametrize("M", [2, 3, 5, 8])
def test_averaging_matrix_has_zero_rho(M):
    assert diffusion_coefficient(np.full((M, M), 1.0 / M)) == pytest.approx(0.0, abs=1e-15)


def test_ring4_rho():
    a = np.array([[0.5, 0.25, 0, 0.25], [0.25, 0.5, 0.25, 0], [0, 0.25, 0.5, 0.25], [0.25, 0, 0.25, 0.5]])
    assert diffusion_coefficient(a) == pytest.approx(0.25, abs=1e-14)


@pytest.mark.parametrize("M", [3, 4, 5, 8, 9])
@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_ring_spectrum_matches_circulant_formula(M, s):
    conn = make_topology("ring", M, s)
    np.testing.assert_allclose(conn.eigenvalues, ring_eigenvalues(M, s), atol=1e-12)
    lam = ring_eigenvalues(M, s)
    assert conn.rho == pytest.approx(max(v * v for v in lam[1:]), abs=1e-12)


def test_eigenvalue_sort_is_by_value():
    # the smallest-by-value eigenvalue can dominate rho through its square
    conn = make_topology("ring", 4, 0.1)
    assert conn.eigenvalues[0] == pytest.approx(1.0)
    assert conn.rho == pytest.approx(0.64, abs=1e-12)


@pytest.mark.parametrize(
    "a",
    [
        [[0.5, 0.5], [0.4, 0.6]],
        [[1.2, -0.2], [-0.2, 1.2]],
        [[0.5, 0.4], [0.4, 0.5]],
        [[1.0, 0.0, 0.0]],
    ],
)
def test_invalid_matrices(a):
    with pytest.raises(ValueError):
        ConnectivityMatrix(np.array(a))


def test_topology_examples():
    np.testing.assert_allclose(make_topology("complete", 4).a, np.full((4, 4), 0.25))
    assert make_topology("complete", 4).rho == pytest.approx(0.0, abs=1e-15)
    assert make_topology("ring", 4, 0.5).rho == pytest.approx(0.25, abs=1e-14)
    r2 = make_topology("ring", 2, 0.5)
    np.testing.assert_allclose(r2.a, np.full((2, 2), 0.5))
    assert r2.rho == pytest.approx(0.0, abs=1e-15)
    assert make_topology("star", 1).a.shape == (1, 1)


def test_topology_errors():
    with pytest.raises(ValueError):
        make_topology("star", 4, 0.2)
    with pytest.raises(ValueError):
        make_topology("ring", 4, 1.5)
    with pytest.raises(ValueError):
        make_topology("torus", 4)


@pytest.mark.parametrize("kind", ["complete", "ring", "star"])
@pytest.mark.parametrize("M", [2, 3, 4, 8])
def test_spectral_power_contraction(kind, M):
    conn = make_topology(kind, M)
    for k in range(1, 21):
        assert conn.power_gap_sq(k) <= conn.rho**k + 1e-9


def test_load_connectivity_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0.5,0.5\n0.5,0.5\n")
    assert load_connectivity_csv(p).M == 2


# -- dispersion quantities ---------------------------------------------------------------


def test_dispersion_examples():
    conn = make_topology("ring", 4)
    X = np.tile([1.0, 2.0], (4, 1))
    V, _ = dispersion_quantities(X, X, X, conn, 0.1, 1.0)
    assert V == 0.0
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 2))
    G = rng.normal(size=(4, 2))
    _, U = dispersion_quantities(X, G, G, conn, 0.1, 1.0)
    assert U == 0.0
    assert drift_constants(0.0)[0] == 9 / 16
    assert drift_constants(0.25)[0] == 0.765625
    assert drift_constants(0.25, eta=0.1, L=1, sigma2=1)[1] == pytest.approx(1.6)


def test_dispersion_hand_values():
    conn = make_topology("complete", 2)
    X = np.array([[1.0], [-1.0]])
    V, U = dispersion_quantities(X, np.array([[1.0], [0.0]]), np.zeros((2, 1)), conn, 0.5, 2.0)
    assert V == pytest.approx(4 / 2 * 2)
    assert U == pytest.approx(32 * 0.25 * 4 / 2 * 1)


# -- runs -------------------------------------------------------------------------------------


def test_single_node_reproduces_sgd():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(20, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    loss = tanh_composite_problem(pts, 1.0)
    obj_T, obj_V = FiniteSumObjective(loss, pts[:12]), FiniteSumObjective(loss, pts[12:])
    cfg = SgdConfig(0.3, 4, 0.02)
    a = run_sgd(obj_T, obj_V, cfg, rng=make_stream(5, 0, 0), record_trajectory=True)
    b = run_dsgd(obj_T, obj_V, make_topology("ring", 1), cfg, rng=5, record_trajectory=True)
    ta, tb = a.audit["trajectory"], b.audit["trajectory"][:, 0, :]
    assert ta.shape == tb.shape
    assert np.max(np.abs(ta - tb)) <= 1e-12
    assert a.tau == b.tau and a.ifo_count == b.ifo_count


def test_two_nodes_deterministic():
    obj = FiniteSumObjective(QUAD, [[0.0]])
    rec = run_dsgd(obj, obj, make_topology("complete", 2), SgdConfig(0.5, 1, 0.01), rng=0, x0=[1.0],
                   record_trajectory=True)
    assert rec.tau == 5
    traj = rec.audit["trajectory"]
    np.testing.assert_array_equal(traj[:, 0], traj[:, 1])
    np.testing.assert_allclose(traj[-1, 0], [0.0625])
    assert rec.ifo_count == 5 + 4 * 2


def test_immediate_stop():
    obj = FiniteSumObjective(QUAD, [[0.0]])
    rec = run_dsgd(obj, obj, make_topology("ring", 4), SgdConfig(0.5, 1, 2.0), rng=0, x0=[1.0])
    assert rec.tau == 1 and rec.ifo_count == 1


def test_node_stream_arguments():
    obj = FiniteSumObjective(QUAD, [[0.0], [1.0]])
    conn = make_topology("ring", 3)
    with pytest.raises(ValueError):
        run_dsgd(obj, obj, conn, SgdConfig(0.1, 1, 0.1), rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_dsgd(obj, obj, conn, SgdConfig(0.1, 1, 0.1), rng=[np.random.default_rng(0)])


@pytest.fixture(scope="module")
def ring_problem():
    rng = np.random.default_rng(21)
    pts = rng.normal(size=(40, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    loss = tanh_composite_problem(pts, 1.0)
    return loss, FiniteSumObjective(loss, pts[:20]), FiniteSumObjective(loss, pts[20:])


def test_pathwise_drift_and_consensus(ring_problem):
    loss, obj_T, obj_V = ring_problem
    conn = make_topology("ring", 4, 0.5)
    eta = max_admissible_eta(conn.rho, loss.L)
    for seed in range(5):
        rec = run_dsgd(obj_T, obj_T, conn, SgdConfig(eta, 5, 0.02, max_iters=20_000), rng=seed,
                       x0=[0.5, -0.5, 0.2])
        assert not rec.cap_hit
        V, U = rec.audit["V"], rec.audit["U"]
        assert U.size >= 20 and V.size == U.size + 1
        assert check_dispersion_drift(V, U, rec.audit["alpha"])
        assert rec.audit["consensus_error"] <= 1e-12


def test_node_independence(ring_problem):
    # nodes draw different examples, so with a non-singleton dataset the states disperse
    _, obj_T, obj_V = ring_problem
    rec = run_dsgd(obj_T, obj_V, make_topology("ring", 4), SgdConfig(0.05, 5, 1e-6, max_iters=50),
                   rng=3, record_trajectory=True)
    assert np.ptp(rec.audit["trajectory"][-1], axis=0).max() > 0


def test_check_dispersion_drift_detects_violation():
    assert not check_dispersion_drift([0.0, 1.0], [0.5], 0.5)
    assert check_dispersion_drift([1.0, 0.5], [0.0], 0.5)


# -- bound calculators -------------------------------------------------------------------------


def test_step_size_examples():
    assert dsgd_step_size(0.1, 2, 1, 1, 1, 0, 0, 0) == pytest.approx(0.05)
    c = 1 / (4 * math.sqrt(2))
    eta = dsgd_step_size(c, 1, 1, 1, 1, 0, 1, 0)
    assert eta == pytest.approx(c * 7 / 540, rel=1e-13)
    assert eta == pytest.approx(0.0022917, rel=1e-4)


def test_rho_quarter_factor():
    # 7 + 5/4 + 1/8 - 13/2 = 1.875 and the resulting factor 1 + 128/1.875
    factor = 1 + F(128) / (7 + F(5, 4) + F(1, 8) - F(13, 2))
    c, m, s2, eps = 0.05, 2, 1.0, 0.5
    got = dsgd_step_size(c, 1, eps, m, 1, 0, s2, 0.25)
    assert got == pytest.approx(float(F(c) * (F(eps) / 2) / (2 * m * F(s2) * factor)), rel=1e-13)
    assert float(factor) == pytest.approx(69.2667, abs=1e-4)


def test_step_size_errors():
    with pytest.raises(BoundConditionError):
        dsgd_step_size(0.2, 1, 1, 1, 1, 0, 1, 0)
    with pytest.raises(BoundConditionError):
        dsgd_step_size(0.05, 1, 0.01, 1, 1, 0.1, 1, 0)
    with pytest.raises(BoundConditionError):
        dsgd_step_size(0.1, 1, 1, 1, 1, 0, 1, 0.25)


def test_tau_bound_noiseless_equals_unbiased():
    args = dict(L=1, epsilon=0.5, m=3, G=1, d1=0.1, sigma2=0, c=0.1, f_gap=1)
    r = tau_bound_dsgd(rho=0, **args)
    u = tau_bound_cor32(0.1, 1, 0.5, 3, 1, 0.1, 0, 0, 0, 1)
    assert r.extras["R"] == 0
    assert r.value == pytest.approx(u.value, rel=1e-14)


def test_tau_bound_rho_zero():
    r = tau_bound_dsgd(L=1, epsilon=1, m=2, G=1, d1=0, sigma2=1, rho=0, c=0.1, f_gap=1)
    assert r.extras["R"] == 8 and r.extras["alpha"] == 9 / 16
    assert r.extras["R"] / (1 - r.extras["alpha"]) == pytest.approx(128 / 7)
    assert r.value == pytest.approx(float(cor32_bound(0.1, 1, 1, 2, 0, 1, 8, F(9, 16), 1)), rel=1e-12)


def test_tau_bound_rho_quarter():
    r = tau_bound_dsgd(L=1, epsilon=1, m=2, G=1, d1=0, sigma2=1, rho=0.25, c=0.08, f_gap=1)
    assert r.extras["R"] == 16 and r.extras["alpha"] == 49 / 64
    assert r.value == pytest.approx(float(cor32_bound(0.08, 1, 1, 2, 0, 1, 16, F(49, 64), 1)), rel=1e-12)
    assert r.extras["eta"] == pytest.approx(dsgd_step_size(0.08, 1, 1, 2, 1, 0, 1, 0.25), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.9), st.sampled_from([0.5, 1, 2]), st.sampled_from([0.1, 1]), st.integers(1, 10))
def test_simplified_bound_dominates_exact(rho, L, sigma2, m):
    c = 0.9 * max_admissible_eta(rho, 1.0)
    r = tau_bound_dsgd(L=L, epsilon=0.5, m=m, G=1, d1=0.05, sigma2=sigma2, rho=rho, c=c, f_gap=1)
    assert r.extras["simplified"] >= r.value * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 0.95), st.sampled_from([0.5, 1, 2]), st.sampled_from([0.1, 1]))
def test_dsgd_step_size_equals_corollary_step_size(rho, L, sigma2):
    c = 0.5 * max_admissible_eta(rho, 1.0)
    r = tau_bound_dsgd(L=L, epsilon=0.3, m=4, G=1, d1=0.05, sigma2=sigma2, rho=rho, c=c, f_gap=1)
    cor = tau_bound_cor32(c, L, 0.3, 4, 1, 0.05, sigma2, r.extras["R"], r.extras["alpha"], 1)
    assert cor.extras["eta"] == pytest.approx(r.extras["eta"], rel=1e-12)


def test_ifo_examples():
    assert ifo_bound_dsgd(37, 5, 20, 1) == ifo_bound_sgd(37, 5, 20)
    assert ifo_bound_dsgd(100, 10, 50, 4) == 950
    assert ifo_bound_dsgd(10, 1, 0, 8) == 80
