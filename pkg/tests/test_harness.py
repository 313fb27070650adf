import csv
import io
import json
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlystop._random import derive_seed, make_stream, splitmix64
from earlystop._stats import mean_ci
from earlystop import harness
from earlystop.harness import (
    ExperimentConfig,
    TrialError,
    TrialSummary,
    build_experiment,
    estimate_expected_tau,
    optional_stopping_selftest,
    parse_report,
    report,
    run_row,
    run_trials,
)
from earlystop.records import RunRecord

PTS = [[-1.0], [-0.25], [0.0], [0.5], [1.0]]
DET = dict(algorithm="sgd", epsilon=0.01, m=1, eta=0.5, train=[[0.0]], x0=[1.0])


# -- seeds -------------------------------------------------------------------------


def test_splitmix_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    state = 0
    outs = []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_derived_seeds_distinct_and_stable():
    seeds = {derive_seed(7, t, n) for t in range(20) for n in range(5)}
    assert len(seeds) == 100
    assert derive_seed(7, 3, 1) == derive_seed(7, 3, 1)
    a = make_stream(7, 3, 1).integers(1 << 40, size=5)
    b = make_stream(7, 3, 1).integers(1 << 40, size=5)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        derive_seed(-1)


# -- configuration -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "change",
    [
        dict(trials=0),
        dict(algorithm="adam"),
        dict(problem="logistic"),
        dict(epsilon=0),
        dict(m=None),
        dict(eta=None),
        dict(c=1.5),
        dict(train=None),
        dict(train="missing.csv"),
        dict(bias={"kind": "adversarial"}),
        dict(master_seed=1 << 64),
    ],
)
def test_config_validation(change):
    data = dict(DET)
    data.update(change)
    with pytest.raises((ValueError, TypeError, FileNotFoundError)):
        ExperimentConfig(**data)


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict(dict(DET, stepsize=0.1))


def test_from_json_resolves_relative_paths(tmp_path):
    (tmp_path / "train.csv").write_text("0.0\n")
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(dict(DET, train="train.csv")))
    cfg = ExperimentConfig.from_json(cfg_path)
    exp = build_experiment(cfg)
    assert exp.obj_T.n == 1


# -- estimation ------------------------------------------------------------------------


def test_deterministic_config():
    s = estimate_expected_tau(ExperimentConfig(**DET, trials=4))
    assert s.mean_tau == 5 and s.ci95_tau == 0
    assert s.mean_ifo == 9 and s.ci95_ifo == 0
    assert s.bound_valid and s.passed


def test_single_trial_ci_not_applicable():
    s = estimate_expected_tau(ExperimentConfig(**DET, trials=1))
    assert s.ci95_tau is None and s.ci95_ifo is None
    row = report([s], "csv").splitlines()[1].split(",")
    assert row[5] == "NA" and row[7] == "NA"


def test_statistical_sgd_acceptance():
    cfg = ExperimentConfig(algorithm="sgd", epsilon=0.05, m=5, c=0.5, train=PTS, val=PTS,
                           x0=[2.0], trials=200, master_seed=99)
    s = estimate_expected_tau(cfg)
    assert s.bound_valid and s.cap_hits == 0
    assert s.passed


def test_cap_hit_fails_summary():
    cfg = ExperimentConfig(**dict(DET, epsilon=1e-12), max_iters=3, trials=2)
    s = estimate_expected_tau(cfg)
    assert s.cap_hits == 2 and not s.passed


def test_trial_error_reports_seed(monkeypatch):
    real = harness.run_trial

    def flaky(exp, k):
        if k == 2:
            raise FloatingPointError("overflow")
        return real(exp, k)

    monkeypatch.setattr(harness, "run_trial", flaky)
    with pytest.raises(TrialError) as info:
        estimate_expected_tau(ExperimentConfig(**DET, trials=4, master_seed=11))
    assert info.value.trial == 2 and info.value.seed == derive_seed(11, 2, 0)
    assert isinstance(info.value.__cause__, FloatingPointError)
    assert str(info.value.seed) in str(info.value)


def test_svrg_and_dsgd_configs():
    s = estimate_expected_tau(ExperimentConfig(algorithm="svrg", epsilon=1e-3, mu=[[-1.0], [0.5], [1.0]],
                                               n_T=9, trials=20, master_seed=1, x0=[2.0]))
    assert s.bound_valid and s.passed
    s = estimate_expected_tau(ExperimentConfig(algorithm="dsgd", epsilon=0.2, m=5, c=0.17, M=3,
                                               topology="complete", train=PTS,
                                               trials=5, master_seed=1, x0=[1.5]))
    assert s.bound_valid and s.cap_hits == 0


def test_dsgd_without_c_has_no_bound():
    s = estimate_expected_tau(ExperimentConfig(**dict(DET, algorithm="dsgd"), M=2, trials=2))
    assert s.mean_tau == 5 and not s.bound_valid and not s.passed


def test_run_rows():
    cfg = ExperimentConfig(**DET, trials=2)
    exp = build_experiment(cfg)
    recs = run_trials(exp)
    row = run_row(exp, recs[0])
    assert list(row) == ["seed", "tau", "ifo", "final_grad_norm_sq_V", "final_grad_norm_sq_T"]
    assert row["tau"] == 5 and row["final_grad_norm_sq_V"] == 0.00390625
    assert row["seed"] == derive_seed(0, 0, 0)


def test_repeat_is_byte_identical():
    cfg = ExperimentConfig(algorithm="sgd", epsilon=0.05, m=5, c=0.5, train=PTS, val=PTS,
                           trials=20, master_seed=5, x0=[2.0])
    a = report([estimate_expected_tau(cfg)], "json")
    b = report([estimate_expected_tau(cfg)], "json")
    assert a == b


def test_trial_order_does_not_change_aggregates():
    cfg = ExperimentConfig(algorithm="sgd", epsilon=0.05, m=5, c=0.5, train=PTS, val=PTS,
                           trials=50, master_seed=5, x0=[2.0])
    exp = build_experiment(cfg)
    taus = [r.iterations for r in run_trials(exp)]
    mean, ci = mean_ci(taus)
    perm = np.random.default_rng(0).permutation(len(taus))
    pmean, pci = mean_ci([taus[i] for i in perm])
    assert abs(mean - pmean) <= 1e-12 and abs(ci - pci) <= 1e-12


# -- summary invariant ------------------------------------------------------------------


def fake_records(taus, caps):
    return [RunRecord("sgd", None if c else t, c, t, 10 * t, np.zeros(1), [], 0.1)
            for t, c in zip(taus, caps)]


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(1, 500), min_size=1, max_size=30),
    st.floats(1, 1000),
    st.booleans(),
    st.data(),
)
def test_pass_flag_definition(taus, bound, valid, data):
    caps = data.draw(st.lists(st.booleans(), min_size=len(taus), max_size=len(taus)))
    s = TrialSummary.from_records(fake_records(taus, caps), bound if valid else None, None, valid)
    ci = s.ci95_tau or 0.0
    expected = valid and not any(caps) and s.mean_tau + ci <= bound
    assert s.passed == expected


# -- optional stopping --------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_selftest_walk(seed):
    res = optional_stopping_selftest(100_000, seed)
    assert res["ci"] < 0.02
    assert res["pass"] == (abs(res["mean"]) <= res["ci"])


def test_selftest_fixed_seed_passes():
    assert optional_stopping_selftest(100_000, 20240605)["pass"]


def test_selftest_zero_stream():
    res = optional_stopping_selftest(1000, 3, variant="zero")
    assert res["mean"] == 0.0 and res["pass"]


def test_selftest_single_step():
    res = optional_stopping_selftest(5000, 3, variant="single")
    assert abs(res["mean"]) < 4 * np.sqrt(1 / 5000)


def test_selftest_stopped_value_distribution():
    # S_tau = 2 - k when the first +1 arrives at step k, and -50 without one
    res = optional_stopping_selftest(100, 0, horizon=1)
    assert res["trials"] == 100
    with pytest.raises(ValueError):
        optional_stopping_selftest(50, 0)


# -- reports ------------------------------------------------------------------------------


def summaries():
    s1 = TrialSummary("a", "sgd", 3, 0, 5.0, 0.0, 9.0, 0.0, 402.0, 805.0, True, True)
    s2 = TrialSummary("b", "svrg", 1, 1, 1.0 / 3.0, None, 7.0, None, None, None, False, False)
    return [s1, s2]


def test_csv_single_row():
    text = report(summaries()[:1], "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 2
    assert rows[0][-1] == "pass" and rows[1][-1] == "true"


def test_csv_order_and_precision():
    rows = list(csv.reader(io.StringIO(report(summaries(), "csv"))))
    assert [r[0] for r in rows[1:]] == ["a", "b"]
    assert rows[2][4] == "0.33333333333333331"


def test_json_round_trip():
    text = report(summaries(), "json")
    assert parse_report(text) == summaries()
    assert report(parse_report(text), "json") == text


def test_empty_report_rejected():
    with pytest.raises(ValueError):
        report([], "csv")
    with pytest.raises(ValueError):
        report(summaries(), "xml")
