import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_fmax, ols
from pushability.affordance import (
    FEATURE_NAMES,
    NOT_PUSHABLE,
    PUSHABLE,
    ForceSignal,
    Prediction,
    PushRecord,
    Standardizer,
    TrainedModel,
    coefficient_report,
    decide,
    fit_batch,
    fmax,
    predict,
    predict_many,
    prior_model,
    read_records,
    split_dataset,
    train,
    update_sequential,
    write_records,
)


# -- signals and records -----------------------------------------------------------


def test_fmax_345():
    assert fmax(ForceSignal([[0, 0, 1], [0, 3, 4], [1, 0, 0]])) == 5.0


def test_fmax_zero_signal():
    assert fmax(ForceSignal(np.zeros((10, 3)))) == 0.0


def test_fmax_empty():
    with pytest.raises(ValueError):
        fmax(ForceSignal(np.zeros((0, 3))))


def test_fmax_matches_scan():
    s = np.random.default_rng(0).normal(scale=10, size=(1000, 3))
    assert math.isclose(fmax(ForceSignal(s)), brute_fmax(s), rel_tol=1e-12)


def test_signal_rejects_nan():
    with pytest.raises(ValueError):
        ForceSignal([[0, np.nan, 0]])


def test_record_validation():
    with pytest.raises(ValueError):
        PushRecord(np.zeros(5), 1.0)
    with pytest.raises(ValueError):
        PushRecord(np.zeros(12), -1.0)


def test_records_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    recs = [PushRecord(rng.normal(size=12), float(i), {"run": i}) for i in range(5)]
    write_records(recs, tmp_path / "r.jsonl")
    back = read_records(tmp_path / "r.jsonl")
    assert len(back) == 5
    for a, b in zip(recs, back):
        np.testing.assert_array_equal(a.features, b.features)
        assert a.f_max == b.f_max and a.meta == b.meta
    first = (tmp_path / "r.jsonl").read_text().splitlines()[0]
    assert '"features": {' in first and '"f_max"' in first


def test_bad_record_line_reported(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"features": {}, "f_max": 1}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_records(p)


# -- split ---------------------------------------------------------------------------


def test_split_sizes():
    tr, te = split_dataset(list(range(10)), 0.3, seed=0)
    assert (len(tr), len(te)) == (7, 3)


def test_split_857():
    tr, te = split_dataset(list(range(857)), 0.3, seed=0)
    assert (len(tr), len(te)) == (599, 258)


def test_split_900():
    tr, te = split_dataset(list(range(900)), 0.3, seed=0)
    assert (len(tr), len(te)) == (630, 270)


def test_split_deterministic_and_covering():
    a = split_dataset(list(range(50)), 0.3, seed=4)
    b = split_dataset(list(range(50)), 0.3, seed=4)
    assert a == b
    assert sorted(a[0] + a[1]) == list(range(50))
    assert not set(a[0]) & set(a[1])


def test_split_preconditions():
    with pytest.raises(ValueError):
        split_dataset([1], 0.3)
    with pytest.raises(ValueError):
        split_dataset([1, 2, 3], 1.0)


# -- standardizer ----------------------------------------------------------------------


def test_standardizer_round_trip_and_moments():
    X = np.random.default_rng(2).normal(3, 5, size=(200, 4))
    s = Standardizer.fit(X)
    Z = s.transform(X)
    assert np.max(np.abs(Z.mean(axis=0))) < 1e-9
    assert np.max(np.abs(Z.std(axis=0) - 1)) < 1e-9
    assert np.max(np.abs(s.inverse_transform(Z) - X)) < 1e-9


def test_standardizer_degenerate_column():
    X = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    s = Standardizer.fit(X)
    assert s.degenerate.tolist() == [False, True]
    assert np.all(s.transform(X)[:, 1] == 0)
    assert np.allclose(s.inverse_transform(s.transform(X))[:, 0], X[:, 0])


# -- posterior --------------------------------------------------------------------------


def test_prior_model():
    m = prior_model(3, lam=2.0, alpha=4.0)
    assert np.all(m.weight_mean == 0)
    np.testing.assert_allclose(m.weight_cov, np.eye(4) / 2.0)
    p = predict(m, np.zeros(3))
    assert p.mean == 0.0
    assert math.isclose(p.variance, 1 / 4.0 + 1 / 2.0)


def test_zero_records_is_prior():
    m = fit_batch(np.zeros((0, 2)), np.zeros(0), lam=1.0, alpha=1.0)
    assert predict(m, [3.0, -1.0]).mean == 0.0


def test_single_record_hand_values():
    m = fit_batch(np.array([[1.0]]), np.array([1.0]), lam=1.0, alpha=1.0, fit_bias=False)
    assert math.isclose(m.weight_cov[0, 0], 0.5)
    assert math.isclose(m.weight_mean[0], 0.5)


def test_noiseless_line_recovered():
    x = np.linspace(-2, 2, 50)[:, None]
    m = fit_batch(x, 3 * x[:, 0], lam=1e-9, alpha=1e6)
    assert abs(m.weight_mean[1] - 3) < 1e-3
    assert abs(m.weight_mean[0]) < 1e-3
    assert abs(predict(m, [2.0]).mean - 6) < 1e-2


def test_matches_ols_with_weak_prior():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 4))
    y = X @ [1.0, -2.0, 0.5, 3.0] + 2 + rng.normal(scale=0.1, size=80)
    m = fit_batch(X, y, lam=1e-10, alpha=1.0)
    np.testing.assert_allclose(m.weight_mean, ols(X, y), atol=1e-6)


def test_evidence_maximization_recovers_noise_level():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(2000, 3))
    y = X @ [1.0, 2.0, -1.0] + rng.normal(scale=0.5, size=2000)
    m = fit_batch(X, y)
    assert 1 / math.sqrt(m.noise_precision) == pytest.approx(0.5, rel=0.05)


def test_covariance_symmetric_psd():
    rng = np.random.default_rng(5)
    m = fit_batch(rng.normal(size=(30, 6)), rng.normal(size=30))
    C = m.weight_cov
    assert np.max(np.abs(C - C.T)) < 1e-9
    assert np.linalg.eigvalsh(C).min() >= -1e-9


def test_sequential_base_case():
    x, y = np.array([[0.3, -1.2]]), np.array([2.0])
    seq = update_sequential(prior_model(2, 0.5, 2.0), x[0], y[0])
    batch = fit_batch(x, y, lam=0.5, alpha=2.0)
    assert np.max(np.abs(seq.weight_mean - batch.weight_mean)) < 1e-10
    assert np.max(np.abs(seq.weight_cov - batch.weight_cov)) < 1e-10


def test_sequential_any_order_equals_batch():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 3))
    y = X @ [1.0, 0.0, -2.0] + rng.normal(size=50)
    batch = fit_batch(X, y, lam=0.1, alpha=3.0)
    for seed in range(3):
        m = prior_model(3, 0.1, 3.0)
        for i in np.random.default_rng(seed).permutation(50):
            m = update_sequential(m, X[i], y[i])
        assert np.max(np.abs(m.weight_mean - batch.weight_mean)) < 1e-8
        assert np.max(np.abs(m.weight_cov - batch.weight_cov)) < 1e-8


def test_zero_innovation_update():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(10, 2))
    m = fit_batch(X, rng.normal(size=10), lam=1.0, alpha=1.0)
    x = np.array([0.4, -0.7])
    before = predict(m, x).mean
    after = predict(update_sequential(m, x, before), x).mean
    assert abs(after - before) < 1e-9


@settings(max_examples=30)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 40))
def test_posterior_contracts(seed, n):
    rng = np.random.default_rng(seed)
    m = prior_model(3, 1.0, 2.0)
    tr = np.trace(m.weight_cov)
    for x, y in zip(rng.normal(size=(n, 3)), rng.normal(size=n)):
        m = update_sequential(m, x, y)
        t = np.trace(m.weight_cov)
        assert t <= tr + 1e-12
        tr = t


def test_variance_floor():
    rng = np.random.default_rng(8)
    m = fit_batch(rng.normal(size=(40, 3)), rng.normal(size=40))
    _, var = predict_many(m, rng.normal(size=(100, 3)))
    assert np.all(var >= 1 / m.noise_precision)


def test_p_pushable():
    m = prior_model(1, lam=1e12, alpha=1.0)  # weights pinned at zero, unit noise
    p = predict(m, [0.0], max_force=1.0)
    assert math.isclose(p.p_pushable, 0.5 * math.erfc(-1 / math.sqrt(2)), rel_tol=1e-9)


# -- decisions and reports -------------------------------------------------------------------


def test_decide():
    assert decide(Prediction(5.0, 1.0, 1.0)) == PUSHABLE
    assert decide(Prediction(20.0, 1.0, 0.5)) == PUSHABLE
    assert decide(Prediction(185.0, 1.0, 0.0)) == NOT_PUSHABLE


def test_report_zero_weights():
    m = prior_model(12)
    rep = coefficient_report(m)
    assert all(mag == 0 and tot == 0 for mag, tot in rep.groups.values())
    assert rep.feature_csv().splitlines()[0] == "feature,group,weight"
    assert len(rep.feature_csv().splitlines()) == 13


def test_report_groups():
    w = np.zeros(13)
    w[1:4] = [3.0, 4.0, 0.0]  # position
    w[7] = -2.0  # volume
    m = prior_model(12)
    rep = coefficient_report(replace(m, weight_mean=w))
    assert rep.magnitude("position") == 5.0
    assert rep.signed("volume") == -2.0
    assert rep.group_csv().splitlines()[1].startswith("position,5.0,7.0")


def test_trained_model_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    recs = [PushRecord(rng.normal(size=12), float(abs(rng.normal()) * 10)) for _ in range(40)]
    model = train(recs)
    model.save(tmp_path / "m.json")
    back = TrainedModel.load(tmp_path / "m.json")
    x = rng.normal(size=12)
    assert back.predict(x).mean == pytest.approx(model.predict(x).mean, abs=1e-12)
    assert back.feature_names == FEATURE_NAMES
    model.save(tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_model_schema_checked():
    with pytest.raises(ValueError):
        TrainedModel.from_dict({"schema_version": 99})
