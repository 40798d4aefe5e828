import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgsp import (
    AnomalyDetector,
    AnomalyLoss,
    CustomLoss,
    GibbsConfig,
    HighFreqLoss,
    MHConfig,
    SymOperator,
    TrainingSet,
    anomaly_loss,
    compile_spec,
    empirical_risk,
    gibbs_exact,
    highfreq_loss,
    mh_sample,
    posterior_spec,
)
from dgsp.errors import DimensionError
from dgsp.learning import calibrate_threshold, reflect, walk_proposal_matrix

from _util import oracle_eigh, path_laplacian, random_weighted_laplacian


P5 = SymOperator(path_laplacian(5))


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def test_highfreq_loss_examples():
    rng = np.random.default_rng(0)
    x = SymOperator(random_weighted_laplacian(6, rng))
    V = x.eigen.eigenvectors
    assert highfreq_loss(x, V[:, 0], 1) <= 1e-14
    assert highfreq_loss(x, V[:, 5], 5) == pytest.approx(1.0, abs=1e-14)
    f = (V[:, 0] + V[:, 5]) / np.sqrt(2)
    assert highfreq_loss(x, f, 5) == pytest.approx(1 / np.sqrt(2), abs=1e-14)
    with pytest.raises(ValueError):
        highfreq_loss(x, np.zeros(6), 2)
    with pytest.raises(ValueError):
        highfreq_loss(x, f, 0)


def test_anomaly_loss_examples():
    smooth = np.ones(5)
    det = AnomalyDetector(2, 0.1)
    assert anomaly_loss(P5, smooth, False, det) == 0.0
    spike = np.zeros(5)
    spike[2] = 1.0
    # oracle: energy of the spike outside the two lowest frequencies
    _, U = oracle_eigh(P5.matrix)
    energy = math.sqrt(1.0 - float(U[2, 0] ** 2 + U[2, 1] ** 2))
    assert highfreq_loss(P5, spike, 2) == pytest.approx(energy, abs=1e-14)
    det = AnomalyDetector(2, 0.5 * energy)
    assert anomaly_loss(P5, spike, True, det) == 0.0
    assert anomaly_loss(P5, spike, False, det) == 1.0
    assert anomaly_loss(P5, smooth, True, det) == 1.0


def test_empirical_risk_examples():
    cands = [P5, SymOperator(2 * P5.matrix)]
    train = TrainingSet(np.ones((3, 5)))
    r = empirical_risk(cands, train, CustomLoss(np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 0.0]])))
    assert r.risks[0] == pytest.approx(2 / 3, abs=1e-15)
    assert r.risks[1] == 0.0
    one = TrainingSet(np.arange(5.0)[None, :])
    r = empirical_risk([P5], one, HighFreqLoss(2))
    assert r.risks[0] == highfreq_loss(P5, np.arange(5.0), 2)
    r = empirical_risk([P5], one, lambda x, f: 0.25)
    assert r.risks.tolist() == [0.25]
    with pytest.raises(ValueError):
        empirical_risk([P5], one, CustomLoss(np.array([[-1.0]])))
    with pytest.raises(ValueError):
        empirical_risk([P5], one, AnomalyLoss(AnomalyDetector(2, 0.1)))


def test_anomaly_risk_per_candidate_detectors():
    S = np.stack([np.ones(5), np.eye(5)[2]])
    train = TrainingSet(S, [0, 1])
    dets = (AnomalyDetector(2, 0.1), AnomalyDetector(2, 2.0))
    r = empirical_risk([P5, P5], train, AnomalyLoss(dets))
    assert r.risks.tolist() == [0.0, 0.5]


def test_training_set_validation():
    with pytest.raises(DimensionError):
        TrainingSet(np.ones((2, 3)), [0])
    with pytest.raises(ValueError):
        TrainingSet(np.array([[np.nan]]))


def test_calibrate_threshold_separates():
    th = calibrate_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert 0.2 < th < 0.8


def test_gibbs_examples():
    np.testing.assert_allclose(gibbs_exact([0.0, 1.0], GibbsConfig(math.log(2))), [2 / 3, 1 / 3], atol=1e-12)
    for g in (0.0, 1.0, 50.0):
        np.testing.assert_allclose(gibbs_exact([0.3, 0.3, 0.3], GibbsConfig(g)), [1 / 3] * 3, atol=1e-15)
        w = gibbs_exact([0.5, 0.5], GibbsConfig(g, (0.25, 0.75)))
        np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-15)
    w = gibbs_exact([1.0, 0.0], GibbsConfig(1.0, (1 - 1e-12, 1e-12)))
    assert w[0] > 0.999
    with pytest.raises(ValueError):
        GibbsConfig(-1.0)
    with pytest.raises(ValueError):
        GibbsConfig(1.0, (0.5, 0.6))
    with pytest.raises(DimensionError):
        gibbs_exact([0.0, 1.0, 2.0], GibbsConfig(1.0, (0.5, 0.5)))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=12), st.floats(0.0, 1e3), st.floats(-5e3, 5e3))
def test_gibbs_invariants(risks, gamma, shift):
    w = gibbs_exact(risks, GibbsConfig(gamma))
    assert np.all(w >= 0) and abs(math.fsum(w) - 1.0) <= 1e-12
    r = np.asarray(risks)
    shifted = r + shift
    if np.all(shifted >= 0):
        np.testing.assert_allclose(gibbs_exact(shifted, GibbsConfig(gamma)), w, atol=1e-12)
    # lower risk never gets less weight under a uniform prior
    order = np.argsort(r, kind="stable")
    assert np.all(np.diff(w[order]) <= 1e-15)


def test_reflect_and_walk_matrix():
    assert [reflect(i, 4) for i in range(-3, 8)] == [3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]
    assert reflect(5, 1) == 0
    P = walk_proposal_matrix(5, 2)
    np.testing.assert_allclose(P.sum(1), 1.0)
    assert not np.allclose(P, P.T)


def test_mh_single_candidate():
    res = mh_sample([0.7], 1, GibbsConfig(3.0), MHConfig(steps=2000, burn_in=100))
    assert res.weights.tolist() == [1.0]
    assert res.kept == 1900


@pytest.mark.parametrize("proposal", ["uniform_independent", "neighbor_walk"])
def test_mh_two_candidates(proposal):
    res = mh_sample([0.0, 1.0], 2, GibbsConfig(math.log(2)), MHConfig(steps=100_000, proposal=proposal, seed=3))
    assert tv(res.weights, [2 / 3, 1 / 3]) <= 0.02


@pytest.mark.parametrize("width", [1, 2, 3])
def test_mh_neighbor_walk_matches_exact(width):
    rng = np.random.default_rng(width)
    risks = rng.random(7)
    exact = gibbs_exact(risks, GibbsConfig(3.0))
    res = mh_sample(risks, 7, GibbsConfig(3.0), MHConfig(steps=100_000, proposal="neighbor_walk", width=width, seed=9))
    assert tv(res.weights, exact) <= 0.02


def test_mh_gamma_zero_recovers_prior():
    prior = (0.1, 0.2, 0.3, 0.4)
    res = mh_sample([5.0, 0.0, 3.0, 1.0], 4, GibbsConfig(0.0, prior), MHConfig(steps=100_000, seed=1))
    assert tv(res.weights, prior) <= 0.02


def test_mh_deterministic_and_lazy_oracle():
    calls = []

    def oracle(c):
        calls.append(c)
        return [0.2, 0.9, 0.4][c]

    cfg = MHConfig(steps=5000, burn_in=10, thinning=3, seed=11)
    a = mh_sample(oracle, 3, GibbsConfig(2.0), cfg)
    b = mh_sample([0.2, 0.9, 0.4], 3, GibbsConfig(2.0), cfg)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert len(calls) == len(set(calls)) <= 3
    assert a.kept == len(range(10, 5000, 3))
    assert 0 < a.acceptance_rate <= 1


def test_mh_config_validation():
    with pytest.raises(ValueError):
        MHConfig(steps=10, burn_in=10)
    with pytest.raises(ValueError):
        MHConfig(proposal="gibbs")
    with pytest.raises(ValueError):
        MHConfig(thinning=0)
    with pytest.raises(DimensionError):
        mh_sample([0.0], 2, GibbsConfig(1.0), MHConfig(steps=10, burn_in=1))


def test_posterior_spec_feeds_compile():
    cands = [P5, SymOperator(2 * P5.matrix), SymOperator(3 * P5.matrix)]
    spec = posterior_spec(cands, [0.005, 0.6, 0.395], params=[1, 2, 3], cutoff=0.01)
    assert len(spec.operators) == 2 and spec.params == (2.0, 3.0)
    with pytest.warns(RuntimeWarning):
        ens = compile_spec(spec)
    assert abs(math.fsum(ens.weights) - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        posterior_spec(cands, [0.0, 0.0, 0.0])
