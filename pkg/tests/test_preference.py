import numpy as np
import pytest

from helpers import chi2_pvalue, random_dataset
from scoreflow.preference import (
    DomainError,
    EmptyDataset,
    PreferenceDataset,
    PreferencePair,
    ScoredCandidate,
    WeightConfig,
    aggregate,
    build_pairs,
    load_dataset,
    pair_weight,
    sample_pair_indices,
    sample_pairs,
    sampling_probs,
    save_dataset,
)
from scoreflow.scoring import Score

X = (1.0, 0.0, 0.5)


def cands(scores, task="t", indices=None):
    indices = indices if indices is not None else range(len(scores))
    return [ScoredCandidate(task, i, f"d{i}", Score(s, 3, (s, s, s))) for i, s in zip(indices, scores)]


@pytest.mark.parametrize("scores, n", [([1.0, 0.0], 1), ([0.5, 0.5, 0.5], 0), ([1.0, 0.6, 0.0], 3), ([1, 1, 0, 0], 4)])
def test_build_pairs_counts(scores, n):
    pairs = build_pairs(cands(scores), X)
    assert len(pairs) == n
    assert all(p.s_w > p.s_l for p in pairs)


def test_build_pairs_orientation():
    (pair,) = build_pairs(cands([0.2, 0.9]), X)
    assert (pair.winner_index, pair.loser_index, pair.s_w, pair.s_l) == (1, 0, 0.9, 0.2)
    assert pair.features == X


def test_build_pairs_single_task_only():
    with pytest.raises(ValueError):
        build_pairs(cands([1.0]) + cands([0.0], task="u"), X)


def test_same_bank_entry_never_pairs_with_itself():
    pairs = build_pairs(cands([1.0, 0.0, 0.5], indices=[4, 4, 2]), X)
    assert {(p.winner_index, p.loser_index) for p in pairs} == {(4, 2), (2, 4)}


def test_pair_invariants():
    with pytest.raises(DomainError):
        PreferencePair("t", X, 0, 1, 0.5, 0.5)
    with pytest.raises(DomainError):
        PreferencePair("t", X, 2, 2, 1.0, 0.0)


def test_aggregate_order_and_digest():
    a = build_pairs(cands([1.0, 0.6, 0.0], task="a"), X)
    b = build_pairs(cands([0.9, 0.3, 0.1], task="b"), X)
    ds = aggregate([a, b], iteration=2, config_digest="cfg")
    assert len(ds) == 6
    assert [p.task_id for p in ds.pairs] == ["a"] * 3 + ["b"] * 3
    assert ds.pairs[:3] == tuple(a)
    assert ds.digest() == aggregate([a, b], 2, "cfg").digest()
    assert ds.digest() != aggregate([b, a], 2, "cfg").digest()
    assert len(aggregate([])) == 0


@pytest.mark.parametrize(
    "s_w, s_l, cfg, value",
    [
        (1.0, 0.0, WeightConfig(3), 1.0),
        (0.6, 0.4, WeightConfig(3), 0.008),
        (0.9, 0.1, WeightConfig(mode="uniform"), 1.0),
        (0.9, 0.1, WeightConfig(0), 1.0),
        (0.9, 0.1, WeightConfig(2), 0.64),
    ],
)
def test_pair_weight(s_w, s_l, cfg, value):
    assert pair_weight(s_w, s_l, cfg) == pytest.approx(value, rel=1e-12)


def test_pair_weight_domain():
    with pytest.raises(DomainError):
        pair_weight(0.4, 0.4, WeightConfig())
    with pytest.raises(DomainError):
        pair_weight(0.4, 0.6, WeightConfig())
    with pytest.raises(ValueError):
        WeightConfig(alpha=-1)


def _two_pair_dataset():
    return PreferenceDataset(
        (PreferencePair("t", X, 0, 1, 0.9, 0.1), PreferencePair("t", X, 2, 3, 0.6, 0.4))
    )


def test_sampling_frequency_two_pairs():
    ds = _two_pair_dataset()
    draws = sample_pair_indices(ds, WeightConfig(3), np.random.default_rng(0), 100_000)
    assert np.mean(draws == 0) == pytest.approx(0.512 / 0.520, abs=0.005)


def test_sampling_probs_log_space_alpha_100():
    ds = _two_pair_dataset()
    p = sampling_probs(ds, WeightConfig(100))
    # 0.2**100 / 0.8**100 = 4**-100, far below double precision next to 1
    assert p[0] == 1.0 and 0.0 <= p[1] < 1e-59
    assert np.isfinite(p).all()
    tiny = PreferenceDataset((PreferencePair("t", X, 0, 1, 0.3, 0.2), PreferencePair("t", X, 2, 3, 0.25, 0.2)))
    # gaps 0.1 and 0.05: the ratio of weights is exactly 2**-100
    np.testing.assert_allclose(sampling_probs(tiny, WeightConfig(100)), [1.0, 2.0**-100 / (1 + 2.0**-100)], rtol=1e-12)


def test_sampling_is_seeded():
    ds = random_dataset(np.random.default_rng(3))
    a = sample_pairs(ds, WeightConfig(3), np.random.default_rng(9), 50)
    b = sample_pairs(ds, WeightConfig(3), np.random.default_rng(9), 50)
    assert a == b
    assert sample_pairs(ds, WeightConfig(3), np.random.default_rng(9), 0) == []


def test_sampling_errors():
    with pytest.raises(EmptyDataset):
        sample_pairs(PreferenceDataset(()), WeightConfig(), np.random.default_rng(0), 3)


@pytest.mark.parametrize("alpha", [0, 2, 3])
def test_sampling_law_chi_square(alpha):
    rng = np.random.default_rng(100 + alpha)
    ds = random_dataset(rng, max_pairs=20)
    draws = sample_pair_indices(ds, WeightConfig(alpha), np.random.default_rng(alpha), 20_000)
    assert chi2_pvalue(draws, sampling_probs(ds, WeightConfig(alpha))) > 0.001


def test_dataset_round_trip(tmp_path):
    ds = random_dataset(np.random.default_rng(4))
    ds = PreferenceDataset(ds.pairs, iteration=3, config_digest="abc")
    path = save_dataset(ds, tmp_path / "prefs.jsonl")
    back = load_dataset(path)
    assert back == ds
    assert back.digest() == ds.digest()


def test_load_rejects_bad_records(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"task_id": "t", "features": [1.0]}\n')
    with pytest.raises(ValueError):
        load_dataset(path)
