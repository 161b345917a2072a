import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcgeval.errors import IncompleteRecords
from pcgeval.scoring import (
    CharacterWeight,
    CompetitionConfig,
    TrialRecord,
    aggregate,
    char_weights,
    rank,
    rank_scores,
    read_records_csv,
    read_weights_csv,
    trial_score,
    write_records_csv,
    write_weights_csv,
)

# per-character averages from the published experiment: (stability, similarity) for I, L, U
PUBLISHED = {
    "v1": [(1.00, 0.18), (0.84, 0.53), (0.90, 0.22)],
    "v2": [(0.96, 0.22), (0.80, 0.24), (1.00, 0.02)],
    "v3": [(0.97, 0.03), (0.75, 0.65), (0.94, 0.01)],
    "v4": [(1.00, 0.17), (0.93, 0.60), (1.00, 0.03)],
    "v5": [(0.96, 0.28), (0.90, 0.43), (1.00, 0.01)],
}


def uniform_records(table, letters="ILU", trials=1):
    return [
        TrialRecord(p, c, t, s, i)
        for p, rows in table.items()
        for c, (s, i) in zip(letters, rows)
        for t in range(1, trials + 1)
    ]


def test_published_weights():
    recs = uniform_records(PUBLISHED)
    w = char_weights(recs, CompetitionConfig.infer(recs))
    assert [round(w[c].w_st, 3) for c in "ILU"] == [0.333] * 3
    assert [w[c].w_si for c in "ILU"] == pytest.approx([0.823, 0.510, 0.944], abs=0.005)
    assert [w[c].weight for c in "ILU"] == pytest.approx([0.274, 0.170, 0.315], abs=0.005)


def test_trial_score_example():
    assert trial_score(0.315, 0.9, 0.22) == pytest.approx(0.06237)


def test_single_prompt_gets_everything():
    recs = [TrialRecord("only", c, t, 0.5, 0.3) for c in "AB" for t in (1, 2)]
    result = aggregate(recs, CompetitionConfig.infer(recs))
    assert result.norm_prompt.tolist() == [100.0]


def test_identical_prompts_split_evenly():
    recs = [TrialRecord(p, c, 1, 0.7, 0.4) for p in ("a", "b") for c in "XY"]
    result = aggregate(recs, CompetitionConfig.infer(recs))
    assert result.norm_prompt.tolist() == [50.0, 50.0]
    standings = rank(result, {"a": 10, "b": 10})
    assert [s.rank for s in standings] == [1, 1]
    assert all(s.co_ranked for s in standings)


def test_word_count_breaks_score_ties():
    standings = rank_scores({"long": 40.0, "short": 40.0, "best": 20.0 + 40.0}, {"long": 90, "short": 12, "best": 500})
    assert [(s.prompt_id, s.rank) for s in standings] == [("best", 1), ("short", 2), ("long", 3)]


def test_competition_ranks_skip_after_ties():
    standings = rank_scores({"a": 5.0, "b": 5.0, "c": 1.0}, {"a": 3, "b": 3, "c": 3})
    assert [s.rank for s in standings] == [1, 1, 3]
    assert [s.co_ranked for s in standings] == [True, True, False]


def test_zero_competition():
    recs = [TrialRecord(p, "A", 1, 0.0, 0.5) for p in ("a", "b")]
    result = aggregate(recs, CompetitionConfig.infer(recs))
    assert result.zero_competition and result.norm_prompt.tolist() == [0.0, 0.0]
    assert [s.prompt_id for s in rank(result, {"a": 8, "b": 4})] == ["b", "a"]


def test_incomplete_and_duplicate_records():
    cfg = CompetitionConfig(("a",), ("A", "B"), 2)
    recs = [TrialRecord("a", c, t, 1, 1) for c in "AB" for t in (1, 2)]
    with pytest.raises(IncompleteRecords):
        aggregate(recs[:-1], cfg)
    with pytest.raises(IncompleteRecords):
        aggregate(recs + recs[:1], cfg)
    with pytest.raises(IncompleteRecords):
        aggregate(recs + [TrialRecord("a", "A", 3, 1, 1)], cfg)


def test_weight_floor():
    # everything perfect: 1 - mean = 0, floored at 1/C
    recs = [TrialRecord("a", c, 1, 1.0, 1.0) for c in "ABCD"]
    w = char_weights(recs, CompetitionConfig.infer(recs))
    assert all(cw.w_st == 0.25 and cw.w_si == 0.25 for cw in w.values())


def test_frozen_weights_are_used():
    recs = uniform_records(PUBLISHED)
    cfg = CompetitionConfig.infer(recs)
    frozen = {c: CharacterWeight(1.0, 1.0) for c in "ILU"}
    result = aggregate(recs, cfg, weights=frozen)
    s, i = zip(*PUBLISHED["v1"])
    assert result.prompt[0] == pytest.approx(np.mean(np.array(s) * np.array(i)))


record_sets = st.integers(1, 4).flatmap(
    lambda p: st.integers(1, 3).flatmap(
        lambda c: st.integers(1, 3).flatmap(
            lambda t: st.lists(
                st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=p * c * t, max_size=p * c * t
            ).map(lambda vals: (p, c, t, vals))
        )
    )
)


def build(p, c, t, vals):
    keys = itertools.product(range(p), range(c), range(1, t + 1))
    return [TrialRecord(f"p{k}", "ABC"[j], i, s, si) for (k, j, i), (s, si) in zip(keys, vals)]


@settings(max_examples=300, deadline=None)
@given(record_sets)
def test_normalised_scores_sum_to_100(case):
    recs = build(*case)
    result = aggregate(recs, CompetitionConfig.infer(recs))
    if result.zero_competition:
        assert not result.norm_prompt.any()
    else:
        assert result.norm_prompt.sum() == pytest.approx(100, abs=1e-6)
    assert (result.norm_prompt >= 0).all()


@settings(max_examples=100, deadline=None)
@given(record_sets, st.randoms())
def test_record_order_does_not_matter(case, rnd):
    recs = build(*case)
    cfg = CompetitionConfig.infer(recs)
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    assert aggregate(shuffled, cfg).norm_prompt.tolist() == aggregate(recs, cfg).norm_prompt.tolist()


def test_scaling_similarity_leaves_shares_unchanged():
    recs = uniform_records(PUBLISHED)
    cfg = CompetitionConfig.infer(recs)
    frozen = char_weights(recs, cfg)
    halved = [TrialRecord(r.prompt_id, r.letter, r.trial, r.st, r.si / 2) for r in recs]
    a = aggregate(recs, cfg, frozen).norm_prompt
    b = aggregate(halved, cfg, frozen).norm_prompt
    assert a == pytest.approx(b, abs=1e-9)


def test_csv_round_trip(tmp_path):
    recs = uniform_records(PUBLISHED, trials=2)
    write_records_csv(recs, tmp_path / "r.csv")
    assert read_records_csv(tmp_path / "r.csv") == recs
    result = aggregate(recs, CompetitionConfig.infer(recs))
    write_weights_csv(result, tmp_path / "w.csv")
    assert read_weights_csv(tmp_path / "w.csv") == result.weights
