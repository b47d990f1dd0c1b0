import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from styleauth.auth import Decision, Hypothesis
from styleauth.corpus import MODEL_STYLES, UtteranceKey, synthetic_manifest
from styleauth.errors import SplitError
from styleauth.evaluation import (ConfusionMatrix, ExperimentResult, GroupScores, PerformanceTable,
                                  StyleRow, aggregate_average, confusion_from_scores, format_trials_csv,
                                  improvement_rate, largest_remainder, round_half_up,
                                  run_multispeaker_experiment, run_verification_suite, score_corpus)

from conftest import DEFAULT_RUN
from oracles import (HMM_CONFUSION, HMM_MULTI, HMM_SINGLE, SPHMM_CONFUSION, SPHMM_MULTI,
                     SPHMM_SINGLE, STYLE_ORDER, round_half_up_int)

PUBLISHED = {"sphmm-single": SPHMM_SINGLE, "hmm-single": HMM_SINGLE,
             "sphmm-multi": SPHMM_MULTI, "hmm-multi": HMM_MULTI}


def _table(published):
    return PerformanceTable.from_cells({s: published[s][:4] for s in STYLE_ORDER})


@pytest.mark.parametrize("name", sorted(PUBLISHED))
def test_published_averages_reproduce(name):
    pub = PUBLISHED[name]
    table = _table(pub)
    assert table.column("avg_h0") == [pub[s][4] for s in STYLE_ORDER]
    assert table.column("avg_h1") == [pub[s][5] for s in STYLE_ORDER]


def test_shouted_example():
    assert StyleRow(36, 22, 38, 20).avg_h0 == 37
    assert StyleRow(38, 17, 40, 17).avg_h0 == 39


def test_aggregate_average_of_published_tables():
    assert aggregate_average(_table(SPHMM_SINGLE)) == 62.2
    assert aggregate_average(_table(HMM_SINGLE)) == 57.7
    assert aggregate_average(PerformanceTable.from_cells({s: (48, 0, 48, 0) for s in MODEL_STYLES})) == 48.0


def test_aggregate_average_needs_every_row():
    partial = PerformanceTable.from_cells({s: SPHMM_SINGLE[s][:4] for s in STYLE_ORDER[:8]})
    with pytest.raises(ValueError, match="fearful"):
        aggregate_average(partial)


def test_improvement_rates():
    assert improvement_rate(62.2, 57.7) == 7.8
    assert improvement_rate(37, 32) == 15.6
    assert improvement_rate(41.5, 41.5) == 0.0
    with pytest.raises(ValueError):
        improvement_rate(1.0, 0.0)


def test_round_half_up():
    assert round_half_up(0.5) == 1.0 and round_half_up(2.5) == 3.0 and round_half_up(-0.4) == -0.0
    assert round_half_up(61.15, 1) == 61.2
    assert round_half_up(560 / 9, 1) == 62.2


@given(st.integers(0, 200), st.integers(1, 200))
def test_round_half_up_matches_integer_oracle(k, n):
    x = 100 * k / n
    assert round_half_up(x) == round_half_up_int(x)


def test_published_confusion_columns_sum_to_100():
    for m in (SPHMM_CONFUSION, HMM_CONFUSION):
        assert list(m.sum(axis=0)) == [100] * 9


@given(st.lists(st.integers(0, 50), min_size=1, max_size=9).filter(lambda c: sum(c) > 0))
def test_rounded_columns_sum_to_100(counts):
    counts = np.array(counts)[:, None]
    cm = ConfusionMatrix(tuple(f"m{i}" for i in range(counts.shape[0])), ("t",), counts)
    r = cm.rounded()[:, 0]
    assert r.sum() == 100
    assert np.all(np.abs(r - cm.percent[:, 0]) < 1)


def test_largest_remainder_tie_goes_to_earlier_row():
    assert list(largest_remainder(np.array([100 / 3] * 3))) == [34, 33, 33]


def _one_style_group():
    keys = tuple(UtteranceKey("spk1", 1, "slow", t) for t in (6, 7, 8, 9))
    scores = np.random.default_rng(0).normal(size=(4, 1, 2))
    return GroupScores("spk1", "male", 1, ("slow",), {}, {}, keys, scores)


def test_single_style_corpus_has_full_diagonal():
    cm = confusion_from_scores([_one_style_group()], "sphmm", 0.5)
    assert cm.test_styles == ("slow",)
    assert cm.cell("slow", "slow") == 100.0


def test_identification_tie_goes_to_earlier_style():
    keys = (UtteranceKey("spk1", 1, "fast", 6),)
    g = GroupScores("spk1", "male", 1, ("neutral", "fast"), {}, {}, keys, np.full((1, 2, 2), -3.0))
    assert confusion_from_scores([g], "hmm", 0.5).cell("neutral", "fast") == 100.0


# ---------------------------------------------------------------------------
# Small scored corpus


@pytest.fixture(scope="module")
def small_result(small_corpus):
    metas = {e.meta.key: e.meta for e in small_corpus.manifest}
    return ExperimentResult(small_corpus.config, tuple(small_corpus.groups), metas)


def test_trial_counts_match_the_manifest(small_result):
    trials = small_result.trials()
    # per group: 10 styles x 4 test tokens, each claimed against all 9 models
    assert len(trials) == 2 * 40 * 9
    for style in MODEL_STYLES:
        for spk in ("spk1", "spk2"):
            mine = [t for t in trials if t.claim.style == style and t.claim.speaker == spk]
            assert sum(t.hypothesis is Hypothesis.H0 for t in mine) == 4
            assert sum(t.hypothesis is Hypothesis.H1 for t in mine) == 36
    sad = [t for t in trials if t.true_meta.style == "sad"]
    assert len(sad) == 2 * 4 * 9 and all(t.hypothesis is Hypothesis.H1 for t in sad)


def test_table_shape_and_ranges(small_result):
    table = small_result.table
    assert list(table.rows) == list(MODEL_STYLES)
    cells = [c for row in table.rows.values() for c in row.cells()]
    assert len(cells) == 54 and all(0 <= c <= 100 for c in cells)


def test_every_cell_is_recomputable_from_the_trial_log(small_result, small_corpus):
    log = list(csv.DictReader(io.StringIO(format_trials_csv(small_result.trials()))))
    gender = small_corpus.manifest.genders
    table = small_result.table
    for style in MODEL_STYLES:
        for g in ("male", "female"):
            for hyp in ("H0", "H1"):
                rows = [r for r in log if r["claim_style"] == style and gender[r["true_speaker"]] == g
                        and r["hypothesis"] == hyp]
                pct = 100 * sum(r["decision"] == "accept" for r in rows) / len(rows)
                assert getattr(table.rows[style], f"{g}_{hyp.lower()}") == round_half_up_int(pct)


def test_trial_log_decisions_follow_the_rule(small_result):
    for t in small_result.trials():
        assert (t.decision is Decision.ACCEPT) == (t.lam >= t.theta)


def test_alpha_zero_tables_equal_hmm_tables(small_result):
    a = small_result.trials(engine="sphmm", alpha=0.0)
    b = small_result.trials(engine="hmm")
    assert format_trials_csv(a) == format_trials_csv(b)


def test_adaptive_thresholds_move_only_after_acceptance(small_result):
    frozen = small_result.trials()
    adaptive = small_result.trials(adaptive=True)
    assert [t.lam for t in frozen] == [t.lam for t in adaptive]
    last = {}
    moved = 0
    for t in adaptive:
        prev = last.get(t.claim)
        if prev is not None and t.theta != prev.theta:
            assert prev.decision is Decision.ACCEPT
            moved += 1
        last[t.claim] = t
    assert moved > 0


def test_scoring_is_deterministic_and_independent_of_jobs(small_corpus):
    again = score_corpus(small_corpus.manifest, small_corpus.config, jobs=2)
    for a, b in zip(small_corpus.groups, again):
        assert a.test_keys == b.test_keys
        assert np.array_equal(a.test_scores, b.test_scores)
        assert all(np.array_equal(a.train_scores[s], b.train_scores[s]) for s in a.styles)


def test_multispeaker_output_shape(small_corpus, small_result):
    multi = run_multispeaker_experiment(small_corpus.config, small_corpus.manifest)
    assert multi.config.multi_speaker
    assert len(multi.trials()) == len(small_result.trials())
    assert list(multi.table.rows) == list(small_result.table.rows)


# ---------------------------------------------------------------------------
# Full default corpus


@pytest.mark.slow
def test_neutral_is_the_most_self_consistent_style(default_run):
    table = default_run.result.performance(engine="sphmm")
    neutral = table.rows["neutral"].avg_h0
    others = {s: table.rows[s].avg_h0 for s in MODEL_STYLES if s != "neutral"}
    assert all(neutral >= v for v in others.values()), f"neutral {neutral} vs {others}"


@pytest.mark.slow
@pytest.mark.parametrize("engine", ["sphmm", "hmm"])
def test_shouted_is_confused_with_loud_or_angry(default_run, engine):
    cm = default_run.result.confusion(engine=engine)
    col = cm.rounded()[:, cm.test_styles.index("shouted")]
    off = {s: v for s, v in zip(cm.model_styles, col) if s != "shouted"}
    assert max(off, key=off.get) in ("loud", "angry")


@pytest.fixture(scope="module")
def multispeaker_run():
    return run_multispeaker_experiment(DEFAULT_RUN, synthetic_manifest(n_speakers=4, seed=7))


@pytest.mark.slow
def test_multispeaker_training_lowers_false_acceptance(default_run, multispeaker_run):
    single = default_run.result.performance(engine="sphmm")
    multi = multispeaker_run.performance(engine="sphmm")
    lower = [s for s in MODEL_STYLES if multi.rows[s].avg_h1 <= single.rows[s].avg_h1]
    assert len(lower) >= 6, f"H1 not higher in {lower}"


def test_full_suite_rejects_corpus_without_models(small_corpus):
    only_sad = small_corpus.manifest.subset(lambda m: m.style == "sad")
    with pytest.raises(SplitError, match="no reference models"):
        run_verification_suite(small_corpus.config, only_sad)
