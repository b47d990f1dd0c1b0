"""Experimental protocol: train every reference model, score every test utterance, tabulate.

Work is split into (speaker, sentence) groups. A group trains the style
models of its speaker and sentence, then scores each of its test utterances
against all of them, keeping the acoustic and prosodic log scores separately.
Trials, performance tables and confusion matrices for either engine and any
combination weight are derived from those stored scores without rescoring.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hmm
from .auth import (ClaimIdentity, Decision, Scenario, ThresholdState, VerificationTrial, TRIAL_HEADER,
                   ObservationBundle, adapt_threshold, decide, initial_threshold, ratio_from_scores,
                   score_components)
from .config import ExperimentConfig
from .corpus import (GENDERS, MODEL_STYLES, CorpusManifest, DataSplit, ModelKey, UtteranceKey,
                     build_multispeaker_train_set, derive_seed, split_train_test)
from .errors import SplitError
from .sphmm import SphmmModel, SupraConfig, combine_scores, sphmm_to_dict, train_sphmm

log = logging.getLogger(__name__)


def round_half_up(x: float, places: int = 0) -> float:
    """Decimal rounding with ties away from zero, applied to the shortest repr of ``x``."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def model_seed(seed: int, key: ModelKey) -> int:
    return derive_seed(seed, "model", key.speaker, key.sentence, key.style)


# ---------------------------------------------------------------------------
# Scoring pass


@dataclass(frozen=True, eq=False)
class GroupScores:
    """Trained models and raw log scores of one (speaker, sentence) group.

    ``train_scores[s]`` is ``(n_train, n_models, 2)``: every model's
    (acoustic, prosodic) scores on model ``s``'s training utterances.
    ``test_scores`` is ``(n_test, n_models, 2)`` in ``test_keys`` order.
    """

    speaker: str
    gender: str
    sentence: int
    styles: tuple
    models: dict
    train_scores: dict
    test_keys: tuple
    test_scores: np.ndarray


def _group_test_keys(split: DataSplit, speaker: str, sentence: int) -> tuple:
    order = {s: i for i, s in enumerate(MODEL_STYLES + ("sad",))}
    keys = [k for k in split.test if k.speaker == speaker and k.sentence == sentence]
    return tuple(sorted(keys, key=lambda k: (order.get(k.style, len(order)), k.style, k.token)))


def score_group(manifest: CorpusManifest, split: DataSplit, speaker: str, sentence: int,
                config: ExperimentConfig, score_tests: bool = True) -> GroupScores:
    bundles: dict[UtteranceKey, ObservationBundle] = {}

    def bundle(key: UtteranceKey) -> ObservationBundle:
        if key not in bundles:
            bundles[key] = ObservationBundle.from_clip(manifest.load(key))
        return bundles[key]

    styles = tuple(s for s in MODEL_STYLES if ModelKey(speaker, sentence, s) in split.model_train)
    if not styles:
        raise SplitError(f"no reference models for speaker {speaker} sentence {sentence}")
    supra_cfg = SupraConfig(n_mix=config.supra_mix, alpha=config.alpha, seed=config.seed)
    models = {}
    for style in styles:
        mkey = ModelKey(speaker, sentence, style)
        keys = split.training_list(mkey)
        obs = [bundle(k).obs for k in keys]
        seed = model_seed(config.seed, mkey)
        init = hmm.init_hmm(obs, config.n_states, config.n_mix, seed=seed)
        acoustic = hmm.baum_welch_train(obs, init, max_iter=config.max_iter, tol=config.tol)
        models[style] = train_sphmm(acoustic, [bundle(k).track for k in keys], supra_cfg,
                                    observations=obs)
    ordered = [models[s] for s in styles]
    train_scores = {s: np.stack([score_components(ordered, bundle(k))
                                 for k in split.training_list(ModelKey(speaker, sentence, s))])
                    for s in styles}
    test_keys = _group_test_keys(split, speaker, sentence) if score_tests else ()
    test_scores = np.stack([score_components(ordered, bundle(k)) for k in test_keys]) if test_keys \
        else np.zeros((0, len(styles), 2))
    gender = manifest.genders[speaker]
    return GroupScores(speaker, gender, sentence, styles, models, train_scores, test_keys, test_scores)


_WORKER: dict = {}


def _score_group_task(args):
    speaker, sentence, score_tests = args
    return score_group(_WORKER["manifest"], _WORKER["split"], speaker, sentence,
                       _WORKER["config"], score_tests)


def score_corpus(manifest: CorpusManifest, config: ExperimentConfig, jobs: int = 1,
                 score_tests: bool = True) -> list[GroupScores]:
    """Run :func:`score_group` over every (speaker, sentence), optionally in worker processes.

    Results come back in (speaker, sentence) order whatever ``jobs`` is; each
    group depends only on its own seeds, so the scores do not change with it.
    """
    split = split_train_test(manifest)
    if config.multi_speaker:
        if len(manifest.speakers) < 2:
            raise SplitError("multi-speaker training needs at least two speakers")
        split = build_multispeaker_train_set(split, manifest)
    tasks = [(spk, sent, score_tests) for spk in manifest.speakers for sent in manifest.sentences
             if any(k.speaker == spk and k.sentence == sent for k in split.model_train)]
    if not tasks:
        raise SplitError("manifest has no reference models to train")
    if jobs <= 1 or len(tasks) <= 1:
        return [score_group(manifest, split, spk, sent, config, st) for spk, sent, st in tasks]
    # workers inherit the manifest (and its possibly unpicklable loader) through fork
    _WORKER.update(manifest=manifest, split=split, config=config)
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            return list(pool.map(_score_group_task, tasks))
    finally:
        _WORKER.clear()


# ---------------------------------------------------------------------------
# From scores to trials


def engine_scores(components: np.ndarray, engine: str, alpha: float) -> np.ndarray:
    """Per-model engine score from stacked ``(..., 2)`` acoustic/prosodic pairs."""
    l_ac = components[..., 0]
    if engine == "hmm":
        return l_ac
    with np.errstate(invalid="ignore"):
        return combine_scores(l_ac, components[..., 1], alpha)


def _ratios(scores: np.ndarray, claim_idx: int, kind: Scenario) -> np.ndarray:
    """Test statistic for the claimed model on each row of ``scores (n, n_models)``."""
    others = [j for j in range(scores.shape[1]) if j != claim_idx]
    return np.array([ratio_from_scores(row[claim_idx], row[others], kind) for row in scores])


def group_thresholds(group: GroupScores, engine: str, alpha: float, kind: Scenario) -> dict:
    """Initial threshold of every model from its own training utterances."""
    out = {}
    for i, style in enumerate(group.styles):
        s = engine_scores(group.train_scores[style], engine, alpha)
        out[style] = initial_threshold(_ratios(s, i, kind))
    return out


@dataclass(frozen=True)
class TrialSettings:
    engine: str = "sphmm"
    alpha: float = 0.5
    scenario: Scenario = Scenario.SCORE_ONLY
    adaptive: bool = False
    window: int = 16
    margin: float = 0.0

    @classmethod
    def from_config(cls, config: ExperimentConfig, **overrides) -> "TrialSettings":
        base = dict(engine=config.engine, alpha=config.alpha, scenario=config.scenario_kind,
                    adaptive=config.adapt_threshold, window=config.window, margin=config.margin)
        base.update({k: v for k, v in overrides.items() if v is not None})
        base["scenario"] = Scenario(base["scenario"])
        return cls(**base)


def group_trials(group: GroupScores, metas: dict, settings: TrialSettings) -> list[VerificationTrial]:
    """H0 and H1 trials of one group, utterance by utterance in test order.

    Every test utterance is claimed against every style model of its speaker
    and sentence. Adaptive thresholds update after accepted trials only.
    """
    if not group.test_keys:
        return []
    scores = engine_scores(group.test_scores, settings.engine, settings.alpha)
    thetas = group_thresholds(group, settings.engine, settings.alpha, settings.scenario)
    states = {s: ThresholdState.start(thetas[s], settings.window, settings.margin) for s in group.styles}
    lams = {s: _ratios(scores, i, settings.scenario) for i, s in enumerate(group.styles)}
    trials = []
    for u, key in enumerate(group.test_keys):
        meta = metas[key]
        for style in group.styles:
            lam = float(lams[style][u])
            state = states[style]
            decision = decide(lam, state.theta)
            trials.append(VerificationTrial(ClaimIdentity(group.speaker, group.sentence, style),
                                            meta, lam, state.theta, decision))
            if settings.adaptive and decision is Decision.ACCEPT and np.isfinite(lam):
                states[style] = adapt_threshold(state, lam)
    return trials


def format_trials_csv(trials: Sequence[VerificationTrial]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_HEADER)
    for t in trials:
        w.writerow(t.csv_row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Tables


TABLE_COLUMNS = ("male_h0", "male_h1", "female_h0", "female_h1", "avg_h0", "avg_h1")


def average_cells(male: float | None, female: float | None) -> float | None:
    """Mean of the (already rounded) male and female cells, rounded to an integer."""
    present = [c for c in (male, female) if c is not None]
    if not present:
        return None
    return round_half_up(sum(present) / len(present))


@dataclass(frozen=True)
class StyleRow:
    male_h0: float | None
    male_h1: float | None
    female_h0: float | None
    female_h1: float | None

    @property
    def avg_h0(self) -> float | None:
        return average_cells(self.male_h0, self.female_h0)

    @property
    def avg_h1(self) -> float | None:
        return average_cells(self.male_h1, self.female_h1)

    def cells(self) -> tuple:
        return (self.male_h0, self.male_h1, self.female_h0, self.female_h1, self.avg_h0, self.avg_h1)


@dataclass(frozen=True)
class PerformanceTable:
    """Integer acceptance percentages per claimed style, split by gender.

    ``rates`` keeps the unrounded percentages keyed by ``(style, gender, hypothesis)``.
    """

    rows: dict
    rates: dict

    @classmethod
    def from_trials(cls, trials: Sequence[VerificationTrial], styles=MODEL_STYLES) -> "PerformanceTable":
        accepted: dict = {}
        total: dict = {}
        for t in trials:
            k = (t.claim.style, t.true_meta.gender, t.hypothesis.value)
            total[k] = total.get(k, 0) + 1
            accepted[k] = accepted.get(k, 0) + (t.decision is Decision.ACCEPT)
        rates = {k: 100.0 * accepted[k] / n for k, n in total.items()}
        rows = {}
        for style in styles:
            cells = []
            for gender in GENDERS:
                for hyp in ("H0", "H1"):
                    r = rates.get((style, gender, hyp))
                    cells.append(None if r is None else round_half_up(r))
            rows[style] = StyleRow(*cells)
        return cls(rows, rates)

    @classmethod
    def from_cells(cls, cells: dict) -> "PerformanceTable":
        """Table from integer ``(male_h0, male_h1, female_h0, female_h1)`` cells per style."""
        return cls({s: StyleRow(*map(float, c)) for s, c in cells.items()}, {})

    def column(self, name: str) -> list:
        return [getattr(self.rows[s], name) for s in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("style",) + TABLE_COLUMNS)
        for style, row in self.rows.items():
            w.writerow([style] + ["" if c is None else f"{c:.0f}" for c in row.cells()])
        return buf.getvalue()

    def to_text(self, title: str = "") -> str:
        def cell(c):
            return "  -" if c is None else f"{c:3.0f}"
        lines = [title] if title else []
        lines.append(f"{'Style':<10} {'Male':^9} {'Female':^9} {'Average':^9}")
        lines.append(f"{'':<10} {'H0':>4}{'H1':>5} {'H0':>4}{'H1':>5} {'H0':>4}{'H1':>5}")
        for style, row in self.rows.items():
            c = [cell(x) for x in row.cells()]
            lines.append(f"{style:<10} {c[0]:>4}{c[1]:>5} {c[2]:>4}{c[3]:>5} {c[4]:>4}{c[5]:>5}")
        return "\n".join(lines) + "\n"


def aggregate_average(table: PerformanceTable, styles=MODEL_STYLES) -> float:
    """Unweighted mean of the per-style average H0 cells, one decimal."""
    missing = [s for s in styles if s not in table.rows or table.rows[s].avg_h0 is None]
    if missing:
        raise ValueError(f"table lacks average H0 cells for {', '.join(missing)}")
    return round_half_up(float(np.mean([table.rows[s].avg_h0 for s in styles])), 1)


def improvement_rate(new: float, old: float) -> float:
    """Relative gain of ``new`` over ``old`` in percent, one decimal."""
    if old <= 0:
        raise ValueError(f"baseline must be positive, got {old}")
    return round_half_up(100.0 * (new - old) / old, 1)


def largest_remainder(percentages: np.ndarray, total: int = 100) -> np.ndarray:
    """Integers with the given sum, each the floor or ceiling of its input.

    Leftover units go to the largest fractional parts, earlier rows first on ties.
    """
    p = np.asarray(percentages, dtype=np.float64)
    base = np.floor(p).astype(int)
    short = total - int(base.sum())
    order = sorted(range(p.size), key=lambda i: (-(p[i] - base[i]), i))
    for i in order[:max(short, 0)]:
        base[i] += 1
    return base


@dataclass(frozen=True)
class ConfusionMatrix:
    """``percent[i, j]``: share of test utterances of style ``test_styles[j]`` won by model ``model_styles[i]``."""

    model_styles: tuple
    test_styles: tuple
    counts: np.ndarray

    @property
    def percent(self) -> np.ndarray:
        n = self.counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, 100.0 * self.counts / np.where(n > 0, n, 1), np.nan)

    def rounded(self) -> np.ndarray:
        """Integer percentages whose non-empty columns sum to exactly 100."""
        pct = self.percent
        out = np.zeros(pct.shape, dtype=int)
        for j in range(pct.shape[1]):
            if np.all(np.isfinite(pct[:, j])):
                out[:, j] = largest_remainder(pct[:, j])
        return out

    def cell(self, model_style: str, test_style: str) -> float:
        return float(self.percent[self.model_styles.index(model_style), self.test_styles.index(test_style)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("model",) + self.test_styles)
        for i, s in enumerate(self.model_styles):
            w.writerow([s] + [repr(float(v)) for v in self.percent[i]])
        return buf.getvalue()

    def to_text(self, title: str = "") -> str:
        r = self.rounded()
        width = max(len(s) for s in self.test_styles) + 1
        lines = [title] if title else []
        lines.append(f"{'Model':<10}" + "".join(f"{s:>{width}}" for s in self.test_styles))
        for i, s in enumerate(self.model_styles):
            lines.append(f"{s:<10}" + "".join(f"{v:>{width}d}" for v in r[i]))
        return "\n".join(lines) + "\n"


def confusion_from_scores(groups: Sequence[GroupScores], engine: str, alpha: float,
                          test_styles=MODEL_STYLES) -> ConfusionMatrix:
    """Tally the best-scoring style model for each test utterance; ties go to the earlier style."""
    model_styles = tuple(MODEL_STYLES)
    counts = np.zeros((len(model_styles), len(test_styles)), dtype=int)
    for g in groups:
        if not g.test_keys:
            continue
        scores = engine_scores(g.test_scores, engine, alpha)
        for key, row in zip(g.test_keys, scores):
            if key.style not in test_styles:
                continue
            best = g.styles[int(np.argmax(row))]
            counts[model_styles.index(best), test_styles.index(key.style)] += 1
    keep = [j for j, s in enumerate(test_styles) if counts[:, j].sum() > 0]
    return ConfusionMatrix(model_styles, tuple(test_styles[j] for j in keep), counts[:, keep])


# ---------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    groups: tuple
    metas: dict

    def trials(self, **overrides) -> list[VerificationTrial]:
        settings = TrialSettings.from_config(self.config, **overrides)
        out = []
        for g in self.groups:
            out.extend(group_trials(g, self.metas, settings))
        return out

    def performance(self, **overrides) -> PerformanceTable:
        return PerformanceTable.from_trials(self.trials(**overrides))

    def confusion(self, engine: str | None = None, alpha: float | None = None) -> ConfusionMatrix:
        return confusion_from_scores(self.groups, engine or self.config.engine,
                                     self.config.alpha if alpha is None else alpha)

    @property
    def table(self) -> PerformanceTable:
        return self.performance()


def run_verification_suite(config: ExperimentConfig, manifest: CorpusManifest,
                           jobs: int = 1) -> ExperimentResult:
    """Train all reference models and score every test utterance against its group's models."""
    groups = score_corpus(manifest, config, jobs)
    metas = {e.meta.key: e.meta for e in manifest}
    return ExperimentResult(config, tuple(groups), metas)


def run_multispeaker_experiment(config: ExperimentConfig, manifest: CorpusManifest,
                                jobs: int = 1) -> ExperimentResult:
    """As :func:`run_verification_suite` with other speakers' first tokens added to training."""
    return run_verification_suite(config.updated(multi_speaker=True), manifest, jobs)


def build_confusion_matrix(config: ExperimentConfig, manifest: CorpusManifest,
                           jobs: int = 1) -> ConfusionMatrix:
    return run_verification_suite(config, manifest, jobs).confusion()


# ---------------------------------------------------------------------------
# Model records and output files


def model_record(model: SphmmModel, claim: ClaimIdentity, engine: str, thresholds: dict,
                 config: ExperimentConfig) -> dict:
    """JSON-ready reference model with its initial threshold under every scenario."""
    rec = {
        "format": "styleauth.model",
        "version": 1,
        "engine": engine,
        "claim": str(claim),
        "thresholds": thresholds,
        "window": config.window,
        "margin": config.margin,
        "acoustic": hmm.hmm_to_dict(model.acoustic),
    }
    if engine == "sphmm":
        rec["supra"] = sphmm_to_dict(model)
    return rec


def group_model_records(group: GroupScores, config: ExperimentConfig) -> dict:
    per_scenario = {kind.value: group_thresholds(group, config.engine, config.alpha, kind)
                    for kind in Scenario}
    out = {}
    for style in group.styles:
        claim = ClaimIdentity(group.speaker, group.sentence, style)
        thresholds = {k: v[style] for k, v in per_scenario.items()}
        out[claim] = model_record(group.models[style], claim, config.engine, thresholds, config)
    return out


def model_filename(claim: ClaimIdentity) -> str:
    return f"{claim.speaker}_s{claim.sentence}_{claim.style}.json"


def write_models(groups: Sequence[GroupScores], config: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for g in groups:
        for claim, rec in group_model_records(g, config).items():
            (out_dir / model_filename(claim)).write_text(json.dumps(rec) + "\n", encoding="utf-8")


def _table_block(table: PerformanceTable, title: str) -> str:
    text = table.to_text(title)
    try:
        return text + f"average H0: {aggregate_average(table):.1f}\n"
    except ValueError:
        return text  # partial corpus: some style rows are empty


def write_results(result: ExperimentResult, out_dir: str | Path, models: bool = True) -> None:
    """``performance.txt/.csv``, ``confusion.txt/.csv``, ``trials.csv`` and ``models/``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    engine = cfg.engine.upper()
    trials = result.trials()
    table = PerformanceTable.from_trials(trials)
    other = result.performance(adaptive=not cfg.adapt_threshold)
    mode, other_mode = ("adaptive", "frozen") if cfg.adapt_threshold else ("frozen", "adaptive")
    text = (_table_block(table, f"{engine} authentication, {cfg.scenario}, {mode} thresholds") + "\n"
            + _table_block(other, f"{engine} authentication, {cfg.scenario}, {other_mode} thresholds"))
    (out / "performance.txt").write_text(text, encoding="utf-8")
    (out / "performance.csv").write_text(table.to_csv(), encoding="utf-8")
    conf = result.confusion()
    (out / "confusion.txt").write_text(conf.to_text(f"{engine} style identification (%)"),
                                       encoding="utf-8")
    (out / "confusion.csv").write_text(conf.to_csv(), encoding="utf-8")
    (out / "trials.csv").write_text(format_trials_csv(trials), encoding="utf-8")
    (out / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")
    if models:
        write_models(result.groups, cfg, out / "models")
