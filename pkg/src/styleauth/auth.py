"""Binary accept/reject of a claimed speaking-style identity.

The test statistic is the claimant's log score, optionally normalised by
imposter scores from the other style models of the same speaker and
sentence. A claim is accepted when the statistic reaches the claimant's
threshold.
"""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import hmm
from .corpus import MODEL_STYLES, OPEN_SET_STYLE, AudioClip, ModelKey, UtteranceMeta
from .errors import RegistryError
from .features import FrontendConfig, ObservationSequence, extract_observations
from .hmm import HmmModel
from .prosody import ProsodyConfig, ProsodyTrack, prosody_track
from .sphmm import SphmmModel, combine_scores, prosodic_log_likelihood

DEFAULT_WINDOW = 16
LOOSE_SIGMAS = 2.0


@dataclass(frozen=True, order=True)
class ClaimIdentity:
    speaker: str
    sentence: int
    style: str

    def __post_init__(self):
        if self.style == OPEN_SET_STYLE:
            raise ValueError(f"no reference models exist for the {OPEN_SET_STYLE!r} style")
        if self.style not in MODEL_STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        object.__setattr__(self, "sentence", int(self.sentence))

    @classmethod
    def parse(cls, text: str) -> "ClaimIdentity":
        """``"spk1:3:loud"`` -> ``ClaimIdentity("spk1", 3, "loud")``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"claim must look like speaker:sentence:style, got {text!r}")
        try:
            sentence = int(parts[1])
        except ValueError:
            raise ValueError(f"sentence must be an integer in claim {text!r}") from None
        return cls(parts[0], sentence, parts[2])

    @classmethod
    def of(cls, key) -> "ClaimIdentity":
        """Coerce a claim, ``ModelKey`` or ``(speaker, sentence, style)`` tuple."""
        if isinstance(key, cls):
            return key
        speaker, sentence, style = key
        return cls(speaker, sentence, style)

    @property
    def model_key(self) -> ModelKey:
        return ModelKey(self.speaker, self.sentence, self.style)

    def __str__(self):
        return f"{self.speaker}:{self.sentence}:{self.style}"


class Scenario(str, enum.Enum):
    POOLED = "pooled"
    MAX_IMPOSTER = "max-imposter"
    SCORE_ONLY = "score-only"


@dataclass(frozen=True)
class ScenarioConfig:
    kind: Scenario = Scenario.SCORE_ONLY
    imposter_keys: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Scenario(self.kind))
        object.__setattr__(self, "imposter_keys", tuple(self.imposter_keys))
        if self.kind is not Scenario.SCORE_ONLY and not self.imposter_keys:
            raise ValueError(f"scenario {self.kind.value} needs at least one imposter model")

    @classmethod
    def for_claim(cls, kind, claim: ClaimIdentity, styles: Iterable[str] = MODEL_STYLES):
        """Imposters are the other style models of the claimant's speaker and sentence."""
        kind = Scenario(kind)
        if kind is Scenario.SCORE_ONLY:
            return cls(kind)
        return cls(kind, tuple(ClaimIdentity(claim.speaker, claim.sentence, s)
                               for s in styles if s != claim.style))


def logmeanexp(scores) -> float:
    s = np.asarray(scores, dtype=np.float64)
    return float(hmm.logsumexp(s) - np.log(s.size))


def ratio_from_scores(claimant: float, imposters: Sequence[float], kind) -> float:
    """Test statistic from already computed log scores."""
    kind = Scenario(kind)
    if kind is Scenario.SCORE_ONLY:
        return float(claimant)
    if len(imposters) == 0:
        raise ValueError(f"scenario {kind.value} needs at least one imposter score")
    if kind is Scenario.MAX_IMPOSTER:
        return float(claimant - np.max(imposters))
    return float(claimant - logmeanexp(imposters))


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


def decide(lam: float, theta: float) -> Decision:
    """Accept iff ``lam >= theta``; ``nan`` and ``-inf`` statistics are rejected."""
    return Decision.ACCEPT if lam >= theta else Decision.REJECT


@dataclass(frozen=True)
class ThresholdState:
    """Claimant threshold with a bounded window of recent trial statistics."""

    theta: float
    initial_theta: float
    recent_scores: tuple = ()
    window: int = DEFAULT_WINDOW
    margin: float = 0.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if len(self.recent_scores) > self.window:
            raise ValueError("more recent scores than the window holds")

    @classmethod
    def start(cls, theta: float, window: int = DEFAULT_WINDOW, margin: float = 0.0):
        return cls(float(theta), float(theta), (), window, margin)


def adapt_threshold(state: ThresholdState, new_score: float) -> ThresholdState:
    """Push ``new_score`` (evicting the oldest past the window); theta = mean - margin."""
    recent = (state.recent_scores + (float(new_score),))[-state.window:]
    return replace(state, recent_scores=recent, theta=float(np.mean(recent)) - state.margin)


def initial_threshold(training_scores, sigmas: float = LOOSE_SIGMAS) -> float:
    """Loose starting threshold: mean minus ``sigmas`` sample standard deviations."""
    s = np.asarray(training_scores, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least two training scores to set a threshold")
    return float(s.mean() - sigmas * s.std(ddof=1))


# ---------------------------------------------------------------------------
# Scoring an utterance


@dataclass(frozen=True, eq=False)
class ObservationBundle:
    """Acoustic observations and, when available, the prosody track of one utterance."""

    obs: ObservationSequence
    track: ProsodyTrack | None = None

    @classmethod
    def from_clip(cls, clip: AudioClip, frontend: FrontendConfig | None = None,
                  prosody_config: ProsodyConfig | None = None, with_prosody: bool = True):
        obs = extract_observations(clip, frontend)
        track = prosody_track(clip, frontend, prosody_config) if with_prosody else None
        return cls(obs, track)


def score_components(models: Sequence, bundle: ObservationBundle) -> np.ndarray:
    """``(n_models, 2)`` array of acoustic and prosodic log scores.

    Acoustic models share one batched forward/Viterbi pass. The prosodic
    column is ``nan`` for plain HMMs and ``-inf`` when no state path exists.
    """
    acoustic = [m.acoustic if isinstance(m, SphmmModel) else m for m in models]
    by_states: dict[int, list[int]] = {}
    for i, a in enumerate(acoustic):
        by_states.setdefault(a.n_states, []).append(i)
    out = np.full((len(models), 2), np.nan)
    for idx in by_states.values():
        ll, paths = hmm.score_many([acoustic[i] for i in idx], bundle.obs)
        for i, l_ac, path in zip(idx, ll, paths):
            out[i, 0] = l_ac
            m = models[i]
            if isinstance(m, SphmmModel):
                if bundle.track is None:
                    raise ValueError("SPHMM scoring needs the utterance's prosody track")
                out[i, 1] = -np.inf if path is None else \
                    prosodic_log_likelihood(m, bundle.track, bundle.obs, path)[0]
    return out


def model_score(model, components) -> float:
    """Engine score from ``(acoustic, prosodic)``: the combined value for an SPHMM."""
    l_ac, l_pr = components
    if isinstance(model, SphmmModel):
        return float(combine_scores(l_ac, l_pr, model.alpha))
    return float(l_ac)


# ---------------------------------------------------------------------------
# Registry and verification


@dataclass
class RegisteredModel:
    model: HmmModel | SphmmModel
    threshold: ThresholdState


class ModelRegistry(Mapping):
    """Reference models and their thresholds keyed by :class:`ClaimIdentity`."""

    def __init__(self, entries: Mapping | None = None):
        self._entries: dict[ClaimIdentity, RegisteredModel] = {}
        for k, v in (entries or {}).items():
            self.add(k, v.model, v.threshold)

    def add(self, claim, model, threshold: ThresholdState) -> None:
        self._entries[ClaimIdentity.of(claim)] = RegisteredModel(model, threshold)

    def __getitem__(self, claim) -> RegisteredModel:
        try:
            return self._entries[ClaimIdentity.of(claim)]
        except (KeyError, ValueError):
            raise RegistryError(f"no reference model registered for claim {claim}") from None

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def set_threshold(self, claim, state: ThresholdState) -> None:
        self[claim].threshold = state


def log_likelihood_ratio(bundle: ObservationBundle, claim: ClaimIdentity,
                         scenario: ScenarioConfig, registry: ModelRegistry) -> float:
    """Claimant score normalised per ``scenario`` using the registry's imposter models."""
    keys = (claim,) + tuple(scenario.imposter_keys)
    models = [registry[k].model for k in keys]
    comps = score_components(models, bundle)
    scores = [model_score(m, c) for m, c in zip(models, comps)]
    return ratio_from_scores(scores[0], scores[1:], scenario.kind)


class Hypothesis(str, enum.Enum):
    H0 = "H0"
    H1 = "H1"


TRIAL_HEADER = ("claim_speaker", "claim_sentence", "claim_style", "true_speaker", "true_style",
                "lambda", "theta", "decision", "hypothesis")


@dataclass(frozen=True)
class VerificationTrial:
    claim: ClaimIdentity
    true_meta: UtteranceMeta | None
    lam: float
    theta: float
    decision: Decision
    hypothesis: Hypothesis | None = field(default=None)

    def __post_init__(self):
        if (self.decision is Decision.ACCEPT) != (self.lam >= self.theta):
            raise ValueError("decision disagrees with lambda >= theta")
        if self.true_meta is not None:
            hyp = hypothesis_of(self.claim, self.true_meta)
            if self.hypothesis is None:
                object.__setattr__(self, "hypothesis", hyp)
            elif self.hypothesis is not hyp:
                raise ValueError("hypothesis disagrees with the true utterance identity")

    def csv_row(self) -> tuple:
        m = self.true_meta
        return (self.claim.speaker, str(self.claim.sentence), self.claim.style,
                m.speaker_id if m else "", m.style if m else "",
                repr(self.lam), repr(self.theta), self.decision.value,
                self.hypothesis.value if self.hypothesis else "")


def hypothesis_of(claim: ClaimIdentity, meta: UtteranceMeta) -> Hypothesis:
    same = (meta.speaker_id, meta.sentence_id, meta.style) == (claim.speaker, claim.sentence, claim.style)
    return Hypothesis.H0 if same else Hypothesis.H1


def verify(clip, claim: ClaimIdentity, registry: ModelRegistry,
           scenario: ScenarioConfig | None = None, threshold_state: ThresholdState | None = None, *,
           true_meta: UtteranceMeta | None = None, adapt: bool = False, adapt_on_accept: bool = True,
           frontend: FrontendConfig | None = None,
           prosody_config: ProsodyConfig | None = None) -> VerificationTrial:
    """Run one verification trial against the claimed model.

    ``clip`` may be an :class:`AudioClip` or a prepared :class:`ObservationBundle`.
    With ``adapt`` the claimant's registry threshold is updated after the
    decision (from accepted trials only unless ``adapt_on_accept`` is off).
    """
    scenario = scenario or ScenarioConfig()
    entry = registry[claim]
    if isinstance(clip, ObservationBundle):
        bundle = clip
    else:
        needs_prosody = any(isinstance(registry[k].model, SphmmModel)
                            for k in (claim,) + scenario.imposter_keys)
        bundle = ObservationBundle.from_clip(clip, frontend, prosody_config, needs_prosody)
    state = threshold_state or entry.threshold
    lam = log_likelihood_ratio(bundle, claim, scenario, registry)
    decision = decide(lam, state.theta)
    trial = VerificationTrial(claim, true_meta, lam, state.theta, decision)
    if adapt and (decision is Decision.ACCEPT or not adapt_on_accept) and np.isfinite(lam):
        registry.set_threshold(claim, adapt_threshold(state, lam))
    return trial
