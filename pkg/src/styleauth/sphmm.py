"""Suprasegmental layer over a trained left-to-right acoustic HMM.

Contiguous runs of acoustic states are grouped into suprasegmental states.
A Viterbi alignment under the acoustic model cuts an utterance into one
segment per group; each segment is summarised by a prosodic vector and
scored by its group's Gaussian mixture. The utterance score is the convex
combination ``(1 - alpha) * acoustic + alpha * prosodic``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import hmm
from .corpus import AudioClip
from .errors import TrainingError
from .features import FrontendConfig, ObservationSequence, extract_observations
from .hmm import GmmState, HmmModel, StatePath
from .prosody import (PROSODY_DIM, ProsodicSequence, ProsodyConfig, ProsodyTrack,
                      prosody_track, summarize_segment)

# Absolute floors on (voicing fraction, F0 Hz^2, energy dB^2, log-duration).
# Five training vectors per state make unfloored variances overconfident.
DEFAULT_PROSODY_VAR_FLOOR = (1e-3, 4.0, 0.25, 1e-3)
FORMAT_VERSION = 1


def combine_scores(acoustic, prosodic, alpha: float):
    """``(1 - alpha) * acoustic + alpha * prosodic``; the endpoints return one term exactly."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return acoustic
    if alpha == 1.0:
        return prosodic
    return (1.0 - alpha) * acoustic + alpha * prosodic


@dataclass(frozen=True)
class SupraGrouping:
    """Sizes of consecutive acoustic-state runs, e.g. ``(3, 2)`` for five states."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"group sizes must be positive, got {self.sizes}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def default(cls, n_states: int) -> "SupraGrouping":
        """Two groups, the first taking the larger half; a single group when ``n_states == 1``."""
        if n_states < 1:
            raise ValueError("n_states must be positive")
        if n_states == 1:
            return cls((1,))
        return cls(((n_states + 1) // 2, n_states // 2))

    @property
    def n_states(self) -> int:
        return sum(self.sizes)

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    def group_of(self) -> np.ndarray:
        """Group index of every acoustic state."""
        return np.repeat(np.arange(self.n_groups), self.sizes)


@dataclass(frozen=True)
class SegmentAlignment:
    """One ``(start, stop)`` frame range per group, ``None`` where the path never entered it."""

    segments: tuple

    @property
    def empty(self) -> tuple:
        return tuple(s is None for s in self.segments)

    @property
    def visited(self) -> list[int]:
        return [g for g, s in enumerate(self.segments) if s is not None]


def align_segments(path: StatePath | np.ndarray, grouping: SupraGrouping) -> SegmentAlignment:
    """Frames whose state belongs to group ``g`` form segment ``g``.

    Under a left-to-right topology the state index never decreases, so each
    segment is one contiguous run.
    """
    states = np.asarray(getattr(path, "states", path))
    if states.size and (states.min() < 0 or states.max() >= grouping.n_states):
        raise ValueError(f"path visits states outside 0..{grouping.n_states - 1}")
    groups = grouping.group_of()[states]
    if np.any(np.diff(groups) < 0):
        raise ValueError("path moves backwards between groups; left-to-right topology required")
    segments = []
    for g in range(grouping.n_groups):
        idx = np.flatnonzero(groups == g)
        segments.append((int(idx[0]), int(idx[-1]) + 1) if idx.size else None)
    return SegmentAlignment(tuple(segments))


def _group_transitions(visited: Sequence[int], n_groups: int) -> list[tuple[int, int]]:
    # Consecutive visited groups, plus a self-transition when the path stops short of the last group.
    pairs = list(zip(visited[:-1], visited[1:]))
    if visited and visited[-1] < n_groups - 1:
        pairs.append((visited[-1], visited[-1]))
    return pairs


@dataclass(frozen=True, eq=False)
class SphmmModel:
    acoustic: HmmModel
    grouping: SupraGrouping
    supra_trans: np.ndarray
    supra_states: tuple
    alpha: float = 0.5

    def __post_init__(self):
        if self.grouping.n_states != self.acoustic.n_states:
            raise ValueError(f"grouping covers {self.grouping.n_states} states, "
                             f"acoustic model has {self.acoustic.n_states}")
        S = self.grouping.n_groups
        B = np.asarray(self.supra_trans, dtype=np.float64)
        if B.shape != (S, S) or len(self.supra_states) != S:
            raise ValueError("suprasegmental parameters do not match the grouping")
        if np.any(np.abs(B.sum(axis=1) - 1.0) > 1e-9) or np.any(B[~hmm.left_to_right_mask(S)] != 0):
            raise ValueError("supra_trans must be row-stochastic and left-to-right")
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        B.setflags(write=False)
        object.__setattr__(self, "supra_trans", B)
        object.__setattr__(self, "supra_states", tuple(self.supra_states))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_groups(self) -> int:
        return self.grouping.n_groups

    def with_alpha(self, alpha: float) -> "SphmmModel":
        return replace(self, alpha=alpha)


class SphmmScore(NamedTuple):
    total: float
    acoustic: float
    prosodic: float
    empty_segments: tuple
    path: StatePath


def _track_of(clip_or_track, frontend, prosody_cfg) -> ProsodyTrack:
    if isinstance(clip_or_track, ProsodyTrack):
        return clip_or_track
    return prosody_track(clip_or_track, frontend, prosody_cfg)


def segment_prosody(track: ProsodyTrack, obs: ObservationSequence,
                    alignment: SegmentAlignment) -> list:
    """Prosodic vector of each non-empty segment (``None`` for empty ones).

    Segment bounds index the observation sequence; they are mapped back to the
    clip's frame grid, so frames skipped by the front end inside a segment
    still contribute pitch and energy.
    """
    fi = np.asarray(obs.frame_index)
    out = []
    for seg in alignment.segments:
        if seg is None:
            out.append(None)
        else:
            start, stop = seg
            out.append(summarize_segment(track, int(fi[start]), int(fi[stop - 1]) + 1))
    return out


def prosodic_log_likelihood(model: SphmmModel, track: ProsodyTrack, obs: ObservationSequence,
                            path: StatePath) -> tuple[float, tuple]:
    """Sum of group log-densities and group-transition log-probabilities along ``path``.

    Returns ``(score, empty_flags)``; empty segments contribute nothing.
    """
    alignment = align_segments(path, model.grouping)
    vectors = segment_prosody(track, obs, alignment)
    total = 0.0
    for g, v in enumerate(vectors):
        if v is not None:
            total += float(model.supra_states[g].log_pdf(np.asarray(v, dtype=np.float64)[None])[0])
    log_b = hmm._safe_log(model.supra_trans)
    for i, j in _group_transitions(alignment.visited, model.n_groups):
        total += float(log_b[i, j])
    return total, alignment.empty


def sphmm_score(model: SphmmModel, clip, obs: ObservationSequence | None = None, *,
                frontend: FrontendConfig | None = None,
                prosody_config: ProsodyConfig | None = None) -> SphmmScore:
    """Acoustic and prosodic sub-scores and their combination for one utterance.

    ``clip`` may be an :class:`AudioClip` or a precomputed :class:`ProsodyTrack`
    (then ``obs`` is required).
    """
    if obs is None:
        if not isinstance(clip, AudioClip):
            raise ValueError("obs is required when clip is a prosody track")
        obs = extract_observations(clip, frontend)
    track = _track_of(clip, frontend, prosody_config)
    l_ac, path = hmm.score_and_align(model.acoustic, obs)
    l_pr, empty = prosodic_log_likelihood(model, track, obs, path)
    return SphmmScore(float(combine_scores(l_ac, l_pr, model.alpha)), l_ac, l_pr, empty, path)


def sphmm_log_likelihood(model: SphmmModel, clip, obs: ObservationSequence | None = None,
                         **kwargs) -> float:
    return sphmm_score(model, clip, obs, **kwargs).total


@dataclass(frozen=True)
class SupraConfig:
    n_mix: int = 1
    var_floor: tuple = DEFAULT_PROSODY_VAR_FLOOR
    grouping: tuple | None = None
    alpha: float = 0.5
    seed: int = 0


def fit_supra_state(vectors: np.ndarray, n_mix: int = 1,
                    var_floor=DEFAULT_PROSODY_VAR_FLOOR, seed: int = 0) -> GmmState:
    """Diagonal Gaussian mixture over prosodic vectors.

    One component is the closed-form sample mean and (biased) variance; more
    components run EM on a single-state model in the raw prosodic space.
    """
    X = np.asarray(vectors, dtype=np.float64).reshape(-1, PROSODY_DIM)
    floor = np.broadcast_to(np.asarray(var_floor, dtype=np.float64), (X.shape[1],))
    if n_mix == 1 or X.shape[0] < 2 * n_mix:
        mean = X.mean(axis=0)
        var = np.maximum(X.var(axis=0), floor)
        return GmmState(np.ones(1), mean[None], var[None])
    init = hmm.init_hmm([X], n_states=1, n_mix=n_mix, seed=seed, var_floor=floor, standardize=False)
    model = hmm.baum_welch_train([X], init, var_floor=floor)
    return model.state(0)


def train_sphmm(acoustic: HmmModel, train_clips: Sequence, config: SupraConfig | None = None, *,
                observations: Sequence[ObservationSequence] | None = None,
                frontend: FrontendConfig | None = None,
                prosody_config: ProsodyConfig | None = None) -> SphmmModel:
    """Fit suprasegmental states on top of a trained acoustic model.

    ``train_clips`` are the acoustic model's training utterances, as clips or
    prosody tracks (pass matching ``observations`` for tracks).
    """
    cfg = config or SupraConfig()
    grouping = SupraGrouping(cfg.grouping) if cfg.grouping else SupraGrouping.default(acoustic.n_states)
    S = grouping.n_groups
    if observations is None:
        observations = [extract_observations(c, frontend) for c in train_clips]
    if len(observations) != len(train_clips):
        raise ValueError("need one observation sequence per training clip")
    collected = [[] for _ in range(S)]
    counts = np.zeros((S, S))
    for clip, obs in zip(train_clips, observations):
        track = _track_of(clip, frontend, prosody_config)
        path = hmm.viterbi_decode(acoustic, obs)
        alignment = align_segments(path, grouping)
        for g, v in enumerate(segment_prosody(track, obs, alignment)):
            if v is not None:
                collected[g].append(v)
        for i, j in _group_transitions(alignment.visited, S):
            counts[i, j] += 1
    for g, vs in enumerate(collected):
        if not vs:
            raise TrainingError(f"suprasegmental state {g} collected no prosodic vectors")
    mask = hmm.left_to_right_mask(S)
    smoothed = np.where(mask, counts + 1.0, 0.0)
    supra_trans = smoothed / smoothed.sum(axis=1, keepdims=True)
    states = tuple(fit_supra_state(np.array(vs), cfg.n_mix, cfg.var_floor, cfg.seed + g)
                   for g, vs in enumerate(collected))
    return SphmmModel(acoustic, grouping, supra_trans, states, cfg.alpha)


def sphmm_to_dict(model: SphmmModel) -> dict:
    return {
        "format": "styleauth.sphmm",
        "version": FORMAT_VERSION,
        "acoustic": hmm.hmm_to_dict(model.acoustic),
        "grouping": list(model.grouping.sizes),
        "supra_trans": model.supra_trans.tolist(),
        "supra_states": [{"weights": s.weights.tolist(), "means": s.means.tolist(),
                          "variances": s.variances.tolist()} for s in model.supra_states],
        "alpha": model.alpha,
    }


def sphmm_from_dict(d: dict) -> SphmmModel:
    if d.get("format") != "styleauth.sphmm" or d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported SPHMM record {d.get('format')!r} v{d.get('version')!r}")
    states = tuple(GmmState(np.asarray(s["weights"], dtype=np.float64),
                            np.asarray(s["means"], dtype=np.float64),
                            np.asarray(s["variances"], dtype=np.float64))
                   for s in d["supra_states"])
    return SphmmModel(hmm.hmm_from_dict(d["acoustic"]), SupraGrouping(tuple(d["grouping"])),
                      np.asarray(d["supra_trans"], dtype=np.float64), states, d["alpha"])
