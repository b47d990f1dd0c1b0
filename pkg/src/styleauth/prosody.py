"""Suprasegmental observations: pitch, intensity and duration per segment.

Pitch is estimated on 32 ms windows centred on each 16 ms acoustic frame so
that lags down to 50 Hz fit inside the analysis window. The prosodic vector
of a segment is ``(voicing_fraction, mean_f0_hz, mean_energy_db, log_duration)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import AudioClip
from .features import FrontendConfig

ENERGY_FLOOR_DB = -120.0
PROSODY_DIM = 4
FIELDS = ("voicing", "f0", "energy_db", "log_dur")


@dataclass(frozen=True)
class ProsodyConfig:
    window_ms: float = 32.0
    f0_min_hz: float = 50.0
    f0_max_hz: float = 500.0
    voicing_threshold: float = 0.3

    def lag_range(self, rate: int) -> tuple[int, int]:
        return int(np.floor(rate / self.f0_max_hz)), int(np.ceil(rate / self.f0_min_hz))


def _nccf(windows: np.ndarray, lag_lo: int, lag_hi: int) -> np.ndarray:
    """Normalised cross-correlation of each window with its own lagged copy.

    ``rho[k] = sum x[n] x[n+k] / sqrt(sum_{n<L-k} x[n]^2 * sum_{n>=k} x[n]^2)``
    for ``k`` in ``[lag_lo, lag_hi]`` (clipped to the window length).
    """
    x = np.atleast_2d(windows)
    L = x.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * L)))
    spectrum = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(spectrum * np.conj(spectrum), nfft)[..., :L]
    e = np.cumsum(x * x, axis=-1)
    total = e[..., -1:]
    lags = np.arange(lag_lo, min(lag_hi, L - 1) + 1)
    head = e[..., L - 1 - lags]                 # sum_{n <= L-1-k} x[n]^2
    tail = total - np.concatenate([np.zeros(x.shape[:-1] + (1,)), e[..., :-1]], axis=-1)[..., lags]
    denom = np.sqrt(np.maximum(head * tail, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 1e-20, ac[..., lags] / denom, 0.0)
    return rho


def _pick_f0(rho: np.ndarray, lag_lo: int, rate: int, cfg: ProsodyConfig) -> float:
    # rho covers lags lag_lo .. ; the search range excludes the outermost lag on each side
    # so every candidate has two neighbours for parabolic refinement.
    if rho.size < 3:
        return 0.0
    inner = rho[1:-1]
    peaks = np.flatnonzero((inner >= rho[:-2]) & (inner > rho[2:])) + 1
    if peaks.size == 0:
        return 0.0
    best = rho[peaks].max()
    if best < cfg.voicing_threshold:
        return 0.0
    # earliest strong peak guards against sub-harmonic (octave-down) picks
    i = peaks[np.argmax(rho[peaks] >= 0.9 * best)]
    y0, y1, y2 = rho[i - 1], rho[i], rho[i + 1]
    denom = y0 - 2.0 * y1 + y2
    delta = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
    lag = lag_lo + i + float(np.clip(delta, -0.5, 0.5))
    f0 = rate / lag
    if not cfg.f0_min_hz <= f0 <= cfg.f0_max_hz:
        return 0.0
    return float(f0)


def estimate_f0(window, rate_hz: int, config: ProsodyConfig | None = None) -> float:
    """Autocorrelation pitch estimate of one analysis window; 0.0 means unvoiced."""
    cfg = config or ProsodyConfig()
    x = np.asarray(getattr(window, "samples", window), dtype=np.float64)
    lo, hi = cfg.lag_range(rate_hz)
    rho = _nccf(x, lo - 1, hi + 1)[0]
    return _pick_f0(rho, lo - 1, rate_hz, cfg)


def frame_energy_db(frame) -> float:
    """``20 log10(RMS)`` with a -120 dB floor."""
    x = np.asarray(getattr(frame, "samples", frame), dtype=np.float64)
    rms = np.sqrt(np.mean(x * x)) if x.size else 0.0
    if rms <= 10.0 ** (ENERGY_FLOOR_DB / 20.0):
        return ENERGY_FLOOR_DB
    return float(20.0 * np.log10(rms))


@dataclass(frozen=True, eq=False)
class ProsodyTrack:
    """Per-frame pitch and energy on the acoustic frame grid."""

    f0_hz: np.ndarray
    energy_db: np.ndarray

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0

    def __len__(self):
        return self.f0_hz.size


def prosody_track(clip: AudioClip, frontend: FrontendConfig | None = None,
                  config: ProsodyConfig | None = None) -> ProsodyTrack:
    fe = frontend or FrontendConfig(sample_rate_hz=clip.sample_rate_hz)
    cfg = config or ProsodyConfig()
    rate = clip.sample_rate_hz
    L, hop = fe.frame_len, fe.hop
    n = fe.n_frames(len(clip))
    if n == 0:
        return ProsodyTrack(np.zeros(0), np.zeros(0))
    starts = np.arange(n) * hop
    x = clip.samples
    frames = x[starts[:, None] + np.arange(L)[None, :]]
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    with np.errstate(divide="ignore"):
        energy = np.where(rms > 10.0 ** (ENERGY_FLOOR_DB / 20.0), 20.0 * np.log10(rms), ENERGY_FLOOR_DB)

    W = int(round(rate * cfg.window_ms / 1000.0))
    pad = W
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    wstart = starts + L // 2 - W // 2 + pad
    windows = xp[wstart[:, None] + np.arange(W)[None, :]]
    lo, hi = cfg.lag_range(rate)
    rho = _nccf(windows, lo - 1, hi + 1)
    f0 = np.array([_pick_f0(row, lo - 1, rate, cfg) for row in rho])
    return ProsodyTrack(f0, energy)


class ProsodicVector(NamedTuple):
    voicing_fraction: float
    mean_f0_hz: float
    mean_energy_db: float
    log_duration: float


@dataclass(frozen=True, eq=False)
class ProsodicSequence:
    vectors: np.ndarray  # (n_segments, 4)

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, i) -> ProsodicVector:
        return ProsodicVector(*map(float, self.vectors[i]))


def summarize_segment(track: ProsodyTrack, start: int, stop: int) -> ProsodicVector:
    if stop <= start:
        raise ValueError(f"empty segment [{start}, {stop})")
    if start < 0 or stop > len(track):
        raise ValueError(f"segment [{start}, {stop}) outside frame grid of {len(track)}")
    f0 = track.f0_hz[start:stop]
    voiced = f0 > 0
    n = stop - start
    n_voiced = int(np.count_nonzero(voiced))
    mean_f0 = float(np.mean(f0[voiced])) if n_voiced else 0.0
    return ProsodicVector(n_voiced / n, mean_f0, float(np.mean(track.energy_db[start:stop])),
                          float(np.log(n)))


def build_prosodic_sequence(source, segments: Sequence[tuple[int, int]],
                            frontend: FrontendConfig | None = None,
                            config: ProsodyConfig | None = None) -> ProsodicSequence:
    """Summarise each ``[start, stop)`` frame range of ``source`` (clip or track).

    Segments must be non-empty, ordered and disjoint.
    """
    track = source if isinstance(source, ProsodyTrack) else prosody_track(source, frontend, config)
    prev_stop = 0
    rows = []
    for start, stop in segments:
        if stop <= start:
            raise ValueError(f"empty segment [{start}, {stop})")
        if start < prev_stop:
            raise ValueError("segments must be ordered and disjoint")
        prev_stop = stop
        rows.append(summarize_segment(track, start, stop))
    return ProsodicSequence(np.array(rows, dtype=np.float64).reshape(-1, PROSODY_DIM))


def format_prosody_dump(seq: ProsodicSequence) -> str:
    lines = ["seg_index," + ",".join(FIELDS)]
    for i, v in enumerate(seq.vectors):
        lines.append(",".join([str(i)] + [repr(float(x)) for x in v]))
    return "\n".join(lines) + "\n"
