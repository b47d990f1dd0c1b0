"""Acoustic front end: framing, Hamming window, autocorrelation LPC and LPC cepstra.

Predictor convention: ``A(z) = 1 - sum_k a_k z^-k``, i.e. the predictor is
``x_hat[n] = sum_k a_k x[n-k]``. No pre-emphasis, liftering or energy
normalisation is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .corpus import AudioClip
from .errors import DegenerateFrameError, FrameError, NoUsableFramesError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate_hz: int = 16000
    frame_ms: float = 16.0
    overlap_ms: float = 9.0
    lpc_order: int = 16
    n_ceps: int = 16

    def __post_init__(self):
        if self.frame_ms <= self.overlap_ms:
            raise ValueError("frame_ms must exceed overlap_ms")
        if self.lpc_order < 1 or self.n_ceps < 1:
            raise ValueError("lpc_order and n_ceps must be positive")

    @property
    def frame_len(self) -> int:
        return int(round(self.sample_rate_hz * self.frame_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate_hz * (self.frame_ms - self.overlap_ms) / 1000.0))

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return (n_samples - self.frame_len) // self.hop + 1


class Frame(NamedTuple):
    samples: np.ndarray
    start_index: int


@dataclass(frozen=True, eq=False)
class Frames:
    """A block of equal-length frames; iterating yields :class:`Frame` records."""

    samples: np.ndarray  # (n_frames, frame_len)
    starts: np.ndarray   # (n_frames,)

    def __len__(self):
        return self.samples.shape[0]

    def __iter__(self) -> Iterator[Frame]:
        for x, s in zip(self.samples, self.starts):
            yield Frame(x, int(s))

    def __getitem__(self, i) -> Frame:
        return Frame(self.samples[i], int(self.starts[i]))


def frame_signal(clip: AudioClip, frame_ms: float = 16.0, overlap_ms: float = 9.0) -> Frames:
    """Cut ``clip`` into overlapping frames; a trailing partial frame is dropped."""
    cfg = FrontendConfig(clip.sample_rate_hz, frame_ms, overlap_ms)
    L, hop = cfg.frame_len, cfg.hop
    n = cfg.n_frames(len(clip))
    if n == 0:
        raise FrameError(f"utterance too short: {len(clip)} samples < one frame of {L}")
    starts = np.arange(n) * hop
    idx = starts[:, None] + np.arange(L)[None, :]
    return Frames(clip.samples[idx], starts)


def apply_hamming(frame):
    """Multiply by ``0.54 - 0.46 cos(2 pi n / (L - 1))`` along the last axis.

    Accepts a :class:`Frame`, a :class:`Frames` block or a bare array and
    returns the same kind of object.
    """
    if isinstance(frame, Frame):
        return Frame(apply_hamming(frame.samples), frame.start_index)
    if isinstance(frame, Frames):
        return Frames(apply_hamming(frame.samples), frame.starts)
    x = np.asarray(frame, dtype=np.float64)
    return x * np.hamming(x.shape[-1])


def autocorrelate(frame, order: int = 16) -> np.ndarray:
    """``r[k] = sum_{n=0}^{L-1-k} x[n] x[n+k]`` for ``k = 0..order`` (last axis)."""
    x = frame.samples if isinstance(frame, (Frame, Frames)) else np.asarray(frame, dtype=np.float64)
    L = x.shape[-1]
    if order >= L:
        raise ValueError(f"order {order} must be smaller than the frame length {L}")
    r = np.empty(x.shape[:-1] + (order + 1,))
    for k in range(order + 1):
        r[..., k] = np.sum(x[..., :L - k] * x[..., k:], axis=-1)
    return r


class LpcVector(NamedTuple):
    a: np.ndarray           # predictor coefficients a_1..a_p
    gain_sq: float          # final prediction error energy
    reflection: np.ndarray  # reflection coefficients k_1..k_p


def _levinson_batch(r: np.ndarray, order: int):
    """Levinson-Durbin over a batch of autocorrelation rows.

    Returns ``(a, err, k, ok)``; rows with ``ok == False`` had non-positive
    energy or lost positive definiteness and hold garbage.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    B = r.shape[0]
    a = np.zeros((B, order))
    k = np.zeros((B, order))
    err = r[:, 0].copy()
    ok = np.isfinite(err) & (err > 0)
    safe_err = np.where(ok, err, 1.0)
    for i in range(order):
        # k_i = (r[i+1] - sum_{j<i} a_j r[i-j]) / E
        acc = r[:, i + 1] - np.einsum("bj,bj->b", a[:, :i], r[:, i:0:-1])
        ki = acc / safe_err
        prev = a[:, :i].copy()
        a[:, :i] = prev - ki[:, None] * prev[:, ::-1]
        a[:, i] = ki
        k[:, i] = ki
        safe_err = safe_err * (1.0 - ki * ki)
        ok &= np.isfinite(ki) & (np.abs(ki) < 1.0) & (safe_err > 0)
        safe_err = np.where(ok, safe_err, 1.0)
    return a, np.where(ok, safe_err, np.nan), k, ok


def levinson_durbin(r, order: int = 16) -> LpcVector:
    """Solve the Yule-Walker equations for an order-``order`` predictor."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.size < order + 1:
        raise ValueError(f"need autocorrelation lags 0..{order}, got shape {r.shape}")
    if not (np.isfinite(r[0]) and r[0] > 0):
        raise DegenerateFrameError(f"degenerate frame: r[0] = {r[0]}")
    a, err, k, ok = _levinson_batch(r[None, :order + 1], order)
    if not ok[0]:
        raise DegenerateFrameError("degenerate frame: autocorrelation is not positive definite")
    return LpcVector(a[0], float(err[0]), k[0])


def lpc_to_lpcc(lpc, n_ceps: int = 16) -> np.ndarray:
    """Cepstrum of the all-pole model ``1/A(z)``.

    ``c_n = a_n + sum_{k=1}^{n-1} (k/n) c_k a_{n-k}`` with ``a_n = 0`` for
    ``n > p``. Accepts an :class:`LpcVector` or coefficient array(s) on the
    last axis.
    """
    a = lpc.a if isinstance(lpc, LpcVector) else np.asarray(lpc, dtype=np.float64)
    p = a.shape[-1]
    c = np.zeros(a.shape[:-1] + (n_ceps,))
    for n in range(1, n_ceps + 1):
        acc = a[..., n - 1].copy() if n <= p else np.zeros(a.shape[:-1])
        for k in range(max(1, n - p), n):
            acc += (k / n) * c[..., k - 1] * a[..., n - k - 1]
        c[..., n - 1] = acc
    return c


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """Per-frame LPCC vectors of one utterance.

    ``frame_index`` gives each vector's position on the clip's frame grid
    (skipped degenerate frames leave gaps); ``frame_times`` the start sample.
    """

    vectors: np.ndarray
    frame_index: np.ndarray
    frame_times: np.ndarray
    n_skipped: int = 0
    n_grid: int = 0

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def extract_observations(clip: AudioClip, config: FrontendConfig | None = None) -> ObservationSequence:
    """Frame, window, autocorrelate, LPC, LPCC; degenerate frames are skipped."""
    cfg = config or FrontendConfig(sample_rate_hz=clip.sample_rate_hz)
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise FrameError(f"clip rate {clip.sample_rate_hz} Hz does not match configured "
                         f"{cfg.sample_rate_hz} Hz")
    frames = frame_signal(clip, cfg.frame_ms, cfg.overlap_ms)
    r = autocorrelate(apply_hamming(frames.samples), cfg.lpc_order)
    a, _, _, ok = _levinson_batch(r, cfg.lpc_order)
    n_skipped = int(np.count_nonzero(~ok))
    if n_skipped == len(frames):
        raise NoUsableFramesError(f"no usable frames: all {len(frames)} frames are degenerate")
    if n_skipped:
        log.debug("skipped %d degenerate frame(s) of %d", n_skipped, len(frames))
    idx = np.flatnonzero(ok)
    ceps = lpc_to_lpcc(a[idx], cfg.n_ceps)
    return ObservationSequence(ceps, idx, frames.starts[idx], n_skipped, len(frames))


def format_feature_dump(obs: ObservationSequence) -> str:
    """One line per frame: start sample followed by the cepstral coefficients."""
    lines = []
    for start, vec in zip(obs.frame_times, obs.vectors):
        lines.append(" ".join([str(int(start))] + [repr(float(v)) for v in vec]))
    return "\n".join(lines) + "\n"
