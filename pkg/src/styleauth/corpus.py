"""Audio clips, corpus manifests, train/test splits and the synthetic styled corpus.

The synthetic generator is a desk-scale stand-in for a recorded corpus: every
utterance is a harmonic vowel sequence whose pitch, loudness, tempo and voice
quality follow a per-style parameter table (:data:`STYLE_PARAMS`).
"""

from __future__ import annotations

import csv
import io
import logging
import wave
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from .errors import ManifestError, SplitError, WavFormatError

log = logging.getLogger(__name__)

STYLES = (
    "neutral", "shouted", "slow", "loud", "soft",
    "fast", "angry", "happy", "fearful", "sad",
)
#: Styles that get a trained reference model. ``sad`` only ever appears at test time.
MODEL_STYLES = STYLES[:9]
OPEN_SET_STYLE = "sad"
GENDERS = ("male", "female")

N_SENTENCES = 8
N_TOKENS = 9
TRAIN_TOKENS = (1, 2, 3, 4, 5)
TEST_TOKENS = (6, 7, 8, 9)
SAMPLE_RATE_HZ = 16000

MANIFEST_HEADER = ("speaker", "gender", "sentence", "style", "token", "path")


# ---------------------------------------------------------------------------
# Core records


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono PCM audio scaled to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).ravel()
        if x.size == 0:
            raise ValueError("AudioClip needs at least one sample")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1.0:
            raise ValueError("samples must be finite and within [-1, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))


class UtteranceKey(NamedTuple):
    speaker: str
    sentence: int
    style: str
    token: int


class ModelKey(NamedTuple):
    """Identity of one reference model: speaker, sentence and style."""

    speaker: str
    sentence: int
    style: str


@dataclass(frozen=True)
class UtteranceMeta:
    speaker_id: str
    gender: str
    sentence_id: int
    style: str
    token_index: int

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        if not 1 <= self.sentence_id <= N_SENTENCES:
            raise ValueError(f"sentence_id must be in [1, {N_SENTENCES}], got {self.sentence_id}")
        if not 1 <= self.token_index <= N_TOKENS:
            raise ValueError(f"token_index must be in [1, {N_TOKENS}], got {self.token_index}")

    @property
    def key(self) -> UtteranceKey:
        return UtteranceKey(self.speaker_id, self.sentence_id, self.style, self.token_index)

    @property
    def model_key(self) -> ModelKey:
        return ModelKey(self.speaker_id, self.sentence_id, self.style)


@dataclass(frozen=True)
class ManifestEntry:
    meta: UtteranceMeta
    path: str


def _read_entry_from_disk(entry: ManifestEntry, root: Path | None) -> AudioClip:
    path = Path(entry.path)
    if root is not None and not path.is_absolute():
        path = root / path
    return read_wav(path)


class CorpusManifest:
    """Ordered collection of utterances with unique (speaker, sentence, style, token) keys.

    Audio is fetched lazily through ``loader``; by default the entry path is
    read as a WAV file relative to ``root``.
    """

    def __init__(self, entries: Iterable[ManifestEntry], root: str | Path | None = None,
                 loader: Callable[[ManifestEntry], AudioClip] | None = None):
        self.entries = list(entries)
        self.root = Path(root) if root is not None else None
        self._loader = loader
        self._by_key: dict[UtteranceKey, ManifestEntry] = {}
        for e in self.entries:
            k = e.meta.key
            if k in self._by_key:
                raise ManifestError(f"duplicate manifest key {tuple(k)}")
            self._by_key[k] = e
        genders: dict[str, str] = {}
        for e in self.entries:
            g = genders.setdefault(e.meta.speaker_id, e.meta.gender)
            if g != e.meta.gender:
                raise ManifestError(f"speaker {e.meta.speaker_id} listed with two genders")
        self.genders = genders

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __contains__(self, key) -> bool:
        return key in self._by_key

    def entry(self, key: UtteranceKey) -> ManifestEntry:
        try:
            return self._by_key[key]
        except KeyError:
            raise ManifestError(f"no manifest entry for {tuple(key)}") from None

    def meta(self, key: UtteranceKey) -> UtteranceMeta:
        return self.entry(key).meta

    def load(self, key: UtteranceKey) -> AudioClip:
        e = self.entry(key)
        if self._loader is not None:
            return self._loader(e)
        return _read_entry_from_disk(e, self.root)

    @property
    def speakers(self) -> list[str]:
        return sorted(self.genders, key=_natural_key)

    @property
    def sentences(self) -> list[int]:
        return sorted({e.meta.sentence_id for e in self.entries})

    def subset(self, keep: Callable[[UtteranceMeta], bool]) -> "CorpusManifest":
        return CorpusManifest([e for e in self.entries if keep(e.meta)], self.root, self._loader)


def _natural_key(s: str):
    head = s.rstrip("0123456789")
    tail = s[len(head):]
    return (head, int(tail) if tail else -1, s)


def read_manifest(path: str | Path) -> CorpusManifest:
    """Parse a UTF-8 CSV manifest with header ``speaker,gender,sentence,style,token,path``."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.csv"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or tuple(h.strip() for h in rows[0]) != MANIFEST_HEADER:
        raise ManifestError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields")
        spk, gender, sent, style, token, loc = (c.strip() for c in row)
        try:
            meta = UtteranceMeta(spk, gender, int(sent), style, int(token))
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        entries.append(ManifestEntry(meta, loc))
    return CorpusManifest(entries, root=path.parent)


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in manifest:
            m = e.meta
            w.writerow([m.speaker_id, m.gender, m.sentence_id, m.style, m.token_index, e.path])


# ---------------------------------------------------------------------------
# WAV I/O


def read_wav(path: str | Path) -> AudioClip:
    """Read a 16-bit signed PCM mono RIFF/WAVE file.

    Samples are scaled by 1/32768, so -32768 maps to -1.0 exactly.
    """
    path = Path(path)
    if not path.exists():
        raise WavFormatError(f"{path}: file not found")
    try:
        with wave.open(str(path), "rb") as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            comp = w.getcomptype()
            n = w.getnframes()
            raw = w.readframes(n)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise WavFormatError(f"{path}: unsupported encoding (only PCM is accepted): {msg}") from exc
        raise WavFormatError(f"{path}: malformed header: {msg}") from exc
    except (EOFError, OSError) as exc:
        raise WavFormatError(f"{path}: malformed header: {exc}") from exc
    if comp != "NONE":
        raise WavFormatError(f"{path}: unsupported encoding {comp!r} (only PCM is accepted)")
    if channels != 1:
        raise WavFormatError(f"{path}: unsupported channel count {channels} (mono required)")
    if width != 2:
        raise WavFormatError(f"{path}: unsupported sample width {8 * width} bits (16-bit required)")
    if rate <= 0:
        raise WavFormatError(f"{path}: malformed header: sample rate {rate}")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise WavFormatError(f"{path}: no audio samples")
    return AudioClip(pcm.astype(np.float64) / 32768.0, rate)


def quantize_pcm16(x: np.ndarray) -> np.ndarray:
    """Integer PCM codes for samples in [-1, 1] (rounded, saturating)."""
    return np.clip(np.round(np.asarray(x) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path: str | Path, clip: AudioClip) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(quantize_pcm16(clip.samples).tobytes())


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class DataSplit:
    """Train/test partition plus the training list of every reference model."""

    train: frozenset
    test: frozenset
    model_train: dict = field(default_factory=dict)

    def __post_init__(self):
        overlap = self.train & self.test
        if overlap:
            raise SplitError(f"train and test overlap on {sorted(overlap)[:3]}")
        if any(k.style == OPEN_SET_STYLE for k in self.train):
            raise SplitError("the open-set style may not appear in training")

    def training_list(self, key: ModelKey) -> tuple:
        return self.model_train[key]


def _groups(manifest: CorpusManifest) -> dict[ModelKey, dict[int, UtteranceKey]]:
    groups: dict[ModelKey, dict[int, UtteranceKey]] = defaultdict(dict)
    for e in manifest:
        groups[e.meta.model_key][e.meta.token_index] = e.meta.key
    return groups


def split_train_test(manifest: CorpusManifest) -> DataSplit:
    """Tokens 1-5 train each model, tokens 6-9 are test; sad tokens 1-5 are unused."""
    train, test, model_train = set(), set(), {}
    for gkey, tokens in sorted(_groups(manifest).items()):
        missing = [t for t in range(1, N_TOKENS + 1) if t not in tokens]
        if missing:
            raise SplitError(
                f"group speaker={gkey.speaker} sentence={gkey.sentence} style={gkey.style} "
                f"has {len(tokens)} of {N_TOKENS} tokens (missing {missing})")
        test.update(tokens[t] for t in TEST_TOKENS)
        if gkey.style == OPEN_SET_STYLE:
            continue
        own = tuple(tokens[t] for t in TRAIN_TOKENS)
        train.update(own)
        model_train[gkey] = own
    return DataSplit(frozenset(train), frozenset(test), model_train)


def build_multispeaker_train_set(split: DataSplit, manifest: CorpusManifest) -> DataSplit:
    """Append token 1 of every other speaker (same sentence and style) to each model's list."""
    speakers = manifest.speakers
    model_train = {}
    for key, own in split.model_train.items():
        extra = []
        for spk in speakers:
            if spk == key.speaker:
                continue
            k = UtteranceKey(spk, key.sentence, key.style, 1)
            if k in manifest and k not in split.test:
                extra.append(k)
        model_train[key] = tuple(own) + tuple(extra)
    train = frozenset(k for lst in model_train.values() for k in lst)
    return DataSplit(train, split.test, model_train)


# ---------------------------------------------------------------------------
# Synthetic styled corpus


@dataclass(frozen=True)
class StyleParams:
    """Multipliers and voice-quality settings applied on top of a speaker's neutral voice."""

    f0: float = 1.0
    gain: float = 1.0
    duration: float = 1.0
    jitter: float = 0.004          # relative std of slow random F0 wander
    contour: float = -0.08         # fractional F0 change from start to end of utterance
    tremor_hz: float = 0.0
    tremor_depth: float = 0.0
    tilt: float = 1.0              # source roll-off exponent; lower means more vocal effort
    noise: float = 0.01            # aspiration noise relative to the voiced RMS
    variability: float = 1.0       # scales token-to-token perturbations


STYLE_PARAMS: dict[str, StyleParams] = {
    "neutral": StyleParams(variability=0.4),
    "shouted": StyleParams(f0=1.8, gain=2.5, tilt=0.45, noise=0.08, jitter=0.02, variability=1.5),
    "slow": StyleParams(duration=1.6),
    "loud": StyleParams(f0=1.3, gain=2.0, tilt=0.6, noise=0.03, jitter=0.01),
    "soft": StyleParams(f0=0.9, gain=0.4, tilt=1.5, noise=0.06),
    "fast": StyleParams(duration=0.6),
    "angry": StyleParams(f0=1.5, gain=2.2, tilt=0.5, noise=0.05, jitter=0.03, variability=1.3),
    "happy": StyleParams(f0=1.4, contour=0.3, jitter=0.008),
    "fearful": StyleParams(f0=1.3, tremor_hz=6.0, tremor_depth=0.06, jitter=0.01),
    "sad": StyleParams(f0=0.85, duration=1.3, gain=0.7, contour=-0.2, tilt=1.3, noise=0.02),
}

BASE_F0_HZ = {"male": 120.0, "female": 210.0}

# (F1, F2, F3) targets in Hz for an adult male vocal tract.
VOWELS = {
    "i": (270, 2290, 3010), "I": (390, 1990, 2550), "e": (530, 1840, 2480),
    "ae": (660, 1720, 2410), "a": (730, 1090, 2440), "o": (570, 840, 2410),
    "u": (300, 870, 2240), "er": (490, 1350, 1690), "ai": (700, 1400, 2500),
}
# Rough vowel skeletons of the eight prompt sentences.
SENTENCES = {
    1: ("i", "er", "ai", "e", "a", "i"),
    2: ("a", "a", "I", "ai", "I"),
    3: ("a", "e", "er", "I", "e"),
    4: ("a", "u", "e", "a", "i", "a"),
    5: ("a", "I", "o", "er", "u", "I", "o", "o"),
    6: ("u", "I", "er", "I", "i", "a", "a"),
    7: ("I", "e", "I", "a", "a", "u", "I", "e"),
    8: ("i", "ae", "u", "a", "ae", "u", "o", "er"),
}
FORMANT_BW_HZ = (80.0, 100.0, 140.0)
VOWEL_MS = 90.0
CONSONANT_MS = 30.0
EDGE_MS = 20.0
VOICED_RMS = 0.04
NOISE_FLOOR = 2e-4
MAX_HARMONIC_HZ = 6000.0


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str = "spk0"
    gender: str = "male"
    f0_scale: float = 1.0
    formant_scale: float = 1.0

    @property
    def base_f0_hz(self) -> float:
        return BASE_F0_HZ[self.gender] * self.f0_scale


def speaker_profile(speaker_id: str, gender: str, seed: int) -> SpeakerProfile:
    """Deterministic speaker traits: a small pitch offset and vocal-tract length scale."""
    rng = np.random.default_rng(derive_seed(seed, "speaker", speaker_id))
    tract = 1.15 if gender == "female" else 1.0
    return SpeakerProfile(speaker_id, gender,
                          f0_scale=float(np.exp(rng.normal(0.0, 0.08))),
                          formant_scale=float(tract * np.exp(rng.normal(0.0, 0.04))))


def derive_seed(*parts) -> int:
    words = [zlib.crc32(str(p).encode()) if not isinstance(p, (int, np.integer)) else int(p) & 0xFFFFFFFF
             for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _resonance_gain(f: np.ndarray, formants: np.ndarray) -> np.ndarray:
    # formants: (3, ...) broadcastable against f
    g = np.ones_like(f)
    for k, bw in enumerate(FORMANT_BW_HZ):
        fk = formants[k]
        g = g * fk ** 2 / np.sqrt((fk ** 2 - f ** 2) ** 2 + (bw * f) ** 2)
    return g


def _smooth_noise(rng, n: int, width: int) -> np.ndarray:
    w = rng.standard_normal(n + width)
    kernel = np.hanning(width + 2)[1:-1]
    kernel /= np.sqrt(np.sum(kernel ** 2))
    return np.convolve(w, kernel, mode="valid")[:n]


def synth_style_clip(style: str, sentence_id: int, seed: int,
                     speaker: SpeakerProfile | None = None,
                     sample_rate_hz: int = SAMPLE_RATE_HZ) -> AudioClip:
    """Render one synthetic utterance of ``sentence_id`` in ``style``.

    The result is a pure function of the arguments and lies on the 16-bit PCM
    grid, so writing it to WAV and reading it back is lossless.
    """
    if style not in STYLE_PARAMS:
        raise ValueError(f"unknown style {style!r}")
    if sentence_id not in SENTENCES:
        raise ValueError(f"sentence_id must be in 1..{N_SENTENCES}")
    p = STYLE_PARAMS[style]
    spk = speaker or SpeakerProfile()
    rng = np.random.default_rng(seed)
    fs = float(sample_rate_hz)
    v = p.variability

    tok_f0 = np.exp(rng.normal(0.0, 0.03 * v))
    tok_dur = np.exp(rng.normal(0.0, 0.04 * v))
    tok_fmt = np.exp(rng.normal(0.0, 0.015 * v))
    tok_gain = np.exp(rng.normal(0.0, 0.05 * v))

    vowels = SENTENCES[sentence_id]
    tempo = p.duration * tok_dur
    vowel_len = VOWEL_MS * tempo * np.exp(rng.normal(0.0, 0.05 * v, size=len(vowels)))
    gap_len = CONSONANT_MS * tempo * np.exp(rng.normal(0.0, 0.05 * v, size=len(vowels)))

    # Sample-level layout: edge, then (consonant gap, vowel) per syllable, then edge.
    spans = []
    t = EDGE_MS
    for k in range(len(vowels)):
        t += gap_len[k]
        spans.append((t, t + vowel_len[k]))
        t += vowel_len[k]
    total_ms = t + EDGE_MS
    n = int(round(total_ms * fs / 1000.0))
    tt = np.arange(n) / fs * 1000.0  # ms

    voiced_env = np.zeros(n)
    ramp = 12.0
    for a, b in spans:
        up = np.clip((tt - a) / ramp, 0.0, 1.0)
        down = np.clip((b - tt) / ramp, 0.0, 1.0)
        voiced_env = np.maximum(voiced_env, np.sin(0.5 * np.pi * np.minimum(up, down)) ** 2)
    burst_env = np.zeros(n)
    for k, (a, _) in enumerate(spans):
        g0 = a - gap_len[k]
        inside = (tt >= g0 + 0.2 * gap_len[k]) & (tt < a - 0.2 * gap_len[k])
        burst_env[inside] = 1.0

    centers = np.array([(a + b) / 2 for a, b in spans])
    targets = np.array([VOWELS[vw] for vw in vowels], dtype=float).T  # (3, V)
    targets = targets * spk.formant_scale * tok_fmt
    targets = targets * np.exp(rng.normal(0.0, 0.01 * v, size=targets.shape))

    # F0 contour
    rel = tt / total_ms
    f0 = spk.base_f0_hz * p.f0 * tok_f0 * (1.0 + p.contour * (rel - 0.5))
    if p.tremor_depth:
        f0 = f0 * (1.0 + p.tremor_depth * np.sin(2 * np.pi * p.tremor_hz * tt / 1000.0
                                                  + rng.uniform(0, 2 * np.pi)))
    wander = _smooth_noise(rng, n, int(0.025 * fs))
    f0 = f0 * (1.0 + p.jitter * wander)
    phase = 2 * np.pi * np.cumsum(f0) / fs

    # Harmonic amplitudes on a 4 ms control grid, interpolated to samples.
    hop = int(0.004 * fs)
    grid = np.arange(0, n + hop, hop)
    grid_ms = grid / fs * 1000.0
    fmt_grid = np.stack([np.interp(grid_ms, centers, targets[k]) for k in range(3)])
    f0_grid = np.interp(grid, np.arange(n), f0)
    n_harm = int(MAX_HARMONIC_HZ // (f0.max()))
    harm = np.arange(1, n_harm + 1)[:, None]
    fh = harm * f0_grid[None, :]
    amp_grid = _resonance_gain(fh, fmt_grid[:, None, :]) * (1.0 + fh / 300.0) ** (-p.tilt)
    amp_grid[fh >= fs / 2 - 200.0] = 0.0
    pos = np.arange(n) / hop
    i0 = np.floor(pos).astype(int)
    w = pos - i0
    # Clenshaw summation of sum_k a_k(t) sin(k phase(t)), highest harmonic first.
    two_cos = 2.0 * np.cos(phase)
    b1 = np.zeros(n)
    b2 = np.zeros(n)
    for k in range(n_harm - 1, -1, -1):
        a_k = amp_grid[k, i0] * (1.0 - w) + amp_grid[k, i0 + 1] * w
        b1, b2 = a_k + two_cos * b1 - b2, b1
    voiced = b1 * np.sin(phase) * voiced_env

    active = voiced_env > 0.5
    ref = np.sqrt(np.mean(voiced[active] ** 2)) if np.any(active) else 1.0
    level = VOICED_RMS * p.gain * tok_gain
    voiced = voiced / ref * level

    aspiration = rng.standard_normal(n) * p.noise * level * voiced_env
    bursts = rng.standard_normal(n) * 0.25 * level * burst_env
    floor = rng.standard_normal(n) * NOISE_FLOOR
    x = voiced + aspiration + bursts + floor
    x = quantize_pcm16(np.clip(x, -1.0, 1.0)).astype(np.float64) / 32768.0
    return AudioClip(x, sample_rate_hz)


def utterance_seed(corpus_seed: int, key: UtteranceKey) -> int:
    return derive_seed(corpus_seed, key.speaker, key.sentence, key.style, key.token)


def synthetic_manifest(n_speakers: int = 4, seed: int = 7,
                       sentences: Iterable[int] | None = None,
                       styles: Iterable[str] | None = None) -> CorpusManifest:
    """Manifest of 10 sentences x 10 styles x 10 tokens per speaker, rendered on demand.

    Speakers alternate male/female (``spk1`` male, ``spk2`` female, ...). The
    entry paths are the relative WAV locations used by :func:`write_corpus`.
    """
    if n_speakers < 1:
        raise ValueError("need at least one speaker")
    sentences = list(sentences) if sentences is not None else list(range(1, N_SENTENCES + 1))
    styles = list(styles) if styles is not None else list(STYLES)
    profiles = {}
    entries = []
    for i in range(1, n_speakers + 1):
        spk = f"spk{i}"
        gender = GENDERS[(i - 1) % 2]
        profiles[spk] = speaker_profile(spk, gender, seed)
        for sent in sentences:
            for style in styles:
                for tok in range(1, N_TOKENS + 1):
                    meta = UtteranceMeta(spk, gender, sent, style, tok)
                    entries.append(ManifestEntry(meta, f"{spk}/s{sent}/{style}_{tok}.wav"))

    def loader(entry: ManifestEntry) -> AudioClip:
        m = entry.meta
        return synth_style_clip(m.style, m.sentence_id, utterance_seed(seed, m.key),
                                speaker=profiles[m.speaker_id])

    return CorpusManifest(entries, loader=loader)


def write_corpus(manifest: CorpusManifest, out_dir: str | Path) -> CorpusManifest:
    """Write every clip of ``manifest`` as WAV under ``out_dir`` plus ``manifest.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for e in manifest:
        dest = out / e.path
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_wav(dest, manifest.load(e.meta.key))
    disk = CorpusManifest(manifest.entries, root=out)
    write_manifest(disk, out / "manifest.csv")
    return disk
