import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from styleauth.corpus import AudioClip, synth_style_clip
from styleauth.prosody import (ENERGY_FLOOR_DB, ProsodyTrack, build_prosodic_sequence,
                               estimate_f0, format_prosody_dump, frame_energy_db, prosody_track,
                               summarize_segment)

RATE = 16000


def _sine(f0, n=512, amp=0.5, phase=0.3):
    return amp * np.sin(2 * np.pi * f0 * np.arange(n) / RATE + phase)


@pytest.mark.parametrize("f0", [60.0, 97.3, 150.0, 220.0, 311.1, 400.0])
def test_f0_of_sinusoids_within_one_hz(f0):
    assert abs(estimate_f0(_sine(f0), RATE) - f0) <= 1.0


def test_white_noise_is_unvoiced():
    rng = np.random.default_rng(0)
    assert all(estimate_f0(rng.standard_normal(512), RATE) == 0.0 for _ in range(20))


def test_silence_is_unvoiced():
    assert estimate_f0(np.zeros(512), RATE) == 0.0


def test_energy_examples():
    assert frame_energy_db(np.ones(256)) == pytest.approx(0.0, abs=1e-12)
    assert frame_energy_db(np.full(256, 0.1)) == pytest.approx(-20.0, abs=1e-12)
    assert frame_energy_db(np.zeros(256)) == ENERGY_FLOOR_DB


@given(gain=st.floats(0.01, 1.0), seed=st.integers(0, 500))
def test_energy_shifts_by_gain_in_db(gain, seed):
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, 256)
    shift = frame_energy_db(gain * x) - frame_energy_db(x)
    assert shift == pytest.approx(20 * np.log10(gain), abs=1e-9)


@given(gain=st.floats(0.05, 1.0), f0=st.floats(80.0, 350.0))
def test_f0_is_gain_invariant(gain, f0):
    assert estimate_f0(gain * _sine(f0), RATE) == pytest.approx(estimate_f0(_sine(f0), RATE), abs=1e-9)


def test_track_lives_on_the_frame_grid():
    clip = AudioClip(_sine(180.0, n=4000))
    track = prosody_track(clip)
    assert len(track) == (4000 - 256) // 112 + 1
    mid = track.f0_hz[3:-3]
    assert np.all(np.abs(mid - 180.0) <= 1.0)
    assert np.all(track.voiced[3:-3])


def test_segment_summary_by_hand():
    track = ProsodyTrack(np.array([0.0, 100.0, 200.0, 0.0]), np.array([-10.0, -20.0, -30.0, -40.0]))
    v = summarize_segment(track, 0, 4)
    assert v.voicing_fraction == 0.5
    assert v.mean_f0_hz == 150.0
    assert v.mean_energy_db == -25.0
    assert v.log_duration == pytest.approx(np.log(4))
    unvoiced = summarize_segment(track, 3, 4)
    assert unvoiced.mean_f0_hz == 0.0 and unvoiced.log_duration == 0.0


def test_segment_bounds_are_checked():
    track = ProsodyTrack(np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError, match="empty"):
        summarize_segment(track, 2, 2)
    with pytest.raises(ValueError, match="outside"):
        summarize_segment(track, 2, 5)
    with pytest.raises(ValueError, match="disjoint"):
        build_prosodic_sequence(track, [(0, 3), (2, 4)])


def test_sequence_and_dump():
    track = ProsodyTrack(np.array([0.0, 100.0, 200.0, 0.0]), np.full(4, -6.0))
    seq = build_prosodic_sequence(track, [(0, 2), (2, 4)])
    assert len(seq) == 2
    assert seq[1].mean_f0_hz == 200.0
    lines = format_prosody_dump(seq).splitlines()
    assert lines[0] == "seg_index,voicing,f0,energy_db,log_dur"
    assert lines[2].startswith("1,0.5,200.0,-6.0,")


@given(gain=st.floats(0.05, 1.0), seed=st.integers(0, 50))
def test_segment_vectors_under_clip_gain(gain, seed):
    clip = synth_style_clip("happy", 3, seed=seed)
    track = prosody_track(clip)
    segs = [(0, len(track) // 2), (len(track) // 2, len(track))]
    base = build_prosodic_sequence(clip, segs).vectors
    scaled = build_prosodic_sequence(AudioClip(clip.samples * gain), segs).vectors
    assert np.allclose(scaled[:, [0, 1, 3]], base[:, [0, 1, 3]], atol=1e-9)
    assert np.allclose(scaled[:, 2] - base[:, 2], 20 * np.log10(gain), atol=1e-9)
