import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from styleauth.corpus import AudioClip
from styleauth.errors import DegenerateFrameError, FrameError, NoUsableFramesError
from styleauth.features import (Frame, FrontendConfig, apply_hamming, autocorrelate,
                                extract_observations, format_feature_dump, frame_signal,
                                levinson_durbin, lpc_to_lpcc)

from oracles import dense_lpc, fft_cepstrum


def _noise_clip(n, seed=0, amp=0.1):
    return AudioClip(np.random.default_rng(seed).uniform(-amp, amp, n))


def test_frame_geometry():
    cfg = FrontendConfig()
    assert (cfg.frame_len, cfg.hop) == (256, 112)
    frames = frame_signal(_noise_clip(16000))
    assert len(frames) == (16000 - 256) // 112 + 1
    assert frames[1].start_index == 112
    assert np.array_equal(frames[2].samples, _noise_clip(16000).samples[224:480])


def test_exactly_one_frame_and_too_short():
    assert len(frame_signal(_noise_clip(256))) == 1
    with pytest.raises(FrameError, match="too short"):
        frame_signal(_noise_clip(255))


def test_hamming_endpoints_and_peak():
    w = apply_hamming(np.ones(256))
    assert w[0] == pytest.approx(0.08, abs=1e-12)
    assert w[-1] == pytest.approx(0.08, abs=1e-12)
    assert w.max() <= 1.0
    f = apply_hamming(Frame(np.ones(256), 5))
    assert f.start_index == 5


def test_autocorrelation_definition():
    x = np.array([1.0, 2.0, 3.0])
    assert np.allclose(autocorrelate(x, 2), [14.0, 8.0, 3.0])
    with pytest.raises(ValueError):
        autocorrelate(x, 3)


def test_levinson_matches_dense_solve():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.standard_normal(400)
        r = autocorrelate(apply_hamming(x), 16)
        lpc = levinson_durbin(r, 16)
        assert np.max(np.abs(lpc.a - dense_lpc(r, 16))) <= 1e-8
        assert np.all(np.abs(lpc.reflection) < 1)


def test_levinson_degenerate_inputs():
    with pytest.raises(DegenerateFrameError):
        levinson_durbin(np.zeros(17), 16)
    with pytest.raises(DegenerateFrameError):
        # r1 > r0 is not a valid autocorrelation
        levinson_durbin(np.array([1.0, 2.0, 0.5]), 2)


def test_lpcc_matches_fft_cepstrum():
    rng = np.random.default_rng(2)
    for _ in range(50):
        r = autocorrelate(apply_hamming(rng.standard_normal(300)), 16)
        a = levinson_durbin(r, 16).a
        assert np.max(np.abs(lpc_to_lpcc(a, 16) - fft_cepstrum(a, 16))) <= 1e-8


def test_lpcc_first_order_closed_form():
    # 1 / (1 - a z^-1) has cepstrum a^n / n
    a = 0.6
    c = lpc_to_lpcc(np.array([a]), 6)
    assert np.allclose(c, [a ** n / n for n in range(1, 7)], atol=1e-15)


def test_ar2_recovery():
    rng = np.random.default_rng(3)
    a1, a2 = 1.3, -0.6
    e = rng.standard_normal(64000)
    x = np.zeros_like(e)
    for n in range(2, x.size):
        x[n] = a1 * x[n - 1] + a2 * x[n - 2] + e[n]
    lpc = levinson_durbin(autocorrelate(x, 2), 2)
    assert lpc.a == pytest.approx([a1, a2], rel=0.05)


def test_extract_observations_shapes_and_skips():
    x = np.random.default_rng(4).uniform(-0.2, 0.2, 4000)
    x[1000:1600] = 0.0  # silent stretch produces degenerate frames
    obs = extract_observations(AudioClip(x))
    assert obs.dim == 16
    assert obs.n_grid == (4000 - 256) // 112 + 1
    assert obs.n_skipped > 0
    assert len(obs) + obs.n_skipped == obs.n_grid
    assert np.array_equal(obs.frame_times, obs.frame_index * 112)


def test_all_silent_clip_has_no_usable_frames():
    with pytest.raises(NoUsableFramesError, match="no usable frames"):
        extract_observations(AudioClip(np.zeros(2000)))


def test_rate_mismatch_is_rejected():
    with pytest.raises(FrameError):
        extract_observations(AudioClip(np.zeros(2000) + 0.1, 8000), FrontendConfig())


def test_feature_dump_format():
    obs = extract_observations(_noise_clip(600))
    lines = format_feature_dump(obs).splitlines()
    assert len(lines) == len(obs)
    assert lines[1].split()[0] == "112"
    assert len(lines[0].split()) == 17


@given(gain=st.floats(0.05, 0.9), seed=st.integers(0, 1000))
def test_lpcc_invariant_to_gain(gain, seed):
    base = np.random.default_rng(seed).uniform(-1, 1, 1200)
    a = extract_observations(AudioClip(base))
    b = extract_observations(AudioClip(base * gain))
    assert np.allclose(a.vectors, b.vectors, atol=1e-7)


@given(seed=st.integers(0, 10_000), n=st.integers(17, 300))
def test_zero_lag_dominates(seed, n):
    x = np.random.default_rng(seed).standard_normal(n)
    r = autocorrelate(x, 16)
    direct = np.array([np.dot(x[:n - k], x[k:]) for k in range(17)])
    assert np.allclose(r, direct, rtol=1e-10, atol=1e-10)
    assert np.all(r[0] >= np.abs(r[1:]) - 1e-12)
