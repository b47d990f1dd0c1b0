"""
From waveform to observations
=============================

Render one synthetic utterance, cut it into frames and look at what the
acoustic and prosodic front ends make of it.
"""

import numpy as np

from styleauth.corpus import SpeakerProfile, synth_style_clip
from styleauth.features import extract_observations
from styleauth.prosody import build_prosodic_sequence, prosody_track

speaker = SpeakerProfile("demo", "female")
clip = synth_style_clip("happy", sentence_id=4, seed=1, speaker=speaker)
print(f"{clip.duration_s:.2f} s at {clip.sample_rate_hz} Hz, RMS {clip.rms():.4f}")

# 16 ms frames every 7 ms; frames the predictor cannot fit are dropped
obs = extract_observations(clip)
print(f"{len(obs)} LPCC vectors of dimension {obs.dim} ({obs.n_skipped} frames skipped)")
print("first vector:", np.array2string(obs.vectors[0, :6], precision=3), "...")

# pitch and energy live on the same frame grid
track = prosody_track(clip)
voiced = track.f0_hz[track.voiced]
print(f"voiced frames {voiced.size}/{len(track)}, F0 median {np.median(voiced):.0f} Hz, "
      f"range {voiced.min():.0f}-{voiced.max():.0f} Hz")

# a rising contour: compare the two halves of the utterance
half = len(track) // 2
seq = build_prosodic_sequence(track, [(0, half), (half, len(track))])
for i, v in enumerate(seq.vectors):
    print(f"half {i}: voicing {v[0]:.2f}  F0 {v[1]:.0f} Hz  energy {v[2]:.1f} dB  "
          f"log frames {v[3]:.2f}")

# the same sentence spoken slowly and quickly
for style in ("slow", "neutral", "fast"):
    c = synth_style_clip(style, 4, seed=1, speaker=speaker)
    print(f"{style:>8}: {c.duration_s:.2f} s")
