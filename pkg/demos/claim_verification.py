"""
Verifying a claimed speaking style
==================================

Train the nine style models of one speaker and sentence, set their loose
starting thresholds from the training utterances, and run a few claims.
"""

from styleauth import hmm
from styleauth.auth import (ClaimIdentity, ModelRegistry, ObservationBundle, ScenarioConfig,
                            ThresholdState, initial_threshold, model_score, score_components, verify)
from styleauth.corpus import MODEL_STYLES, ModelKey, split_train_test, synthetic_manifest
from styleauth.sphmm import SupraConfig, train_sphmm

manifest = synthetic_manifest(n_speakers=1, sentences=[2], seed=7)
split = split_train_test(manifest)
bundles = {}


def bundle(key):
    if key not in bundles:
        bundles[key] = ObservationBundle.from_clip(manifest.load(key))
    return bundles[key]


registry = ModelRegistry()
for style in MODEL_STYLES:
    keys = split.training_list(ModelKey("spk1", 2, style))
    obs = [bundle(k).obs for k in keys]
    acoustic = hmm.baum_welch_train(obs, hmm.init_hmm(obs, n_states=3, n_mix=2, seed=0))
    model = train_sphmm(acoustic, [bundle(k).track for k in keys], SupraConfig(alpha=0.5),
                        observations=obs)
    # the threshold sits two standard deviations below the model's own training scores
    own = [model_score(model, score_components([model], bundle(k))[0]) for k in keys]
    registry.add(("spk1", 2, style), model, ThresholdState.start(initial_threshold(own)))
    # history holds the initial model's log-likelihood too
    print(f"{style:>8}: {len(acoustic.history) - 1:2d} EM iterations, theta {initial_threshold(own):9.1f}")

# one comparison per trial: the clip is scored only against the claimed model
print()
for true_style, claimed in [("slow", "slow"), ("fast", "slow"), ("loud", "loud"),
                            ("shouted", "loud"), ("sad", "neutral")]:
    key = next(k for k in sorted(split.test) if k.style == true_style)
    claim = ClaimIdentity("spk1", 2, claimed)
    trial = verify(bundle(key), claim, registry, true_meta=manifest.meta(key))
    print(f"{true_style:>8} token {key.token} claiming {claimed:<8} lambda {trial.lam:9.1f}  "
          f"theta {trial.theta:9.1f}  {trial.decision.value:<6} ({trial.hypothesis.value})")

# normalising by the other style models turns the raw score into a ratio
key = next(k for k in sorted(split.test) if k.style == "angry")
claim = ClaimIdentity("spk1", 2, "angry")
for kind in ("score-only", "max-imposter", "pooled"):
    sc = ScenarioConfig.for_claim(kind, claim)
    trial = verify(bundle(key), claim, registry, sc, ThresholdState.start(0.0))
    print(f"{kind:>12}: lambda {trial.lam:9.1f}")
