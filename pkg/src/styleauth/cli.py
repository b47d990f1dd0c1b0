"""Command-line entry point: ``styleauth {synth,features,train,verify,evaluate,confusion}``.

Exit status is 0 on success, 1 on usage errors (bad flags, missing inputs)
and 2 on data or numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation as ev
from .auth import (ClaimIdentity, ModelRegistry, Scenario, ScenarioConfig, ThresholdState, verify)
from .config import ENGINES, load_config
from .corpus import N_SENTENCES, read_manifest, read_wav, synthetic_manifest, write_corpus
from .errors import StyleAuthError
from .features import extract_observations, format_feature_dump
from .hmm import hmm_from_dict
from .prosody import build_prosodic_sequence, format_prosody_dump, prosody_track
from .sphmm import SupraGrouping, align_segments, sphmm_from_dict

log = logging.getLogger("styleauth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _alpha(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid alpha {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {v}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="styleauth", description="Speaking-style authentication with HMMs and SPHMMs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic styled corpus")
    p.add_argument("--speakers", type=_positive, default=4)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--sentences", type=_positive, default=N_SENTENCES,
                   help="render sentences 1..K only")
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="dump LPCC (and optionally prosodic) features of a clip")
    p.add_argument("--clip", required=True)
    p.add_argument("--prosody", action="store_true",
                   help="also dump per-segment prosody for the given --segments")
    p.add_argument("--segments", type=_positive, default=2,
                   help="number of equal segments for the prosody dump")
    p.add_argument("--out")

    def experiment_flags(p, needs_out=True):
        p.add_argument("--corpus", required=True, help="corpus directory or manifest.csv")
        p.add_argument("--out", required=needs_out)
        p.add_argument("--config")
        p.add_argument("--engine", choices=ENGINES)
        p.add_argument("--scenario", choices=[s.value for s in Scenario])
        p.add_argument("--alpha", type=_alpha)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=_positive, default=1)
        p.add_argument("--multi-speaker", action="store_true", default=None)

    experiment_flags(sub.add_parser("train", help="train and save every reference model"))
    experiment_flags(sub.add_parser("evaluate", help="run the verification protocol"))
    experiment_flags(sub.add_parser("confusion", help="style identification confusion matrix"))

    p = sub.add_parser("verify", help="verify one claim against a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--claim", required=True, help="speaker:sentence:style")
    p.add_argument("--scenario", choices=[s.value for s in Scenario], default=Scenario.SCORE_ONLY.value)
    p.add_argument("--alpha", type=_alpha)
    return parser


def _config(args):
    base = load_config(_existing(args.config, "config file"))
    return base.updated(engine=args.engine, scenario=args.scenario, alpha=args.alpha,
                        seed=args.seed, multi_speaker=args.multi_speaker)


def _corpus(args):
    return read_manifest(_existing(args.corpus, "corpus"))


def cmd_synth(args) -> None:
    if args.sentences > N_SENTENCES:
        raise UsageError(f"--sentences must be at most {N_SENTENCES}")
    manifest = synthetic_manifest(args.speakers, args.seed, sentences=range(1, args.sentences + 1))
    write_corpus(manifest, args.out)
    print(f"wrote {len(manifest)} clips and manifest.csv to {args.out}")


def cmd_features(args) -> None:
    clip = read_wav(_existing(args.clip, "clip"))
    obs = extract_observations(clip)
    text = format_feature_dump(obs)
    if args.prosody:
        n = len(obs)
        k = min(args.segments, n)
        bounds = [(i * n) // k for i in range(k + 1)]
        states = [i for i in range(k) for _ in range(bounds[i + 1] - bounds[i])]
        alignment = align_segments(states, SupraGrouping((1,) * k))
        track = prosody_track(clip)
        grid = [(int(obs.frame_index[a]), int(obs.frame_index[b - 1]) + 1)
                for a, b in alignment.segments]
        text += "\n" + format_prosody_dump(build_prosodic_sequence(track, grid))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args) -> None:
    cfg = _config(args)
    groups = ev.score_corpus(_corpus(args), cfg, jobs=args.jobs, score_tests=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ev.write_models(groups, cfg, out / "models")
    (out / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")
    print(f"trained {sum(len(g.styles) for g in groups)} models into {out / 'models'}")


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    result = ev.run_verification_suite(cfg, _corpus(args), jobs=args.jobs)
    ev.write_results(result, args.out)
    sys.stdout.write((Path(args.out) / "performance.txt").read_text(encoding="utf-8"))


def cmd_confusion(args) -> None:
    cfg = _config(args)
    conf = ev.build_confusion_matrix(cfg, _corpus(args), jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = conf.to_text(f"{cfg.engine.upper()} style identification (%)")
    (out / "confusion.txt").write_text(text, encoding="utf-8")
    (out / "confusion.csv").write_text(conf.to_csv(), encoding="utf-8")
    sys.stdout.write(text)


def load_model_record(path: Path) -> dict:
    """Parse a saved reference model into ``{"claim", "model", "thresholds", ...}``."""
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StyleAuthError(f"cannot read model {path}: {exc}") from None
    if rec.get("format") != "styleauth.model":
        raise StyleAuthError(f"{path} is not a styleauth model record")
    try:
        model = sphmm_from_dict(rec["supra"]) if rec["engine"] == "sphmm" else hmm_from_dict(rec["acoustic"])
    except (KeyError, ValueError) as exc:
        raise StyleAuthError(f"malformed model record {path}: {exc}") from None
    return {"claim": ClaimIdentity.parse(rec["claim"]), "model": model, "engine": rec["engine"],
            "thresholds": rec["thresholds"], "window": rec.get("window", 16),
            "margin": rec.get("margin", 0.0)}


def cmd_verify(args) -> None:
    model_path = _existing(args.model, "model")
    clip_path = _existing(args.clip, "clip")
    try:
        claim = ClaimIdentity.parse(args.claim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rec = load_model_record(model_path)
    if rec["claim"] != claim:
        raise StyleAuthError(f"claim {claim} does not match model {model_path.name} ({rec['claim']})")
    records = [rec]
    if args.scenario != Scenario.SCORE_ONLY.value:
        # imposters: the other style models of the same speaker and sentence next to the claimant
        for p in sorted(model_path.parent.glob(f"{claim.speaker}_s{claim.sentence}_*.json")):
            if p != model_path:
                records.append(load_model_record(p))
    registry = ModelRegistry()
    for r in records:
        model = r["model"]
        if args.alpha is not None and r["engine"] == "sphmm":
            model = model.with_alpha(args.alpha)
        state = ThresholdState.start(r["thresholds"][args.scenario], r["window"], r["margin"])
        registry.add(r["claim"], model, state)
    scenario = ScenarioConfig.for_claim(args.scenario, claim,
                                        [r["claim"].style for r in records])
    trial = verify(read_wav(clip_path), claim, registry, scenario)
    print(f"lambda {trial.lam!r}")
    print(f"theta {trial.theta!r}")
    print(trial.decision.value.upper())


COMMANDS = {"synth": cmd_synth, "features": cmd_features, "train": cmd_train, "verify": cmd_verify,
            "evaluate": cmd_evaluate, "confusion": cmd_confusion}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except StyleAuthError as exc:
        print(f"styleauth: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
