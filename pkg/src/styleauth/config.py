"""Experiment configuration: defaults, validation and TOML loading."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .auth import DEFAULT_WINDOW, Scenario
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENGINES = ("hmm", "sphmm")


@dataclass(frozen=True)
class ExperimentConfig:
    engine: str = "sphmm"
    scenario: str = Scenario.SCORE_ONLY.value
    alpha: float = 0.5
    n_states: int = 5
    n_mix: int = 5
    supra_mix: int = 1
    seed: int = 0
    multi_speaker: bool = False
    adapt_threshold: bool = False
    window: int = DEFAULT_WINDOW
    margin: float = 0.0
    max_iter: int = 30
    tol: float = 1e-4

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        try:
            Scenario(self.scenario)
        except ValueError:
            choices = [s.value for s in Scenario]
            raise ConfigError(f"scenario must be one of {choices}, got {self.scenario!r}") from None
        if isinstance(self.alpha, bool) or not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("n_states", "n_mix", "supra_mix", "window", "max_iter"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < (0 if name == "max_iter" else 1):
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        for name in ("multi_speaker", "adapt_threshold"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be true or false")
        if self.tol < 0:
            raise ConfigError("tol must be non-negative")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "margin", float(self.margin))
        object.__setattr__(self, "tol", float(self.tol))

    @property
    def scenario_kind(self) -> Scenario:
        return Scenario(self.scenario)

    def updated(self, **overrides) -> "ExperimentConfig":
        """Copy with the non-``None`` overrides applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_toml(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, bool):
                lines.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            else:
                lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None) or text.count("\n") + 1
        raise ConfigError(f"{source}:{line}: {exc.msg if hasattr(exc, 'msg') else exc}") from None
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    if isinstance(data.get("alpha"), int) and not isinstance(data.get("alpha"), bool):
        data["alpha"] = float(data["alpha"])
    return ExperimentConfig(**data)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a ``key = value`` TOML file; missing keys take their defaults."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
