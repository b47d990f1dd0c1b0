import pytest

from styleauth.config import ExperimentConfig, load_config, parse_config
from styleauth.errors import ConfigError


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    assert (cfg.n_states, cfg.n_mix, cfg.alpha, cfg.scenario) == (5, 5, 0.5, "score-only")
    assert load_config(None) == cfg


def test_values_override_defaults():
    cfg = parse_config('engine = "hmm"\nalpha = 0\nn_states = 3\nmulti_speaker = true\n')
    assert cfg.engine == "hmm" and cfg.alpha == 0.0 and isinstance(cfg.alpha, float)
    assert cfg.n_states == 3 and cfg.multi_speaker


@pytest.mark.parametrize("text, message", [
    ("alpha = 1.5", "alpha"),
    ('engine = "gmm"', "engine"),
    ('scenario = "best"', "scenario"),
    ("n_mix = 0", "n_mix"),
    ("seed = -1", "seed"),
    ("colour = 3", "unknown key"),
])
def test_invalid_values(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_parse_errors_report_the_line(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('engine = "hmm"\nalpha = = 2\n')
    with pytest.raises(ConfigError, match=r"bad\.toml:2:"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/c.toml")


def test_toml_round_trip():
    cfg = ExperimentConfig(engine="hmm", alpha=0.25, margin=1.5, adapt_threshold=True)
    assert parse_config(cfg.to_toml()) == cfg


def test_updated_ignores_none():
    cfg = ExperimentConfig().updated(engine=None, alpha=0.0)
    assert cfg.engine == "sphmm" and cfg.alpha == 0.0
