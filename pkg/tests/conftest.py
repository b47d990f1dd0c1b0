import time
from dataclasses import dataclass

import pytest
from hypothesis import HealthCheck, settings

from styleauth.config import ExperimentConfig
from styleauth.corpus import CorpusManifest, synthetic_manifest
from styleauth.evaluation import ExperimentResult, run_verification_suite, score_corpus

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@dataclass
class ScoredCorpus:
    manifest: CorpusManifest
    config: ExperimentConfig
    groups: list


@pytest.fixture(scope="session")
def small_corpus() -> ScoredCorpus:
    """Two speakers, one sentence, small models: every style model plus all test scores."""
    manifest = synthetic_manifest(n_speakers=2, sentences=[1])
    config = ExperimentConfig(n_states=3, n_mix=2)
    return ScoredCorpus(manifest, config, score_corpus(manifest, config))


@dataclass
class TimedResult:
    result: ExperimentResult
    seconds: float


# 4 speakers, seed 7, N=3, M=2, one Gaussian per suprasegmental state, score-only, frozen thresholds
DEFAULT_RUN = ExperimentConfig(n_states=3, n_mix=2, supra_mix=1, scenario="score-only",
                               adapt_threshold=False)


@pytest.fixture(scope="session")
def default_run() -> TimedResult:
    """Full default synthetic corpus; both engines are tabulated from this one scoring pass."""
    start = time.perf_counter()
    result = run_verification_suite(DEFAULT_RUN, synthetic_manifest(n_speakers=4, seed=7))
    return TimedResult(result, time.perf_counter() - start)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
