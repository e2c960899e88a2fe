import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from igrlab import (
    CorpusConfig,
    ModelConfig,
    PipelineConfig,
    TrainConfig,
    build_dataset,
    generate_corpus,
    load_templates,
    train,
)


ACCEPTANCE_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    ACCEPTANCE_VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # capture=fd swallows in-test prints, so verdict lines are emitted here
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusConfig(n_garments=120, n_outfits=20, seed=7))


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    return build_dataset(small_corpus, PipelineConfig(seed=13))


@pytest.fixture(scope="session")
def small_model(small_corpus, small_dataset):
    """A briefly trained model over the small corpus; enough for the service
    and retrieval plumbing tests, not meant to hit benchmark numbers."""
    model, _ = train(
        small_dataset,
        small_corpus,
        ModelConfig(d_model=32, seed=0),
        TrainConfig(batch_size=8, epochs=6, seed=0),
    )
    return model


@pytest.fixture(scope="session")
def bench_corpus():
    return generate_corpus(CorpusConfig())


@pytest.fixture(scope="session")
def bench_dataset(bench_corpus):
    return build_dataset(bench_corpus, PipelineConfig())


@pytest.fixture(scope="session")
def bench_runs(bench_corpus, bench_dataset):
    """Three seeded training runs on the default benchmark, shared by the
    acceptance checks (learning signal, classifier, unification)."""
    import time

    runs = []
    for seed in (0, 1, 2):
        started = time.perf_counter()
        model, history = train(
            bench_dataset, bench_corpus, ModelConfig(seed=seed), TrainConfig(seed=seed)
        )
        runs.append({
            "seed": seed,
            "model": model,
            "history": history,
            "wall_s": time.perf_counter() - started,
        })
    return runs
