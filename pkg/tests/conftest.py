import numpy as np
import pytest

from camrefine.config import PipelineConfig
from camrefine.core import normalize_minmax
from camrefine.synthgen import generate, spec_for, write_corpus

ACCEPTANCE_SEEDS = range(200)


@pytest.fixture(scope="session")
def default_config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def fixture_corpus(default_config):
    """The acceptance corpus in memory: 200 deterministic scenes with
    normalized raw maps and paired masks (seeds 0..199)."""
    corpus = []
    for seed in ACCEPTANCE_SEEDS:
        raw, gt, meta = generate(spec_for(seed, default_config.synth))
        corpus.append((normalize_minmax(raw), gt, meta))
    return corpus


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, default_config):
    """The same corpus materialized as interchange files plus a manifest."""
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(out, ACCEPTANCE_SEEDS, default_config.synth)
    return out


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory, default_config):
    out = tmp_path_factory.mktemp("small_corpus")
    write_corpus(out, range(12), default_config.synth)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
