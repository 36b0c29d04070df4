import pytest

from asrswitch.pipeline.corpus import GridSpec, simulate_corpus
from asrswitch.pipeline.surrogate import synthetic_noise_pool, synthetic_speech_pool


@pytest.fixture(scope="session")
def speech_pool():
    return synthetic_speech_pool(n_speakers=8, utts_per_speaker=4, seed=11)


@pytest.fixture(scope="session")
def noise_pool():
    return synthetic_noise_pool(n=3, duration=1.0, seed=12)


@pytest.fixture(scope="session")
def grid_corpus(tmp_path_factory, speech_pool, noise_pool):
    """Two utterances per cell of the 3x3 evaluation grid."""
    out = tmp_path_factory.mktemp("grid")
    records = simulate_corpus(speech_pool, noise_pool, GridSpec(count=18), out, seed=5)
    return out, records
