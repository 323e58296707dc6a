import numpy as np
import pytest

from deixis.config import EngineConfig
from deixis.engine import Engine, collect_training_segments
from deixis.hmm import ModelSet, baum_welch_train, flat_start
from deixis.mapcontext import demo_map
from deixis.phoneme import PHONEME_ORDER
from deixis.synth import SyntheticConfig, generate_synthetic


def train_engine(corpus, ctx, config=None, iters=20):
    config = config or EngineConfig()
    topology = config.decoder.topology()
    by_phoneme = collect_training_segments(corpus, config)
    models = {
        kind: baum_welch_train(
            flat_start(topology.n_states(kind), by_phoneme[kind]),
            by_phoneme[kind],
            max_iters=iters,
            tol=config.train.tol,
            var_floor=config.train.var_floor,
        )
        for kind in PHONEME_ORDER
    }
    return Engine(ModelSet(models=models, topology=topology), ctx, config)


@pytest.fixture(scope="session")
def campus():
    return demo_map()


@pytest.fixture(scope="session")
def small_engine(campus):
    """Engine trained on a small default-noise corpus; shared by the unit
    tests that need a working decoder but not acceptance-grade accuracy."""
    corpus = generate_synthetic(SyntheticConfig(n_sessions=50, seed=11), campus)
    return train_engine(corpus, campus, iters=12)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
