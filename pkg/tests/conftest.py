import sys
import time
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from pushability.affordance import split_dataset, train  # noqa: E402
from pushability.synth import gen_dataset  # noqa: E402

DATASET_SEED = 7

# property tests draw the same examples on every run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def oracle_dataset():
    """The default 90-experiment synthetic dataset, generated once per session."""
    t0 = time.perf_counter()
    ds = gen_dataset(90, seed=DATASET_SEED)
    gen_time = time.perf_counter() - t0
    return ds, gen_time


@pytest.fixture(scope="session")
def oracle_model(oracle_dataset):
    ds, gen_time = oracle_dataset
    t0 = time.perf_counter()
    train_set, test_set = split_dataset(ds.records, 0.3, seed=DATASET_SEED)
    model = train(train_set)
    return model, train_set, test_set, gen_time + time.perf_counter() - t0
