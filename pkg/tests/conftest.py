import os

import numpy as np
import pytest

RESULTS = os.path.join(os.path.dirname(__file__), "..", "results")
ARTIFACT_PREDICTOR = os.path.join(RESULTS, "predictor.bin")
ACCEPT_PREDICTOR = os.path.join(RESULTS, "predictor_acceptance.bin")


def train_acceptance_predictor(path):
    """Deterministic small predictor used when no artifact is checked in.

    Sized to fit the sub-10-minute budget of the degradation criterion;
    regenerate with: dynagrasp gen-dataset + train-predictor (see README).
    """
    from dynagrasp.conveyor import ObsNoise
    from dynagrasp.predictor import gen_dataset, save_predictor, train_predictor

    ds = gen_dataset(1600, ObsNoise(), np.random.default_rng(1001), snapshots_per_traj=10)
    model, _ = train_predictor(ds, epochs=90, lr=3e-3, rng=np.random.default_rng(7),
                               batch_size=128)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        save_predictor(model, f)
    return model


@pytest.fixture(scope="session")
def trained_predictor():
    """The artifact predictor when available, else a cached acceptance-size one."""
    from dynagrasp.predictor import load_predictor

    for path in (ARTIFACT_PREDICTOR, ACCEPT_PREDICTOR):
        if os.path.exists(path):
            with open(path, "rb") as f:
                return load_predictor(f)
    return train_acceptance_predictor(ACCEPT_PREDICTOR)
