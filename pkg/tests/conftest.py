import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", 40)),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def within_sigma(estimate, expected, se, k=3.0):
    return abs(estimate - expected) <= k * se


@pytest.fixture(scope="session")
def speed_runs(tmp_path_factory):
    """200 replica walks of 10^5 steps per example spec, shared by the long tests."""
    from pwit_lab import experiments

    out = {}
    for name, spec in (("tempered", "tempered:c=1,alpha=0.5,p=1"), ("stable", "stable:c=1,alpha=0.5")):
        t0 = time.perf_counter()
        cfg = experiments.ExperimentConfig(
            "speed", levy=spec, horizon=100_000, replicas=200, master_seed=7,
            out_dir=str(tmp_path_factory.mktemp(f"speed_{name}")),
        )
        out[name] = (experiments.run(cfg), time.perf_counter() - t0, cfg.out_dir)
    return out
