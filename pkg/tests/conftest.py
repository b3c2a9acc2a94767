import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybridmem.config import RunConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_config(scheme="memos", seed=0, **generator):
    gen = {"kind": "wd_bursty", "n_pages": 400, "n_passes": 30}
    gen.update(generator)
    return RunConfig.from_dict({
        "scheme": scheme,
        "seed": seed,
        # a 256 KB LLC so that the 1.6 MB footprint spills to memory
        "machine": {"dram_pages": 1024, "nvm_pages": 2048, "llc": {"capacity_bytes": 256 << 10}},
        "policy": {"pass": {"samplings_per_pass": 20}, "engine": {"cycle_interval_s": 5.0}},
        "workload": {"generator": gen},
    })


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
