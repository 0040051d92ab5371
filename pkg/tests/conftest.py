import math

import numpy as np
import pytest

from dmimo.config import SystemConfig
from dmimo.scenario import (
    LinkStats,
    PilotAssignment,
    Scenario,
    build_scenario,
)


def make_scenario(seed=0, **kw):
    cfg = SystemConfig(rng_seed=seed, **kw)
    return build_scenario(cfg, np.random.default_rng(seed))


def manual_link(beta, rician, los, corr=None):
    n = len(los)
    if corr is None:
        corr = np.eye(n)
    return LinkStats(
        beta=beta, rician=rician, elevation=math.radians(30.0),
        azimuth=0.0, distance=550e3, los_vector=np.asarray(los, dtype=complex),
        corr=corr, corr_sqrt=corr.copy(),
    )


def manual_scenario(config, links, pilots, serving_sets):
    return Scenario(
        config=config,
        links=tuple(tuple(row) for row in links),
        pilots=PilotAssignment(pilot_index=tuple(pilots)),
        serving_sets=tuple(frozenset(s) for s in serving_sets),
    )


@pytest.fixture
def scalar_scenario():
    """N=1, M=1, two users sharing one pilot; user 1 contributes nothing
    (beta=0), so user 0's statistics reduce to the scalar hand case
    R=1, tau=1, p^p=1."""
    cfg = SystemConfig(
        num_satellites=1, num_users=2, antennas_x=1, antennas_y=1,
        num_subbands=1, pilot_length=1, pilot_power=1.0, cluster_size=1,
        subband_capacity=2,
    )
    links = [[manual_link(2.0, 1.0, [1.0]), manual_link(0.0, 1.0, [1.0])]]
    return manual_scenario(cfg, links, pilots=(0, 0),
                           serving_sets=[{0}, {0}])


@pytest.fixture
def default_scenario():
    return make_scenario(seed=3)
