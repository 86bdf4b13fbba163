# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Full-length runs of the bundled scenarios; select with ``pytest -m slow``."""

import unittest
from functools import lru_cache

import numpy as np
import pytest

from gfmreserve.config import bundled_path, load_config
from gfmreserve.sim import SimulationResult, consensus_spread, run

SCENARIOS = (
    "scenario1_droop_active",
    "scenario1_droop_base",
    "scenario2_vsm_active",
    "scenario2_vsm_base",
    "scenario3_hetero_active",
    "scenario3_hetero_base",
    "unequal_energy_dapi",
)


@lru_cache(maxsize=None)
def bundled_run(name: str) -> SimulationResult:
    return run(load_config(bundled_path(f"{name}.json")).to_scenario())


def terminal_ratio(result: SimulationResult, channel: str) -> float:
    return result.metrics["consensus"][channel]["ratio"]


@pytest.mark.slow
class TestBundledScenarios(unittest.TestCase):
    def test_frequency_is_restored(self):
        for name in SCENARIOS:
            with self.subTest(scenario=name):
                result = bundled_run(name)
                self.assertFalse(result.aborted, result.diagnostic)
                self.assertLess(result.metrics["terminal_frequency_error"], 1e-3)

    def test_energy_consensus_contrast(self):
        for pair in ("scenario1_droop", "scenario3_hetero"):
            with self.subTest(scenario=pair):
                active = terminal_ratio(bundled_run(f"{pair}_active"), "freq_energy")
                base = terminal_ratio(bundled_run(f"{pair}_base"), "freq_energy")
                self.assertLess(active, 0.01)
                self.assertGreater(base, 0.1)

    def test_power_sharing_without_energy_sharing(self):
        result = bundled_run("unequal_energy_dapi")
        trace = result.trace
        t = trace.t
        sharing = consensus_spread(trace, "power_sharing")[-1]
        mean_share = abs(
            float(np.mean(trace.column("p")[-1] - [p.p_set_pu for p in trace.params]))
            * trace.params[0].m
        )
        self.assertLess(sharing, 0.01 * mean_share)
        # the energy spread ratchets up with each disturbance and holds in between
        spread = consensus_spread(trace, "freq_energy")
        before_pickup = spread[np.searchsorted(t, 2.0) - 1]
        before_step = spread[np.searchsorted(t, 30.0) - 1]
        self.assertGreater(before_step, before_pickup)
        self.assertGreater(spread[-1], before_step)
