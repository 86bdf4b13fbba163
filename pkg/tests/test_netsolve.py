# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import unittest

import numpy as np

from gfmreserve.errors import ConfigurationError, GraphError
from gfmreserve.netsolve import (
    Line,
    PhasorNetwork,
    SourceBinding,
    apply_load_event,
    load_admittance,
    power_jacobians,
    solve,
    solve_injections,
    source_powers,
)

S_BASE = 2.5e6
V_BASE = 391.9


def feeder(load_p: float = 1.8e6, load_q: float = 0.9e6) -> PhasorNetwork:
    """Two inverters at the ends of a three-bus feeder with the load in the middle."""
    net = PhasorNetwork(
        buses=("a", "mid", "b"),
        lines=(Line("a", "mid", 0.002, 0.004), Line("mid", "b", 0.003, 0.005)),
        bindings=(
            SourceBinding(1, "a", 0.00092, 0.0092),
            SourceBinding(2, "b", 0.00092, 0.0092),
        ),
        s_base=S_BASE,
        v_base=V_BASE,
    )
    return apply_load_event(net, "mid", load_p, load_q)


class TestPhasorNetwork(unittest.TestCase):
    def test_power_balance(self):
        net = feeder()
        sol = solve(net, [(1.0, 0.02), (0.99, -0.01)])
        total = complex(np.sum(sol.injections))
        expected = sol.load_consumption() + sol.branch_losses()
        self.assertAlmostEqual(total.real, expected.real, places=10)
        self.assertAlmostEqual(total.imag, expected.imag, places=10)

    def test_vectorized_powers_match_solve(self):
        net = feeder()
        sources = [(1.0, 0.02), (0.99, -0.01)]
        s = source_powers(net, np.array([1.0, 0.99]), np.array([0.02, -0.01]))
        for (p, q), value in zip(solve_injections(net, sources), s):
            self.assertAlmostEqual(p, value.real, places=12)
            self.assertAlmostEqual(q, value.imag, places=12)

    def test_load_draws_rated_power_at_nominal_voltage(self):
        y = load_admittance(1.0e6, 0.5e6, V_BASE)
        s = V_BASE**2 * np.conj(y)
        self.assertAlmostEqual(s.real, 1.0e6, places=3)
        self.assertAlmostEqual(s.imag, 0.5e6, places=3)

    def test_event_and_inverse_restore_admittance_exactly(self):
        net = feeder()
        stepped = apply_load_event(net, "mid", 5e5, 1e5)
        restored = apply_load_event(stepped, "mid", -5e5, -1e5)
        self.assertEqual(restored.load_terms, net.load_terms)
        np.testing.assert_array_equal(restored.y_bus, net.y_bus)

    def test_load_event_increases_consumption(self):
        net = feeder()
        sources = [(1.0, 0.0), (1.0, 0.0)]
        before = sum(p for p, _ in solve_injections(net, sources))
        after = sum(
            p for p, _ in solve_injections(apply_load_event(net, "mid", 5e5), sources)
        )
        self.assertGreater(after, before)

    def test_unknown_bus_rejected(self):
        with self.assertRaises(ConfigurationError):
            apply_load_event(feeder(), "nowhere", 1e5)

    def test_disconnected_network_rejected(self):
        with self.assertRaises(GraphError):
            PhasorNetwork(
                buses=("a", "b", "c"),
                lines=(Line("a", "b", 0.01, 0.01),),
                bindings=(SourceBinding(1, "a", 0.0, 0.01),),
                s_base=S_BASE,
                v_base=V_BASE,
            )

    def test_source_count_mismatch(self):
        with self.assertRaises(ConfigurationError):
            solve(feeder(), [(1.0, 0.0)])

    def test_jacobians_match_finite_differences(self):
        net = feeder()
        mags = np.array([1.0, 0.98])
        angles = np.array([0.03, -0.02])
        ds_dva, ds_dvm = power_jacobians(net, list(zip(mags, angles)))
        h = 1e-7
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            d_angle = (
                source_powers(net, mags, angles + step)
                - source_powers(net, mags, angles - step)
            ) / (2 * h)
            d_mag = (
                source_powers(net, mags + step, angles)
                - source_powers(net, mags - step, angles)
            ) / (2 * h)
            np.testing.assert_allclose(ds_dva[:, k], d_angle, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(ds_dvm[:, k], d_mag, rtol=1e-5, atol=1e-6)
