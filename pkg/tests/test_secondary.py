# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import unittest
from dataclasses import replace

import numpy as np
import pytest

from gfmreserve.errors import ConfigurationError, UnsupportedCaseError
from gfmreserve.model import CommGraph, InverterState
from gfmreserve.secondary import (
    ConsensusGains,
    NeighborSample,
    NeighborView,
    ReserveState,
    consensus_rates,
    dapi_freq_rate,
    dapi_volt_rate,
    energy_update,
    exchange_values,
    headroom_rate,
    headroom_rates,
    reactive_headroom,
    steady_state_predict,
)
from tests.test_model import reference_params


def random_states(rng: np.random.Generator, count: int):
    return [
        InverterState(
            d_omega=rng.normal(0, 1e-3),
            v=1.0 + rng.normal(0, 1e-2),
            omega_cons=rng.normal(0, 1e-3),
            e_cons=rng.normal(0, 1e-2),
            q_filt=0.24 + rng.normal(0, 0.05),
            dE=rng.normal(0, 1.0),
            dF=rng.normal(0, 1.0),
        )
        for _ in range(count)
    ]


def samples_for(params, states, t: float = 0.0):
    out = {}
    for k, (p, s) in enumerate(zip(params, states)):
        omega_cons, q_ratio, m_de, n_df = exchange_values(p, s)
        out[k] = NeighborSample(omega_cons, q_ratio, m_de, n_df, 1, t, t)
    return out


class TestReserveLedger(unittest.TestCase):
    def test_first_step_is_rectangular(self):
        reserve = energy_update(ReserveState(e_capacity=10.0), 0.2, -0.1, 0.5)
        self.assertAlmostEqual(reserve.dE, 0.1)
        self.assertAlmostEqual(reserve.dF, -0.05)

    def test_trapezoidal_steps(self):
        reserve = ReserveState(e_capacity=10.0)
        reserve = energy_update(reserve, 0.0, 0.0, 1.0)
        reserve = energy_update(reserve, 1.0, 2.0, 1.0)
        self.assertAlmostEqual(reserve.dE, 0.5)
        self.assertAlmostEqual(reserve.dF, 1.0)
        self.assertAlmostEqual(reserve.e_unused, 9.5)

    def test_nonpositive_step(self):
        with self.assertRaises(ValueError):
            energy_update(ReserveState(e_capacity=1.0), 0.0, 0.0, 0.0)

    def test_headroom_clamped_at_zero(self):
        self.assertEqual(headroom_rate(1.0, 0.9, 0.6), 0.0)
        self.assertEqual(headroom_rate(1.0, 1.2, 0.0), 0.0)
        self.assertAlmostEqual(headroom_rate(1.0, 0.6, 0.3), 0.5)

    def test_headroom_accumulates_monotonically(self):
        f_capacity = 0.0
        for p, q in [(0.5, 0.2), (0.95, 0.5), (0.0, 0.0), (1.1, 0.3)]:
            updated = reactive_headroom(f_capacity, 1.0, p, q, 0.01)
            self.assertGreaterEqual(updated, f_capacity)
            f_capacity = updated
        with self.assertRaises(ValueError):
            reactive_headroom(0.0, 0.0, 0.1, 0.1, 0.01)

    def test_vectorized_headroom_matches_scalar(self):
        p = np.array([0.9, 1.2, 0.6, -0.4])
        q = np.array([0.6, 0.0, 0.3, -0.2])
        expected = [headroom_rate(2.0, pk, qk) for pk, qk in zip(p, q)]
        np.testing.assert_allclose(headroom_rates(p, q, s_max=2.0), expected)

    def test_headroom_step_is_trapezoidal(self):
        updated = reactive_headroom(1.0, 1.0, 0.6, 0.3, 0.1, previous_rate=0.3)
        self.assertAlmostEqual(updated, 1.0 + 0.5 * (0.5 + 0.3) * 0.1)


class TestNeighborView(unittest.TestCase):
    def test_foreign_and_stale_messages_dropped(self):
        view = NeighborView(owner=0, neighbors=[1, 2])
        self.assertTrue(view.update(1, 3, 0.1, 0.0, 1.0, 0.0, 0.0))
        self.assertFalse(view.update(1, 3, 0.2, 0.0, 1.0, 0.0, 0.0))
        self.assertFalse(view.update(1, 2, 0.2, 0.0, 1.0, 0.0, 0.0))
        self.assertFalse(view.update(7, 1, 0.2, 0.0, 1.0, 0.0, 0.0))
        self.assertEqual(view.accepted, 1)
        self.assertEqual(view.dropped_stale, 2)
        self.assertEqual(view.dropped_foreign, 1)
        self.assertEqual(view.never_heard(), {2})
        self.assertEqual(view.snapshot()[1].seq, 3)


class TestDapiRates(unittest.TestCase):
    def setUp(self):
        self.params = [reference_params(k + 1) for k in range(3)]
        self.graph = CommGraph.complete(3, a=1.0, b=1.0, e=0.5, f=0.05)

    def test_per_node_rates_match_laplacian_form(self):
        rng = np.random.default_rng(7)
        states = random_states(rng, 3)
        samples = samples_for(self.params, states)
        d_omega_cons, d_e_cons = consensus_rates(self.params, self.graph, states, 0.95)
        for k in range(3):
            row = self.graph.neighbors(k)
            self.assertAlmostEqual(
                dapi_freq_rate(self.params[k], states[k], samples, row),
                d_omega_cons[k],
                places=10,
            )
            self.assertAlmostEqual(
                dapi_volt_rate(self.params[k], states[k], samples, row, 0.95),
                d_e_cons[k],
                places=10,
            )

    def test_consensus_terms_cancel_in_the_sum(self):
        rng = np.random.default_rng(11)
        states = random_states(rng, 3)
        d_omega_cons, _ = consensus_rates(self.params, self.graph, states)
        k_i = np.array([p.k_i for p in self.params])
        d_omega = np.array([s.d_omega for s in states])
        total = float(np.sum(k_i * d_omega_cons))
        self.assertAlmostEqual(total, -float(np.sum(d_omega)))

    def test_zero_energy_weight_is_base_dapi(self):
        rng = np.random.default_rng(3)
        states = random_states(rng, 3)
        base = CommGraph.complete(3, a=1.0, b=1.0)
        shifted = [replace(s, dE=s.dE + 100.0) for s in states]
        expected = consensus_rates(self.params, base, states)
        actual = consensus_rates(self.params, base, shifted)
        np.testing.assert_allclose(actual[0], expected[0])

    def test_shared_reactive_power_replaces_filtered(self):
        rng = np.random.default_rng(5)
        states = random_states(rng, 3)
        samples = samples_for(self.params, states)
        row = self.graph.neighbors(0)
        params, state = self.params[0], states[0]
        _, q_ratio, _, _ = exchange_values(params, state, q_share=0.3)
        self.assertAlmostEqual(q_ratio, 0.3 / 0.24)
        self.assertAlmostEqual(
            dapi_volt_rate(params, state, samples, row, 1.0, q_share=0.3),
            dapi_volt_rate(params, replace(state, q_filt=0.3), samples, row, 1.0),
            places=12,
        )

    def test_missing_neighbors_are_skipped(self):
        state = InverterState(d_omega=-0.002, omega_cons=0.001, dE=1.0)
        row = self.graph.neighbors(0)
        rate = dapi_freq_rate(self.params[0], state, {}, row)
        self.assertAlmostEqual(rate, 0.002 / 0.05)

    def test_zero_reactive_setpoint_rejected(self):
        params = reference_params(q_set=0.0)
        with self.assertRaises(ConfigurationError):
            dapi_volt_rate(params, InverterState(), {}, self.graph.neighbors(0))
        with self.assertRaises(ConfigurationError):
            ConsensusGains.build([params] + self.params[1:], self.graph)


def test_steady_state_prediction_homogeneous():
    params = [reference_params(k + 1) for k in range(3)]
    prediction = steady_state_predict(params, 0.6e6)
    assert prediction.c == pytest.approx(0.2e6)
    assert prediction.c_pu == pytest.approx(0.08)
    assert prediction.omega_cons == pytest.approx([0.08 * 0.015625] * 3)


def test_steady_state_prediction_heterogeneous():
    params = [reference_params(1, s_max=5e6), reference_params(2), reference_params(3)]
    with pytest.raises(UnsupportedCaseError):
        steady_state_predict(params, 0.6e6)
