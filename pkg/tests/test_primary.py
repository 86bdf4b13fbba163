# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import math
import unittest

import numpy as np

from gfmreserve.errors import ConfigurationError
from gfmreserve.model import InverterState
from gfmreserve.primary import (
    InnerLoopGains,
    LcFilter,
    LcFilterState,
    check_lpf,
    droop_outputs,
    lc_filter_derivatives,
    lpf_step,
    simulate_lc_inverter,
    vsm_derivatives,
)
from tests.test_model import reference_params


class TestDroop(unittest.TestCase):
    def test_at_setpoint_no_deviation(self):
        params = reference_params()
        d_omega, v = droop_outputs(params, params.p_set_pu, params.q_set_pu, 0.0, 0.0)
        self.assertEqual(d_omega, 0.0)
        self.assertEqual(v, 1.0)

    def test_overload_lowers_frequency_and_voltage(self):
        params = reference_params()
        d_omega, v = droop_outputs(params, 0.58, 0.34, 0.0, 0.0)
        self.assertAlmostEqual(d_omega, -0.015625 * 0.1)
        self.assertAlmostEqual(v, 1.0 - 0.1276 * 0.1)

    def test_consensus_variables_shift_outputs(self):
        params = reference_params()
        d_omega, v = droop_outputs(params, 0.58, 0.24, 0.0015625, 0.01, v_set=0.9)
        self.assertAlmostEqual(d_omega, 0.0)
        self.assertAlmostEqual(v, 0.91)


class TestVsm(unittest.TestCase):
    def test_rest_point_matches_droop(self):
        params = reference_params(kind="vsm", m_omega=0.2, tau_v=0.05)
        p, q = 0.58, 0.30
        d_omega, v = droop_outputs(params, p, q, 0.001, 0.002)
        state = InverterState(d_omega=d_omega, v=v, omega_cons=0.001, e_cons=0.002)
        d_delta, dd_omega, dv = vsm_derivatives(params, state, p, q)
        self.assertAlmostEqual(d_delta, params.omega_nom * d_omega)
        self.assertAlmostEqual(dd_omega, 0.0)
        self.assertAlmostEqual(dv, 0.0)

    def test_ramp_rate_is_added(self):
        params = reference_params(kind="vsm", m_omega=0.2, tau_v=0.05)
        state = InverterState(v=0.95)
        _, _, dv = vsm_derivatives(
            params, state, params.p_set_pu, params.q_set_pu, v_set=0.95, v_set_rate=0.01
        )
        self.assertAlmostEqual(dv, 0.01)

    def test_droop_params_rejected(self):
        with self.assertRaises(ConfigurationError):
            vsm_derivatives(reference_params(), InverterState(), 0.0, 0.0)


class TestLowPassFilter(unittest.TestCase):
    def test_converges_to_input(self):
        y = 0.0
        for _ in range(2000):
            y = lpf_step(y, 0.5, 2 * math.pi * 5, 1e-3)
        self.assertAlmostEqual(y, 0.5, places=9)

    def test_unstable_step_rejected(self):
        with self.assertRaises(ConfigurationError):
            check_lpf(2 * math.pi * 5, 0.1)
        with self.assertRaises(ConfigurationError):
            check_lpf(0.0, 1e-3)


class TestLcFilter(unittest.TestCase):
    def test_invalid_components(self):
        with self.assertRaises(ConfigurationError):
            LcFilter(c_f=0.0, l_f=1e-4)
        with self.assertRaises(ConfigurationError):
            LcFilter(c_f=1e-4, l_f=1e-4, r_f=-1.0)

    def test_state_array_round_trip(self):
        params = LcFilter(c_f=1.5e-4, l_f=1e-4)
        state = LcFilterState(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, params)
        self.assertEqual(LcFilterState.from_array(state.as_array(), params), state)

    def test_resistive_steady_state(self):
        # v_g = R i_g with the inverter voltage chosen to hold it in the rotating frame
        params = LcFilter(c_f=1.5e-4, l_f=1e-4, r_f=0.01)
        omega = 2 * math.pi * 60
        r_load = 0.3
        v_gd, v_gq = 391.9, 0.0
        i_gd, i_gq = v_gd / r_load, v_gq / r_load
        i_d = i_gd - omega * params.c_f * v_gq
        i_q = i_gq + omega * params.c_f * v_gd
        v_d = v_gd - omega * params.l_f * i_q + params.r_f * i_d
        v_q = v_gq + omega * params.l_f * i_d + params.r_f * i_q
        state = LcFilterState(v_gd, v_gq, i_d, i_q, i_gd, i_gq, params)
        rates = lc_filter_derivatives(state, v_d, v_q, omega)
        np.testing.assert_allclose(rates, np.zeros(6), atol=1e-6)

    def test_grid_inductor_drives_grid_current(self):
        params = LcFilter(c_f=1.5e-4, l_f=1e-4, l_g=2e-4)
        state = LcFilterState(10.0, 0.0, 0.0, 0.0, 0.0, 0.0, params)
        rates = lc_filter_derivatives(state, 0.0, 0.0, 0.0, v_od=0.0, v_oq=0.0)
        self.assertAlmostEqual(rates[4], 10.0 / 2e-4)

    def test_bandwidth_order_enforced(self):
        params = LcFilter(c_f=1.5e-4, l_f=1e-4, r_f=0.01)
        with self.assertRaises(ConfigurationError):
            InnerLoopGains.pole_placement(params, 10000.0, 2000.0)

    def test_cascaded_loops_track_reference(self):
        params = LcFilter(c_f=1.5e-4, l_f=1e-4, r_f=0.01)
        gains = InnerLoopGains.pole_placement(params, 2000.0, 10000.0)
        trace = simulate_lc_inverter(
            params,
            gains,
            v_ref=391.9,
            load_resistance=0.3,
            omega=2 * math.pi * 60,
            duration=0.05,
            dt=1e-5,
        )
        self.assertEqual(len(trace.t), 5001)
        self.assertLess(abs(trace.v_gd[-1] - 391.9), 0.01 * 391.9)
        self.assertLess(abs(trace.v_gq[-1]), 0.01 * 391.9)
        self.assertTrue(all(math.isfinite(v) for v in trace.v_gd))
