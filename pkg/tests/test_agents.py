# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import unittest
from unittest import mock

import numpy as np

from gfmreserve.agents import (
    Agent,
    LinkConfig,
    MemoryRun,
    MemoryTransport,
    PlantService,
    parse_address,
    parse_role,
    run_distributed,
)
from gfmreserve.errors import ConfigurationError
from gfmreserve.model import CommGraph
from gfmreserve.protocol import ActRecord, ConsensusMsg
from gfmreserve.sim import (
    DELTA,
    DOMEGA,
    N_ROWS,
    PF,
    ClosedLoop,
    ControllerFlags,
    Event,
    LoadStep,
    Scenario,
    Trace,
    initial_conditions,
    run,
)
from tests.test_model import reference_params
from tests.test_sim import chain_network, make_scenario
from tests.test_stability import star_network


def stepped_scenario(duration=0.3, **kwargs) -> Scenario:
    return make_scenario(
        network=chain_network(),
        events=[Event(round(duration / 3, 3), LoadStep("a", 5e5))],
        duration=duration,
        record_interval=0.01,
        **kwargs,
    )


class TestLinkConfig(unittest.TestCase):
    def test_invalid_links(self):
        for changes in (
            {"transport": "carrier-pigeon"},
            {"delay_ms": -1.0},
            {"jitter_ms": -0.5},
            {"loss": 1.0},
            {"tick_ms": 0.0},
            {"stage_timeout_s": 0.0},
        ):
            with self.subTest(**changes):
                with self.assertRaises(ConfigurationError):
                    LinkConfig(**changes)

    def test_addresses(self):
        link = LinkConfig(plant="10.0.0.5:47000", peers={3: "10.0.0.9:5000"})
        self.assertEqual(link.address(None), ("10.0.0.5", 47000))
        self.assertEqual(link.address(1, 0), ("10.0.0.5", 47001))
        self.assertEqual(link.address(2, 1), ("10.0.0.5", 47002))
        self.assertEqual(link.address(3, 2), ("10.0.0.9", 5000))

    def test_parse_address(self):
        self.assertEqual(parse_address(":47000"), ("127.0.0.1", 47000))
        for text in ("localhost", "host:port", "host:"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigurationError):
                    parse_address(text)

    def test_silenced_inverter_has_no_links(self):
        link = LinkConfig(silenced=[2])
        self.assertEqual(link.silenced, frozenset({2}))
        self.assertFalse(link.link_up(1, 2))
        self.assertFalse(link.link_up(2, 3))
        self.assertTrue(link.link_up(1, 3))


class TestMemoryTransport(unittest.TestCase):
    def test_fixed_delay(self):
        transport = MemoryTransport(LinkConfig(delay_ms=5.0))
        transport.send(1, 2, b"first", 0.0)
        transport.send(1, 3, b"other", 0.0)
        self.assertEqual(transport.deliver(2, 0.004), [])
        self.assertEqual(transport.deliver(2, 0.005), [b"first"])
        self.assertEqual(transport.deliver(3, 0.005), [b"other"])

    def test_seeded_loss(self):
        def lost(seed):
            transport = MemoryTransport(LinkConfig(loss=0.5, seed=seed))
            for k in range(200):
                transport.send(1, 2, b"x", k * 1e-3)
            return transport.lost.get(1, 0)

        self.assertEqual(lost(4), lost(4))
        self.assertTrue(50 < lost(4) < 150)

    def test_silenced_links_are_blocked(self):
        transport = MemoryTransport(LinkConfig(silenced=[2]))
        transport.send(1, 2, b"x", 0.0)
        self.assertEqual(transport.blocked, 1)
        self.assertEqual(transport.deliver(2, 1.0), [])


class TestAgent(unittest.TestCase):
    def setUp(self):
        self.scenario = make_scenario()
        x = initial_conditions(self.scenario).reshape(N_ROWS, 3)
        self.x0 = x[DOMEGA:, 0]
        self.agent = Agent(self.scenario, 0, LinkConfig(tick_ms=1.0), self.x0)

    def test_act_commands_nominal_frequency_at_rest(self):
        record = self.agent.act(self.x0, 0.0)
        self.assertIsInstance(record, ActRecord)
        self.assertEqual(record.inverter, 1)
        self.assertAlmostEqual(record.omega, self.agent.params.omega_nom)
        self.assertAlmostEqual(record.v, 391.9)

    def test_held_messages_wait_for_their_stage(self):
        agent = self.agent
        agent.publish(self.x0, 0.0)
        agent.hold(ConsensusMsg(2, 1, 0.0, 0.0, 0.24, 0.0, 0.0))
        agent.hold(ConsensusMsg(3, 2, 0.0005, 0.0, 0.24, 0.0, 0.0))
        agent.release(0.0)
        self.assertEqual(set(agent.view.snapshot()), {2})
        agent.publish(self.x0, 0.0005)
        agent.release(0.0005)
        self.assertEqual(set(agent.view.snapshot()), {2, 3})

    def test_publish_period(self):
        agent = Agent(self.scenario, 0, LinkConfig(tick_ms=10.0), self.x0)
        self.assertTrue(agent.should_publish(0.0))
        agent.publish(self.x0, 0.0)
        self.assertFalse(agent.should_publish(0.005))
        self.assertTrue(agent.should_publish(0.01))

    def test_plant_reports_power_in_watts(self):
        plant = PlantService(self.scenario)
        x = initial_conditions(self.scenario).reshape(N_ROWS, 3)
        acts = {
            i + 1: Agent(self.scenario, i, LinkConfig(), x[DOMEGA:, i]).act(
                x[DOMEGA:, i], 0.0
            )
            for i in range(3)
        }
        meas, d_delta = plant.exchange(x[DELTA], acts)
        self.assertEqual([m.inverter for m in meas], [1, 2, 3])
        for i, record in enumerate(meas):
            expected = x[PF, i] * 2.5e6
            self.assertAlmostEqual(record.p, expected, delta=1e-9 * abs(expected))
        self.assertAlmostEqual(meas[0].p, meas[2].p, delta=1e-6 * meas[0].p)
        np.testing.assert_allclose(d_delta, np.zeros(3), atol=1e-9)


class TestMemoryRun(unittest.TestCase):
    def test_matches_centralized_simulator(self):
        scenario = stepped_scenario()
        central = run(scenario).trace
        result = run_distributed(LinkConfig(tick_ms=1.0), scenario)
        self.assertFalse(result.aborted)
        self.assertEqual(len(result.trace), len(central))
        for name in Trace.FIELDS:
            np.testing.assert_allclose(
                result.trace.column(name), central.column(name), rtol=0, atol=1e-6
            )

    def test_vsm_matches_centralized_simulator(self):
        params = [
            reference_params(k + 1, kind="vsm", m_omega=0.2, tau_v=0.05)
            for k in range(3)
        ]
        scenario = stepped_scenario(params=params)
        central = run(scenario).trace
        result = run_distributed(LinkConfig(tick_ms=1.0), scenario)
        self.assertFalse(result.aborted)
        for name in Trace.FIELDS:
            np.testing.assert_allclose(
                result.trace.column(name), central.column(name), rtol=0, atol=1e-6
            )

    def test_non_finite_rates_abort_with_diagnostic(self):
        def blow_up(self, x, t):
            return np.full(len(x), np.nan)

        with mock.patch.object(Agent, "rates", blow_up):
            result = run_distributed(LinkConfig(tick_ms=1.0), stepped_scenario(0.05))
        self.assertTrue(result.aborted)
        self.assertIn("non-finite", result.diagnostic)
        self.assertEqual(result.metrics["diagnostic"], result.diagnostic)
        self.assertEqual(len(result.trace), 1)

    def test_diverging_preroll_aborts(self):
        def blow_up(self, t, flat):
            return np.full_like(flat, np.nan)

        with mock.patch.object(ClosedLoop, "derivative", blow_up):
            result = run_distributed(
                LinkConfig(tick_ms=1.0), stepped_scenario(0.05, settle=0.01)
            )
        self.assertTrue(result.aborted)
        self.assertIn("pre-roll", result.diagnostic)
        self.assertEqual(len(result.trace), 0)

    def test_slow_reactive_consensus_rides_through_delay(self):
        params = [reference_params(k + 1, kappa_i=0.5) for k in range(3)]
        scenario = make_scenario(
            network=chain_network(),
            events=[Event(0.5, LoadStep("a", 5e5))],
            params=params,
            duration=4.0,
            record_interval=0.01,
        )
        result = run_distributed(LinkConfig(tick_ms=1.0, delay_ms=50.0), scenario)
        self.assertFalse(result.aborted)
        metrics = result.metrics
        self.assertLess(
            metrics["terminal_frequency_error"], 0.1 * metrics["max_frequency_deviation"]
        )
        self.assertTrue(
            all(info["max_staleness"] > 0.049 for info in result.telemetry.values())
        )

    def test_telemetry_without_impairments(self):
        result = run_distributed(LinkConfig(tick_ms=1.0), stepped_scenario(0.05))
        for inverter, info in result.telemetry.items():
            self.assertEqual(info["inverter"], inverter)
            self.assertEqual(info["never_heard"], [])
            self.assertFalse(info["degraded"])
            self.assertEqual(info["lost"], 0)
            self.assertEqual(info["dropped_stale"], 0)

    def test_silenced_agent_is_reported(self):
        link = LinkConfig(tick_ms=1.0, silenced=[3])
        result = run_distributed(link, stepped_scenario(0.05))
        self.assertFalse(result.aborted)
        self.assertEqual(result.telemetry[1]["never_heard"], [3])
        self.assertEqual(result.telemetry[3]["never_heard"], [1, 2])
        self.assertEqual(result.telemetry[3]["sent"], 0)
        self.assertTrue(all(info["degraded"] for info in result.telemetry.values()))

    def test_heavy_loss_stays_finite(self):
        link = LinkConfig(tick_ms=1.0, loss=0.99, seed=1)
        result = run_distributed(link, stepped_scenario(0.3))
        self.assertFalse(result.aborted)
        for name in Trace.FIELDS:
            self.assertTrue(np.all(np.isfinite(result.trace.column(name))))
        self.assertGreater(sum(info["lost"] for info in result.telemetry.values()), 0)

    def test_single_agent(self):
        scenario = Scenario(
            duration=0.05,
            dt=1e-3,
            network=star_network(1),
            params=(reference_params(1),),
            graph=CommGraph(1),
        )
        result = run_distributed(LinkConfig(tick_ms=1.0), scenario)
        self.assertFalse(result.aborted)
        self.assertEqual(result.telemetry[1]["never_heard"], [])
        self.assertEqual(result.trace.column("p").shape[1], 1)

    def test_trapezoidal_ledger_rejected(self):
        scenario = stepped_scenario(
            controller=ControllerFlags(energy_integration="trapezoidal")
        )
        with self.assertRaises(ConfigurationError):
            MemoryRun(scenario, LinkConfig())


class TestDatagramRun(unittest.TestCase):
    def test_loopback_run_completes(self):
        ephemeral = "127.0.0.1:0"
        link = LinkConfig(
            transport="datagram",
            tick_ms=1.0,
            plant=ephemeral,
            peers={1: ephemeral, 2: ephemeral, 3: ephemeral},
        )
        scenario = stepped_scenario(0.02)
        result = run_distributed(link, scenario)
        self.assertFalse(result.aborted)
        self.assertEqual(len(result.trace), len(run(scenario).trace))
        for info in result.telemetry.values():
            self.assertEqual(info["framing_errors"], 0)
            self.assertEqual(info["never_heard"], [])


class TestParseRole(unittest.TestCase):
    def test_roles(self):
        scenario = make_scenario()
        self.assertIsNone(parse_role("plant", scenario))
        self.assertEqual(parse_role("agent:2", scenario), 2)
        for role in ("agent:9", "agent:", "boss", "agent:two"):
            with self.subTest(role=role):
                with self.assertRaises(ConfigurationError):
                    parse_role(role, scenario)
