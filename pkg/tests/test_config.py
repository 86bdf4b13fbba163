# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

import json
import tempfile
import unittest
from pathlib import Path

import pytest

from gfmreserve.config import (
    SCENARIO_DIR,
    apply_overrides,
    bundled_path,
    bundled_scenarios,
    dump_config,
    json_pointer,
    load_config,
    parse_config,
    read_document,
    resolve_network_path,
    starter_document,
)
from gfmreserve.errors import ConfigurationError
from gfmreserve.sim import LoadPickupRamp, LoadStep


def scenario1_document():
    return read_document(bundled_path("scenario1_droop_active.json"))


def config_error(document, overrides=()):
    with pytest.raises(ConfigurationError) as excinfo:
        config = parse_config(apply_overrides(document, overrides), SCENARIO_DIR)
        config.to_scenario()
        config.link_config()
    return excinfo.value


class TestOverrides(unittest.TestCase):
    def test_wildcard_sets_every_inverter(self):
        document = scenario1_document()
        changed = apply_overrides(document, ["inverters.*.k_i=2.5"])
        self.assertEqual([inv["k_i"] for inv in changed["inverters"]], [2.5] * 3)
        self.assertEqual(document["inverters"][0]["k_i"], 0.05)

    def test_values_parse_as_json_with_string_fallback(self):
        changed = apply_overrides(
            {"sim": {}},
            ["sim.duration=2", "name=quick run", "agents.silenced=[3]", "x.y=true"],
        )
        self.assertEqual(changed["sim"]["duration"], 2)
        self.assertEqual(changed["name"], "quick run")
        self.assertEqual(changed["agents"]["silenced"], [3])
        self.assertIs(changed["x"]["y"], True)

    def test_list_index_and_wildcard_over_objects(self):
        changed = apply_overrides(
            {"inverters": [{"k_i": 1}, {"k_i": 1}], "graph": {"e": 1, "f": 1}},
            ["inverters.-1.k_i=3", "graph.*=0"],
        )
        self.assertEqual(changed["inverters"], [{"k_i": 1}, {"k_i": 3}])
        self.assertEqual(changed["graph"], {"e": 0, "f": 0})

    def test_bad_overrides(self):
        cases = [
            ("novalue", None),
            ("inverters.5.k_i=1", "/inverters/5"),
            ("sim.duration.x=1", "/sim/duration/x"),
            ("name.*=1", "/name/*"),
        ]
        document = {"name": "n", "inverters": [{}], "sim": {"duration": 1.0}}
        for text, pointer in cases:
            with self.subTest(override=text):
                with self.assertRaises(ConfigurationError) as ctx:
                    apply_overrides(document, [text])
                self.assertEqual(ctx.exception.pointer, pointer)


class TestValidationErrors(unittest.TestCase):
    def test_schema_errors_carry_json_pointer(self):
        cases = [
            ("inverters.1.s_max=-1", "/inverters/1/s_max"),
            ("events.1.t=-1", "/events/1/t"),
            ("sim.foo=1", "/sim/foo"),
            ('controller.mode="pid"', "/controller/mode"),
            ("agents.loss=1.5", "/agents/loss"),
        ]
        for override, pointer in cases:
            with self.subTest(override=override):
                error = config_error(scenario1_document(), [override])
                self.assertEqual(error.pointer, pointer)
                self.assertTrue(str(error).startswith(pointer + ": "))

    def test_domain_errors_carry_json_pointer(self):
        cases = [
            ("inverters.0.p_set=3e6", "/inverters/0"),
            ("inverters.2.id=1", "/inverters"),
            ("graph.isolated=[9]", "/graph/isolated"),
            ("agents.silenced=[9]", "/agents/silenced"),
            ("network=missing.json", "/network"),
        ]
        for override, pointer in cases:
            with self.subTest(override=override):
                self.assertEqual(
                    config_error(scenario1_document(), [override]).pointer, pointer
                )

    def test_non_object_document(self):
        with self.assertRaises(ConfigurationError):
            parse_config([1, 2, 3])

    def test_json_pointer_escaping(self):
        self.assertEqual(json_pointer(["a/b", "c~d", 0]), "/a~1b/c~0d/0")
        self.assertEqual(json_pointer(["events", 2, "LoadStep", "t"]), "/events/2/t")
        self.assertEqual(json_pointer([]), "")


class TestScenarioDocuments(unittest.TestCase):
    def test_bundled_scenarios_build(self):
        names = bundled_scenarios()
        self.assertNotIn("ieee13_equivalent.json", names)
        self.assertEqual(len(names), 8)
        for name in names:
            with self.subTest(scenario=name):
                scenario = load_config(bundled_path(name)).to_scenario()
                self.assertEqual(len(scenario.params), 3)
                self.assertEqual(len(scenario.network.buses), 13)

    def test_scenario1_events_and_weights(self):
        scenario = load_config(bundled_path("scenario1_droop_active.json")).to_scenario()
        self.assertIsInstance(scenario.events[0].payload, LoadPickupRamp)
        self.assertEqual(len(scenario.events[0].payload.loads), 9)
        self.assertIsInstance(scenario.events[1].payload, LoadStep)
        self.assertTrue(scenario.has_pickup)
        self.assertTrue(all(edge.e == 0.5 for edge in scenario.graph.edges))

    def test_base_mode_zeroes_reserve_weights(self):
        scenario = load_config(bundled_path("scenario1_droop_base.json")).to_scenario()
        self.assertTrue(all(e.e == 0.0 and e.f == 0.0 for e in scenario.graph.edges))

    def test_controller_weight_overrides_graph(self):
        config = load_config(
            bundled_path("scenario1_droop_active.json"), ["controller.e=0.25"]
        )
        graph = config.to_scenario().graph
        self.assertTrue(all(edge.e == 0.25 for edge in graph.edges))

    def test_dump_round_trip(self):
        config = load_config(bundled_path("scenario3_hetero_active.json"))
        dumped = dump_config(config)
        again = parse_config(json.loads(json.dumps(dumped)), SCENARIO_DIR)
        self.assertEqual(dump_config(again), dumped)
        self.assertEqual(again.inverters[0].kind, "vsm")

    def test_link_config_uses_agents_section(self):
        config = load_config(bundled_path("scenario2_vsm_active.json"))
        link = config.link_config(seed=7)
        self.assertEqual(link.transport, "memory")
        self.assertEqual(link.tick_ms, 1.0)
        self.assertEqual(link.seed, 7)

    def test_starter_document(self):
        document = starter_document()
        self.assertEqual(document["name"], "my_scenario")
        config = parse_config(document, SCENARIO_DIR)
        self.assertEqual(config.controller.mode, "energy")

    def test_inline_network(self):
        document = scenario1_document()
        document["network"] = read_document(SCENARIO_DIR / "ieee13_equivalent.json")
        document["events"] = []
        scenario = parse_config(document).to_scenario()
        self.assertEqual(scenario.network.buses[0], "650")


class TestFiles(unittest.TestCase):
    def test_network_next_to_scenario_wins(self):
        with tempfile.TemporaryDirectory() as tmp:
            local = Path(tmp) / "ieee13_equivalent.json"
            local.write_text("{}", encoding="utf-8")
            self.assertEqual(resolve_network_path(local.name, Path(tmp)), local)
            bundled = resolve_network_path("ieee13_equivalent.json", None)
            self.assertEqual(bundled, SCENARIO_DIR / "ieee13_equivalent.json")
            with self.assertRaises(ConfigurationError):
                resolve_network_path("nowhere.json", Path(tmp))

    def test_unreadable_documents(self):
        with tempfile.TemporaryDirectory() as tmp:
            broken = Path(tmp) / "broken.json"
            broken.write_text("{not json", encoding="utf-8")
            with self.assertRaises(ConfigurationError) as ctx:
                read_document(broken)
            self.assertIn("invalid JSON", str(ctx.exception))
            with self.assertRaises(ConfigurationError):
                read_document(Path(tmp) / "absent.json")

    def test_bundled_path_unknown(self):
        with self.assertRaises(ConfigurationError):
            bundled_path("no_such_scenario.json")
