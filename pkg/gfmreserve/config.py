# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Scenario documents: pydantic models, overrides and conversion to run objects.

Units: W, VAR, V, ohm, rad/s and s. Droop gains ``m`` and ``n`` are per-unit
on each inverter's own base.
"""

import copy
import json
import logging
import math
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

from gfmreserve.agents import LinkConfig
from gfmreserve.errors import ConfigurationError
from gfmreserve.model import NOMINAL_OMEGA, CommGraph, Edge, InverterParams
from gfmreserve.netsolve import Line, PhasorNetwork, SourceBinding, load_admittance
from gfmreserve.sim import (
    ControllerFlags,
    Event,
    GainChange,
    LoadPickupRamp,
    LoadSpec,
    LoadStep,
    Scenario,
)

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
EVENT_KINDS = ("LoadStep", "LoadPickupRamp", "GainChange")
# union branch names pydantic inserts into error locations
_BRANCH_NAMES = set(EVENT_KINDS) | {"str", "NetworkConfig"}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LineConfig(_Section):
    from_bus: str
    to_bus: str
    r: float = Field(ge=0)
    x: float


class SourceConfig(_Section):
    inverter: int
    bus: str
    r: float = Field(default=0.0, ge=0)
    x: float = 0.0


class LoadConfig(_Section):
    bus: str
    p: float = 0.0
    q: float = 0.0


class NetworkConfig(_Section):
    buses: List[str] = Field(min_length=1)
    lines: List[LineConfig] = []
    sources: List[SourceConfig] = Field(min_length=1)
    loads: List[LoadConfig] = []
    s_base: float = Field(gt=0)
    v_base: float = Field(gt=0)

    def build(self) -> PhasorNetwork:
        terms = tuple(
            (load.bus, load_admittance(load.p, load.q, self.v_base))
            for load in self.loads
            if load.p or load.q
        )
        return PhasorNetwork(
            buses=tuple(self.buses),
            lines=tuple(Line(li.from_bus, li.to_bus, li.r, li.x) for li in self.lines),
            bindings=tuple(
                SourceBinding(s.inverter, s.bus, s.r, s.x) for s in self.sources
            ),
            s_base=self.s_base,
            v_base=self.v_base,
            load_terms=terms,
        )


class InverterConfig(_Section):
    id: int
    kind: Literal["droop", "vsm"] = "droop"
    s_max: float = Field(gt=0)
    p_set: float
    q_set: float
    v_nom: float = Field(gt=0)
    m: float = Field(gt=0)
    n: float = Field(gt=0)
    k_i: float = Field(gt=0)
    kappa_i: float = Field(gt=0)
    xi: float = Field(default=0.1, ge=0)
    omega_nom: float = Field(default=NOMINAL_OMEGA, gt=0)
    m_omega: float = Field(default=0.0, ge=0)
    tau_v: float = Field(default=0.0, ge=0)
    e_capacity: Optional[float] = Field(default=None, gt=0)
    i_max: Optional[float] = Field(default=None, gt=0)

    def build(self) -> InverterParams:
        return InverterParams(**self.model_dump())


class EdgeConfig(_Section):
    """Edge between two inverter ids."""

    i: int
    j: int
    a: float = Field(default=1.0, ge=0)
    b: float = Field(default=1.0, ge=0)
    e: float = Field(default=0.0, ge=0)
    f: float = Field(default=0.0, ge=0)


class GraphConfig(_Section):
    topology: Literal["complete", "custom"] = "complete"
    a: float = Field(default=1.0, ge=0)
    b: float = Field(default=1.0, ge=0)
    e: float = Field(default=0.5, ge=0)
    f: float = Field(default=0.05, ge=0)
    edges: List[EdgeConfig] = []
    isolated: List[int] = []

    def build(self, ids: Sequence[int]) -> CommGraph:
        index = {inv: k for k, inv in enumerate(ids)}
        for inv in self.isolated:
            if inv not in index:
                raise ConfigurationError(f"unknown inverter {inv}", "/graph/isolated")
        isolated = {index[inv] for inv in self.isolated}
        if self.topology == "complete":
            graph = CommGraph.complete(len(ids), self.a, self.b, self.e, self.f)
            if isolated:
                graph = graph.isolate(isolated)
            return graph
        edges = []
        for k, edge in enumerate(self.edges):
            for end in (edge.i, edge.j):
                if end not in index:
                    raise ConfigurationError(
                        f"unknown inverter {end}", f"/graph/edges/{k}"
                    )
            edges.append(
                Edge(index[edge.i], index[edge.j], edge.a, edge.b, edge.e, edge.f)
            )
        return CommGraph(len(ids), tuple(edges), frozenset(isolated))


class ControllerConfig(_Section):
    """``mode: base`` runs plain DAPI (reserve weights forced to zero)."""

    mode: Literal["energy", "base"] = "energy"
    e: Optional[float] = Field(default=None, ge=0)
    f: Optional[float] = Field(default=None, ge=0)
    omega_c: float = Field(default=2 * math.pi * 5, gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)
    vsm_power: Literal["instantaneous", "filtered"] = "instantaneous"
    energy_integration: Literal["rk4", "trapezoidal"] = "rk4"

    def flags(self) -> ControllerFlags:
        return ControllerFlags(
            omega_c=self.omega_c,
            epsilon=self.epsilon,
            vsm_power=self.vsm_power,
            energy_integration=self.energy_integration,
        )

    def apply(self, graph: CommGraph) -> CommGraph:
        if self.mode == "base":
            return graph.with_weight("e", 0.0).with_weight("f", 0.0)
        if self.e is not None:
            graph = graph.with_weight("e", self.e)
        if self.f is not None:
            graph = graph.with_weight("f", self.f)
        return graph


class LoadStepConfig(_Section):
    kind: Literal["LoadStep"]
    t: float = Field(ge=0)
    bus: str
    p: float = 0.0
    q: float = 0.0


class LoadPickupConfig(_Section):
    kind: Literal["LoadPickupRamp"]
    t: float = Field(ge=0)
    loads: List[LoadConfig] = Field(min_length=1)
    ramp: float = Field(gt=0)


class GainChangeConfig(_Section):
    kind: Literal["GainChange"]
    t: float = Field(ge=0)
    gain: Literal["a", "b", "e", "f", "k_i", "kappa_i", "xi", "m", "n", "m_omega", "tau_v"]
    value: float = Field(ge=0)
    inverter: Optional[int] = None


EventConfig = Annotated[
    Union[LoadStepConfig, LoadPickupConfig, GainChangeConfig],
    Field(discriminator="kind"),
]


class SimConfig(_Section):
    duration: float = Field(gt=0)
    dt: float = Field(default=1e-3, gt=0)
    record_interval: float = Field(default=0.01, gt=0)
    ramp_start_fraction: float = Field(default=0.9, gt=0)
    settle: float = Field(default=0.0, ge=0)
    band: float = Field(default=1e-3, gt=0)


class AgentsConfig(_Section):
    transport: Literal["memory", "datagram"] = "memory"
    delay_ms: float = Field(default=0.0, ge=0)
    jitter_ms: float = Field(default=0.0, ge=0)
    loss: float = Field(default=0.0, ge=0, lt=1)
    tick_ms: float = Field(default=10.0, gt=0)
    silenced: List[int] = []
    realtime: bool = False
    overrun_budget_ms: float = Field(default=5.0, ge=0)
    plant: str = "127.0.0.1:47000"
    peers: Dict[int, str] = {}
    stage_timeout_s: float = Field(default=2.0, gt=0)

    def build(self, seed: int = 0) -> LinkConfig:
        return LinkConfig(**self.model_dump(), seed=seed)


class ScenarioConfig(_Section):
    name: str = "scenario"
    description: str = ""
    network: Union[str, NetworkConfig]
    inverters: List[InverterConfig] = Field(min_length=1)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    events: List[EventConfig] = []
    sim: SimConfig
    agents: AgentsConfig = Field(default_factory=AgentsConfig)

    _base_dir: Optional[Path] = PrivateAttr(default=None)

    @property
    def inverter_ids(self) -> List[int]:
        return [inv.id for inv in self.inverters]

    def network_config(self) -> NetworkConfig:
        if isinstance(self.network, NetworkConfig):
            return self.network
        path = resolve_network_path(self.network, self._base_dir)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            return NetworkConfig.model_validate(raw)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: {e}", "/network") from e
        except ValidationError as e:
            raise _to_configuration_error(e, prefix="/network") from e

    def inverter_params(self) -> List[InverterParams]:
        params = []
        for k, inv in enumerate(self.inverters):
            try:
                params.append(inv.build())
            except ConfigurationError as e:
                raise ConfigurationError(str(e), f"/inverters/{k}") from e
        if len(set(self.inverter_ids)) != len(self.inverters):
            raise ConfigurationError("duplicate inverter ids", "/inverters")
        return params

    def comm_graph(self) -> CommGraph:
        try:
            graph = self.graph.build(self.inverter_ids)
        except ConfigurationError as e:
            if e.pointer:
                raise
            raise ConfigurationError(str(e), "/graph") from e
        return self.controller.apply(graph)

    def network_model(self) -> PhasorNetwork:
        try:
            return self.network_config().build()
        except ConfigurationError as e:
            if e.pointer:
                raise
            raise ConfigurationError(str(e), "/network") from e

    def scenario_events(self) -> List[Event]:
        events = []
        for cfg in self.events:
            if isinstance(cfg, LoadStepConfig):
                payload: Any = LoadStep(cfg.bus, cfg.p, cfg.q)
            elif isinstance(cfg, LoadPickupConfig):
                payload = LoadPickupRamp(
                    tuple(LoadSpec(ld.bus, ld.p, ld.q) for ld in cfg.loads), cfg.ramp
                )
            else:
                payload = GainChange(cfg.gain, cfg.value, cfg.inverter)
            events.append(Event(cfg.t, payload))
        return events

    def to_scenario(self) -> Scenario:
        """Build the run object; domain checks report a JSON pointer."""
        params = self.inverter_params()
        graph = self.comm_graph()
        network = self.network_model()
        try:
            flags = self.controller.flags()
        except ConfigurationError as e:
            raise ConfigurationError(str(e), "/controller") from e
        try:
            return Scenario(
                duration=self.sim.duration,
                dt=self.sim.dt,
                network=network,
                params=tuple(params),
                graph=graph,
                events=tuple(self.scenario_events()),
                controller=flags,
                record_interval=self.sim.record_interval,
                ramp_start_fraction=self.sim.ramp_start_fraction,
                settle=self.sim.settle,
                band=self.sim.band,
                name=self.name,
            )
        except ConfigurationError as e:
            if e.pointer:
                raise
            raise ConfigurationError(str(e), "/sim") from e

    def link_config(self, seed: int = 0) -> LinkConfig:
        for inv in self.agents.silenced:
            if inv not in self.inverter_ids:
                raise ConfigurationError(f"unknown inverter {inv}", "/agents/silenced")
        try:
            return self.agents.build(seed)
        except ConfigurationError as e:
            raise ConfigurationError(str(e), "/agents") from e


def resolve_network_path(name: str, base_dir: Optional[Path]) -> Path:
    """A network file next to the scenario, else one of the bundled files."""
    candidates = []
    if base_dir is not None:
        candidates.append(base_dir / name)
    candidates.extend([Path(name), SCENARIO_DIR / name])
    for path in candidates:
        if path.is_file():
            return path
    raise ConfigurationError(f"network file {name!r} not found", "/network")


def json_pointer(loc: Sequence[Union[str, int]]) -> str:
    parts = [str(p) for p in loc if str(p) not in _BRANCH_NAMES]
    parts = [p.replace("~", "~0").replace("/", "~1") for p in parts]
    return "/" + "/".join(parts) if parts else ""


def _to_configuration_error(error: ValidationError, prefix: str = "") -> ConfigurationError:
    # deepest location first; union branches report a shallow error for every
    # alternative that failed to match
    issues = sorted(error.errors(), key=lambda item: -len(item["loc"]))
    first = issues[0]
    pointer = prefix + json_pointer(first["loc"])
    return ConfigurationError(first["msg"], pointer or "/")


def parse_override(text: str) -> Tuple[List[str], Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"override {text!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _set_path(node: Any, path: List[str], value: Any, done: List[str]) -> None:
    head, rest = path[0], path[1:]
    here = "/" + "/".join(done + [head])
    if head == "*":
        if isinstance(node, list):
            keys: List[Any] = list(range(len(node)))
        elif isinstance(node, dict):
            keys = list(node)
        else:
            raise ConfigurationError("wildcard needs a list or object", here)
        for key in keys:
            if rest:
                _set_path(node[key], rest, value, done + [str(key)])
            else:
                node[key] = copy.deepcopy(value)
        return
    if isinstance(node, list):
        if not head.lstrip("-").isdigit() or not -len(node) <= int(head) < len(node):
            raise ConfigurationError("no such list element", here)
        key: Any = int(head)
    elif isinstance(node, dict):
        key = head
        if rest and key not in node:
            node[key] = {}
    else:
        raise ConfigurationError("cannot descend into a scalar", here)
    if rest:
        _set_path(node[key], rest, value, done + [head])
    else:
        node[key] = value


def apply_overrides(document: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Return a copy of ``document`` with dotted-path ``key=value`` overrides applied.

    ``*`` matches every element of a list or object; values are parsed as JSON
    and fall back to plain strings.
    """
    result = copy.deepcopy(document)
    for text in overrides:
        path, value = parse_override(text)
        _set_path(result, path, value, [])
        logger.debug("override %s", text)
    return result


def parse_config(
    document: Dict[str, Any], base_dir: Optional[Path] = None
) -> ScenarioConfig:
    if not isinstance(document, dict):
        raise ConfigurationError("scenario must be a JSON object", "/")
    try:
        config = ScenarioConfig.model_validate(document)
    except ValidationError as e:
        raise _to_configuration_error(e) from e
    config._base_dir = base_dir
    return config


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"{path}: file not found") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e


def load_config(
    path: Union[str, Path], overrides: Sequence[str] = ()
) -> ScenarioConfig:
    """Read, override and validate a scenario file."""
    path = Path(path)
    document = apply_overrides(read_document(path), overrides)
    return parse_config(document, path.parent)


def dump_config(config: ScenarioConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def bundled_scenarios() -> List[str]:
    """Bundled scenario file names (the network file excluded)."""
    return sorted(
        p.name
        for p in SCENARIO_DIR.glob("*.json")
        if p.name != "ieee13_equivalent.json"
    )


def bundled_path(name: str) -> Path:
    path = SCENARIO_DIR / name
    if not path.is_file():
        raise ConfigurationError(f"no bundled scenario {name!r}")
    return path


def starter_document() -> Dict[str, Any]:
    """Scenario 1 with the proposed controller, as written by ``init``."""
    document = read_document(bundled_path("scenario1_droop_active.json"))
    document["name"] = "my_scenario"
    return document
