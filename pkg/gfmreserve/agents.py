# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Distributed secondary-control runtime: one agent per inverter plus a plant service.

Agents own every inverter state except the phase angle, which the plant
integrates. Each RK4 stage runs the same exchange: an agent sends ``ACT`` to the
plant, waits for ``MEAS``, publishes its consensus message and evaluates its
rates on the latest neighbor snapshot. The reactive headroom ledger is advanced
between steps from the measured powers.
"""

import asyncio
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import (
    Any,
    Awaitable,
    Callable,
    Dict,
    FrozenSet,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Type,
)

import numpy as np

from gfmreserve.errors import ConfigurationError, IntegrationError, TransportError
from gfmreserve.model import Edge, InverterKind, InverterParams, InverterState
from gfmreserve.netsolve import apply_load_event, source_powers
from gfmreserve.primary import droop_outputs, lpf_rate, vsm_derivatives
from gfmreserve.protocol import (
    ActRecord,
    ConsensusMsg,
    LineFramer,
    MeasRecord,
    Record,
    decode,
)
from gfmreserve.secondary import (
    NeighborView,
    Neighbors,
    dapi_freq_rate,
    dapi_volt_rate,
    exchange_values,
    headroom_rate,
    reactive_headroom,
)
from gfmreserve.sim import (
    DELTA,
    DOMEGA,
    FCAP,
    N_ROWS,
    ClosedLoop,
    Event,
    GainChange,
    LoadPickupRamp,
    LoadStep,
    Scenario,
    Trace,
    VoltageReference,
    initial_conditions,
    summarize,
)
from gfmreserve.utils import rk4_step

logger = logging.getLogger(__name__)

# local agent vector: sim rows DOMEGA..FCAP
LOCAL_ROWS = N_ROWS - 1
L_DOMEGA, L_VOLT, L_OMEGA, L_ECONS, L_PF, L_QF, L_DE, L_DF, L_FCAP = range(LOCAL_ROWS)

DEGRADED_STALENESS_TICKS = 10


@dataclass(frozen=True)
class LinkConfig:
    """Consensus link impairments and endpoints; times in milliseconds."""

    transport: str = "memory"
    delay_ms: float = 0.0
    jitter_ms: float = 0.0
    loss: float = 0.0
    tick_ms: float = 10.0
    silenced: FrozenSet[int] = frozenset()
    seed: int = 0
    realtime: bool = False
    overrun_budget_ms: float = 5.0
    plant: str = "127.0.0.1:47000"
    peers: Dict[int, str] = field(default_factory=dict)
    stage_timeout_s: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "silenced", frozenset(self.silenced))
        if self.transport not in ("memory", "datagram"):
            raise ConfigurationError(f"unknown transport {self.transport!r}")
        if self.delay_ms < 0 or self.jitter_ms < 0:
            raise ConfigurationError("delay and jitter must be non-negative")
        if not 0 <= self.loss < 1:
            raise ConfigurationError("loss probability must be in [0, 1)")
        if not self.tick_ms > 0:
            raise ConfigurationError("tick period must be positive")
        if not self.stage_timeout_s > 0:
            raise ConfigurationError("stage timeout must be positive")

    @property
    def tick(self) -> float:
        return self.tick_ms / 1000.0

    def address(self, inverter: Optional[int], index: int = 0) -> Tuple[str, int]:
        """Bind address of an agent, or of the plant when ``inverter`` is None."""
        if inverter is None:
            return parse_address(self.plant)
        if inverter in self.peers:
            return parse_address(self.peers[inverter])
        host, port = parse_address(self.plant)
        return host, port + 1 + index

    def link_up(self, sender: int, receiver: int) -> bool:
        return sender not in self.silenced and receiver not in self.silenced


def parse_address(text: str) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"address {text!r} is not host:port")
    return host or "127.0.0.1", int(port)


class AgentRates(NamedTuple):
    d_omega: float
    v: float
    omega_cons: float
    e_cons: float
    p_filt: float
    q_filt: float
    dE: float
    dF: float
    f_capacity: float


def outbound_message(
    params: InverterParams,
    state: InverterState,
    seq: int,
    t: float,
    q_share: Optional[float] = None,
) -> ConsensusMsg:
    return ConsensusMsg(params.id, seq, t, *exchange_values(params, state, q_share))


def agent_tick(
    state: InverterState,
    inbox: Neighbors,
    params: InverterParams,
    graph_row: Mapping[int, Edge],
    p: float,
    q: float,
    omega_c: float,
    v_set: float = 1.0,
    v_set_rate: float = 0.0,
    dynamic_params: Optional[InverterParams] = None,
    instantaneous: bool = True,
    integrate_energy: bool = True,
    seq: int = 0,
    t: float = 0.0,
) -> Tuple[AgentRates, ConsensusMsg]:
    """Rates of one agent's states from measured (p, q) and its neighbor snapshot.

    ``dynamic_params`` selects VSM dynamics (a droop inverter gets the rates of
    its algebraic outputs as zero). ``state.d_omega`` and ``state.v`` must hold
    the current outputs. Reactive sharing uses the same Q as the primary loop.
    The headroom ledger is left at zero rate; callers advance it between steps.
    """
    dd_omega = dv = 0.0
    q_share = None
    if dynamic_params is not None:
        if instantaneous:
            q_share = q
        p_used = p if instantaneous else state.p_filt
        q_used = q if instantaneous else state.q_filt
        _, dd_omega, dv = vsm_derivatives(
            dynamic_params, state, p_used, q_used, v_set, v_set_rate
        )
    if integrate_energy:
        energy = (p - params.p_set_pu, q - params.q_set_pu)
    else:
        energy = (0.0, 0.0)
    rates = AgentRates(
        dd_omega,
        dv,
        dapi_freq_rate(params, state, inbox, graph_row),
        dapi_volt_rate(params, state, inbox, graph_row, v_set, q_share),
        lpf_rate(state.p_filt, p, omega_c),
        lpf_rate(state.q_filt, q, omega_c),
        *energy,
        0.0,
    )
    return rates, outbound_message(params, state, seq, t, q_share)


class Agent:
    """Secondary controller of one inverter, seeing only its own states."""

    def __init__(
        self,
        scenario: Scenario,
        index: int,
        link: LinkConfig,
        x0: Sequence[float],
    ):
        self.index = index
        self.params = scenario.params[index]
        self.id = self.params.id
        self.flags = scenario.controller
        self.link = link
        self.dt = scenario.dt
        ids = [p.id for p in scenario.params]
        self._ids = ids
        self.graph = scenario.graph
        self.graph_row = self._row()
        self.view = NeighborView(self.id, self.graph_row)
        start = scenario.ramp_start_fraction if scenario.has_pickup else 1.0
        self.reference = VoltageReference(start=start)
        self.x0 = np.array(x0, dtype=float)
        self.p = float(self.x0[L_PF])
        self.q = float(self.x0[L_QF])
        self.seq = 0
        self.last_published = -math.inf
        self.sent = 0
        self.max_staleness = 0.0
        self._held: List[ConsensusMsg] = []
        self.trace = Trace([self.params])
        self._configure()

    def _row(self) -> Dict[int, Edge]:
        return {self._ids[j]: edge for j, edge in self.graph.neighbors(self.index).items()}

    def _configure(self) -> None:
        eps = self.flags.epsilon
        if self.params.is_vsm:
            self.dynamic_params: Optional[InverterParams] = self.params
            self.instantaneous = self.flags.vsm_power == "instantaneous"
        elif eps is not None:
            self.dynamic_params = replace(
                self.params, kind=InverterKind.VSM, m_omega=eps, tau_v=eps
            )
            self.instantaneous = True
        else:
            self.dynamic_params = None
            self.instantaneous = False

    def outputs(self, x: np.ndarray, t: float) -> Tuple[float, float]:
        if self.dynamic_params is not None:
            return float(x[L_DOMEGA]), float(x[L_VOLT])
        return droop_outputs(
            self.params,
            x[L_PF],
            x[L_QF],
            x[L_OMEGA],
            x[L_ECONS],
            self.reference.value(t),
        )

    def state(self, x: np.ndarray, t: float) -> InverterState:
        d_omega, v = self.outputs(x, t)
        return InverterState(
            d_omega=float(d_omega),
            v=float(v),
            omega_cons=float(x[L_OMEGA]),
            e_cons=float(x[L_ECONS]),
            p_filt=float(x[L_PF]),
            q_filt=float(x[L_QF]),
            dE=float(x[L_DE]),
            dF=float(x[L_DF]),
            f_capacity=float(x[L_FCAP]),
        )

    def act(self, x: np.ndarray, t: float) -> ActRecord:
        d_omega, v = self.outputs(x, t)
        p = self.params
        return ActRecord(p.id, p.omega_nom * (1.0 + d_omega), v * p.v_nom)

    def measure(self, record: MeasRecord) -> None:
        self.p = record.p / self.params.s_max
        self.q = record.q / self.params.s_max

    def q_share(self) -> Optional[float]:
        """Measured Q when the primary loop runs on it, else None for the filtered one."""
        if self.dynamic_params is not None and self.instantaneous:
            return self.q
        return None

    def headroom(self) -> float:
        return headroom_rate(1.0, self.p, self.q)

    def should_publish(self, t: float) -> bool:
        if self.id in self.link.silenced:
            return False
        if self.link.tick <= self.dt:
            return True
        return t - self.last_published >= self.link.tick - 1e-9

    def publish(self, x: np.ndarray, t: float) -> ConsensusMsg:
        self.seq += 1
        self.sent += 1
        self.last_published = t
        return outbound_message(
            self.params, self.state(x, t), self.seq, t, self.q_share()
        )

    def receive(self, msg: ConsensusMsg, received_at: float) -> None:
        if not self.view.accept(msg, received_at):
            logger.debug("agent %s dropped message %s/%s", self.id, msg.sender, msg.seq)

    def hold(self, msg: ConsensusMsg) -> None:
        """Queue a message that may belong to a stage this agent has not reached."""
        self._held.append(msg)

    def release(self, t: float) -> None:
        """Accept held messages stamped no later than this agent's current stage."""
        keep = []
        for msg in self._held:
            if msg.t < t - 1e-12 or (msg.t <= t + 1e-12 and msg.seq <= self.seq):
                self.receive(msg, t)
            else:
                keep.append(msg)
        self._held = keep

    def rates(self, x: np.ndarray, t: float) -> np.ndarray:
        samples = self.view.snapshot()
        if samples:
            self.max_staleness = max(
                self.max_staleness, max(t - s.t for s in samples.values())
            )
        rates, _ = agent_tick(
            self.state(x, t),
            samples,
            self.params,
            self.graph_row,
            self.p,
            self.q,
            self.flags.omega_c,
            v_set=self.reference.value(t),
            v_set_rate=self.reference.rate(t),
            dynamic_params=self.dynamic_params,
            instantaneous=self.instantaneous,
            seq=self.seq,
            t=t,
        )
        return np.array(rates)

    def apply(self, event: Event) -> None:
        payload = event.payload
        if isinstance(payload, LoadPickupRamp):
            self.reference.ramp_t0 = event.t
            self.reference.ramp = payload.ramp
        elif isinstance(payload, GainChange):
            if payload.gain in ("a", "b", "e", "f"):
                self.graph = self.graph.with_weight(payload.gain, payload.value)
                self.graph_row = self._row()
            elif payload.inverter is None or payload.inverter == self.id:
                self.params = self.params.with_gain(payload.gain, payload.value)
                self._configure()

    def sample(self, x: np.ndarray, t: float) -> Dict[str, float]:
        d_omega, v = self.outputs(x, t)
        values = {
            "p": x[L_PF],
            "q": x[L_QF],
            "d_omega": d_omega,
            "v": v,
            "omega_cons": x[L_OMEGA],
            "e_cons": x[L_ECONS],
            "dE": x[L_DE],
            "dF": x[L_DF],
            "f_capacity": x[L_FCAP],
        }
        self.trace.append(t, **{k: [val] for k, val in values.items()})
        return values

    def telemetry(self) -> Dict[str, Any]:
        never = sorted(self.view.never_heard())
        if never:
            logger.warning("agent %s never heard from %s", self.id, never)
        degraded = bool(never) or (
            self.max_staleness > DEGRADED_STALENESS_TICKS * max(self.link.tick, self.dt)
        )
        return {
            "inverter": self.id,
            "sent": self.sent,
            "accepted": self.view.accepted,
            "dropped_stale": self.view.dropped_stale,
            "dropped_foreign": self.view.dropped_foreign,
            "never_heard": never,
            "max_staleness": self.max_staleness,
            "degraded": degraded,
        }


class PlantService:
    """Phasor network driven by agents' ACT records; integrates the angles."""

    def __init__(self, scenario: Scenario):
        self.network = scenario.network
        self.ids = [p.id for p in scenario.params]
        self.omega_nom = np.array([p.omega_nom for p in scenario.params])
        self.v_nom = np.array([p.v_nom for p in scenario.params])

    def exchange(
        self, delta: np.ndarray, acts: Mapping[int, ActRecord]
    ) -> Tuple[List[MeasRecord], np.ndarray]:
        """MEAS records for every inverter and the angle rates."""
        omega = np.array([acts[i].omega for i in self.ids])
        v = np.array([acts[i].v for i in self.ids]) / self.v_nom
        s = source_powers(self.network, v, delta) * self.network.s_base
        meas = [
            MeasRecord(inv, float(s[k].real), float(s[k].imag))
            for k, inv in enumerate(self.ids)
        ]
        return meas, omega - self.omega_nom

    def apply(self, event: Event) -> None:
        payload = event.payload
        if isinstance(payload, LoadStep):
            self.network = apply_load_event(self.network, payload.bus, payload.p, payload.q)
        elif isinstance(payload, LoadPickupRamp):
            for load in payload.loads:
                self.network = apply_load_event(self.network, load.bus, load.p, load.q)


class MemoryTransport:
    """Virtual-time delivery queue with fixed delay, uniform jitter and seeded loss."""

    def __init__(self, link: LinkConfig, rng: Optional[np.random.Generator] = None):
        self.link = link
        self.rng = rng if rng is not None else np.random.default_rng(link.seed)
        self._queue: List[Tuple[float, int, int, bytes]] = []
        self._counter = itertools.count()
        self.lost: Dict[int, int] = {}
        self.blocked = 0

    def send(self, sender: int, receiver: int, payload: bytes, now: float) -> None:
        if not self.link.link_up(sender, receiver):
            self.blocked += 1
            return
        if self.link.loss > 0 and self.rng.random() < self.link.loss:
            self.lost[sender] = self.lost.get(sender, 0) + 1
            return
        delay = self.link.delay_ms
        if self.link.jitter_ms > 0:
            delay += self.rng.uniform(0.0, self.link.jitter_ms)
        heapq.heappush(
            self._queue, (now + delay / 1000.0, next(self._counter), receiver, payload)
        )

    def deliver(self, receiver: int, now: float) -> List[bytes]:
        """Payloads for ``receiver`` due by ``now``, in delivery order."""
        due, keep = [], []
        while self._queue and self._queue[0][0] <= now + 1e-12:
            item = heapq.heappop(self._queue)
            (due if item[2] == receiver else keep).append(item)
        for item in keep:
            heapq.heappush(self._queue, item)
        return [item[3] for item in due]


class Pacer:
    """Keeps simulated time from running ahead of the wall clock."""

    def __init__(self, realtime: bool, budget_ms: float):
        self.realtime = realtime
        self.budget = budget_ms / 1000.0
        self.overruns = 0
        self._start = time.perf_counter()

    def delay(self, sim_t: float) -> float:
        """Seconds to sleep before ``sim_t``; counts overruns past the budget."""
        if not self.realtime:
            return 0.0
        lag = (time.perf_counter() - self._start) - sim_t
        if lag > self.budget:
            self.overruns += 1
            if self.overruns == 1:
                logger.warning("tick overrun of %.1f ms at t=%.3fs", lag * 1e3, sim_t)
        return max(-lag, 0.0)

    def pace(self, sim_t: float) -> None:
        wait = self.delay(sim_t)
        if wait > 0:
            time.sleep(wait)

    async def apace(self, sim_t: float) -> None:
        wait = self.delay(sim_t)
        if wait > 0:
            await asyncio.sleep(wait)


@dataclass
class DistributedResult:
    trace: Trace
    metrics: Dict[str, Any]
    telemetry: Dict[int, Dict[str, Any]]
    aborted: bool = False
    diagnostic: Optional[str] = None


def _check_supported(scenario: Scenario) -> None:
    if scenario.controller.energy_integration != "rk4":
        raise ConfigurationError(
            "distributed runs integrate reserves inside RK4 only",
            "/controller/energy_integration",
        )


def _append_combined(trace: Trace, samples: List[Dict[str, float]], t: float) -> None:
    trace.append(t, **{name: [s[name] for s in samples] for name in Trace.FIELDS})


def merge_traces(scenario: Scenario, traces: Sequence[Trace]) -> Trace:
    """Combine single-inverter agent traces; samples past the shortest are dropped."""
    merged = Trace(scenario.params)
    columns = [{name: tr.column(name)[:, 0] for name in Trace.FIELDS} for tr in traces]
    times = min((tr.t for tr in traces), key=len)
    for k, t in enumerate(times):
        _append_combined(merged, [{n: c[n][k] for n in Trace.FIELDS} for c in columns], t)
    return merged


class MemoryRun:
    """All agents and the plant in one process over a ``MemoryTransport``."""

    def __init__(self, scenario: Scenario, link: LinkConfig):
        _check_supported(scenario)
        self.scenario = scenario
        self.link = link
        self.transport = MemoryTransport(link)
        self.preroll_error: Optional[IntegrationError] = None
        try:
            self.x0 = initial_conditions(scenario)
        except IntegrationError as error:
            self.preroll_error = error
            self.x0 = ClosedLoop(scenario).initial_state()
        x = self.x0.reshape(N_ROWS, len(scenario.params))
        self.agents = [
            Agent(scenario, i, link, x[DOMEGA:, i]) for i in range(len(scenario.params))
        ]
        self.plant = PlantService(scenario)
        self.pacer = Pacer(link.realtime, link.overrun_budget_ms)

    def _exchange(self, x: np.ndarray, t: float) -> np.ndarray:
        """Send every ACT through the plant and hand each agent its MEAS."""
        acts = {}
        for i, agent in enumerate(self.agents):
            record = decode(agent.act(x[DOMEGA:, i], t).encode())
            acts[record.inverter] = record
        meas, d_delta = self.plant.exchange(x[DELTA], acts)
        for i, agent in enumerate(self.agents):
            agent.measure(decode(meas[i].encode()))
        return d_delta

    def derivative(self, t: float, flat: np.ndarray) -> np.ndarray:
        count = len(self.agents)
        x = flat.reshape(N_ROWS, count)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(_non_finite_rows(x, self.agents), t, flat)
        dx = np.empty_like(x)
        dx[DELTA] = self._exchange(x, t)
        for i, agent in enumerate(self.agents):
            if agent.should_publish(t):
                payload = agent.publish(x[DOMEGA:, i], t).encode()
                for neighbor in agent.view.neighbors:
                    self.transport.send(agent.id, neighbor, payload, t)
        for i, agent in enumerate(self.agents):
            for payload in self.transport.deliver(agent.id, t):
                agent.receive(decode(payload), t)
            dx[DOMEGA:, i] = agent.rates(x[DOMEGA:, i], t)
        return dx.reshape(-1)

    def headroom(self, flat: np.ndarray, t: float) -> np.ndarray:
        """Reactive headroom rates from a plant exchange at ``flat``."""
        self._exchange(flat.reshape(N_ROWS, len(self.agents)), t)
        return np.array([agent.headroom() for agent in self.agents])

    def _telemetry(self) -> Dict[int, Dict[str, Any]]:
        telemetry = {}
        for agent in self.agents:
            info = agent.telemetry()
            info["lost"] = self.transport.lost.get(agent.id, 0)
            info["overruns"] = self.pacer.overruns
            telemetry[agent.id] = info
        return telemetry

    def run(self) -> DistributedResult:
        scenario = self.scenario
        count = len(self.agents)
        trace = Trace(scenario.params)
        if self.preroll_error is not None:
            diagnostic = str(self.preroll_error)
            logger.error("%s", diagnostic)
            metrics = summarize(trace, scenario)
            metrics.update(aborted=True, diagnostic=diagnostic)
            return DistributedResult(trace, metrics, self._telemetry(), True, diagnostic)
        pending = list(scenario.events)
        x = self.x0.copy()
        dt, steps, every = scenario.dt, scenario.steps, scenario.record_every
        aborted, diagnostic = False, None
        for k in range(steps + 1):
            t = k * dt
            while pending and pending[0].t <= t + dt / 2:
                event = pending.pop(0)
                logger.info("t=%.3fs applying %s", event.t, event.kind)
                self.plant.apply(event)
                for agent in self.agents:
                    agent.apply(event)
            cols = x.reshape(N_ROWS, count)
            if k % every == 0 or k == steps:
                _append_combined(
                    trace,
                    [a.sample(cols[DOMEGA:, i], t) for i, a in enumerate(self.agents)],
                    t,
                )
            if k == steps:
                break
            headroom_start = self.headroom(x, t)
            try:
                x_next = rk4_step(self.derivative, t, x, dt)
                if not np.all(np.isfinite(x_next)):
                    raise IntegrationError(
                        _non_finite_rows(x_next.reshape(N_ROWS, count), self.agents),
                        t + dt,
                        x,
                    )
            except IntegrationError as error:
                logger.error("%s", error)
                aborted, diagnostic = True, str(error)
                break
            x = x_next
            rows = x.reshape(N_ROWS, count)
            rows[FCAP] += 0.5 * dt * (headroom_start + self.headroom(x, t + dt))
            self.pacer.pace(t + dt)
        metrics = summarize(trace, scenario)
        metrics["aborted"] = aborted
        if diagnostic:
            metrics["diagnostic"] = diagnostic
        return DistributedResult(trace, metrics, self._telemetry(), aborted, diagnostic)


def _non_finite_rows(x: np.ndarray, agents: Sequence["Agent"]) -> str:
    bad = np.argwhere(~np.isfinite(x))[0]
    return f"non-finite state row {int(bad[0])} of inverter {agents[bad[1]].id}"


def run_distributed(link: LinkConfig, scenario: Scenario) -> DistributedResult:
    """Run every agent and the plant; datagram links go over loopback sockets."""
    if link.transport == "memory":
        return MemoryRun(scenario, link).run()
    return asyncio.run(run_roles(scenario, link, "all"))


class DatagramTransport(asyncio.DatagramProtocol):
    """UDP endpoint; consensus records go straight into a callback, the rest queue up."""

    def __init__(
        self,
        link: LinkConfig,
        rng: np.random.Generator,
        on_consensus: Optional[Callable[[ConsensusMsg], None]] = None,
    ):
        self.link = link
        self.rng = rng
        self.on_consensus = on_consensus
        self.framer = LineFramer()
        self.queue: "asyncio.Queue[Tuple[Record, Any]]" = asyncio.Queue()
        self.transport: Optional[asyncio.DatagramTransport] = None
        self.lost = 0

    @classmethod
    async def open(
        cls,
        bind: Tuple[str, int],
        link: LinkConfig,
        rng: np.random.Generator,
        on_consensus: Optional[Callable[[ConsensusMsg], None]] = None,
    ) -> "DatagramTransport":
        loop = asyncio.get_running_loop()
        try:
            _, protocol = await loop.create_datagram_endpoint(
                lambda: cls(link, rng, on_consensus), local_addr=bind
            )
        except OSError as e:
            logger.error("cannot bind %s:%s: %s", bind[0], bind[1], e)
            raise TransportError(f"cannot bind {bind[0]}:{bind[1]}: {e}") from e
        return protocol

    def connection_made(self, transport) -> None:
        self.transport = transport

    @property
    def address(self) -> Tuple[str, int]:
        return self.transport.get_extra_info("sockname")[:2]

    def datagram_received(self, data: bytes, addr) -> None:
        for record in self.framer.feed(data) + self.framer.flush():
            if isinstance(record, ConsensusMsg) and self.on_consensus is not None:
                self.on_consensus(record)
            else:
                self.queue.put_nowait((record, addr))

    def send(self, record: Record, addr: Tuple[str, int], impaired: bool = False) -> None:
        payload = record.encode()
        if impaired:
            if self.link.loss > 0 and self.rng.random() < self.link.loss:
                self.lost += 1
                return
            delay = self.link.delay_ms
            if self.link.jitter_ms > 0:
                delay += self.rng.uniform(0.0, self.link.jitter_ms)
            if delay > 0:
                asyncio.get_running_loop().call_later(
                    delay / 1000.0, self.transport.sendto, payload, addr
                )
                return
        self.transport.sendto(payload, addr)

    async def receive(self, kind: Type, timeout: float) -> Tuple[Record, Any]:
        """Next queued record of ``kind``; others are discarded."""
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                raise asyncio.TimeoutError
            record, addr = await asyncio.wait_for(self.queue.get(), remaining)
            if isinstance(record, kind):
                return record, addr
            logger.debug("ignoring unexpected %s record", record.TAG)

    def close(self) -> None:
        if self.transport is not None:
            self.transport.close()


async def rk4_step_async(
    fn: Callable[[float, np.ndarray], Awaitable[np.ndarray]],
    t: float,
    x: np.ndarray,
    dt: float,
) -> np.ndarray:
    k1 = await fn(t, x)
    k2 = await fn(t + dt / 2, x + dt / 2 * k1)
    k3 = await fn(t + dt / 2, x + dt / 2 * k2)
    k4 = await fn(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _events_due(pending: List[Event], t: float, dt: float) -> List[Event]:
    due = []
    while pending and pending[0].t <= t + dt / 2:
        due.append(pending.pop(0))
    return due


async def _plant_loop(
    scenario: Scenario,
    link: LinkConfig,
    endpoint: DatagramTransport,
    x0: np.ndarray,
    addresses: Mapping[int, Tuple[str, int]],
) -> int:
    """Serve MEAS for every stage; returns the number of stages with missing ACTs."""
    plant = PlantService(scenario)
    count = len(plant.ids)
    x = x0.reshape(N_ROWS, count)
    seed_agents = [Agent(scenario, i, link, x[DOMEGA:, i]) for i in range(count)]
    held = {a.id: a.act(x[DOMEGA:, i], 0.0) for i, a in enumerate(seed_agents)}
    missed = 0

    async def stage(t: float, delta: np.ndarray) -> np.ndarray:
        nonlocal missed
        fresh: Dict[int, ActRecord] = {}
        while len(fresh) < count:
            try:
                record, _ = await endpoint.receive(ActRecord, link.stage_timeout_s)
            except asyncio.TimeoutError:
                missed += 1
                logger.warning(
                    "t=%.3fs no ACT from %s", t, sorted(set(plant.ids) - set(fresh))
                )
                break
            if record.inverter in held:
                fresh[record.inverter] = record
        held.update(fresh)
        meas, d_delta = plant.exchange(delta, held)
        for record in meas:
            endpoint.send(record, addresses[record.inverter])
        return d_delta

    delta = x[DELTA].copy()
    pending = list(scenario.events)
    for k in range(scenario.steps):
        t = k * scenario.dt
        for event in _events_due(pending, t, scenario.dt):
            plant.apply(event)
        delta = await rk4_step_async(stage, t, delta, scenario.dt)
    return missed


async def _agent_loop(
    agent: Agent,
    scenario: Scenario,
    link: LinkConfig,
    endpoint: DatagramTransport,
    addresses: Mapping[int, Tuple[str, int]],
    plant_address: Tuple[str, int],
    pacer: Pacer,
) -> Optional[str]:
    """Run one agent to the end; returns a diagnostic if it aborted."""
    stage_headroom: List[float] = []

    async def stage(t: float, x: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"agent {agent.id} state non-finite", t, x)
        endpoint.send(agent.act(x, t), plant_address)
        try:
            record, _ = await endpoint.receive(MeasRecord, link.stage_timeout_s)
        except asyncio.TimeoutError as e:
            raise TransportError(f"agent {agent.id}: plant did not answer") from e
        agent.measure(record)
        stage_headroom.append(agent.headroom())
        if agent.should_publish(t):
            msg = agent.publish(x, t)
            for neighbor in agent.view.neighbors:
                if link.link_up(agent.id, neighbor):
                    endpoint.send(msg, addresses[neighbor], impaired=True)
        agent.release(t)
        return agent.rates(x, t)

    x = agent.x0.copy()
    pending = list(scenario.events)
    dt, steps, every = scenario.dt, scenario.steps, scenario.record_every
    for k in range(steps + 1):
        t = k * dt
        for event in _events_due(pending, t, dt):
            agent.apply(event)
        if k % every == 0 or k == steps:
            agent.sample(x, t)
        if k == steps:
            break
        stage_headroom.clear()
        try:
            x_next = await rk4_step_async(stage, t, x, dt)
            if not np.all(np.isfinite(x_next)):
                raise IntegrationError(f"agent {agent.id} state non-finite", t + dt, x)
        except IntegrationError as error:
            logger.error("%s", error)
            return str(error)
        # the last stage sits at t + dt; its measurement closes the trapezoid
        x_next[L_FCAP] = reactive_headroom(
            x_next[L_FCAP], 1.0, agent.p, agent.q, dt, previous_rate=stage_headroom[0]
        )
        x = x_next
        await pacer.apace(t + dt)
    return None


def parse_role(role: str, scenario: Scenario) -> Optional[int]:
    """None for the plant, the inverter id for ``agent:<id>``; "all" is handled by callers."""
    if role == "plant":
        return None
    prefix, _, ident = role.partition(":")
    if prefix != "agent" or not ident.lstrip("-").isdigit():
        raise ConfigurationError(f"unknown role {role!r}")
    inverter = int(ident)
    if inverter not in [p.id for p in scenario.params]:
        raise ConfigurationError(f"role {role!r} names no configured inverter")
    return inverter


async def run_roles(scenario: Scenario, link: LinkConfig, role: str) -> Any:
    """Run the plant, one agent, or everything over datagram sockets.

    ``all`` binds every endpoint in this process (ports may be 0) and returns a
    ``DistributedResult``; ``agent:<id>`` returns one for that agent alone;
    ``plant`` returns the count of stages served with missing ACTs.
    """
    _check_supported(scenario)
    ids = [p.id for p in scenario.params]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate inverter ids")
    rng = np.random.default_rng(link.seed)
    try:
        x0 = initial_conditions(scenario)
    except IntegrationError as error:
        if role == "plant":
            raise
        logger.error("%s", error)
        trace = Trace(
            [p for p in scenario.params if role == "all" or p.id == parse_role(role, scenario)]
        )
        metrics = summarize(trace, scenario)
        metrics.update(aborted=True, diagnostic=str(error))
        return DistributedResult(trace, metrics, {}, True, str(error))
    x = x0.reshape(N_ROWS, len(ids))
    agents = {
        inv: Agent(scenario, i, link, x[DOMEGA:, i]) for i, inv in enumerate(ids)
    }
    pacer = Pacer(link.realtime, link.overrun_budget_ms)
    wanted = ids if role == "all" else []
    single = None if role in ("all", "plant") else parse_role(role, scenario)
    if single is not None:
        wanted = [single]

    endpoints: Dict[Optional[int], DatagramTransport] = {}
    try:
        if role in ("all", "plant"):
            endpoints[None] = await DatagramTransport.open(link.address(None), link, rng)
        for inv in wanted:
            endpoints[inv] = await DatagramTransport.open(
                link.address(inv, ids.index(inv)),
                link,
                rng,
                on_consensus=agents[inv].hold,
            )
        addresses = {
            inv: endpoints[inv].address if inv in endpoints else link.address(inv, i)
            for i, inv in enumerate(ids)
        }
        plant_address = (
            endpoints[None].address if None in endpoints else link.address(None)
        )
        tasks: List[Awaitable[Any]] = []
        if None in endpoints:
            tasks.append(_plant_loop(scenario, link, endpoints[None], x0, addresses))
        for inv in wanted:
            tasks.append(
                _agent_loop(
                    agents[inv], scenario, link, endpoints[inv], addresses,
                    plant_address, pacer,
                )
            )
        outcomes = await asyncio.gather(*tasks)
    finally:
        for endpoint in endpoints.values():
            endpoint.close()

    if role == "plant":
        return outcomes[0]
    diagnostics = [d for d in outcomes[1 if role == "all" else 0:] if d]
    telemetry = {}
    for inv in wanted:
        info = agents[inv].telemetry()
        info["lost"] = endpoints[inv].lost
        info["overruns"] = pacer.overruns
        info["framing_errors"] = len(endpoints[inv].framer.errors)
        telemetry[inv] = info
    if role == "all":
        trace = merge_traces(scenario, [agents[inv].trace for inv in ids])
    else:
        trace = agents[single].trace
    metrics = summarize(trace, scenario)
    aborted = bool(diagnostics)
    metrics["aborted"] = aborted
    if diagnostics:
        metrics["diagnostic"] = "; ".join(diagnostics)
    return DistributedResult(
        trace, metrics, telemetry, aborted, "; ".join(diagnostics) or None
    )
