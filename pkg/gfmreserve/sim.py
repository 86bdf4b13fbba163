# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Fixed-step closed-loop scenario engine over the phasor plant."""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from gfmreserve.errors import (
    ConfigurationError,
    IntegrationError,
    UnsupportedCaseError,
)
from gfmreserve.model import CommGraph, InverterParams
from gfmreserve.netsolve import PhasorNetwork, apply_load_event, source_powers
from gfmreserve.primary import check_lpf
from gfmreserve.secondary import (
    ConsensusGains,
    ReserveState,
    energy_update,
    headroom_rates,
    steady_state_predict,
)
from gfmreserve.stability import find_operating_point
from gfmreserve.utils import max_pairwise_spread, pairwise_differences, rk4_step

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "inv", "P", "Q", "omega", "V", "Omega", "e_cons", "dE", "dF", "E", "F")
CHANNELS = ("freq_energy", "volt_energy", "power_sharing")

# state rows; droop inverters keep DOMEGA and VOLT at zero rate and use algebraic outputs
DELTA, DOMEGA, VOLT, OMEGA, ECONS, PF, QF, DE, DF, FCAP = range(10)
N_ROWS = 10


@dataclass(frozen=True)
class LoadSpec:
    bus: str
    p: float = 0.0
    q: float = 0.0


@dataclass(frozen=True)
class LoadStep:
    bus: str
    p: float = 0.0
    q: float = 0.0


@dataclass(frozen=True)
class LoadPickupRamp:
    """Connect loads and ramp the voltage setpoint up to nominal over ``ramp`` s."""

    loads: Tuple[LoadSpec, ...]
    ramp: float


@dataclass(frozen=True)
class GainChange:
    gain: str
    value: float
    inverter: Optional[int] = None


GRAPH_GAINS = ("a", "b", "e", "f")
INVERTER_GAINS = ("k_i", "kappa_i", "xi", "m", "n", "m_omega", "tau_v")

Payload = Union[LoadStep, LoadPickupRamp, GainChange]


@dataclass(frozen=True)
class Event:
    t: float
    payload: Payload

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


@dataclass(frozen=True)
class ControllerFlags:
    omega_c: float = 2 * math.pi * 5
    # droop inverters follow VSM dynamics with m_omega = tau_v = epsilon when set
    epsilon: Optional[float] = None
    vsm_power: str = "instantaneous"
    energy_integration: str = "rk4"

    def __post_init__(self):
        if self.vsm_power not in ("instantaneous", "filtered"):
            raise ConfigurationError(f"unknown vsm_power {self.vsm_power!r}")
        if self.energy_integration not in ("rk4", "trapezoidal"):
            raise ConfigurationError(
                f"unknown energy_integration {self.energy_integration!r}"
            )
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")


@dataclass(frozen=True)
class Scenario:
    duration: float
    dt: float
    network: PhasorNetwork
    params: Tuple[InverterParams, ...]
    graph: CommGraph
    events: Tuple[Event, ...] = ()
    controller: ControllerFlags = field(default_factory=ControllerFlags)
    record_interval: float = 0.01
    ramp_start_fraction: float = 0.9
    settle: float = 0.0
    band: float = 1e-3
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "events", tuple(self.events))
        if not (0 < self.dt <= self.duration):
            raise ConfigurationError("need 0 < dt <= duration")
        if self.record_interval < self.dt:
            raise ConfigurationError("record_interval must be at least dt")
        times = [event.t for event in self.events]
        if times != sorted(times):
            raise ConfigurationError("events must be time-sorted")
        for event in self.events:
            if not 0 <= event.t <= self.duration:
                raise ConfigurationError(f"event at t={event.t} outside the run")
            if isinstance(event.payload, LoadPickupRamp) and not event.payload.ramp > 0:
                raise ConfigurationError("ramp duration must be positive")
            if isinstance(event.payload, GainChange):
                gain = event.payload.gain
                if gain not in GRAPH_GAINS + INVERTER_GAINS:
                    raise ConfigurationError(f"unknown gain {gain!r}")
        check_lpf(self.controller.omega_c, self.dt)
        if len(self.params) != self.graph.n:
            raise ConfigurationError(
                f"graph has {self.graph.n} nodes for {len(self.params)} inverters"
            )
        bound = [b.inverter for b in self.network.bindings]
        if bound != [p.id for p in self.params]:
            raise ConfigurationError(
                f"network binds inverters {bound}, parameters list "
                f"{[p.id for p in self.params]}"
            )
        if not 0 < self.ramp_start_fraction <= 1.5:
            raise ConfigurationError("ramp_start_fraction out of range")
        ConsensusGains.build(self.params, self.graph)

    @property
    def has_pickup(self) -> bool:
        return any(isinstance(e.payload, LoadPickupRamp) for e in self.events)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def record_every(self) -> int:
        return max(1, int(round(self.record_interval / self.dt)))


@dataclass
class VoltageReference:
    """Setpoint in per-unit: held at ``start`` until a ramp begins, then linear to 1."""

    start: float = 1.0
    ramp_t0: Optional[float] = None
    ramp: float = 0.0

    def value(self, t: float) -> float:
        if self.ramp_t0 is None:
            return self.start
        frac = min(max((t - self.ramp_t0) / self.ramp, 0.0), 1.0)
        return self.start + (1.0 - self.start) * frac

    def rate(self, t: float) -> float:
        if self.ramp_t0 is None or not self.ramp_t0 <= t < self.ramp_t0 + self.ramp:
            return 0.0
        return (1.0 - self.start) / self.ramp


class ClosedLoop:
    """Vectorized right-hand side of every inverter against the network.

    The state is a (10, N) array flattened row-major; see the row constants.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.flags = scenario.controller
        self.network = scenario.network
        self.params: List[InverterParams] = list(scenario.params)
        self.graph = scenario.graph
        start = scenario.ramp_start_fraction if scenario.has_pickup else 1.0
        self.reference = VoltageReference(start=start)
        self.freeze_energy = False
        self._rebuild()

    def _rebuild(self) -> None:
        params = self.params
        def vec(name: str) -> np.ndarray:
            return np.array([getattr(p, name) for p in params], dtype=float)

        self.count = len(params)
        self.gains = ConsensusGains.build(params, self.graph)
        self.m = vec("m")
        self.n = vec("n")
        self.p_set = np.array([p.p_set_pu for p in params])
        self.q_set = np.array([p.q_set_pu for p in params])
        self.omega_nom = vec("omega_nom")
        self.scale = np.array([self.network.s_base / p.s_max for p in params])
        eps = self.flags.epsilon
        self.dynamic = np.array([p.is_vsm or eps is not None for p in params])
        self.m_omega = np.array(
            [p.m_omega if p.is_vsm else (eps or 1.0) for p in params]
        )
        self.tau_v = np.array([p.tau_v if p.is_vsm else (eps or 1.0) for p in params])
        # which dynamic inverters see instantaneous power
        filtered_vsm = self.flags.vsm_power == "filtered"
        self.instantaneous = np.array(
            [(not p.is_vsm) or not filtered_vsm for p in params]
        ) & self.dynamic

    def outputs(self, x: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(d_omega, V) per inverter in per-unit."""
        v_set = self.reference.value(t)
        d_omega = np.where(
            self.dynamic,
            x[DOMEGA],
            -self.m * (x[PF] - self.p_set) + x[OMEGA],
        )
        v = np.where(
            self.dynamic,
            x[VOLT],
            v_set - self.n * (x[QF] - self.q_set) + x[ECONS],
        )
        return d_omega, v

    def powers(self, x: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = source_powers(self.network, v, x[DELTA])
        return s.real * self.scale, s.imag * self.scale

    def derivative(self, t: float, flat: np.ndarray) -> np.ndarray:
        x = flat.reshape(N_ROWS, self.count)
        d_omega, v = self.outputs(x, t)
        p, q = self.powers(x, v)
        v_set = self.reference.value(t)
        dx = np.zeros_like(x)
        dx[DELTA] = self.omega_nom * d_omega
        p_used = np.where(self.instantaneous, p, x[PF])
        q_used = np.where(self.instantaneous, q, x[QF])
        dyn = self.dynamic
        dx[DOMEGA] = np.where(
            dyn,
            (-x[DOMEGA] - self.m * (p_used - self.p_set) + x[OMEGA]) / self.m_omega,
            0.0,
        )
        dx[VOLT] = np.where(
            dyn,
            (-(x[VOLT] - v_set) - self.n * (q_used - self.q_set) + x[ECONS]) / self.tau_v
            + self.reference.rate(t),
            0.0,
        )
        dx[PF] = self.flags.omega_c * (p - x[PF])
        dx[QF] = self.flags.omega_c * (q - x[QF])
        dx[OMEGA], dx[ECONS] = self.gains.rates(
            d_omega, x[OMEGA], v - v_set, q_used, x[DE], x[DF]
        )
        if not self.freeze_energy and self.flags.energy_integration == "rk4":
            dx[DE] = p - self.p_set
            dx[DF] = q - self.q_set
        return dx.reshape(-1)

    def headroom(self, flat: np.ndarray, t: float) -> np.ndarray:
        """Reactive headroom rate per inverter; FCAP is advanced outside RK4."""
        x = flat.reshape(N_ROWS, self.count)
        _, v = self.outputs(x, t)
        p, q = self.powers(x, v)
        return headroom_rates(p, q)

    def initial_state(self) -> np.ndarray:
        """Synchronized start: zero frequency deviation, filters at the injections."""
        v0 = self.reference.value(0.0)
        mags = np.full(self.count, v0)
        point = find_operating_point(self.network, self.params, mags)
        delta = point.delta if point.converged else np.zeros(self.count)
        x = np.zeros((N_ROWS, self.count))
        x[DELTA] = delta
        x[VOLT] = mags
        p, q = self.powers(x, mags)
        x[PF], x[QF] = p, q
        x[OMEGA] = self.m * (p - self.p_set)
        x[ECONS] = self.n * (q - self.q_set)
        return x.reshape(-1)

    def apply(self, event: Event) -> None:
        payload = event.payload
        logger.info("t=%.3fs applying %s", event.t, event.kind)
        if isinstance(payload, LoadStep):
            self.network = apply_load_event(self.network, payload.bus, payload.p, payload.q)
        elif isinstance(payload, LoadPickupRamp):
            for load in payload.loads:
                self.network = apply_load_event(self.network, load.bus, load.p, load.q)
            self.reference.ramp_t0 = event.t
            self.reference.ramp = payload.ramp
        elif isinstance(payload, GainChange):
            if payload.gain in GRAPH_GAINS:
                self.graph = self.graph.with_weight(payload.gain, payload.value)
            else:
                self.params = [
                    p.with_gain(payload.gain, payload.value)
                    if payload.inverter is None or p.id == payload.inverter
                    else p
                    for p in self.params
                ]
            self._rebuild()


@dataclass(frozen=True)
class TraceRecord:
    t: float
    values: Dict[int, Dict[str, float]]


class Trace:
    """Decimated samples kept per-unit; SI views follow the CSV column names."""

    FIELDS = ("p", "q", "d_omega", "v", "omega_cons", "e_cons", "dE", "dF", "f_capacity")

    def __init__(self, params: Sequence[InverterParams]):
        self.params = list(params)
        self.ids = [p.id for p in self.params]
        self._times: List[float] = []
        self._rows: Dict[str, List[np.ndarray]] = {name: [] for name in self.FIELDS}

    def __len__(self) -> int:
        return len(self._times)

    def append(self, t: float, **columns: np.ndarray) -> None:
        self._times.append(float(t))
        for name in self.FIELDS:
            self._rows[name].append(np.array(columns[name], dtype=float))

    @property
    def t(self) -> np.ndarray:
        return np.array(self._times)

    def column(self, name: str) -> np.ndarray:
        """(samples, inverters) array of a per-unit field."""
        rows = self._rows[name]
        return np.vstack(rows) if rows else np.zeros((0, len(self.ids)))

    def vector(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.params], dtype=float)

    def si(self) -> Dict[str, np.ndarray]:
        s_max = self.vector("s_max")
        dE = self.column("dE") * s_max
        dF = self.column("dF") * s_max
        return {
            "P": self.column("p") * s_max,
            "Q": self.column("q") * s_max,
            "omega": self.vector("omega_nom") * (1.0 + self.column("d_omega")),
            "V": self.column("v") * self.vector("v_nom"),
            "Omega": self.column("omega_cons") * self.vector("omega_nom"),
            "e_cons": self.column("e_cons") * self.vector("v_nom"),
            "dE": dE,
            "dF": dF,
            "E": self.vector("e_capacity") - dE,
            "F": self.column("f_capacity") * s_max - dF,
        }

    def records(self) -> Iterator[TraceRecord]:
        si = self.si()
        for k, t in enumerate(self._times):
            yield TraceRecord(
                t,
                {
                    inv: {name: float(si[name][k, i]) for name in CSV_HEADER[2:]}
                    for i, inv in enumerate(self.ids)
                },
            )

    def write_csv(self, path: str) -> None:
        si = self.si()
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for k, t in enumerate(self._times):
                for i, inv in enumerate(self.ids):
                    writer.writerow(
                        [repr(float(t)), inv]
                        + [repr(float(si[name][k, i])) for name in CSV_HEADER[2:]]
                    )


def channel_values(trace: Trace, channel: str) -> np.ndarray:
    """Per-inverter quantity a consensus channel drives to agreement."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    if channel == "freq_energy":
        values = trace.column("dE") * trace.vector("m")
    elif channel == "volt_energy":
        values = trace.column("dF") * trace.vector("n")
    elif channel == "power_sharing":
        p_set = np.array([p.p_set_pu for p in trace.params])
        values = (trace.column("p") - p_set) * trace.vector("m")
    else:
        raise ValueError(f"unknown consensus channel {channel!r}")
    return values


def consensus_error(trace: Trace, channel: str) -> np.ndarray:
    """Differences between consecutive inverters, shape (samples, N-1)."""
    return pairwise_differences(channel_values(trace, channel))


def consensus_spread(trace: Trace, channel: str) -> np.ndarray:
    """max_ij of the channel disagreement at each sample."""
    return max_pairwise_spread(channel_values(trace, channel))


@dataclass
class SimulationResult:
    trace: Trace
    metrics: Dict[str, Any]
    aborted: bool = False
    diagnostic: Optional[str] = None


def _settling_times(trace: Trace, scenario: Scenario) -> List[Dict[str, Any]]:
    t = trace.t
    dev = np.abs(trace.column("d_omega") * trace.vector("omega_nom")).max(axis=1)
    results = []
    times = [e.t for e in scenario.events]
    for k, event in enumerate(scenario.events):
        end = times[k + 1] if k + 1 < len(times) else math.inf
        window = (t >= event.t) & (t < end)
        outside = np.nonzero(window & (dev >= scenario.band))[0]
        if not window.any():
            settled = None
        elif outside.size == 0:
            settled = 0.0
        elif outside[-1] + 1 < len(t) and window[outside[-1] + 1]:
            settled = float(t[outside[-1] + 1] - event.t)
        else:
            settled = None
        results.append({"t": event.t, "kind": event.kind, "settling_time": settled})
    return results


def final_setpoint(scenario: Scenario) -> Tuple[PhasorNetwork, List[InverterParams], float]:
    """Network, parameters and voltage setpoint once every event has fired."""
    network = scenario.network
    params = list(scenario.params)
    start = scenario.ramp_start_fraction if scenario.has_pickup else 1.0
    reference = VoltageReference(start=start)
    for event in scenario.events:
        payload = event.payload
        if isinstance(payload, LoadStep):
            network = apply_load_event(network, payload.bus, payload.p, payload.q)
        elif isinstance(payload, LoadPickupRamp):
            for load in payload.loads:
                network = apply_load_event(network, load.bus, load.p, load.q)
            reference.ramp_t0, reference.ramp = event.t, payload.ramp
        elif isinstance(payload, GainChange) and payload.gain in INVERTER_GAINS:
            params = [
                p.with_gain(payload.gain, payload.value)
                if payload.inverter is None or p.id == payload.inverter
                else p
                for p in params
            ]
    return network, params, reference.value(scenario.duration)


def predicted_total_dp(scenario: Scenario) -> Optional[float]:
    """Total active power above the setpoints (W) once the loads have settled.

    Solved from the final network with equal droop terms and every inverter at
    the voltage setpoint; None when the operating point is not found.
    """
    network, params, v_set = final_setpoint(scenario)
    point = find_operating_point(network, params, np.full(len(params), v_set))
    if not point.converged:
        return None
    s = source_powers(network, point.v, point.delta) * network.s_base
    return float(s.real.sum() - sum(p.p_set for p in params))


def summarize(trace: Trace, scenario: Scenario) -> Dict[str, Any]:
    """Frequency and consensus metrics of a finished (or aborted) run."""
    metrics: Dict[str, Any] = {"scenario": scenario.name, "samples": len(trace)}
    if len(trace) == 0:
        return metrics
    si = trace.si()
    omega = si["omega"]
    omega_nom = trace.vector("omega_nom")
    metrics["frequency_nadir"] = float(omega.min())
    metrics["max_frequency_deviation"] = float(np.abs(omega - omega_nom).max())
    metrics["terminal_frequency_error"] = float(np.abs(omega[-1] - omega_nom).max())
    metrics["settling"] = _settling_times(trace, scenario)
    first_event = scenario.events[0].t if scenario.events else 0.0
    after = trace.t >= first_event
    consensus = {}
    if len(trace.ids) > 1:
        for channel in CHANNELS:
            spread = consensus_spread(trace, channel)
            peak = float(spread[after].max()) if after.any() else 0.0
            terminal = float(spread[-1])
            consensus[channel] = {
                "terminal": terminal,
                "peak": peak,
                "ratio": terminal / peak if peak > 0 else 0.0,
            }
    metrics["consensus"] = consensus
    measured_dp = si["P"][-1] - trace.vector("p_set")
    try:
        if len(trace.params) != len(scenario.params):
            raise UnsupportedCaseError("trace covers only some of the inverters")
        total_dp = predicted_total_dp(scenario)
        if total_dp is None:
            raise UnsupportedCaseError("steady-state operating point not found")
        prediction = steady_state_predict(trace.params, total_dp)
        measured_omega = trace.column("omega_cons")[-1]
        metrics["steady_state"] = {
            "total_dp_predicted": total_dp,
            "total_dp_measured": float(measured_dp.sum()),
            "c_predicted": prediction.c,
            "c_measured": float(measured_dp.mean()),
            "omega_cons_predicted": prediction.omega_cons,
            "omega_cons_measured": measured_omega.tolist(),
        }
    except UnsupportedCaseError as exc:
        logger.debug("no steady-state prediction: %s", exc)
        metrics["steady_state"] = None
    return metrics


def _record(trace: Trace, loop: ClosedLoop, x: np.ndarray, t: float) -> None:
    s = x.reshape(N_ROWS, loop.count)
    d_omega, v = loop.outputs(s, t)
    trace.append(
        t,
        p=s[PF],
        q=s[QF],
        d_omega=d_omega,
        v=v,
        omega_cons=s[OMEGA],
        e_cons=s[ECONS],
        dE=s[DE],
        dF=s[DF],
        f_capacity=s[FCAP],
    )


def _ledger_powers(
    loop: ClosedLoop, x: np.ndarray, t: float
) -> Tuple[np.ndarray, np.ndarray]:
    s = x.reshape(N_ROWS, loop.count)
    _, v = loop.outputs(s, t)
    p, q = loop.powers(s, v)
    return p - loop.p_set, q - loop.q_set


def _open_ledgers(
    loop: ClosedLoop, x: np.ndarray, t: float, ledgers: List[ReserveState]
) -> List[ReserveState]:
    """Restart the trapezoid at the post-event powers."""
    dp, dq = _ledger_powers(loop, x, t)
    return [
        replace(ledger, last_dp=dp[i], last_dq=dq[i])
        for i, ledger in enumerate(ledgers)
    ]


def _ledger_step(
    loop: ClosedLoop, x: np.ndarray, t: float, dt: float, ledgers: List[ReserveState]
) -> List[ReserveState]:
    s = x.reshape(N_ROWS, loop.count)
    dp, dq = _ledger_powers(loop, x, t)
    updated = []
    for i, ledger in enumerate(ledgers):
        ledger = energy_update(ledger, dp[i], dq[i], dt)
        s[DE, i], s[DF, i] = ledger.dE, ledger.dF
        updated.append(ledger)
    return updated


def initial_conditions(scenario: Scenario) -> np.ndarray:
    """Synchronized start, optionally settled with the energy integrators frozen.

    Raises IntegrationError when the pre-roll leaves the finite range.
    """
    loop = ClosedLoop(scenario)
    x = loop.initial_state()
    if scenario.settle > 0:
        loop.freeze_energy = True
        dt = scenario.dt
        for k in range(int(round(scenario.settle / dt))):
            x_next = rk4_step(loop.derivative, 0.0, x, dt)
            if not np.all(np.isfinite(x_next)):
                raise IntegrationError(
                    f"pre-roll diverged after {k * dt:.3f}s of settling "
                    f"({_non_finite(loop, x_next)})",
                    0.0,
                    x,
                )
            x = x_next
        logger.debug("pre-roll of %.2fs done", scenario.settle)
    return x


def _non_finite(loop: ClosedLoop, x: np.ndarray) -> str:
    bad = np.argwhere(~np.isfinite(x.reshape(N_ROWS, loop.count)))[0]
    return f"non-finite state row {int(bad[0])} of inverter {loop.params[bad[1]].id}"


def run(
    scenario: Scenario,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
) -> SimulationResult:
    """Integrate the scenario with classical RK4 at fixed step ``dt``.

    The reactive headroom ledger is advanced by the trapezoidal rule at step
    ends; the trapezoidal energy ledger does the same for dE and dF.
    """
    loop = ClosedLoop(scenario)
    trace = Trace(scenario.params)
    try:
        x = initial_conditions(scenario)
    except IntegrationError as error:
        logger.error("%s", error)
        metrics = summarize(trace, scenario)
        metrics.update(aborted=True, diagnostic=str(error))
        return SimulationResult(trace, metrics, True, str(error))
    dt = scenario.dt

    ledger_mode = scenario.controller.energy_integration == "trapezoidal"
    ledgers: List[ReserveState] = []
    if ledger_mode:
        ledgers = [
            ReserveState(e_capacity=par.e_capacity / par.s_max) for par in loop.params
        ]

    pending = list(scenario.events)
    steps, every = scenario.steps, scenario.record_every
    logger.info("running %s: %d steps of %gs", scenario.name, steps, dt)
    aborted, diagnostic = False, None
    for k in range(steps + 1):
        t = k * dt
        while pending and pending[0].t <= t + dt / 2:
            loop.apply(pending.pop(0))
        if k % every == 0 or k == steps:
            _record(trace, loop, x, t)
        if k == steps:
            break
        headroom_start = loop.headroom(x, t)
        if ledger_mode:
            ledgers = _open_ledgers(loop, x, t, ledgers)
        x_next = rk4_step(loop.derivative, t, x, dt)
        if not np.all(np.isfinite(x_next)):
            error = IntegrationError(_non_finite(loop, x_next), t + dt, x)
            logger.error("%s", error)
            if k % every != 0:
                _record(trace, loop, x, t)
            aborted, diagnostic = True, str(error)
            break
        x = x_next
        rows = x.reshape(N_ROWS, loop.count)
        rows[FCAP] += 0.5 * dt * (headroom_start + loop.headroom(x, t + dt))
        if ledger_mode:
            ledgers = _ledger_step(loop, x, t + dt, dt, ledgers)
        if on_step is not None:
            on_step(t + dt, x)
    metrics = summarize(trace, scenario)
    metrics["aborted"] = aborted
    if diagnostic:
        metrics["diagnostic"] = diagnostic
    return SimulationResult(trace, metrics, aborted, diagnostic)
