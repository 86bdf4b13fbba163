# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""DAPI secondary control with regulation energy reserve consensus."""

import math
import threading
from dataclasses import dataclass, field, replace
from typing import (
    Dict,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np

from gfmreserve.errors import ConfigurationError, UnsupportedCaseError
from gfmreserve.model import (
    CommGraph,
    Edge,
    InverterParams,
    InverterState,
    build_laplacian,
)


@dataclass(frozen=True)
class ReserveState:
    """Energy imbalance ledger; unused reserves follow from the capacities.

    Units are whatever the caller integrates in (pu-seconds inside the engine).
    ``last_dp``/``last_dq`` hold the previous sample for trapezoidal updates.
    """

    e_capacity: float
    dE: float = 0.0
    dF: float = 0.0
    f_capacity: float = 0.0
    last_dp: Optional[float] = None
    last_dq: Optional[float] = None

    @property
    def e_unused(self) -> float:
        return self.e_capacity - self.dE

    @property
    def f_unused(self) -> float:
        return self.f_capacity - self.dF


def energy_update(reserve: ReserveState, dp: float, dq: float, dt: float) -> ReserveState:
    """Advance dE, dF by one trapezoidal step ending at samples (dp, dq).

    Without a previous sample the step is rectangular.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    prev_dp = dp if reserve.last_dp is None else reserve.last_dp
    prev_dq = dq if reserve.last_dq is None else reserve.last_dq
    return replace(
        reserve,
        dE=reserve.dE + 0.5 * (prev_dp + dp) * dt,
        dF=reserve.dF + 0.5 * (prev_dq + dq) * dt,
        last_dp=dp,
        last_dq=dq,
    )


def headroom_rate(s_max: float, p: float, q: float) -> float:
    """Unused reactive capability, clamped at zero when the rating is exhausted."""
    return max(math.sqrt(max(s_max * s_max - p * p, 0.0)) - abs(q), 0.0)


def headroom_rates(p: np.ndarray, q: np.ndarray, s_max: float = 1.0) -> np.ndarray:
    """Vectorized ``headroom_rate``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.maximum(np.sqrt(np.maximum(s_max * s_max - p * p, 0.0)) - np.abs(q), 0.0)


def reactive_headroom(
    f_capacity: float,
    s_max: float,
    p: float,
    q: float,
    dt: float,
    previous_rate: Optional[float] = None,
) -> float:
    """Accumulate headroom over one step ending at (p, q).

    Trapezoidal when the rate at the start of the step is known.
    """
    if s_max <= 0 or dt <= 0:
        raise ValueError("s_max and dt must be positive")
    rate = headroom_rate(s_max, p, q)
    if previous_rate is not None:
        rate = 0.5 * (rate + previous_rate)
    return f_capacity + rate * dt


class NeighborSample(NamedTuple):
    omega_cons: float
    q_ratio: float
    m_dE: float
    n_dF: float
    seq: int
    t: float
    received_at: float


class NeighborView:
    """Latest consensus values per declared neighbor.

    Written by the receive path, read by the control step through ``snapshot``.
    Messages from undeclared senders or with a non-increasing sequence number
    are dropped and counted.
    """

    def __init__(self, owner: int, neighbors: Iterable[int]):
        self.owner = owner
        self.neighbors: Set[int] = set(neighbors)
        self._latest: Dict[int, NeighborSample] = {}
        self._lock = threading.Lock()
        self.accepted = 0
        self.dropped_stale = 0
        self.dropped_foreign = 0

    def update(
        self,
        sender: int,
        seq: int,
        t: float,
        omega_cons: float,
        q_ratio: float,
        m_dE: float,
        n_dF: float,
        received_at: Optional[float] = None,
    ) -> bool:
        if sender not in self.neighbors:
            self.dropped_foreign += 1
            return False
        sample = NeighborSample(
            omega_cons, q_ratio, m_dE, n_dF, seq, t, t if received_at is None else received_at
        )
        with self._lock:
            previous = self._latest.get(sender)
            if previous is not None and seq <= previous.seq:
                self.dropped_stale += 1
                return False
            self._latest[sender] = sample
            self.accepted += 1
        return True

    def accept(self, msg, received_at: Optional[float] = None) -> bool:
        """Take a decoded consensus message (anything with the message fields)."""
        return self.update(
            msg.sender,
            msg.seq,
            msg.t,
            msg.omega_cons,
            msg.q_ratio,
            msg.m_dE,
            msg.n_dF,
            received_at,
        )

    def snapshot(self) -> Dict[int, NeighborSample]:
        with self._lock:
            return dict(self._latest)

    def never_heard(self) -> Set[int]:
        with self._lock:
            return self.neighbors - set(self._latest)


Neighbors = Union[NeighborView, Mapping[int, NeighborSample]]


def _samples(neighbors: Neighbors) -> Mapping[int, NeighborSample]:
    if isinstance(neighbors, NeighborView):
        return neighbors.snapshot()
    return neighbors


def exchange_values(
    params: InverterParams, state: InverterState, q_share: Optional[float] = None
) -> Tuple[float, float, float, float]:
    """(Omega, Q/Q*, m dE, n dF) as published to neighbors.

    Q is ``q_share`` when given, else the filtered reactive power.
    """
    q = state.q_filt if q_share is None else q_share
    q_ratio = q / params.q_set_pu if params.q_set != 0 else 0.0
    return state.omega_cons, q_ratio, params.m * state.dE, params.n * state.dF


def dapi_freq_rate(
    params: InverterParams,
    state: InverterState,
    neighbors: Neighbors,
    graph_row: Mapping[int, Edge],
) -> float:
    """dOmega/dt; neighbors without data are left out of the sums."""
    samples = _samples(neighbors)
    m_de = params.m * state.dE
    total = -state.d_omega
    for j, edge in graph_row.items():
        sample = samples.get(j)
        if sample is None:
            continue
        total -= edge.a * (state.omega_cons - sample.omega_cons)
        total -= edge.e * (m_de - sample.m_dE)
    return total / params.k_i


def dapi_volt_rate(
    params: InverterParams,
    state: InverterState,
    neighbors: Neighbors,
    graph_row: Mapping[int, Edge],
    v_set: float = 1.0,
    q_share: Optional[float] = None,
) -> float:
    """de/dt of the voltage consensus variable."""
    samples = _samples(neighbors)
    if params.q_set == 0 and any(edge.b != 0 for edge in graph_row.values()):
        raise ConfigurationError(
            f"inverter {params.id}: reactive sharing needs a nonzero Q setpoint"
        )
    _, q_ratio, _, n_df = exchange_values(params, state, q_share)
    total = -params.xi * (state.v - v_set)
    for j, edge in graph_row.items():
        sample = samples.get(j)
        if sample is None:
            continue
        total -= edge.b * (q_ratio - sample.q_ratio)
        total -= edge.f * (n_df - sample.n_dF)
    return total / params.kappa_i


def check_voltage_consensus(params: Sequence[InverterParams], graph: CommGraph) -> None:
    for edge in graph.edges:
        if edge.b == 0:
            continue
        for node in (edge.i, edge.j):
            if params[node].q_set == 0:
                raise ConfigurationError(
                    f"inverter {params[node].id}: reactive sharing needs a nonzero Q setpoint"
                )


@dataclass(frozen=True)
class ConsensusGains:
    """Vectorized DAPI gains and Laplacians for all inverters."""

    k_i: np.ndarray
    kappa_i: np.ndarray
    xi: np.ndarray
    m: np.ndarray
    n: np.ndarray
    q_set: np.ndarray
    l_a: np.ndarray
    l_b: np.ndarray
    l_e: np.ndarray
    l_f: np.ndarray

    @classmethod
    def build(cls, params: Sequence[InverterParams], graph: CommGraph) -> "ConsensusGains":
        if len(params) != graph.n:
            raise ConfigurationError(
                f"graph has {graph.n} nodes for {len(params)} inverters"
            )
        check_voltage_consensus(params, graph)
        q_set = np.array([p.q_set_pu for p in params])
        return cls(
            k_i=np.array([p.k_i for p in params]),
            kappa_i=np.array([p.kappa_i for p in params]),
            xi=np.array([p.xi for p in params]),
            m=np.array([p.m for p in params]),
            n=np.array([p.n for p in params]),
            q_set=np.where(q_set == 0, 1.0, q_set),
            l_a=build_laplacian(graph, "a"),
            l_b=build_laplacian(graph, "b"),
            l_e=build_laplacian(graph, "e"),
            l_f=build_laplacian(graph, "f"),
        )

    def rates(
        self,
        d_omega: np.ndarray,
        omega_cons: np.ndarray,
        v_dev: np.ndarray,
        q_share: np.ndarray,
        dE: np.ndarray,
        dF: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(dOmega/dt, de/dt) for every inverter.

        ``v_dev`` is V - v_set; ``q_share`` is the reactive power each inverter
        shares, the same one its primary loop responds to.
        """
        d_omega_cons = (
            -d_omega - self.l_a @ omega_cons - self.l_e @ (self.m * dE)
        ) / self.k_i
        d_e_cons = (
            -self.xi * v_dev
            - self.l_b @ (q_share / self.q_set)
            - self.l_f @ (self.n * dF)
        ) / self.kappa_i
        return d_omega_cons, d_e_cons


def consensus_rates(
    params: Sequence[InverterParams],
    graph: CommGraph,
    states: Sequence[InverterState],
    v_set: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Laplacian form of dapi_freq_rate and dapi_volt_rate over all inverters."""
    gains = ConsensusGains.build(params, graph)

    def col(name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in states])

    return gains.rates(
        col("d_omega"),
        col("omega_cons"),
        col("v") - v_set,
        col("q_filt"),
        col("dE"),
        col("dF"),
    )


@dataclass(frozen=True)
class SteadyStatePrediction:
    omega: float
    omega_cons: List[float] = field(default_factory=list)
    c: float = 0.0
    c_pu: float = 0.0


def steady_state_predict(
    params: Sequence[InverterParams], total_dp: float
) -> SteadyStatePrediction:
    """Equilibrium of the DAPI loop under equal sharing of ``total_dp`` watts.

    ``omega_cons`` is per-unit, ``c`` in watts per inverter.
    """
    if not params:
        raise ValueError("no inverters")
    first = params[0]
    for p in params[1:]:
        if not (
            math.isclose(p.m, first.m, rel_tol=1e-12)
            and math.isclose(p.s_max, first.s_max, rel_tol=1e-12)
        ):
            raise UnsupportedCaseError(
                "steady-state prediction needs homogeneous droop gains and ratings"
            )
    c = total_dp / len(params)
    c_pu = c / first.s_max
    return SteadyStatePrediction(
        omega=first.omega_nom,
        omega_cons=[c_pu * p.m for p in params],
        c=c,
        c_pu=c_pu,
    )
