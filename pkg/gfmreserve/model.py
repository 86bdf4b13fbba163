# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Inverter parameters, dynamic state and the consensus communication graph."""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from gfmreserve.errors import ConfigurationError, GraphError

NOMINAL_OMEGA = 2.0 * math.pi * 60.0
WEIGHT_KINDS = ("a", "b", "e", "f")


class InverterKind(str, Enum):
    DROOP = "droop"
    VSM = "vsm"


@dataclass(frozen=True)
class InverterParams:
    """Ratings and gains of one inverter.

    Setpoints and ratings are SI. The droop gains ``m`` and ``n`` are per-unit on
    the inverter's own (s_max, v_nom, omega_nom) base, and every controller
    equation in this package runs on that base.
    """

    id: int
    kind: InverterKind
    s_max: float
    p_set: float
    q_set: float
    v_nom: float
    m: float
    n: float
    k_i: float
    kappa_i: float
    xi: float
    omega_nom: float = NOMINAL_OMEGA
    m_omega: float = 0.0
    tau_v: float = 0.0
    e_capacity: Optional[float] = None
    i_max: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.kind, InverterKind):
            object.__setattr__(self, "kind", InverterKind(self.kind))
        if self.e_capacity is None:
            # one hour at rating
            object.__setattr__(self, "e_capacity", 3600.0 * self.s_max)
        where = f"inverter {self.id}"
        if not self.s_max > 0:
            raise ConfigurationError(f"{where}: s_max must be positive")
        if self.p_set**2 + self.q_set**2 > self.s_max**2 * (1.0 + 1e-12):
            raise ConfigurationError(f"{where}: setpoint exceeds apparent rating")
        for name in ("m", "n", "k_i", "kappa_i", "v_nom", "omega_nom"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{where}: {name} must be positive")
        if self.xi < 0:
            raise ConfigurationError(f"{where}: xi must be non-negative")
        if self.kind is InverterKind.VSM and not (self.m_omega > 0 and self.tau_v > 0):
            raise ConfigurationError(f"{where}: VSM needs positive m_omega and tau_v")

    @property
    def p_set_pu(self) -> float:
        return self.p_set / self.s_max

    @property
    def q_set_pu(self) -> float:
        return self.q_set / self.s_max

    @property
    def is_vsm(self) -> bool:
        return self.kind is InverterKind.VSM

    def with_gain(self, name: str, value: float) -> "InverterParams":
        return dataclasses.replace(self, **{name: value})


@dataclass(frozen=True)
class InverterState:
    """Per-inverter dynamic state, per-unit on the inverter's own base.

    ``delta`` is in radians, ``dE``/``dF``/``f_capacity`` in pu-seconds.
    """

    delta: float = 0.0
    d_omega: float = 0.0
    v: float = 1.0
    omega_cons: float = 0.0
    e_cons: float = 0.0
    p_filt: float = 0.0
    q_filt: float = 0.0
    dE: float = 0.0
    dF: float = 0.0
    f_capacity: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in dataclasses.astuple(self))

    def to_si(self, params: InverterParams) -> Dict[str, float]:
        return {
            "delta": self.delta,
            "d_omega": self.d_omega * params.omega_nom,
            "v": self.v * params.v_nom,
            "omega_cons": self.omega_cons * params.omega_nom,
            "e_cons": self.e_cons * params.v_nom,
            "p_filt": self.p_filt * params.s_max,
            "q_filt": self.q_filt * params.s_max,
            "dE": self.dE * params.s_max,
            "dF": self.dF * params.s_max,
            "f_capacity": self.f_capacity * params.s_max,
        }


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    a: float = 0.0
    b: float = 0.0
    e: float = 0.0
    f: float = 0.0

    def weight(self, kind: str) -> float:
        if kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {kind!r}")
        return getattr(self, kind)

    def other(self, node: int) -> int:
        return self.j if node == self.i else self.i


@dataclass(frozen=True)
class CommGraph:
    """Undirected consensus graph over inverter indices 0..n-1.

    Nodes listed in ``isolated`` carry no edges and are left out of the
    connectivity requirement; they model agents whose links are down.
    """

    n: int
    edges: Tuple[Edge, ...] = ()
    isolated: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "isolated", frozenset(self.isolated))
        if self.n < 1:
            raise ConfigurationError("graph needs at least one node")
        seen = set()
        for edge in self.edges:
            if not (0 <= edge.i < self.n and 0 <= edge.j < self.n) or edge.i == edge.j:
                raise ConfigurationError(f"invalid edge ({edge.i}, {edge.j})")
            key = frozenset((edge.i, edge.j))
            if key in seen:
                raise ConfigurationError(f"duplicate edge ({edge.i}, {edge.j})")
            seen.add(key)
            if min(edge.a, edge.b, edge.e, edge.f) < 0:
                raise ConfigurationError(f"negative weight on edge ({edge.i}, {edge.j})")
            if edge.i in self.isolated or edge.j in self.isolated:
                raise ConfigurationError(f"edge ({edge.i}, {edge.j}) touches isolated node")
        components = self.components()
        if len(components) > 1:
            raise GraphError("communication graph is not connected", components)

    def components(self) -> List[List[int]]:
        active = [k for k in range(self.n) if k not in self.isolated]
        if len(active) <= 1:
            return [active] if active else []
        rows, cols = [], []
        for edge in self.edges:
            if edge.a + edge.b + edge.e + edge.f > 0:
                rows.append(edge.i)
                cols.append(edge.j)
        adjacency = csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)
        )
        _, labels = connected_components(adjacency, directed=False)
        groups: Dict[int, List[int]] = {}
        for node in active:
            groups.setdefault(int(labels[node]), []).append(node)
        return sorted(groups.values())

    @classmethod
    def complete(
        cls, n: int, a: float = 1.0, b: float = 1.0, e: float = 0.0, f: float = 0.0
    ) -> "CommGraph":
        edges = [
            Edge(i, j, a, b, e, f) for i in range(n) for j in range(i + 1, n)
        ]
        return cls(n, tuple(edges))

    def neighbors(self, node: int) -> Dict[int, Edge]:
        return {
            edge.other(node): edge
            for edge in self.edges
            if node in (edge.i, edge.j)
        }

    def with_weight(self, kind: str, value: float) -> "CommGraph":
        """Set one weight kind to ``value`` on every edge."""
        if kind not in WEIGHT_KINDS:
            raise ConfigurationError(f"unknown weight kind {kind!r}")
        edges = tuple(dataclasses.replace(edge, **{kind: value}) for edge in self.edges)
        return CommGraph(self.n, edges, self.isolated)

    def isolate(self, nodes: Iterable[int]) -> "CommGraph":
        dropped = frozenset(nodes) | self.isolated
        edges = tuple(
            edge for edge in self.edges if edge.i not in dropped and edge.j not in dropped
        )
        return CommGraph(self.n, edges, dropped)


def build_laplacian(graph: CommGraph, weight_kind: str) -> np.ndarray:
    """Dense weighted Laplacian L = D - W for one of the a, b, e, f weights."""
    if weight_kind not in WEIGHT_KINDS:
        raise ConfigurationError(f"unknown weight kind {weight_kind!r}")
    weights = np.zeros((graph.n, graph.n))
    for edge in graph.edges:
        w = edge.weight(weight_kind)
        weights[edge.i, edge.j] = w
        weights[edge.j, edge.i] = w
    return np.diag(weights.sum(axis=1)) - weights


class GammaRatios(NamedTuple):
    """Energy-to-consensus weight ratios; ``None`` marks a non-uniform channel."""

    gamma_e: Optional[float]
    gamma_f: Optional[float]

    @property
    def uniform(self) -> bool:
        return self.gamma_e is not None and self.gamma_f is not None


def _uniform_ratio(pairs: Iterable[Tuple[float, float]]) -> Optional[float]:
    ratio: Optional[float] = None
    for base, weight in pairs:
        if base == 0.0:
            if weight != 0.0:
                return None
            continue
        r = weight / base
        if ratio is None:
            ratio = r
        elif not math.isclose(r, ratio, rel_tol=1e-12, abs_tol=0.0):
            return None
    return 0.0 if ratio is None else ratio


def gamma_ratios(graph: CommGraph) -> GammaRatios:
    return GammaRatios(
        _uniform_ratio((edge.a, edge.e) for edge in graph.edges),
        _uniform_ratio((edge.b, edge.f) for edge in graph.edges),
    )
