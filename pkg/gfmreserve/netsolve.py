# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Balanced phasor network with inverters as voltage sources behind a coupling impedance."""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from gfmreserve.errors import ConfigurationError, GraphError, SolverError

logger = logging.getLogger(__name__)

# reduced admittance blocks with a worse condition number are treated as singular
SINGULAR_CONDITION = 1e13


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    r: float
    x: float

    @property
    def impedance(self) -> complex:
        return complex(self.r, self.x)


@dataclass(frozen=True)
class SourceBinding:
    """Inverter terminal: bus plus the filter/coupling impedance in ohms."""

    inverter: int
    bus: str
    r: float = 0.0
    x: float = 0.0

    @property
    def impedance(self) -> complex:
        return complex(self.r, self.x)


def load_admittance(p: float, q: float, v: float) -> complex:
    """Constant-impedance equivalent of a (p, q) load drawn at voltage ``v``."""
    return complex(p, -q) / (v * v)


@dataclass(frozen=True)
class PhasorNetwork:
    """Bus/line model in ohms and siemens; solves run per-unit on (s_base, v_base).

    Loads are kept as a list of admittance increments per bus so that an event
    followed by its inverse restores the original value bit for bit.
    """

    buses: Tuple[str, ...]
    lines: Tuple[Line, ...]
    bindings: Tuple[SourceBinding, ...]
    s_base: float
    v_base: float
    load_terms: Tuple[Tuple[str, complex], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(str(b) for b in self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "bindings", tuple(self.bindings))
        object.__setattr__(self, "load_terms", tuple(self.load_terms))
        if len(set(self.buses)) != len(self.buses):
            raise ConfigurationError("duplicate bus ids")
        if not (self.s_base > 0 and self.v_base > 0):
            raise ConfigurationError("s_base and v_base must be positive")
        known = set(self.buses)
        for line in self.lines:
            if line.from_bus not in known or line.to_bus not in known:
                raise ConfigurationError(
                    f"line {line.from_bus}-{line.to_bus} references an unknown bus"
                )
            if line.r < 0:
                raise ConfigurationError(f"line {line.from_bus}-{line.to_bus}: r < 0")
            if line.impedance == 0:
                raise ConfigurationError(
                    f"line {line.from_bus}-{line.to_bus}: zero impedance"
                )
        stiff = set()
        for binding in self.bindings:
            if binding.bus not in known:
                raise ConfigurationError(
                    f"inverter {binding.inverter} bound to unknown bus {binding.bus}"
                )
            if binding.r < 0:
                raise ConfigurationError(f"inverter {binding.inverter}: r < 0")
            if binding.impedance == 0:
                if binding.bus in stiff:
                    raise ConfigurationError(
                        f"two stiff sources share bus {binding.bus}"
                    )
                stiff.add(binding.bus)
        for bus, _ in self.load_terms:
            if bus not in known:
                raise ConfigurationError(f"load on unknown bus {bus}")
        self._check_connected()

    def _check_connected(self) -> None:
        index = self.bus_index
        if len(self.buses) < 2:
            return
        rows = [index[line.from_bus] for line in self.lines]
        cols = [index[line.to_bus] for line in self.lines]
        adjacency = csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(self.buses),) * 2
        )
        count, labels = connected_components(adjacency, directed=False)
        if count > 1:
            groups: Dict[int, List[str]] = {}
            for bus, label in zip(self.buses, labels):
                groups.setdefault(int(label), []).append(bus)
            raise GraphError("electrical network is not connected", list(groups.values()))

    @cached_property
    def bus_index(self) -> Dict[str, int]:
        return {bus: k for k, bus in enumerate(self.buses)}

    @property
    def y_base(self) -> float:
        return self.s_base / self.v_base**2

    @property
    def loads(self) -> Dict[str, complex]:
        """Total shunt admittance per bus in siemens."""
        grouped: Dict[str, List[complex]] = {}
        for bus, y in self.load_terms:
            grouped.setdefault(bus, []).append(y)
        return {
            bus: complex(math.fsum(y.real for y in ys), math.fsum(y.imag for y in ys))
            for bus, ys in grouped.items()
        }

    @cached_property
    def source_nodes(self) -> Tuple[int, ...]:
        nodes = []
        extra = len(self.buses)
        for binding in self.bindings:
            if binding.impedance == 0:
                nodes.append(self.bus_index[binding.bus])
            else:
                nodes.append(extra)
                extra += 1
        return tuple(nodes)

    @cached_property
    def y_bus(self) -> np.ndarray:
        """Nodal admittance in per-unit over buses then internal source nodes."""
        n_internal = sum(1 for b in self.bindings if b.impedance != 0)
        size = len(self.buses) + n_internal
        y = np.zeros((size, size), dtype=complex)
        z_base = 1.0 / self.y_base

        def branch(i: int, j: int, z: complex) -> None:
            yb = z_base / z
            y[i, i] += yb
            y[j, j] += yb
            y[i, j] -= yb
            y[j, i] -= yb

        for line in self.lines:
            branch(self.bus_index[line.from_bus], self.bus_index[line.to_bus], line.impedance)
        for binding, node in zip(self.bindings, self.source_nodes):
            if binding.impedance != 0:
                branch(node, self.bus_index[binding.bus], binding.impedance)
        for bus, y_load in self.loads.items():
            k = self.bus_index[bus]
            y[k, k] += y_load / self.y_base
        return y

    @cached_property
    def _reduction(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        y = self.y_bus
        src = np.array(self.source_nodes, dtype=int)
        taken = set(self.source_nodes)
        rest = np.array([k for k in range(y.shape[0]) if k not in taken], dtype=int)
        y_ss = y[np.ix_(src, src)]
        if rest.size == 0:
            return y_ss, None
        y_nn = y[np.ix_(rest, rest)]
        condition = np.linalg.cond(y_nn)
        if not np.isfinite(condition) or condition > SINGULAR_CONDITION:
            raise SolverError("reduced admittance matrix is singular")
        back = -np.linalg.solve(y_nn, y[np.ix_(rest, src)])
        logger.debug("Kron reduction to %d source nodes", src.size)
        return y_ss + y[np.ix_(src, rest)] @ back, back

    @property
    def y_reduced(self) -> np.ndarray:
        """Kron-reduced admittance seen from the source nodes."""
        return self._reduction[0]


@dataclass(frozen=True)
class NetworkSolution:
    """All node voltages and source injections of one solve, per-unit."""

    network: PhasorNetwork
    node_voltages: np.ndarray
    source_currents: np.ndarray

    @property
    def source_voltages(self) -> np.ndarray:
        return self.node_voltages[list(self.network.source_nodes)]

    @property
    def injections(self) -> np.ndarray:
        return self.source_voltages * np.conj(self.source_currents)

    def load_consumption(self) -> complex:
        net = self.network
        total = 0j
        for bus, y_load in net.loads.items():
            v = self.node_voltages[net.bus_index[bus]]
            total += abs(v) ** 2 * np.conj(y_load / net.y_base)
        return complex(total)

    def branch_losses(self) -> complex:
        net = self.network
        z_base = 1.0 / net.y_base
        total = 0j
        for line in net.lines:
            dv = (
                self.node_voltages[net.bus_index[line.from_bus]]
                - self.node_voltages[net.bus_index[line.to_bus]]
            )
            total += abs(dv) ** 2 * np.conj(z_base / line.impedance)
        for binding, node in zip(net.bindings, net.source_nodes):
            if binding.impedance != 0:
                dv = self.node_voltages[node] - self.node_voltages[net.bus_index[binding.bus]]
                total += abs(dv) ** 2 * np.conj(z_base / binding.impedance)
        return complex(total)


def _phasors(net: PhasorNetwork, sources: Sequence[Tuple[float, float]]) -> np.ndarray:
    if len(sources) != len(net.bindings):
        raise ConfigurationError(
            f"expected {len(net.bindings)} source phasors, got {len(sources)}"
        )
    mags = np.array([s[0] for s in sources], dtype=float)
    angles = np.array([s[1] for s in sources], dtype=float)
    return mags * np.exp(1j * angles)


def solve(net: PhasorNetwork, sources: Sequence[Tuple[float, float]]) -> NetworkSolution:
    """Solve the nodal equations for source phasors given as (|V| pu, angle rad)."""
    v_src = _phasors(net, sources)
    y_red, back = net._reduction
    voltages = np.zeros(net.y_bus.shape[0], dtype=complex)
    voltages[list(net.source_nodes)] = v_src
    if back is not None:
        taken = set(net.source_nodes)
        rest = [k for k in range(voltages.size) if k not in taken]
        voltages[rest] = back @ v_src
    return NetworkSolution(net, voltages, y_red @ v_src)


def solve_injections(
    net: PhasorNetwork, sources: Sequence[Tuple[float, float]]
) -> List[Tuple[float, float]]:
    """Per-inverter (P, Q) in per-unit of the network base."""
    s = solve(net, sources).injections
    return [(float(v.real), float(v.imag)) for v in s]


def source_powers(
    net: PhasorNetwork, magnitudes: np.ndarray, angles: np.ndarray
) -> np.ndarray:
    """Vectorized injections for the integration loop."""
    v = magnitudes * np.exp(1j * angles)
    return v * np.conj(net.y_reduced @ v)


def power_jacobians(
    net: PhasorNetwork, sources: Sequence[Tuple[float, float]]
) -> Tuple[np.ndarray, np.ndarray]:
    """dS/dangle and dS/d|V| at the source nodes of the reduced network."""
    v = _phasors(net, sources)
    y = net.y_reduced
    i = y @ v
    diag_v = np.diag(v)
    diag_i = np.diag(i)
    diag_vnorm = np.diag(v / np.abs(v))
    ds_dvm = diag_v @ np.conj(y @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
    return ds_dva, ds_dvm


def apply_load_event(
    net: PhasorNetwork,
    bus: str,
    delta_p: float = 0.0,
    delta_q: float = 0.0,
    admittance: Optional[complex] = None,
) -> PhasorNetwork:
    """Return a network with the shunt load at ``bus`` changed.

    Power-style events are converted to admittance at the network's nominal
    voltage. An increment that exactly cancels an earlier one removes it.
    """
    bus = str(bus)
    if bus not in net.bus_index:
        raise ConfigurationError(f"unknown bus {bus}")
    dy = admittance if admittance is not None else load_admittance(
        delta_p, delta_q, net.v_base
    )
    dy = complex(dy)
    if dy == 0:
        return net
    terms = list(net.load_terms)
    inverse = (bus, -dy)
    if inverse in terms:
        terms.remove(inverse)
    else:
        terms.append((bus, dy))
    logger.debug("load at bus %s changed by %s S", bus, dy)
    return PhasorNetwork(
        net.buses, net.lines, net.bindings, net.s_base, net.v_base, tuple(terms)
    )
