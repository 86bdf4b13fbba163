# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Primary control: droop law, VSM dynamics, power filtering and the LC filter model.

All quantities are per-unit on the inverter's own base except the LC filter,
which works in volts, amperes and SI component values.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from gfmreserve.errors import ConfigurationError
from gfmreserve.model import InverterParams, InverterState
from gfmreserve.utils import rk4_step


def droop_outputs(
    params: InverterParams,
    p_filt: float,
    q_filt: float,
    omega_cons: float,
    e_cons: float,
    v_set: float = 1.0,
) -> Tuple[float, float]:
    """Frequency deviation and voltage magnitude of a droop inverter."""
    d_omega = -params.m * (p_filt - params.p_set_pu) + omega_cons
    v = v_set - params.n * (q_filt - params.q_set_pu) + e_cons
    return d_omega, v


def vsm_derivatives(
    params: InverterParams,
    state: InverterState,
    p: float,
    q: float,
    v_set: float = 1.0,
    v_set_rate: float = 0.0,
) -> Tuple[float, float, float]:
    """(d delta/dt in rad/s, d d_omega/dt, dV/dt) of a virtual synchronous machine.

    The voltage loop acts on V - v_set; ``v_set_rate`` carries a ramping setpoint.
    """
    if params.m_omega <= 0 or params.tau_v <= 0:
        raise ConfigurationError(f"inverter {params.id}: VSM gains not set")
    d_delta = params.omega_nom * state.d_omega
    dd_omega = (
        -state.d_omega - params.m * (p - params.p_set_pu) + state.omega_cons
    ) / params.m_omega
    dv = (
        -(state.v - v_set) - params.n * (q - params.q_set_pu) + state.e_cons
    ) / params.tau_v + v_set_rate
    return d_delta, dd_omega, dv


def check_lpf(omega_c: float, dt: float) -> None:
    if omega_c <= 0 or dt <= 0:
        raise ConfigurationError("filter cutoff and step must be positive")
    if omega_c * dt >= 2.0:
        raise ConfigurationError(
            f"filter cutoff {omega_c:g} rad/s is unstable at step {dt:g} s"
        )


def lpf_rate(y, u, omega_c: float):
    return omega_c * (u - y)


def lpf_step(y: float, u: float, omega_c: float, dt: float) -> float:
    """One explicit step of y' = omega_c (u - y)."""
    check_lpf(omega_c, dt)
    return y + dt * lpf_rate(y, u, omega_c)


@dataclass(frozen=True)
class LcFilter:
    """Output LC filter; a positive ``l_g`` adds a grid-side inductor to a stiff source."""

    c_f: float
    l_f: float
    r_f: float = 0.0
    l_g: float = 0.0
    r_g: float = 0.0

    def __post_init__(self):
        if not (self.c_f > 0 and self.l_f > 0):
            raise ConfigurationError("filter capacitance and inductance must be positive")
        if self.r_f < 0 or self.r_g < 0 or self.l_g < 0:
            raise ConfigurationError("filter resistances must be non-negative")


@dataclass(frozen=True)
class LcFilterState:
    v_gd: float
    v_gq: float
    i_d: float
    i_q: float
    i_gd: float
    i_gq: float
    params: LcFilter

    def as_array(self) -> np.ndarray:
        return np.array([self.v_gd, self.v_gq, self.i_d, self.i_q, self.i_gd, self.i_gq])

    @classmethod
    def from_array(cls, x, params: LcFilter) -> "LcFilterState":
        return cls(*(float(v) for v in x[:6]), params=params)


def lc_filter_derivatives(
    state: LcFilterState,
    v_d: float,
    v_q: float,
    omega: float,
    v_od: float = 0.0,
    v_oq: float = 0.0,
) -> Tuple[float, float, float, float, float, float]:
    """dq dynamics of the LC filter in the rotating frame at ``omega``.

    Grid-side currents are held (zero derivative) unless the filter has a grid
    inductor, in which case they are driven by the stiff voltage (v_od, v_oq).
    """
    f = state.params
    dv_gd = (state.i_d - state.i_gd + omega * f.c_f * state.v_gq) / f.c_f
    dv_gq = (state.i_q - state.i_gq - omega * f.c_f * state.v_gd) / f.c_f
    di_d = (v_d - state.v_gd + omega * f.l_f * state.i_q - f.r_f * state.i_d) / f.l_f
    di_q = (v_q - state.v_gq - omega * f.l_f * state.i_d - f.r_f * state.i_q) / f.l_f
    if f.l_g > 0:
        di_gd = (
            state.v_gd - v_od + omega * f.l_g * state.i_gq - f.r_g * state.i_gd
        ) / f.l_g
        di_gq = (
            state.v_gq - v_oq - omega * f.l_g * state.i_gd - f.r_g * state.i_gq
        ) / f.l_g
    else:
        di_gd = di_gq = 0.0
    return dv_gd, dv_gq, di_d, di_q, di_gd, di_gq


@dataclass(frozen=True)
class InnerLoopGains:
    kp_v: float
    ki_v: float
    kp_c: float
    ki_c: float

    @classmethod
    def pole_placement(
        cls, params: LcFilter, voltage_bandwidth: float, current_bandwidth: float
    ) -> "InnerLoopGains":
        """Current PI cancels the L-R pole; voltage PI gives a critically damped pair."""
        if not 0 < voltage_bandwidth < current_bandwidth:
            raise ConfigurationError("voltage loop must be slower than the current loop")
        return cls(
            kp_v=params.c_f * voltage_bandwidth,
            ki_v=params.c_f * voltage_bandwidth**2 / 4.0,
            kp_c=params.l_f * current_bandwidth,
            ki_c=params.r_f * current_bandwidth,
        )


@dataclass
class LcInverterTrace:
    t: List[float]
    v_gd: List[float]
    v_gq: List[float]
    p_inst: List[float]
    p_filt: List[float]


def simulate_lc_inverter(
    params: LcFilter,
    gains: InnerLoopGains,
    v_ref: float,
    load_resistance: float,
    omega: float,
    duration: float,
    dt: float,
    omega_c: float = 2 * np.pi * 5,
) -> LcInverterTrace:
    """Single inverter with cascaded dq loops feeding a resistive load.

    State: grid voltage (2), inverter current (2), voltage and current PI
    integrators (4). The load current is algebraic, i_g = v_g / R.
    """
    if load_resistance <= 0:
        raise ConfigurationError("load resistance must be positive")
    check_lpf(omega_c, dt)

    def controls(x: np.ndarray) -> Tuple[float, float, float, float]:
        v_gd, v_gq, i_d, i_q, phi_vd, phi_vq, phi_cd, phi_cq = x
        i_gd, i_gq = v_gd / load_resistance, v_gq / load_resistance
        i_ref_d = gains.kp_v * (v_ref - v_gd) + gains.ki_v * phi_vd + i_gd
        i_ref_d -= omega * params.c_f * v_gq
        i_ref_q = gains.kp_v * (0.0 - v_gq) + gains.ki_v * phi_vq + i_gq
        i_ref_q += omega * params.c_f * v_gd
        v_d = gains.kp_c * (i_ref_d - i_d) + gains.ki_c * phi_cd + v_gd
        v_d -= omega * params.l_f * i_q
        v_q = gains.kp_c * (i_ref_q - i_q) + gains.ki_c * phi_cq + v_gq
        v_q += omega * params.l_f * i_d
        return i_ref_d, i_ref_q, v_d, v_q

    def rhs(_t: float, x: np.ndarray) -> np.ndarray:
        v_gd, v_gq, i_d, i_q = x[:4]
        i_ref_d, i_ref_q, v_d, v_q = controls(x)
        filt = LcFilterState(
            v_gd, v_gq, i_d, i_q, v_gd / load_resistance, v_gq / load_resistance, params
        )
        dv_gd, dv_gq, di_d, di_q, _, _ = lc_filter_derivatives(filt, v_d, v_q, omega)
        return np.array(
            [dv_gd, dv_gq, di_d, di_q, v_ref - v_gd, -v_gq, i_ref_d - i_d, i_ref_q - i_q]
        )

    x = np.zeros(8)
    p_filt = 0.0
    trace = LcInverterTrace([], [], [], [], [])
    steps = int(round(duration / dt))
    for k in range(steps + 1):
        p = 1.5 * (x[0] ** 2 + x[1] ** 2) / load_resistance
        trace.t.append(k * dt)
        trace.v_gd.append(float(x[0]))
        trace.v_gq.append(float(x[1]))
        trace.p_inst.append(float(p))
        trace.p_filt.append(float(p_filt))
        if k == steps:
            break
        x = rk4_step(rhs, k * dt, x, dt)
        p_filt = lpf_step(p_filt, p, omega_c, dt)
    return trace
