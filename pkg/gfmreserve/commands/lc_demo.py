# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to run the single-inverter LC filter model with cascaded loops."""

import csv
from typing import Optional

from gfmreserve.common import console, fail, format_output
from gfmreserve.errors import ConfigurationError
from gfmreserve.model import NOMINAL_OMEGA
from gfmreserve.primary import InnerLoopGains, LcFilter, simulate_lc_inverter


def lc_demo_command(
    v_ref: float = 391.9,
    load_resistance: float = 0.3,
    duration: float = 0.2,
    dt: float = 1e-5,
    c_f: float = 1.5e-4,
    l_f: float = 1.0e-4,
    r_f: float = 0.01,
    voltage_bandwidth: float = 2000.0,
    current_bandwidth: float = 10000.0,
    out_path: Optional[str] = None,
) -> None:
    """Step the voltage reference into a resistive load and report the settled output."""
    try:
        lc = LcFilter(c_f=c_f, l_f=l_f, r_f=r_f)
        gains = InnerLoopGains.pole_placement(lc, voltage_bandwidth, current_bandwidth)
        trace = simulate_lc_inverter(
            lc, gains, v_ref, load_resistance, NOMINAL_OMEGA, duration, dt
        )
    except ConfigurationError as e:
        fail(str(e), 2)

    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["t", "v_gd", "v_gq", "p_inst", "p_filt"])
            for row in zip(trace.t, trace.v_gd, trace.v_gq, trace.p_inst, trace.p_filt):
                writer.writerow([repr(v) for v in row])
        console.print(f"✓ Wrote [bold]{out_path}[/bold]")
    format_output(
        {
            "kp_v": gains.kp_v,
            "ki_v": gains.ki_v,
            "kp_c": gains.kp_c,
            "ki_c": gains.ki_c,
            "v_gd_final": trace.v_gd[-1],
            "v_gq_final": trace.v_gq[-1],
            "p_expected": 1.5 * v_ref**2 / load_resistance,
            "p_filt_final": trace.p_filt[-1],
        },
        title="LC inverter",
    )
