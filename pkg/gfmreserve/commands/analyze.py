# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to certify small-signal stability of a scenario's controller."""

from typing import Optional, Sequence

from gfmreserve.common import EXIT_FAILED, console, exit_code_for, fail, format_output
from gfmreserve.config import load_config
from gfmreserve.errors import GfmReserveError
from gfmreserve.stability import TUNABLE_GAINS, StabilityReport, analyze
from gfmreserve.utils import write_json_file


def run_analysis(
    config_path: str, overrides: Sequence[str] = (), sweep: Optional[str] = None
) -> StabilityReport:
    config = load_config(config_path, overrides)
    scenario = config.to_scenario()
    return analyze(
        scenario.network,
        scenario.params,
        scenario.graph,
        scenario.controller.omega_c,
        sweep=sweep,
    )


def analyze_command(
    config_path: str,
    out_path: Optional[str] = None,
    overrides: Sequence[str] = (),
    sweep: Optional[str] = None,
) -> None:
    """Print the stability report as JSON; exit 1 on any failed Routh-Hurwitz check."""
    if sweep is not None and sweep not in TUNABLE_GAINS:
        fail(f"cannot sweep {sweep!r}; choose one of {', '.join(TUNABLE_GAINS)}", 2)
    try:
        report = run_analysis(config_path, overrides, sweep)
    except GfmReserveError as e:
        fail(str(e), exit_code_for(e))

    data = report.to_dict()
    if out_path:
        write_json_file(out_path, data, force=True)
        console.print(f"✓ Wrote report to [bold]{out_path}[/bold]")
    else:
        format_output(data, "json")
    if not report.rh_ok:
        failed = [
            f"{kind} mode {m.index}: {m.verdict.violated}"
            for kind, modes in (("freq", report.freq_modes), ("volt", report.volt_modes))
            for m in modes
            if not m.verdict.stable
        ]
        fail("Routh-Hurwitz check failed (" + "; ".join(failed) + ")", EXIT_FAILED)
