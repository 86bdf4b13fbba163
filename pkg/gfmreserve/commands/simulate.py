# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to run a scenario through the closed-loop simulator."""

import os
from typing import Any, Dict, List, Sequence

from gfmreserve.common import (
    EXIT_FAILED,
    console,
    exit_code_for,
    fail,
    format_output,
)
from gfmreserve.config import load_config
from gfmreserve.errors import GfmReserveError
from gfmreserve.sim import SimulationResult, run
from gfmreserve.utils import write_json_file


def metrics_summary(metrics: Dict[str, Any]) -> Dict[str, Any]:
    """Flat view of the metrics for the results table."""
    summary: Dict[str, Any] = {
        "scenario": metrics.get("scenario"),
        "samples": metrics.get("samples"),
        "aborted": metrics.get("aborted", False),
    }
    for key in ("frequency_nadir", "max_frequency_deviation", "terminal_frequency_error"):
        if key in metrics:
            summary[key] = metrics[key]
    for channel, values in metrics.get("consensus", {}).items():
        summary[f"{channel} terminal/peak"] = (
            f"{values['terminal']:.3e} / {values['peak']:.3e}"
        )
    settled = [s["settling_time"] for s in metrics.get("settling", [])]
    if settled:
        summary["settling_times"] = settled
    return summary


def write_outputs(result: SimulationResult, out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, "trace.csv")
    metrics_path = os.path.join(out_dir, "metrics.json")
    result.trace.write_csv(trace_path)
    write_json_file(metrics_path, result.metrics, force=True)
    return [trace_path, metrics_path]


def simulate_command(
    config_path: str,
    out_dir: str = "out",
    overrides: Sequence[str] = (),
    format_type: str = "pretty",
) -> None:
    """Run a scenario and write trace.csv and metrics.json."""
    try:
        scenario = load_config(config_path, overrides).to_scenario()
        result = run(scenario)
    except GfmReserveError as e:
        fail(str(e), exit_code_for(e))

    paths = write_outputs(result, out_dir)
    if format_type.lower() == "json":
        format_output(result.metrics, "json")
    else:
        format_output(metrics_summary(result.metrics), title=f"Simulation: {scenario.name}")
        for path in paths:
            console.print(f"✓ Wrote [bold]{path}[/bold]")
    if result.aborted:
        fail(f"integration aborted: {result.diagnostic}", EXIT_FAILED)
