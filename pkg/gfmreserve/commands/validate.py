# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to validate a scenario file."""

from typing import Any, Dict, Sequence

from gfmreserve.common import console, exit_code_for, fail, format_output
from gfmreserve.config import ScenarioConfig, load_config
from gfmreserve.errors import GfmReserveError
from gfmreserve.model import gamma_ratios


def scenario_summary(config: ScenarioConfig) -> Dict[str, Any]:
    scenario = config.to_scenario()
    gamma = gamma_ratios(scenario.graph)
    return {
        "name": config.name,
        "inverters": [f"{p.id} ({p.kind.value})" for p in scenario.params],
        "buses": len(scenario.network.buses),
        "edges": len(scenario.graph.edges),
        "controller": config.controller.mode,
        "gamma_e": gamma.gamma_e,
        "gamma_f": gamma.gamma_f,
        "events": [f"{e.t:g}s {e.kind}" for e in scenario.events],
        "duration": scenario.duration,
        "dt": scenario.dt,
    }


def validate_command(config_path: str, overrides: Sequence[str] = ()) -> None:
    """Check schema and domain rules; exit 2 with a JSON pointer on the first violation."""
    try:
        config = load_config(config_path, overrides)
        summary = scenario_summary(config)
    except GfmReserveError as e:
        fail(str(e), exit_code_for(e))

    console.print(f"✓ [bold]{config_path}[/bold] is a valid scenario", soft_wrap=True)
    format_output(summary, title="Scenario")
