# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to run the distributed agent runtime in one role."""

import asyncio
import json
import os
from typing import Dict, List, Optional, Sequence

from gfmreserve.agents import DistributedResult, run_distributed, run_roles
from gfmreserve.common import EXIT_FAILED, console, exit_code_for, fail, format_output
from gfmreserve.config import load_config
from gfmreserve.errors import ConfigurationError, GfmReserveError
from gfmreserve.utils import write_json_file


def link_overrides(
    transport: Optional[str] = None,
    plant: Optional[str] = None,
    peers: Sequence[str] = (),
    delay_ms: Optional[float] = None,
    jitter_ms: Optional[float] = None,
    loss: Optional[float] = None,
    tick_ms: Optional[float] = None,
) -> List[str]:
    """Translate command-line link flags into config overrides."""
    overrides = []
    for key, value in (
        ("transport", transport),
        ("plant", plant),
        ("delay_ms", delay_ms),
        ("jitter_ms", jitter_ms),
        ("loss", loss),
        ("tick_ms", tick_ms),
    ):
        if value is not None:
            overrides.append(f"agents.{key}={json.dumps(value)}")
    for peer in peers:
        inverter, sep, address = peer.partition("=")
        if not sep or not inverter.strip().isdigit():
            raise ConfigurationError(f"peer {peer!r} is not <id>=<host:port>")
        overrides.append(f"agents.peers.{inverter.strip()}={json.dumps(address)}")
    return overrides


def write_distributed(result: DistributedResult, out_dir: str, stem: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, f"{stem}.csv")
    result.trace.write_csv(trace_path)
    written = [trace_path]
    if stem == "trace":
        metrics_path = os.path.join(out_dir, "metrics.json")
        write_json_file(metrics_path, result.metrics, force=True)
        written.append(metrics_path)
    telemetry_path = os.path.join(out_dir, stem.replace("trace", "telemetry") + ".json")
    write_json_file(
        telemetry_path,
        {str(k): v for k, v in result.telemetry.items()},
        force=True,
    )
    written.append(telemetry_path)
    return written


def agents_command(
    config_path: str,
    role: str = "all",
    out_dir: str = "out",
    overrides: Sequence[str] = (),
    seed: int = 0,
    link_flags: Optional[Dict[str, object]] = None,
) -> None:
    """Run the plant, one agent or everything, and write traces and telemetry."""
    try:
        extra = link_overrides(**(link_flags or {}))
        config = load_config(config_path, list(overrides) + extra)
        scenario = config.to_scenario()
        link = config.link_config(seed)
        if role != "all" and link.transport == "memory":
            raise ConfigurationError(
                "in-memory links run with --role all only", "/agents/transport"
            )
        if role == "all":
            result = run_distributed(link, scenario)
            stem = "trace"
        elif role == "plant":
            missed = asyncio.run(run_roles(scenario, link, role))
            format_output({"role": role, "stages_with_missing_act": missed})
            return
        else:
            result = asyncio.run(run_roles(scenario, link, role))
            stem = f"trace_{role.split(':', 1)[1]}"
    except GfmReserveError as e:
        fail(str(e), exit_code_for(e))

    for path in write_distributed(result, out_dir, stem):
        console.print(f"✓ Wrote [bold]{path}[/bold]")
    degraded = sorted(k for k, v in result.telemetry.items() if v["degraded"])
    format_output(
        {
            "role": role,
            "samples": len(result.trace),
            "aborted": result.aborted,
            "degraded_agents": degraded,
            "terminal_frequency_error": result.metrics.get("terminal_frequency_error"),
        },
        title="Distributed run",
    )
    if result.aborted:
        fail(f"distributed run aborted: {result.diagnostic}", EXIT_FAILED)
