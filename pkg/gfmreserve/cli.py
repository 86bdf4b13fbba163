# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""gfmreserve CLI entry point."""

from typing import List, Optional

import typer

from gfmreserve import __version__
from gfmreserve.commands.agents import agents_command
from gfmreserve.commands.analyze import analyze_command
from gfmreserve.commands.init import init_command
from gfmreserve.commands.lc_demo import lc_demo_command
from gfmreserve.commands.simulate import simulate_command
from gfmreserve.commands.validate import validate_command
from gfmreserve.common import console, setup_logging

app = typer.Typer(
    help="gfmreserve: secondary control with energy reserve consensus for grid-forming inverters"
)

CONFIG_OPTION = typer.Option(..., "--config", "-c", help="Scenario JSON file")
OVERRIDE_OPTION = typer.Option(
    None, "--override", "-o", help="Override a config value, e.g. inverters.*.k_i=2.5"
)


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    version: Optional[bool] = typer.Option(
        None, "--version", help="Show the application version and exit."
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
):
    """gfmreserve - simulate, certify and distribute DAPI reserve consensus."""
    if version:
        console.print(f"gfmreserve CLI version: [bold]{__version__}[/bold]")
        raise typer.Exit()
    setup_logging(verbose)
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())


@app.command()
def simulate(
    config: str = CONFIG_OPTION,
    out: str = typer.Option("out", "--out", help="Directory for trace.csv and metrics.json"),
    override: Optional[List[str]] = OVERRIDE_OPTION,
    format: str = typer.Option(
        "pretty", "--format", "-f", help="Output format (json, pretty)"
    ),
):
    """Run a scenario through the closed-loop simulator."""
    simulate_command(config, out, override or [], format)


@app.command()
def analyze(
    config: str = CONFIG_OPTION,
    out: Optional[str] = typer.Option(None, "--out", help="Write the report to this file"),
    override: Optional[List[str]] = OVERRIDE_OPTION,
    sweep: Optional[str] = typer.Option(
        None, "--sweep", help="Search the destabilizing value of a gain (k_i, m_omega, ...)"
    ),
):
    """Certify small-signal stability at the synchronous operating point."""
    analyze_command(config, out, override or [], sweep)


@app.command()
def agents(
    config: str = CONFIG_OPTION,
    role: str = typer.Option("all", "--role", "-r", help="plant, agent:<id> or all"),
    out: str = typer.Option("out", "--out", help="Directory for traces and telemetry"),
    override: Optional[List[str]] = OVERRIDE_OPTION,
    seed: int = typer.Option(0, "--seed", help="Seed for link loss and jitter"),
    transport: Optional[str] = typer.Option(None, "--transport", help="memory or datagram"),
    plant: Optional[str] = typer.Option(None, "--plant", help="Plant address host:port"),
    peer: Optional[List[str]] = typer.Option(
        None, "--peer", help="Agent address as <id>=<host:port>"
    ),
    delay_ms: Optional[float] = typer.Option(None, "--delay-ms", help="Link delay"),
    jitter_ms: Optional[float] = typer.Option(None, "--jitter-ms", help="Uniform jitter"),
    loss: Optional[float] = typer.Option(None, "--loss", help="Message loss probability"),
    tick_ms: Optional[float] = typer.Option(None, "--tick-ms", help="Publish period"),
):
    """Run the distributed agent runtime in one role."""
    agents_command(
        config,
        role,
        out,
        override or [],
        seed,
        {
            "transport": transport,
            "plant": plant,
            "peers": peer or [],
            "delay_ms": delay_ms,
            "jitter_ms": jitter_ms,
            "loss": loss,
            "tick_ms": tick_ms,
        },
    )


@app.command()
def validate(
    config: str = CONFIG_OPTION,
    override: Optional[List[str]] = OVERRIDE_OPTION,
):
    """Validate a scenario file."""
    validate_command(config, override or [])


@app.command()
def init(
    output: str = typer.Option("scenario.json", "--output", help="Output file path"),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite existing file"),
):
    """Write a starting scenario file."""
    init_command(output, force)


@app.command("lc-demo")
def lc_demo(
    v_ref: float = typer.Option(391.9, "--v-ref", help="Voltage reference amplitude (V)"),
    load: float = typer.Option(0.3, "--load", help="Load resistance (ohm)"),
    duration: float = typer.Option(0.2, "--duration", help="Simulated time (s)"),
    dt: float = typer.Option(1e-5, "--dt", help="Integration step (s)"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the waveform CSV here"),
):
    """Run one inverter with an LC filter and cascaded voltage/current loops."""
    lc_demo_command(v_ref, load, duration, dt, out_path=out)


if __name__ == "__main__":
    app()
