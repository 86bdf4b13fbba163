# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Common console, logging and output helpers shared by the commands."""

import json
import logging
from typing import Any, Dict, NoReturn

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from gfmreserve.errors import ConfigurationError, GfmReserveError, TransportError

# Create console instances
console = Console()
ERROR_CONSOLE = Console(stderr=True, style="bold red")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3


def setup_logging(verbose: bool = False) -> None:
    """Route library logging to stderr through rich."""
    handler = RichHandler(
        console=Console(stderr=True), show_path=False, rich_tracebacks=verbose
    )
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        datefmt="[%X]",
        handlers=[handler],
        force=True,
    )


def fail(message: str, code: int = EXIT_FAILED) -> NoReturn:
    ERROR_CONSOLE.print(f"Error: {message}")
    raise typer.Exit(code)


def exit_code_for(error: GfmReserveError) -> int:
    if isinstance(error, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(error, TransportError):
        return EXIT_TRANSPORT
    return EXIT_FAILED


def format_output(
    data: Dict[str, Any], format_type: str = "pretty", title: str = "gfmreserve Results"
) -> None:
    """Format and print data based on the specified format."""
    if format_type.lower() == "json":
        console.print(
            json.dumps(data, indent=2, default=str),
            soft_wrap=True,
            highlight=False,
            markup=False,
        )
        return

    table = Table(title=title)
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            table.add_row(key, escape(json.dumps(value, indent=2, default=str)))
        elif isinstance(value, float):
            table.add_row(key, f"{value:.6g}")
        else:
            table.add_row(key, escape(str(value)))
    console.print(table)
