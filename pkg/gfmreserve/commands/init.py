# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command to write a starting scenario file."""

import os

from gfmreserve.common import EXIT_FAILED, console, fail
from gfmreserve.config import starter_document
from gfmreserve.utils import write_json_file


def init_command(output_path: str = "scenario.json", force: bool = False) -> None:
    """Write the three-inverter droop scenario with reserve consensus enabled."""
    if os.path.exists(output_path) and not force:
        fail(f"File '{output_path}' already exists. Use --force to overwrite.")

    document = starter_document()
    if write_json_file(output_path, document, force):
        console.print(f"✓ Created scenario at [bold]{output_path}[/bold]")
        console.print(f"Network: [bold]{document['network']}[/bold]")
    else:
        fail(f"Failed to create scenario at '{output_path}'.", EXIT_FAILED)
