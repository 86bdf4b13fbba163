# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""gfmreserve - Distributed secondary control workbench for grid-forming inverters."""

__version__ = "0.3.0"
