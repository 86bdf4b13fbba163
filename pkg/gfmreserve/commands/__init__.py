# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Command modules for gfmreserve."""
