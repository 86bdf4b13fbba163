# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Utility functions shared by the simulation and command modules."""

import json
import os
from typing import Any, Callable, Dict

import numpy as np

Derivative = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(fn: Derivative, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of x' = fn(t, x)."""
    k1 = fn(t, x)
    k2 = fn(t + dt / 2, x + dt / 2 * k1)
    k3 = fn(t + dt / 2, x + dt / 2 * k2)
    k4 = fn(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def write_json_file(file_path: str, data: Dict[str, Any], force: bool = False) -> bool:
    """Write data to a JSON file; returns False when it exists and force is off."""
    if os.path.exists(file_path) and not force:
        return False

    dir_path = os.path.dirname(file_path)
    if dir_path and not os.path.exists(dir_path):
        os.makedirs(dir_path)

    with open(file_path, "w") as f:
        json.dump(data, indent=2, sort_keys=True, fp=f)
        f.write("\n")
    return True


def pairwise_differences(values: np.ndarray) -> np.ndarray:
    """Differences between consecutive columns: x1-x2, x2-x3, ..."""
    values = np.asarray(values)
    return values[..., :-1] - values[..., 1:]


def max_pairwise_spread(values: np.ndarray) -> np.ndarray:
    """max_ij |x_i - x_j| along the last axis."""
    values = np.asarray(values)
    return values.max(axis=-1) - values.min(axis=-1)
