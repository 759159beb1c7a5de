"""Geographic coarsening before synthesis.

Geocodes are floored to the lower-left corner of a g x g meter grid cell.
"""
from __future__ import annotations

import numpy as np

from .data_model import Dataset
from .utility import nearest_original


def floor_to_grid(geo: np.ndarray, g: float) -> np.ndarray:
    if g <= 0:
        raise ValueError("grid size must be positive")
    return np.floor(np.asarray(geo, dtype=np.float64) / g) * g


def aggregate_geocodes(ds: Dataset, g: float) -> Dataset:
    return ds.with_columns(geo=floor_to_grid(ds.geo, g))


def region_for_cell(cell_point, orig: Dataset, region_of_orig: np.ndarray):
    """Region of the original geocode nearest to a released cell corner."""
    idx = nearest_original(np.asarray(cell_point, dtype=np.float64).reshape(1, 2), orig.geo)[0]
    return np.asarray(region_of_orig, dtype=object)[idx]
