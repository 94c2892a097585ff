import logging
from typing import Optional, Tuple

import numpy as np

from aligner.quantize import MAX_CODE
from evalkit.zr import ZR_A, ZR_B, zr_rainfall
from m3rnet.engine import Batch, Standardizer
from stationproc.series import PRECIP_INDEX
from utils.errors import CellOutOfBounds

logger = logging.getLogger(__name__)

__all__ = ["ZR_A", "ZR_B", "persistence_baseline", "zr_baseline", "zr_rainfall"]


def persistence_baseline(batch: Batch, standardizer: Optional[Standardizer] = None) -> np.ndarray:
    """Repeat the last observed precipitation rate for every forecast step."""
    met = batch.met.detach().cpu().numpy().astype(np.float64)
    last = met[:, -1, :]
    if standardizer is not None:
        last = standardizer.inverse(last)
    horizon = batch.target.shape[-1]
    return np.repeat(last[:, PRECIP_INDEX:PRECIP_INDEX + 1], horizon, axis=1)


def zr_baseline(batch: Batch, station_cell: Optional[Tuple[int, int]] = None,
                a: float = ZR_A, b: float = ZR_B) -> np.ndarray:
    """Radar-only nowcast: Z-R rainfall at the station cell of the last input frame, held constant.

    Cells without echo (code 0 or missing) give 0 mm/hr.
    """
    radar = batch.radar.detach().cpu().numpy().astype(np.float64)
    ny, nx = radar.shape[2:4]
    i, j = station_cell if station_cell is not None else (ny // 2, nx // 2)
    if not (0 <= i < ny and 0 <= j < nx):
        raise CellOutOfBounds(f"Station cell {(i, j)} outside {ny}x{nx} frame")

    dbz = radar[:, -1, i, j, 0] * MAX_CODE
    rate = np.where(dbz > 0, zr_rainfall(dbz, a, b), 0.0)
    horizon = batch.target.shape[-1]
    return np.repeat(rate[:, None], horizon, axis=1)
