from typing import Tuple

import numpy as np

from utils.errors import InvalidCode

MISSING_CODE = 255
MAX_CODE = 70

VALID_CODES = frozenset([0, 8, 16] + list(range(20, MAX_CODE + 1)) + [MISSING_CODE])
_VALID_LOOKUP = np.zeros(256, dtype=bool)
_VALID_LOOKUP[sorted(VALID_CODES)] = True


def quantize(z) -> np.ndarray:
    """Map dBZ onto 8-bit codes: coarse bins below 20 dBZ, 1 dBZ steps up to 70, 255 for missing."""
    z = np.asarray(z, dtype=np.float64)
    codes = np.full(z.shape, MISSING_CODE, dtype=np.uint8)
    present = ~np.isnan(z)

    zp = z[present]
    q = np.zeros(zp.shape, dtype=np.float64)
    q = np.where(zp >= 8, 8, q)
    q = np.where(zp >= 16, 16, q)
    fine = (zp >= 20) & (zp < 70)
    q = np.where(fine, np.floor(np.where(fine, zp, 0)), q)
    q = np.where(zp >= 70, MAX_CODE, q)
    codes[present] = q.astype(np.uint8)
    return codes


def is_valid_code(codes) -> np.ndarray:
    return _VALID_LOOKUP[np.asarray(codes, dtype=np.uint8)]


def dequantize(codes) -> Tuple[np.ndarray, np.ndarray]:
    """Codes to normalized reflectivity in [0, 1] plus a missing mask (missing -> 0.0)."""
    raw = np.asarray(codes)
    if np.any((raw < 0) | (raw > 255)):
        raise InvalidCode("Quantization codes must be 8-bit")

    codes = raw.astype(np.uint8)
    if not np.all(is_valid_code(codes)):
        bad = sorted(set(int(c) for c in np.unique(codes[~is_valid_code(codes)])))
        raise InvalidCode(f"Invalid quantization code(s): {bad[:10]}")

    missing = codes == MISSING_CODE
    value = np.where(missing, 0.0, codes.astype(np.float64) / MAX_CODE)
    return value, missing
