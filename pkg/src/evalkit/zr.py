import numpy as np

ZR_A = 200.0
ZR_B = 1.6


def zr_rainfall(z, a: float = ZR_A, b: float = ZR_B):
    """Rain rate (mm/hr) from reflectivity (dBZ) via z = a * R**b."""
    z = np.asarray(z, dtype=np.float64)
    rate = (10.0 ** (z / 10.0) / a) ** (1.0 / b)
    return float(rate) if rate.ndim == 0 else rate
