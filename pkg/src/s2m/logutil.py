"""Signed log-magnitude arithmetic for products that overflow float64."""

import math

import numpy as np


def signed_log_product(factors):
    """(sign, log|prod|) of a real factor array; sign 0 if any factor is 0."""
    factors = np.asarray(factors, dtype=np.float64)
    if factors.size == 0:
        return 1.0, 0.0
    if np.any(factors == 0.0):
        return 0.0, -math.inf
    sign = -1.0 if (np.count_nonzero(factors < 0.0) % 2) else 1.0
    return sign, float(np.sum(np.log(np.abs(factors))))


def signed_exp(sign: float, log_mag: float) -> float:
    """sign * exp(log_mag) with overflow mapped to signed infinity."""
    if sign == 0.0:
        return 0.0
    if log_mag > 709.0:
        return math.copysign(math.inf, sign)
    return sign * math.exp(log_mag)
