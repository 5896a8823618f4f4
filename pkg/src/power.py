"""
Peak-to-average power of TD pilots.

PAPR is measured over the non-tail samples only: the forced zeros would
otherwise pull the average down and inflate the ratio.
"""

from __future__ import annotations

import numpy as np

from src.errors import ZeroInput
from src.subspace import ZeroTailSubspace, to_time_domain


def _papr(power: np.ndarray) -> float:
    mean = float(np.mean(power))
    if mean == 0.0:
        raise ZeroInput("PAPR of an all-zero signal is undefined")
    return float(np.max(power)) / mean


def td_papr(td: np.ndarray, head_len: int) -> float:
    """PAPR of an already mapped TD pilot over its first ``head_len`` samples."""
    return _papr(np.abs(np.asarray(td)[:head_len]) ** 2)


def papr_cost(sub: ZeroTailSubspace, x) -> float:
    """max |y_k|^2 / mean |y_k|^2 over the first n_fft - t_zero samples of A x."""
    return td_papr(to_time_domain(sub, x), sub.dims.head_len)


def papr_cost_full(sub: ZeroTailSubspace, x) -> float:
    """Same ratio over the whole symbol, zero tail included."""
    return _papr(np.abs(to_time_domain(sub, x)) ** 2)
