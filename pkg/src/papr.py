"""
Time-domain peak clipping through the pseudo-inverse, and its interleave with
the correlation search.

A pass that would raise PAPR is rolled back and the next one retries with a
smaller step, so a run of passes never makes PAPR worse.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from src.optimizer import SynthesisResult, normalize_energy, synthesize
from src.power import papr_cost
from src.state import PaprConfig, SynthesisConfig
from src.subspace import ZeroTailSubspace, pinv_apply, to_time_domain

logger = logging.getLogger(__name__)


def td_peak_indices(y: np.ndarray, head_len: int, config: PaprConfig) -> np.ndarray:
    """Up to ``n_peaks_td`` largest non-tail samples above the magnitude floor."""
    mag = np.abs(y[:head_len])
    floor = config.magnitude_floor
    if floor is None:
        floor = config.floor_factor * float(np.mean(mag))
    above = np.flatnonzero(mag > floor)
    if above.size == 0:
        return above
    # stable sort keeps the lower index first on equal magnitudes
    order = np.argsort(-mag[above], kind="stable")
    return above[order[: config.n_peaks_td]]


def papr_reduction_pass(
    sub: ZeroTailSubspace,
    x,
    config: PaprConfig,
    step: Optional[float] = None,
) -> np.ndarray:
    """Pull the largest TD samples toward zero through the pseudo-inverse.

    The TD gradient is y at the selected peaks and zero elsewhere; mapping it
    back with pinv(A) keeps the update inside the zero-tail subspace. The
    result is renormalized to unit TD energy. Nothing above the floor means
    x comes back unchanged. ``step`` defaults to ``h_step_papr``.
    """
    x = np.asarray(x, dtype=complex)
    y = to_time_domain(sub, x)
    peaks = td_peak_indices(y, sub.dims.head_len, config)
    if peaks.size == 0:
        return x
    h = config.h_step_papr if step is None else step
    g_td = np.zeros_like(y)
    g_td[peaks] = y[peaks]
    x_new, _ = normalize_energy(sub, x - h * pinv_apply(sub, g_td))
    return x_new


def reduce_papr(
    sub: ZeroTailSubspace,
    x,
    config: PaprConfig,
    passes: Optional[int] = None,
    history: Optional[list[float]] = None,
) -> np.ndarray:
    """Run up to ``passes`` reduction passes with rollback.

    A pass that raises PAPR is discarded and the step is divided by
    ``step_divisor`` for the next one. The loop ends early once no sample is
    above the floor. ``history`` receives the PAPR after every pass.
    """
    passes = config.n_papr_reductions if passes is None else passes
    if passes == 0:
        return x
    x = np.asarray(x, dtype=complex)
    step = config.h_step_papr
    current = papr_cost(sub, x)
    for _ in range(passes):
        candidate = papr_reduction_pass(sub, x, config, step=step)
        if candidate is x:
            break
        cost = papr_cost(sub, candidate)
        if cost > current:
            step /= config.step_divisor
            logger.debug("PAPR pass rolled back (%.4f > %.4f), step now %.3g", cost, current, step)
        else:
            x, current = candidate, cost
        if history is not None:
            history.append(current)
    return x


def interleaved_synthesis(
    config: SynthesisConfig,
    papr_config: PaprConfig,
    sub: ZeroTailSubspace,
) -> SynthesisResult:
    """Correlation search with PAPR passes after every pilot update."""
    logger.info(
        "PAPR interleave: %d passes of %d peaks, step %.3g",
        papr_config.n_papr_reductions, papr_config.n_peaks_td, papr_config.h_step_papr,
    )

    def hook(_pilot: int, x: np.ndarray) -> np.ndarray:
        return reduce_papr(sub, x, papr_config)

    return synthesize(config, sub, post_update=hook)
