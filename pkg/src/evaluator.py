"""
Metrics for a finished pilot set.

Main-to-side ratios of ACF, pairwise MCF and mixture profiles, channel-overlap
evaluation through seeded tapped delay lines, PAPR figures, and the slot-saving
and time-conversion arithmetic behind the configuration knobs.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from src.correlation import (
    ACF,
    MCF,
    CorrelationProfile,
    correlation_profile,
    to_db,
)
from src.errors import DimensionMismatch, InvalidChannel, NoSidePeaks
from src.optimizer import PilotSet
from src.power import papr_cost, papr_cost_full
from src.state import (
    ChannelModel,
    ChannelTap,
    EvalReport,
    LagWindow,
    SynthesisConfig,
    TimeConversions,
)
from src.subspace import ZeroTailSubspace

logger = logging.getLogger(__name__)

# 10*log10(2) plus margin: two coherent interferers against the best pair
DEFAULT_SANITY_SLACK_DB = 3.1
# pairs of devices that share one slot in the orthogonal baseline
BASELINE_PAIRS_PER_SLOT = 3


def main_to_side_db(profile: CorrelationProfile) -> float:
    """10 log10(main / max side) of a power profile."""
    if profile.max_side_peak is None:
        raise NoSidePeaks("profile has an empty suppression set")
    return to_db(profile.main_peak) - to_db(profile.max_side_peak)


# ---------------------------------------------------------------------------
# Per-pilot correlation metrics
# ---------------------------------------------------------------------------

def acf_profile(pilot_set: PilotSet, index: int, window: LagWindow, *, workers: int = 1) -> CorrelationProfile:
    y = pilot_set.td_pilots[index]
    return correlation_profile(y, y, window, component=ACF, pilot=index, workers=workers)


def acf_db(pilot_set: PilotSet, index: int, window: LagWindow, *, workers: int = 1) -> float:
    """10 log10(1 / max F1) over the ACF suppression set."""
    return main_to_side_db(acf_profile(pilot_set, index, window, workers=workers))


def mcf_profile(pilot_set: PilotSet, p: int, q: int, window: LagWindow, *, workers: int = 1) -> CorrelationProfile:
    return correlation_profile(
        pilot_set.td_pilots[p], pilot_set.td_pilots[q], window,
        component=MCF, pilot=p, partner=q, workers=workers,
    )


def pairwise_mcf_db(pilot_set: PilotSet, window: LagWindow, *, workers: int = 1) -> list[list[Optional[float]]]:
    """Symmetric matrix of 10 log10(1 / max F2) per pair; None on the diagonal."""
    n = len(pilot_set)
    matrix: list[list[Optional[float]]] = [[None] * n for _ in range(n)]
    for p in range(n):
        for q in range(p + 1, n):
            profile = mcf_profile(pilot_set, p, q, window, workers=workers)
            matrix[p][q] = matrix[q][p] = -to_db(profile.max_side_peak)
    return matrix


# ---------------------------------------------------------------------------
# Mixtures and channels
# ---------------------------------------------------------------------------

def mixture_signal(
    td_pilots: Sequence[np.ndarray],
    weights: Sequence[float],
    delays: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """sum_i w_i * (td_i cyclically delayed by d_i)."""
    if len(weights) != len(td_pilots):
        raise DimensionMismatch("mixture weights", (len(td_pilots),), (len(weights),))
    if delays is None:
        delays = [0] * len(td_pilots)
    elif len(delays) != len(td_pilots):
        raise DimensionMismatch("mixture delays", (len(td_pilots),), (len(delays),))
    mixture = np.zeros_like(np.asarray(td_pilots[0], dtype=complex))
    for y, w, d in zip(td_pilots, weights, delays):
        mixture = mixture + w * np.roll(y, int(d))
    return mixture


def mixture_profile(
    pilot_set: PilotSet,
    index: int,
    mixture: np.ndarray,
    window: LagWindow,
    *,
    reference_lag: int = 0,
    exclude: Optional[tuple[int, int]] = None,
    workers: int = 1,
) -> CorrelationProfile:
    return correlation_profile(
        pilot_set.td_pilots[index], mixture, window,
        component=ACF, reference_lag=reference_lag, exclude=exclude, pilot=index, workers=workers,
    )


def mixture_metric(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    window: LagWindow,
    weights: Optional[Sequence[float]] = None,
    delays: Optional[Sequence[int]] = None,
) -> list[float]:
    """Main-to-side dB of every pilot against the weighted sum of all pilots.

    Unit weights and zero delays give the fully overlapping worst case.
    """
    n = len(pilot_set)
    if n == 0:
        return []
    if weights is None:
        weights = [1.0] * n
    mixture = mixture_signal(pilot_set.td_pilots, weights, delays)
    return [
        main_to_side_db(mixture_profile(pilot_set, p, mixture, window, workers=sub.workers))
        for p in range(n)
    ]


def validate_channel(channel: ChannelModel, window: LagWindow) -> None:
    if not channel.taps:
        raise InvalidChannel("channel has no taps")
    for tap in channel.taps:
        if tap.delay >= window.outer:
            raise InvalidChannel(
                f"tap delay {tap.delay} must be below the window half-width {window.outer}"
            )


def apply_channel(td: np.ndarray, channel: ChannelModel) -> np.ndarray:
    """Cyclic tapped-delay-line convolution scaled by the link's path loss."""
    out = np.zeros_like(np.asarray(td, dtype=complex))
    for tap in channel.taps:
        out = out + tap.gain * np.roll(td, tap.delay)
    return channel.amplitude() * out


def _channel_window(channel: ChannelModel, window: LagWindow) -> tuple[int, tuple[int, int]]:
    """Reference lag and the excluded range (relative to it) of one pilot's channel."""
    ref = channel.strongest_delay()
    delays = [t.delay for t in channel.taps]
    return ref, (min(delays) - window.inner - ref, max(delays) + window.inner - ref)


def channel_profiles(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    channels: Sequence[ChannelModel],
    window: LagWindow,
) -> list[CorrelationProfile]:
    n = len(pilot_set)
    if len(channels) != n:
        raise InvalidChannel(f"{len(channels)} channels given for {n} pilots")
    for channel in channels:
        validate_channel(channel, window)
    received = np.zeros(sub.dims.n_fft, dtype=complex)
    for y, channel in zip(pilot_set.td_pilots, channels):
        received = received + apply_channel(y, channel)
    profiles = []
    for p, channel in enumerate(channels):
        ref, exclude = _channel_window(channel, window)
        profiles.append(
            mixture_profile(pilot_set, p, received, window, reference_lag=ref, exclude=exclude, workers=sub.workers)
        )
    return profiles


def channel_overlap_eval(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    channels: Sequence[ChannelModel],
    window: LagWindow,
) -> list[float]:
    """Main-to-side dB of each clean pilot against the sum of all channel outputs.

    The main peak sits at the pilot's strongest tap; its own delay spread,
    widened by the inner zone, is not counted as side lobe.
    """
    return [main_to_side_db(profile) for profile in channel_profiles(sub, pilot_set, channels, window)]


def random_channels(
    n: int,
    window: LagWindow,
    seed: int,
    *,
    n_taps: int = 3,
    decay_db: float = 6.0,
    path_loss_db: float = 0.0,
) -> list[ChannelModel]:
    """Seeded channels: a unit tap at delay 0, then decaying taps at distinct delays."""
    if n_taps < 1:
        raise InvalidChannel("a channel needs at least one tap")
    if n_taps - 1 > window.outer - 1:
        raise InvalidChannel(
            f"{n_taps} taps do not fit distinct delays below {window.outer}"
        )
    rng = np.random.default_rng(seed)
    channels = []
    for _ in range(n):
        delays = [0] + sorted(int(d) for d in rng.choice(np.arange(1, window.outer), n_taps - 1, replace=False))
        phases = rng.uniform(0.0, 2.0 * np.pi, n_taps)
        taps = [
            ChannelTap(delay=d, gain=complex(10.0 ** (-decay_db * k / 20.0) * np.exp(1j * phases[k])))
            for k, d in enumerate(delays)
        ]
        channels.append(ChannelModel(taps=taps, path_loss_db=path_loss_db, seed=seed))
    return channels


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------

def slot_savings(n_pilots: int) -> float:
    """Percent of synchronization slots saved against three pairs per slot."""
    if n_pilots < BASELINE_PAIRS_PER_SLOT:
        raise ValueError(f"n_pilots must be at least {BASELINE_PAIRS_PER_SLOT}")
    return 100.0 * (1.0 - BASELINE_PAIRS_PER_SLOT / n_pilots)


def baseline_zero_tail_us(n_sc: int, occupied_fraction: float, delta_f: float, n_fft: int) -> float:
    if not 0.0 <= occupied_fraction <= 1.0:
        raise ValueError("occupied_fraction must lie in [0, 1]")
    return n_sc * (1.0 - occupied_fraction) / (delta_f * n_fft) * 1e6


def time_conversions(config: SynthesisConfig) -> TimeConversions:
    scale = config.delta_f * config.dims.n_fft
    return TimeConversions(
        precision_ns=(1 + config.window.t_min) / (2.0 * scale) * 1e9,
        max_offset_us=config.window.t_max / (2.0 * scale) * 1e6,
        tail_us=config.dims.t_zero / scale * 1e6,
    )


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

def evaluate_pilot_set(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    window: LagWindow,
    *,
    weights: Optional[Sequence[float]] = None,
    delays: Optional[Sequence[int]] = None,
    channels: Optional[Sequence[ChannelModel]] = None,
    sanity_slack_db: Optional[float] = DEFAULT_SANITY_SLACK_DB,
    workers: int = 1,
) -> EvalReport:
    """Every metric of one pilot set in a single report.

    Per-pilot work fans out over ``workers`` threads; results are collected in
    pilot order, so the report does not depend on the worker count.
    """
    n = len(pilot_set)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        acf = list(pool.map(lambda p: acf_db(pilot_set, p, window), range(n))) if window.acf_scan_lags().size else []
        papr = list(pool.map(lambda x: to_db(papr_cost(sub, x)), pilot_set.preimages))
        papr_full = list(pool.map(lambda x: to_db(papr_cost_full(sub, x)), pilot_set.preimages))
    mcf = pairwise_mcf_db(pilot_set, window, workers=sub.workers)
    mixture = mixture_metric(sub, pilot_set, window, weights, delays)

    channel_db = None
    if channels is not None:
        channel_db = channel_overlap_eval(sub, pilot_set, channels, window)

    sanity_ok = None
    if sanity_slack_db is not None and n >= 2:
        best_pair = min(v for row in mcf for v in row if v is not None)
        sanity_ok = all(m <= best_pair + sanity_slack_db for m in mixture)
        if not sanity_ok:
            logger.warning(
                "Mixture metric exceeds best pairwise MCF (%.2f dB) by more than %.1f dB",
                best_pair, sanity_slack_db,
            )

    meta = pilot_set.metadata
    return EvalReport(
        n_pilots=n,
        acf_db=acf,
        mcf_db=mcf,
        mixture_db=mixture,
        worst_mixture_db=min(mixture) if mixture else None,
        mean_mixture_db=float(np.mean(mixture)) if mixture else None,
        papr_db=papr,
        papr_full_db=papr_full,
        channel_db=channel_db,
        slot_savings_pct=slot_savings(n) if n >= BASELINE_PAIRS_PER_SLOT else None,
        sanity_ok=sanity_ok,
        converged=meta.converged,
        iterations=meta.iterations,
        config=meta.config,
    )

