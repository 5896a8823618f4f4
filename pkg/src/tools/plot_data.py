"""
CSV plot data for convergence traces, pilot magnitudes and correlation profiles.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from src.correlation import CorrelationProfile, to_db
from src.optimizer import ConvergenceTrace, PilotSet
from src.subspace import ZeroTailSubspace
from src.tools.files import write_csv

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "pilot", "worst_peak", "worst_peak_db", "step_size", "wall_ms", "accepted", "papr_db")
PROFILE_COLUMNS = (
    "kind", "component", "pilot", "partner", "lag", "value", "value_db", "is_excluded", "suppressed",
)


def _blank(v) -> str:
    return "" if v is None else v


def write_trace_csv(path: Union[str, Path], trace: ConvergenceTrace) -> Path:
    rows = (
        (r.iteration, r.pilot, r.worst_peak, r.worst_peak_db, r.step_size, r.wall_ms, int(r.accepted), _blank(r.papr_db))
        for r in trace.records
    )
    return write_csv(path, TRACE_COLUMNS, rows)


def write_fd_magnitude(path: Union[str, Path], sub: ZeroTailSubspace, pilot_set: PilotSet) -> Path:
    """|FD pilot| per occupied carrier, rows ordered by FFT bin."""
    order = np.argsort(sub.placement, kind="stable")
    header = ["bin"] + [f"pilot_{i}" for i in range(len(pilot_set))]
    mags = [np.abs(fd) for fd in pilot_set.fd_pilots]
    rows = ([int(sub.placement[k])] + [float(m[k]) for m in mags] for k in order)
    return write_csv(path, header, rows)


def write_td_magnitude(path: Union[str, Path], sub: ZeroTailSubspace, pilot_set: PilotSet) -> Path:
    """|TD pilot| per sample; ``tail`` flags the forced-zero samples."""
    head = sub.dims.head_len
    header = ["sample", "tail"] + [f"pilot_{i}" for i in range(len(pilot_set))]
    mags = [np.abs(td) for td in pilot_set.td_pilots]
    rows = ([t, int(t >= head)] + [float(m[t]) for m in mags] for t in range(sub.dims.n_fft))
    return write_csv(path, header, rows)


def profile_rows(kind: str, profile: CorrelationProfile) -> Iterable[Sequence]:
    """``is_excluded`` marks the inner t_min zone, ``suppressed`` the lags the search attacks."""
    for lag, value, excluded, suppressed in zip(profile.lags, profile.values, profile.excluded, profile.suppressed):
        yield (
            kind,
            int(profile.component),
            _blank(profile.pilot),
            _blank(profile.partner),
            int(lag),
            float(value),
            to_db(float(value)),
            int(bool(excluded)),
            int(bool(suppressed)),
        )


def write_profiles(path: Union[str, Path], profiles: Iterable[tuple[str, CorrelationProfile]]) -> Path:
    rows = [row for kind, profile in profiles for row in profile_rows(kind, profile)]
    return write_csv(path, PROFILE_COLUMNS, rows)
