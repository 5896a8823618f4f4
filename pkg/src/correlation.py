"""
Cyclic correlation profiles, the ACF/MCF cost components and their gradients.

Conventions used throughout:

- Lag n pairs sample t of the first argument with sample t + n of the second:
  R_ab(n) = sum_t conj(a[t]) b[(t + n) mod N]. Negative lags map to N + n.
- F1(x, n) = |R_yy(n)|^2 / R_yy(0)^2 and F2(x, n) = sum_i |R_{y,y_i}(n)|^2 / E(x)^2,
  with y = A x, y_i = A x_i and E(x) = |A x|^2.
- Gradients are Wirtinger derivatives dF/dx returned as row vectors; for a
  real cost the update x - h * conj(g) descends, and the directional
  derivative along d is 2 * Re(g @ d).
"""

from __future__ import annotations

import logging
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict

from src.errors import DimensionMismatch, LagOutsideWindow, ZeroInput
from src.state import LagWindow, PeakRecord
from src.subspace import ZeroTailSubspace, adjoint_apply, to_time_domain

logger = logging.getLogger(__name__)

ACF = 1
MCF = 2

# below this length the O(n^2) direct sum is cheaper than three FFTs
DIRECT_SUM_MAX_LEN = 64


class CorrelationProfile(BaseModel):
    """Normalized squared correlation magnitudes over a lag window."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lags: np.ndarray
    values: np.ndarray
    excluded: np.ndarray
    suppressed: np.ndarray
    main_peak: float
    max_side_peak: Optional[float] = None
    max_side_lag: Optional[int] = None
    component: int = ACF
    pilot: Optional[int] = None
    partner: Optional[int] = None


# ---------------------------------------------------------------------------
# Raw correlation
# ---------------------------------------------------------------------------

def cyclic_xcorr(
    a,
    b,
    *,
    method: Literal["auto", "fft", "direct"] = "auto",
    workers: int = 1,
) -> np.ndarray:
    """R_ab(n) for every cyclic lag n = 0..N-1 (index N + n holds lag -n)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionMismatch("correlation operands", a.shape, b.shape)
    if method == "direct" or (method == "auto" and a.size <= DIRECT_SUM_MAX_LEN):
        n = a.size
        idx = np.add.outer(np.arange(n), np.arange(n)) % n
        return b[idx] @ np.conj(a)
    spec_a = scipy.fft.fft(a, workers=workers)
    spec_b = scipy.fft.fft(b, workers=workers)
    return scipy.fft.ifft(np.conj(spec_a) * spec_b, workers=workers)


def _lag_value(a: np.ndarray, b: np.ndarray, lag: int) -> complex:
    return np.vdot(a, np.roll(b, -lag))


def _energy(y: np.ndarray) -> float:
    e = float(np.vdot(y, y).real)
    if e == 0.0:
        raise ZeroInput("pilot has zero energy")
    return e


def _check_lag(sub: ZeroTailSubspace, lag: int, window: Optional[LagWindow], component: int) -> int:
    lag = int(lag)
    if abs(lag) >= sub.dims.n_fft:
        raise LagOutsideWindow(f"lag {lag} exceeds the FFT length {sub.dims.n_fft}")
    if window is not None:
        inside = window.is_acf_lag(lag) if component == ACF else window.is_mcf_lag(lag)
        if not inside:
            raise LagOutsideWindow(
                f"lag {lag} is outside the {'ACF' if component == ACF else 'MCF'} "
                f"suppression set of window (t_min={window.t_min}, t_max={window.t_max})"
            )
    return lag


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

def acf_cost(sub: ZeroTailSubspace, x, n: int, window: Optional[LagWindow] = None) -> float:
    """F1(x, n); lag 0 is only reachable without a window."""
    lag = _check_lag(sub, n, window, ACF)
    y = to_time_domain(sub, x)
    e = _energy(y)
    return float(abs(_lag_value(y, y, lag)) ** 2 / e**2)


def mcf_cost(
    sub: ZeroTailSubspace,
    x,
    others: Sequence,
    n: int,
    window: Optional[LagWindow] = None,
) -> float:
    """F2(x, n) summed over ``others`` (preimages, x itself excluded)."""
    lag = _check_lag(sub, n, window, MCF)
    if len(others) == 0:
        return 0.0
    y = to_time_domain(sub, x)
    e = _energy(y)
    total = 0.0
    for other in others:
        z = to_time_domain(sub, other)
        total += abs(_lag_value(y, z, lag)) ** 2
    return float(total / e**2)


# ---------------------------------------------------------------------------
# Gradients (row vectors, Wirtinger dF/dx)
# ---------------------------------------------------------------------------

def _acf_terms(sub: ZeroTailSubspace, y: np.ndarray, lag: int):
    e = _energy(y)
    r = _lag_value(y, y, lag)
    u_back = adjoint_apply(sub, np.roll(y, lag))
    u_fwd = adjoint_apply(sub, np.roll(y, -lag))
    u0 = adjoint_apply(sub, y)
    first = np.conj(r) * np.conj(u_back) / e**2
    second = r * np.conj(u_fwd) / e**2
    third = 2.0 * abs(r) ** 2 * np.conj(u0) / e**3
    return first, second, third


def acf_gradient(sub: ZeroTailSubspace, x, n: int, window: Optional[LagWindow] = None) -> np.ndarray:
    lag = _check_lag(sub, n, window, ACF)
    y = to_time_domain(sub, x)
    first, second, third = _acf_terms(sub, y, lag)
    return first + second - third


def _mcf_pair_gradient(sub: ZeroTailSubspace, y: np.ndarray, z: np.ndarray, lag: int, u0: np.ndarray, e: float):
    r = _lag_value(y, z, lag)
    u_partner = adjoint_apply(sub, np.roll(z, -lag))
    return r * np.conj(u_partner) / e**2 - 2.0 * abs(r) ** 2 * np.conj(u0) / e**3


def mcf_gradient(
    sub: ZeroTailSubspace,
    x,
    others: Sequence,
    n: int,
    window: Optional[LagWindow] = None,
) -> np.ndarray:
    lag = _check_lag(sub, n, window, MCF)
    grad = np.zeros(sub.preimage_dim, dtype=complex)
    if len(others) == 0:
        return grad
    y = to_time_domain(sub, x)
    e = _energy(y)
    u0 = adjoint_apply(sub, y)
    for other in others:
        grad = grad + _mcf_pair_gradient(sub, y, to_time_domain(sub, other), lag, u0, e)
    return grad


def peak_gradient(sub: ZeroTailSubspace, x, td_pilots: Sequence[np.ndarray], peak: PeakRecord) -> np.ndarray:
    """Gradient of the single cost term a peak record names."""
    if peak.component == ACF:
        y = to_time_domain(sub, x)
        first, second, third = _acf_terms(sub, y, peak.lag)
        return first + second - third
    y = to_time_domain(sub, x)
    e = _energy(y)
    u0 = adjoint_apply(sub, y)
    return _mcf_pair_gradient(sub, y, np.asarray(td_pilots[peak.partner]), peak.lag, u0, e)


# ---------------------------------------------------------------------------
# Peak scanning
# ---------------------------------------------------------------------------

def scan_candidates(
    td_pilots: Sequence[np.ndarray],
    pilot_index: int,
    window: LagWindow,
    *,
    workers: int = 1,
) -> list[PeakRecord]:
    """Every (component, partner, lag) cost value of one pilot, unsorted."""
    y = np.asarray(td_pilots[pilot_index])
    e = _energy(y)
    records: list[PeakRecord] = []

    r = cyclic_xcorr(y, y, workers=workers)
    for lag in window.acf_scan_lags():
        records.append(PeakRecord(component=ACF, lag=int(lag), value=float(abs(r[lag]) ** 2 / e**2)))

    mcf_lags = window.mcf_lags()
    for q, z in enumerate(td_pilots):
        if q == pilot_index:
            continue
        r = cyclic_xcorr(y, np.asarray(z), workers=workers)
        values = np.abs(r[mcf_lags]) ** 2 / e**2
        for lag, value in zip(mcf_lags, values):
            records.append(PeakRecord(component=MCF, partner=q, lag=int(lag), value=float(value)))
    return records


def sort_peaks(records: Sequence[PeakRecord]) -> list[PeakRecord]:
    """Descending value; ties go to smaller |lag|, then component, partner, lag."""
    return sorted(
        records,
        key=lambda p: (-p.value, abs(p.lag), p.component, -1 if p.partner is None else p.partner, p.lag),
    )


def peak_scan(
    sub: ZeroTailSubspace,
    pilot_set,
    pilot_index: int,
    window: LagWindow,
    n_peaks: int,
) -> list[PeakRecord]:
    """The ``n_peaks`` largest side peaks of one pilot across ACF and per-partner MCF."""
    if n_peaks < 1:
        raise ValueError("n_peaks must be at least 1")
    records = scan_candidates(pilot_set.td_pilots, pilot_index, window, workers=sub.workers)
    return sort_peaks(records)[:n_peaks]


def worst_peak(td_pilots: Sequence[np.ndarray], window: LagWindow, *, workers: int = 1) -> float:
    """Largest side peak over the whole set: every ACF and every pair's MCF.

    Pairs are visited once; |R_pq(n)| = |R_qp(-n)| and the MCF window is
    symmetric, so the reverse direction adds nothing at unit energy.
    """
    n = len(td_pilots)
    if n == 0:
        return 0.0
    spectra = [scipy.fft.fft(np.asarray(y), workers=workers) for y in td_pilots]
    energies = [_energy(np.asarray(y)) for y in td_pilots]
    acf_lags = window.acf_scan_lags()
    mcf_lags = window.mcf_lags()
    worst = 0.0
    for p in range(n):
        if acf_lags.size:
            r = scipy.fft.ifft(np.abs(spectra[p]) ** 2, workers=workers)
            worst = max(worst, float(np.max(np.abs(r[acf_lags]) ** 2)) / energies[p] ** 2)
        for q in range(p + 1, n):
            r = scipy.fft.ifft(np.conj(spectra[p]) * spectra[q], workers=workers)
            worst = max(worst, float(np.max(np.abs(r[mcf_lags]) ** 2)) / energies[p] ** 2)
    return worst


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def correlation_profile(
    a,
    b,
    window: LagWindow,
    *,
    component: int = ACF,
    reference_lag: int = 0,
    exclude: Optional[tuple[int, int]] = None,
    pilot: Optional[int] = None,
    partner: Optional[int] = None,
    workers: int = 1,
) -> CorrelationProfile:
    """Windowed power profile of R_ab.

    ACF-style profiles (component 1, also used for mixtures) are normalized so
    the value at ``reference_lag`` is exactly 1 and suppress the lags outside
    the inner zone; MCF profiles are normalized by E_a * E_b and suppress every
    window lag. ``exclude`` replaces the inner zone with an explicit
    [lo, hi] lag range relative to the reference lag.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    r = cyclic_xcorr(a, b, workers=workers)
    lags = window.all_lags() + reference_lag
    values = np.abs(r[np.mod(lags, a.size)]) ** 2
    rel = lags - reference_lag

    if component == ACF:
        main = values[rel == 0][0]
        if main == 0.0:
            raise ZeroInput("reference lag carries no correlation energy")
        values = values / main
        if exclude is None:
            excluded = np.abs(rel) <= window.inner
        else:
            excluded = (rel >= exclude[0]) & (rel <= exclude[1])
        suppressed = ~excluded
    else:
        values = values / (_energy(a) * _energy(b))
        excluded = np.abs(rel) <= window.inner
        suppressed = np.ones_like(excluded)

    main_peak = float(values[rel == 0][0])
    max_side = max_lag = None
    if np.any(suppressed):
        side_vals = np.where(suppressed, values, -np.inf)
        k = int(np.argmax(side_vals))
        max_side, max_lag = float(values[k]), int(rel[k])

    return CorrelationProfile(
        lags=rel,
        values=values,
        excluded=excluded,
        suppressed=suppressed,
        main_peak=main_peak,
        max_side_peak=max_side,
        max_side_lag=max_lag,
        component=component,
        pilot=pilot,
        partner=partner,
    )


def to_db(value: float) -> float:
    if value <= 0.0:
        return float("-inf")
    return float(10.0 * np.log10(value))
