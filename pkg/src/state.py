"""
Shared models for the pilot synthesis pipeline.

Configuration objects, lag windows, per-iteration records and evaluation
reports all live here as pydantic models, so every stage validates what it
receives and the CLI can snapshot any of them into its output files.
"""

from __future__ import annotations

from enum import Enum
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


# ---------------------------------------------------------------------------
# Subspace and window geometry
# ---------------------------------------------------------------------------

class SubspaceDims(BaseModel):
    """FFT length, occupied subcarriers and zero-tail length (all in samples)."""

    n_fft: int = Field(description="FFT length, samples", gt=0)
    n_sc: int = Field(description="Number of occupied subcarriers", gt=0)
    t_zero: int = Field(description="Zero-tail length, samples", ge=0)

    @model_validator(mode="after")
    def _check_geometry(self) -> "SubspaceDims":
        if self.n_sc > self.n_fft:
            raise ValueError(f"n_sc ({self.n_sc}) must not exceed n_fft ({self.n_fft})")
        if self.t_zero >= self.n_sc:
            raise ValueError(
                f"t_zero ({self.t_zero}) must be below n_sc ({self.n_sc}); "
                "the preimage space would be empty"
            )
        return self

    @property
    def preimage_dim(self) -> int:
        return self.n_sc - self.t_zero

    @property
    def head_len(self) -> int:
        """Number of time samples in front of the zero tail."""
        return self.n_fft - self.t_zero


class LagWindow(BaseModel):
    """Search window around the reference lag.

    ``t_max`` bounds the initial clock difference, ``t_min`` the timing
    precision. Half-widths are rounded down.
    """

    t_min: int = Field(description="Inner exclusion zone source, samples", ge=0)
    t_max: int = Field(description="Outer window source, samples", gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "LagWindow":
        if self.t_min >= self.t_max:
            raise ValueError(f"t_min ({self.t_min}) must be below t_max ({self.t_max})")
        if self.inner >= self.outer:
            raise ValueError(
                f"t_min ({self.t_min}) and t_max ({self.t_max}) leave no ACF lags: "
                f"t_min // 2 = {self.inner} must be below t_max // 2 = {self.outer}"
            )
        return self

    @property
    def inner(self) -> int:
        return self.t_min // 2

    @property
    def outer(self) -> int:
        return self.t_max // 2

    def all_lags(self) -> np.ndarray:
        return np.arange(-self.outer, self.outer + 1)

    def acf_lags(self) -> np.ndarray:
        """Full ACF suppression set, both signs."""
        lags = self.all_lags()
        return lags[np.abs(lags) > self.inner]

    def acf_scan_lags(self) -> np.ndarray:
        """Positive half of the ACF set; |R(-n)| = |R(n)| makes the rest redundant."""
        return np.arange(self.inner + 1, self.outer + 1)

    def mcf_lags(self) -> np.ndarray:
        return self.all_lags()

    def is_acf_lag(self, lag: int) -> bool:
        return self.inner < abs(lag) <= self.outer

    def is_mcf_lag(self, lag: int) -> bool:
        return abs(lag) <= self.outer

    def is_excluded(self, lag: int) -> bool:
        """True inside the inner [-t_min/2, t_min/2] zone."""
        return abs(lag) <= self.inner


# ---------------------------------------------------------------------------
# Optimizer configuration
# ---------------------------------------------------------------------------

class DescentMethod(str, Enum):
    MAX_PEAK = "maxpeak"
    WEIGHTED_PEAKS = "weighted"


class StepStrategy(str, Enum):
    SHRINK_ON_WORSE = "shrink_on_worse"
    SCHEDULE = "schedule"
    COST_PROPORTIONAL = "cost_proportional"


class OptimizerConfig(BaseModel):
    """Knobs of the alternating min-max pilot search."""

    method: DescentMethod = Field(default=DescentMethod.MAX_PEAK)
    n_peaks: int = Field(default=1, gt=0, description="Peaks attacked per step")
    alpha_weights: list[float] = Field(
        default_factory=lambda: [1.0, 1.0],
        description="Per-component weights: [ACF, MCF]",
    )
    beta_weights: Optional[list[float]] = Field(
        default=None, description="Per-rank weights; defaults to 1/k"
    )
    learn_rate: float = Field(default=1.0, ge=0.0, le=1.0, description="Gradient averaging mix")
    step_strategy: StepStrategy = Field(default=StepStrategy.SHRINK_ON_WORSE)
    shrink_divisor: float = Field(default=2.0, gt=1.0, description="a in h/a")
    schedule_tau: float = Field(default=500.0, gt=0.0, description="tau in h0/(1 + n/tau)")
    cost_gain: float = Field(default=5.0, gt=0.0, description="c in h = c*F")
    h_min: float = Field(default=1e-6, gt=0.0)
    h_max: float = Field(default=0.5, gt=0.0)
    h0: float = Field(default=0.1, gt=0.0, description="Initial step size")
    rollback: bool = Field(default=True, description="Restore x when a step makes the cost worse")
    epsilon: float = Field(default=1e-6, gt=0.0, description="Round displacement threshold")
    max_iters: int = Field(default=20000, ge=0, description="Single-pilot updates")
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("alpha_weights")
    @classmethod
    def _check_alpha(cls, v: list[float]) -> list[float]:
        if len(v) != 2 or any(w < 0 for w in v):
            raise ValueError("alpha_weights needs two non-negative values (ACF, MCF)")
        return v

    @model_validator(mode="after")
    def _check_weights(self) -> "OptimizerConfig":
        if self.beta_weights is not None:
            beta = self.beta_weights
            if len(beta) < self.n_peaks:
                raise ValueError(
                    f"beta_weights has {len(beta)} entries, n_peaks is {self.n_peaks}"
                )
            if any(b < 0 for b in beta):
                raise ValueError("beta_weights must be non-negative")
            if any(b2 > b1 for b1, b2 in zip(beta, beta[1:])):
                raise ValueError("beta_weights must be non-increasing in rank")
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")
        return self

    def betas(self) -> list[float]:
        if self.beta_weights is not None:
            return list(self.beta_weights[: self.n_peaks])
        return [1.0 / k for k in range(1, self.n_peaks + 1)]


class PaprConfig(BaseModel):
    """Low-PAPR interleave settings."""

    n_papr_reductions: int = Field(default=1, ge=0, description="Passes per pilot update")
    n_peaks_td: int = Field(default=4, gt=0, description="TD peaks attacked per pass")
    h_step_papr: float = Field(default=0.05, gt=0.0)
    magnitude_floor: Optional[float] = Field(
        default=None, gt=0.0, description="Fixed floor; None means floor_factor x mean |y|"
    )
    floor_factor: float = Field(default=1.5, gt=0.0)
    step_divisor: float = Field(default=2.0, gt=1.0, description="Step cut after a pass that raised PAPR")


# ---------------------------------------------------------------------------
# Top-level synthesis configuration
# ---------------------------------------------------------------------------

class SynthesisConfig(BaseModel):
    """Everything needed to reproduce a synthesis run bit for bit."""

    dims: SubspaceDims
    delta_f: float = Field(default=30e3, gt=0.0, description="Subcarrier spacing, Hz")
    n_pilots: int = Field(default=4, ge=0)
    window: LagWindow
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    papr: Optional[PaprConfig] = None
    carrier_placement: Union[Literal["contiguous-centered"], list[int]] = "contiguous-centered"
    singular_floor: Optional[float] = Field(default=None, gt=0.0)
    dense_budget: int = Field(default=2**6 * 2**6, ge=0, description="Max entries for a dense A")
    subspace_cache: Optional[str] = None
    out_dir: str = "out"
    workers: int = Field(default=1, gt=0)

    @model_validator(mode="after")
    def _check_window_fits(self) -> "SynthesisConfig":
        if self.window.outer >= self.dims.n_fft:
            raise ValueError(
                f"window half-width {self.window.outer} must be below n_fft ({self.dims.n_fft})"
            )
        return self

    def snapshot(self) -> dict:
        """Config as stored in output files; run-environment fields are left out."""
        return self.model_dump(mode="json", exclude={"workers", "out_dir"})


# ---------------------------------------------------------------------------
# Records produced while optimizing
# ---------------------------------------------------------------------------

class PeakRecord(BaseModel):
    """One side peak of a pilot: component 1 is the ACF, 2 the MCF against ``partner``."""

    component: int
    partner: Optional[int] = None
    lag: int
    value: float


class StepRecord(BaseModel):
    """Outcome of one descent step on one pilot."""

    pilot: int
    step_size: float
    next_step_size: float
    cost_before: float
    cost_after: float
    accepted: bool
    displacement: float
    target: Optional[PeakRecord] = None


class TraceRecord(BaseModel):
    iteration: int
    pilot: int
    worst_peak: float
    worst_peak_db: float
    step_size: float
    wall_ms: float
    accepted: bool = True
    papr_db: Optional[float] = None


# ---------------------------------------------------------------------------
# Channels and reports
# ---------------------------------------------------------------------------

class ChannelTap(BaseModel):
    delay: int = Field(ge=0, description="Delay, samples")
    gain: complex


class ChannelModel(BaseModel):
    """Tapped delay line applied cyclically to a TD pilot."""

    taps: list[ChannelTap] = Field(min_length=1)
    path_loss_db: float = 0.0
    seed: int = 0

    def amplitude(self) -> float:
        return 10.0 ** (-self.path_loss_db / 20.0)

    def strongest_delay(self) -> int:
        return max(self.taps, key=lambda t: (abs(t.gain), -t.delay)).delay


class TimeConversions(BaseModel):
    precision_ns: float
    max_offset_us: float
    tail_us: float


class EvalReport(BaseModel):
    """Metrics of one pilot set; dB values at full precision."""

    n_pilots: int
    acf_db: list[float]
    mcf_db: list[list[Optional[float]]]
    mixture_db: list[float]
    worst_mixture_db: Optional[float] = None
    mean_mixture_db: Optional[float] = None
    papr_db: list[float]
    papr_full_db: list[float]
    channel_db: Optional[list[float]] = None
    slot_savings_pct: Optional[float] = None
    sanity_ok: Optional[bool] = None
    converged: Optional[bool] = None
    iterations: Optional[int] = None
    config: Optional[dict] = None
