"""
Alternating min-max pilot search.

Pilots are visited round robin. Each visit scans the pilot's side peaks,
descends against the largest one (max-peak method) or a weighted sum of the
largest few (weighted-peaks method), renormalizes to unit TD energy and adapts
the step size. A run stops after a full round in which no pilot moved more than
``epsilon`` in preimage space, or after ``max_iters`` single-pilot updates.
"""

from __future__ import annotations

import logging
import time
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.correlation import peak_gradient, peak_scan, to_db, worst_peak
from src.errors import DimensionMismatch, PilotSynthesisError, ZeroInput
from src.power import td_papr
from src.state import (
    DescentMethod,
    LagWindow,
    OptimizerConfig,
    PeakRecord,
    StepRecord,
    StepStrategy,
    SynthesisConfig,
    TraceRecord,
)
from src.subspace import ZeroTailSubspace, to_frequency_domain, to_time_domain

logger = logging.getLogger(__name__)

# hook run on a pilot's preimage right after its correlation-driven update
PostUpdate = Callable[[int, np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Pilot sets and traces
# ---------------------------------------------------------------------------

class PilotSetMetadata(BaseModel):
    config: Optional[dict] = None
    seed: Optional[int] = None
    iterations: int = 0
    converged: Optional[bool] = None


class PilotSet(BaseModel):
    """Preimages with their FD pilots (V0 x) and TD images (A x)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    preimages: list[np.ndarray] = Field(default_factory=list)
    fd_pilots: list[np.ndarray] = Field(default_factory=list)
    td_pilots: list[np.ndarray] = Field(default_factory=list)
    metadata: PilotSetMetadata = Field(default_factory=PilotSetMetadata)

    def __len__(self) -> int:
        return len(self.preimages)

    def replace_pilot(self, sub: ZeroTailSubspace, index: int, x: np.ndarray, td: Optional[np.ndarray] = None) -> "PilotSet":
        preimages = list(self.preimages)
        fd = list(self.fd_pilots)
        tds = list(self.td_pilots)
        preimages[index] = x
        fd[index] = to_frequency_domain(sub, x)
        tds[index] = to_time_domain(sub, x) if td is None else td
        return PilotSet(preimages=preimages, fd_pilots=fd, td_pilots=tds, metadata=self.metadata)


def make_pilot_set(
    sub: ZeroTailSubspace,
    preimages: Sequence[np.ndarray],
    metadata: Optional[PilotSetMetadata] = None,
) -> PilotSet:
    preimages = [np.asarray(x, dtype=complex) for x in preimages]
    return PilotSet(
        preimages=preimages,
        fd_pilots=[to_frequency_domain(sub, x) for x in preimages],
        td_pilots=[to_time_domain(sub, x) for x in preimages],
        metadata=metadata or PilotSetMetadata(),
    )


def normalize_energy(sub: ZeroTailSubspace, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale x so that |A x| = 1; returns the preimage and its TD image."""
    y = to_time_domain(sub, x)
    norm = float(np.linalg.norm(y))
    if norm == 0.0:
        raise ZeroInput("cannot normalize a pilot with zero TD energy")
    return x / norm, y / norm


def check_pilot_invariants(sub: ZeroTailSubspace, pilot_set: PilotSet, *, tol: float = 1e-9) -> None:
    """Raise if any pilot breaks the FD mapping, zero tail or unit energy."""
    tail = sub.tail_slice()
    for i, (x, fd, td) in enumerate(zip(pilot_set.preimages, pilot_set.fd_pilots, pilot_set.td_pilots)):
        if np.max(np.abs(fd - sub.v0 @ x)) > 1e-12 * max(1.0, np.max(np.abs(fd))):
            raise PilotSynthesisError(f"pilot {i}: FD pilot does not match V0 x")
        peak = np.max(np.abs(td))
        if sub.dims.t_zero and np.max(np.abs(td[tail])) > tol * peak:
            raise PilotSynthesisError(f"pilot {i}: zero tail violated")
        if abs(np.linalg.norm(td) - 1.0) > 1e-10:
            raise PilotSynthesisError(f"pilot {i}: TD energy is not unit")


class ConvergenceTrace(BaseModel):
    """Per-iteration worst peak, step size and timing of one run."""

    initial_worst_peak: Optional[float] = None
    records: list[TraceRecord] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def worst_peaks(self) -> np.ndarray:
        return np.array([r.worst_peak for r in self.records])

    def running_minimum(self) -> np.ndarray:
        values = self.worst_peaks()
        if self.initial_worst_peak is not None and values.size:
            values = np.minimum(values, self.initial_worst_peak)
        return np.minimum.accumulate(values) if values.size else values


class SynthesisResult(BaseModel):
    pilot_set: PilotSet
    trace: ConvergenceTrace


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_pilots(config: SynthesisConfig, sub: ZeroTailSubspace) -> PilotSet:
    """Seeded i.i.d. standard complex Gaussian preimages at unit TD energy."""
    seed = config.optimizer.seed
    rng = np.random.default_rng(seed)
    m = sub.preimage_dim
    preimages, fd, td = [], [], []
    for _ in range(config.n_pilots):
        x = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)
        x, y = normalize_energy(sub, x)
        preimages.append(x)
        fd.append(to_frequency_domain(sub, x))
        td.append(y)
    return PilotSet(
        preimages=preimages,
        fd_pilots=fd,
        td_pilots=td,
        metadata=PilotSetMetadata(config=config.snapshot(), seed=seed),
    )


# ---------------------------------------------------------------------------
# Step-size strategies and gradient averaging
# ---------------------------------------------------------------------------

class StepSizeState(BaseModel):
    h_prev: float = Field(gt=0.0)
    iteration: int = 0
    f_now: float = 0.0
    f_prev: Optional[float] = None


def next_step_size(strategy: StepStrategy, state: StepSizeState, config: OptimizerConfig) -> float:
    """Step size for the next update under one of the three strategies."""
    if strategy == StepStrategy.SHRINK_ON_WORSE:
        if state.f_prev is not None and state.f_now > state.f_prev:
            return state.h_prev / config.shrink_divisor
        return state.h_prev
    if strategy == StepStrategy.SCHEDULE:
        return config.h0 / (1.0 + state.iteration / config.schedule_tau)
    return float(np.clip(config.cost_gain * state.f_now, config.h_min, config.h_max))


def apply_gradient_averaging(current_grad, previous_avg, learn_rate: float) -> np.ndarray:
    """learn_rate * g + (1 - learn_rate) * g_prev; no history means no mixing."""
    current_grad = np.asarray(current_grad, dtype=complex)
    if previous_avg is None:
        return current_grad
    previous_avg = np.asarray(previous_avg, dtype=complex)
    if previous_avg.shape != current_grad.shape:
        raise DimensionMismatch("averaged gradient", current_grad.shape, previous_avg.shape)
    if not 0.0 <= learn_rate <= 1.0:
        raise ValueError("learn_rate must lie in [0, 1]")
    return learn_rate * current_grad + (1.0 - learn_rate) * previous_avg


# ---------------------------------------------------------------------------
# Descent steps
# ---------------------------------------------------------------------------

class PilotState(BaseModel):
    """Per-pilot optimizer memory: current step size and gradient average."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    step_size: float
    avg_grad: Optional[np.ndarray] = None
    updates: int = 0


class StepOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    preimage: np.ndarray
    td: np.ndarray
    record: StepRecord
    state: PilotState


def _peak_weights(peaks: Sequence[PeakRecord], config: OptimizerConfig) -> list[float]:
    betas = config.betas()
    return [config.alpha_weights[p.component - 1] * betas[k] for k, p in enumerate(peaks)]


def _objective(peaks: Sequence[PeakRecord], weights: Sequence[float]) -> float:
    total = 0.0
    for peak, w in zip(peaks, weights):
        total += w * peak.value
    return total


def _descent_step(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    pilot_index: int,
    window: LagWindow,
    config: OptimizerConfig,
    state: PilotState,
    n_peaks: int,
    weigh: Callable[[Sequence[PeakRecord]], list[float]],
    iteration: int,
) -> StepOutcome:
    x = pilot_set.preimages[pilot_index]
    td = pilot_set.td_pilots[pilot_index]
    peaks = peak_scan(sub, pilot_set, pilot_index, window, n_peaks)
    if not peaks:
        record = StepRecord(
            pilot=pilot_index, step_size=state.step_size, next_step_size=state.step_size,
            cost_before=0.0, cost_after=0.0, accepted=True, displacement=0.0,
        )
        return StepOutcome(preimage=x, td=td, record=record, state=state)

    weights = weigh(peaks)
    cost_before = _objective(peaks, weights)

    grad = np.zeros(sub.preimage_dim, dtype=complex)
    for peak, w in zip(peaks, weights):
        if w == 0.0:
            continue
        grad = grad + w * peak_gradient(sub, x, pilot_set.td_pilots, peak)
    grad = apply_gradient_averaging(grad, state.avg_grad, config.learn_rate)

    strategy = config.step_strategy
    if strategy == StepStrategy.SHRINK_ON_WORSE:
        h = state.step_size
    else:
        h = next_step_size(
            strategy,
            StepSizeState(h_prev=state.step_size, iteration=iteration, f_now=cost_before),
            config,
        )

    x_new, td_new = normalize_energy(sub, x - h * np.conj(grad))
    displacement = float(np.linalg.norm(x_new - x))
    candidate = pilot_set.replace_pilot(sub, pilot_index, x_new, td_new)
    after = peak_scan(sub, candidate, pilot_index, window, n_peaks)
    cost_after = _objective(after, weigh(after))

    accepted = True
    next_h = h
    if strategy == StepStrategy.SHRINK_ON_WORSE:
        next_h = next_step_size(
            strategy,
            StepSizeState(h_prev=h, iteration=iteration, f_now=cost_after, f_prev=cost_before),
            config,
        )
        if next_h < h and config.rollback:
            accepted = False

    if accepted:
        new_state = PilotState(step_size=next_h, avg_grad=grad, updates=state.updates + 1)
        out_x, out_td = x_new, td_new
    else:
        new_state = PilotState(step_size=next_h, avg_grad=state.avg_grad, updates=state.updates)
        out_x, out_td = x, td

    record = StepRecord(
        pilot=pilot_index,
        step_size=h,
        next_step_size=next_h,
        cost_before=cost_before,
        cost_after=cost_after,
        accepted=accepted,
        displacement=displacement,
        target=peaks[0],
    )
    return StepOutcome(preimage=out_x, td=out_td, record=record, state=new_state)


def descent_step_maxpeak(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    pilot_index: int,
    window: LagWindow,
    config: OptimizerConfig,
    state: Optional[PilotState] = None,
    *,
    iteration: int = 0,
) -> StepOutcome:
    """One step against the single largest side peak of a pilot."""
    state = state or PilotState(step_size=config.h0)
    return _descent_step(
        sub, pilot_set, pilot_index, window, config, state,
        n_peaks=1, weigh=lambda peaks: [1.0] * len(peaks), iteration=iteration,
    )


def descent_step_weighted(
    sub: ZeroTailSubspace,
    pilot_set: PilotSet,
    pilot_index: int,
    window: LagWindow,
    config: OptimizerConfig,
    state: Optional[PilotState] = None,
    *,
    iteration: int = 0,
) -> StepOutcome:
    """One step against sum_k alpha_i beta_k F~ over the top ``n_peaks`` peaks."""
    state = state or PilotState(step_size=config.h0)
    return _descent_step(
        sub, pilot_set, pilot_index, window, config, state,
        n_peaks=config.n_peaks, weigh=lambda peaks: _peak_weights(peaks, config), iteration=iteration,
    )


# ---------------------------------------------------------------------------
# Full search
# ---------------------------------------------------------------------------

def synthesize(
    config: SynthesisConfig,
    sub: ZeroTailSubspace,
    *,
    post_update: Optional[PostUpdate] = None,
) -> SynthesisResult:
    """Run the alternating search; returns the pilot set and its trace.

    A run that hits ``max_iters`` without converging returns the best set seen
    (by set-wide worst side peak) with ``metadata.converged = False``.
    """
    opt = config.optimizer
    window = config.window
    pilots = init_pilots(config, sub)
    n = len(pilots)
    trace = ConvergenceTrace()
    if n == 0 or opt.max_iters == 0:
        pilots.metadata.converged = n == 0
        return SynthesisResult(pilot_set=pilots, trace=trace)

    step = descent_step_maxpeak if opt.method == DescentMethod.MAX_PEAK else descent_step_weighted
    states = [PilotState(step_size=opt.h0) for _ in range(n)]
    best_set = pilots
    best_worst = trace.initial_worst_peak = worst_peak(pilots.td_pilots, window, workers=sub.workers)
    logger.info(
        "Synthesis started: %d pilots, method=%s, strategy=%s, initial worst peak %.2f dB",
        n, opt.method.value, opt.step_strategy.value, to_db(best_worst),
    )

    iteration = 0
    converged = False
    start = time.perf_counter()
    while iteration < opt.max_iters and not converged:
        round_displacement = 0.0
        full_round = True
        for p in range(n):
            if iteration >= opt.max_iters:
                full_round = False
                break
            outcome = step(sub, pilots, p, window, opt, states[p], iteration=iteration)
            x = outcome.preimage
            displacement = outcome.record.displacement
            td = outcome.td
            if post_update is not None:
                moved = post_update(p, x)
                if moved is not x:
                    displacement = max(displacement, float(np.linalg.norm(moved - pilots.preimages[p])))
                    x, td = moved, None
            pilots = pilots.replace_pilot(sub, p, x, td)
            states[p] = outcome.state
            iteration += 1

            current = worst_peak(pilots.td_pilots, window, workers=sub.workers)
            trace.records.append(
                TraceRecord(
                    iteration=iteration,
                    pilot=p,
                    worst_peak=current,
                    worst_peak_db=to_db(current),
                    step_size=outcome.record.step_size,
                    wall_ms=(time.perf_counter() - start) * 1e3,
                    accepted=outcome.record.accepted,
                    papr_db=to_db(td_papr(pilots.td_pilots[p], sub.dims.head_len)),
                )
            )
            if current < best_worst:
                best_worst, best_set = current, pilots
            round_displacement = max(round_displacement, displacement)

        if logger.isEnabledFor(logging.DEBUG):
            check_pilot_invariants(sub, pilots)
            logger.debug(
                "Iteration %d: worst peak %.2f dB, round displacement %.3e",
                iteration, to_db(trace.records[-1].worst_peak), round_displacement,
            )
        if full_round and round_displacement < opt.epsilon:
            converged = True

    if converged:
        result_set = pilots
        logger.info("Converged after %d iterations, worst peak %.2f dB", iteration, to_db(trace.records[-1].worst_peak))
    else:
        result_set = best_set
        logger.warning(
            "No convergence within %d iterations; returning best set (worst peak %.2f dB)",
            opt.max_iters, to_db(best_worst),
        )
    result_set = PilotSet(
        preimages=result_set.preimages,
        fd_pilots=result_set.fd_pilots,
        td_pilots=result_set.td_pilots,
        metadata=PilotSetMetadata(
            config=config.snapshot(),
            seed=opt.seed,
            iterations=iteration,
            converged=converged,
        ),
    )
    return SynthesisResult(pilot_set=result_set, trace=trace)
