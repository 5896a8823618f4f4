"""
Synthesis and evaluation workflows.

Pipeline:
  1. Load the zero-tail subspace from its cache, or build it (and cache it)
  2. Run the correlation search, with PAPR passes interleaved when configured
  3. Evaluate the final set
  4. Write the pilot file, trace and reports (synthesize) or the plot data
     (evaluate) into the output directory
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.correlation import to_db, worst_peak
from src.display import render_report_text
from src.evaluator import (
    acf_profile,
    channel_profiles,
    evaluate_pilot_set,
    mcf_profile,
    mixture_profile,
    mixture_signal,
)
from src.optimizer import ConvergenceTrace, PilotSet, synthesize
from src.papr import interleaved_synthesis
from src.state import ChannelModel, EvalReport, SynthesisConfig
from src.subspace import ZeroTailSubspace, build_subspace, contiguous_centered, load_subspace, save_subspace
from src.tools.files import atomic_write_text
from src.tools.pilot_file import file_config, read_pilot_file, to_pilot_set, write_pilot_file
from src.tools.plot_data import write_fd_magnitude, write_profiles, write_td_magnitude, write_trace_csv

logger = logging.getLogger(__name__)


class SynthesisRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SynthesisConfig
    subspace: ZeroTailSubspace
    pilot_set: PilotSet
    trace: ConvergenceTrace
    report: EvalReport
    files: list[Path] = []


class EvaluationRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SynthesisConfig
    pilot_set: PilotSet
    report: EvalReport
    files: list[Path] = []


def load_or_build_subspace(config: SynthesisConfig) -> ZeroTailSubspace:
    placement = None if config.carrier_placement == "contiguous-centered" else config.carrier_placement
    cache = Path(config.subspace_cache) if config.subspace_cache else None
    if cache is not None and cache.exists():
        sub = load_subspace(cache, workers=config.workers)
        wanted = contiguous_centered(config.dims.n_fft, config.dims.n_sc) if placement is None else placement
        if sub.dims == config.dims and np.array_equal(sub.placement, np.asarray(wanted)):
            logger.info("Loaded subspace from %s", cache)
            return sub
        logger.warning("Subspace cache %s does not match the config; rebuilding", cache)
    sub = build_subspace(
        config.dims,
        placement,
        singular_floor=config.singular_floor,
        dense_budget=config.dense_budget,
        workers=config.workers,
    )
    if cache is not None:
        save_subspace(sub, cache)
    return sub


def synthesis_metrics(sub: ZeroTailSubspace, pilot_set: PilotSet, report: EvalReport, config: SynthesisConfig) -> dict:
    """Metrics stored in the pilot file header."""
    worst = worst_peak(pilot_set.td_pilots, config.window, workers=sub.workers) if len(pilot_set) else 0.0
    return {
        "worst_peak_db": to_db(worst) if worst > 0 else None,
        "acf_db": report.acf_db,
        "mixture_db": report.mixture_db,
        "worst_mixture_db": report.worst_mixture_db,
        "mean_mixture_db": report.mean_mixture_db,
        "papr_db": report.papr_db,
    }


def run_synthesis(
    config: SynthesisConfig,
    *,
    channels: Optional[Sequence[ChannelModel]] = None,
    weights: Optional[Sequence[float]] = None,
    write: bool = True,
) -> SynthesisRun:
    sub = load_or_build_subspace(config)
    if config.papr is not None:
        result = interleaved_synthesis(config, config.papr, sub)
    else:
        result = synthesize(config, sub)
    pilot_set = result.pilot_set
    report = evaluate_pilot_set(
        sub, pilot_set, config.window, weights=weights, channels=channels, workers=config.workers
    )
    run = SynthesisRun(config=config, subspace=sub, pilot_set=pilot_set, trace=result.trace, report=report)
    if write:
        out = Path(config.out_dir)
        run.files = [
            write_pilot_file(out / "pilots.json", pilot_set, synthesis_metrics(sub, pilot_set, report, config)),
            write_trace_csv(out / "trace.csv", result.trace),
            atomic_write_text(out / "report.json", report.model_dump_json(indent=2) + "\n"),
            atomic_write_text(out / "report.txt", render_report_text(report)),
        ]
    return run


def load_pilot_set(path: Path, workers: int = 1) -> tuple[SynthesisConfig, ZeroTailSubspace, PilotSet]:
    document = read_pilot_file(path)
    config = file_config(document).model_copy(update={"workers": workers})
    sub = load_or_build_subspace(config)
    return config, sub, to_pilot_set(document, sub)


def run_evaluation(
    pilot_path: Path,
    out_dir: Path,
    *,
    channels_spec=None,
    weights: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> EvaluationRun:
    """Evaluate a pilot file and write its plot data next to a JSON report.

    ``channels_spec`` is a callable taking (n_pilots, window) and returning the
    channel list, so spec parsing stays with the caller.
    """
    config, sub, pilot_set = load_pilot_set(pilot_path, workers)
    window = config.window
    n = len(pilot_set)
    channels = channels_spec(n, window) if channels_spec is not None else None
    report = evaluate_pilot_set(sub, pilot_set, window, weights=weights, channels=channels, workers=workers)

    profiles = [("acf", acf_profile(pilot_set, p, window)) for p in range(n)]
    profiles += [("mcf", mcf_profile(pilot_set, p, q, window)) for p in range(n) for q in range(p + 1, n)]
    mixtures = []
    if n:
        mixture = mixture_signal(pilot_set.td_pilots, list(weights) if weights else [1.0] * n)
        mixtures = [("mixture", mixture_profile(pilot_set, p, mixture, window)) for p in range(n)]

    files = [
        write_fd_magnitude(out_dir / "fd_magnitude.csv", sub, pilot_set),
        write_td_magnitude(out_dir / "td_magnitude.csv", sub, pilot_set),
        write_profiles(out_dir / "profiles.csv", profiles),
        write_profiles(out_dir / "mixture_profiles.csv", mixtures),
    ]
    if channels is not None:
        overlap = [("channel", profile) for profile in channel_profiles(sub, pilot_set, channels, window)]
        files.append(write_profiles(out_dir / "channel_profiles.csv", overlap))
    files.append(atomic_write_text(out_dir / "report.json", report.model_dump_json(indent=2) + "\n"))
    return EvaluationRun(config=config, pilot_set=pilot_set, report=report, files=files)
