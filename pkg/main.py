"""
Zero-tail pilot synthesis: main entry point.

Usage:
    python main.py synthesize --config configs/desk-scale.cfg --seed 42
    python main.py evaluate out/pilots.json --channels random:7 --mixture-weights 1,1,1,1
    python main.py info configs/full-scale.cfg
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel

from src.display import print_info, print_report, print_trace_summary
from src.errors import CacheFormatError, ConfigError, PilotFileError, PilotSynthesisError
from src.evaluator import slot_savings, time_conversions
from src.pipeline import run_evaluation, run_synthesis
from src.tools.channels import load_channels
from src.tools.config_file import apply_overrides, load_config
from src.tools.pilot_file import file_config, read_pilot_file

console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _configure_logging(verbosity: int) -> None:
    level = os.getenv("PILOTSYN_LOG_LEVEL", "WARNING").upper()
    if verbosity == 1:
        level = "INFO"
    elif verbosity > 1:
        level = "DEBUG"
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _default_workers() -> int:
    try:
        return max(1, int(os.getenv("PILOTSYN_WORKERS", "1")))
    except ValueError:
        logger.warning("Ignoring non-integer PILOTSYN_WORKERS=%r", os.getenv("PILOTSYN_WORKERS"))
        return 1


def _parse_weights(text: Optional[str], n_pilots: int) -> Optional[list[float]]:
    if text is None:
        return None
    try:
        weights = [float(w) for w in text.split(",") if w.strip()]
    except ValueError as e:
        raise ConfigError(f"--mixture-weights: {e}", key="mixture-weights") from e
    if len(weights) != n_pilots:
        raise ConfigError(
            f"--mixture-weights has {len(weights)} values for {n_pilots} pilots", key="mixture-weights"
        )
    return weights


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Synthesize and evaluate zero-tail OFDM pilot sets with low correlation side peaks"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More log output (-vv for debug)")
    parser.add_argument("--workers", type=int, default=None, help="FFT/evaluation workers (default: PILOTSYN_WORKERS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synthesize", help="Run the pilot search and write pilots, trace and report")
    synth.add_argument("--config", required=True, type=Path, help="Configuration file (INI sections)")
    synth.add_argument("--seed", type=int, default=None, help="Override [optimizer] seed")
    synth.add_argument("--max-iters", type=int, default=None, help="Override [optimizer] max_iters")
    synth.add_argument("--method", choices=["maxpeak", "weighted"], default=None, help="Descent method")
    synth.add_argument("--papr", choices=["on", "off"], default=None, help="Interleave PAPR reduction")
    synth.add_argument("--out-dir", type=str, default=None, help="Override [output] out_dir")
    synth.add_argument("--channels", type=str, default=None, help="random:SEED or a channel JSON file")
    synth.add_argument("--mixture-weights", type=str, default=None, help="Comma-separated per-pilot gains")

    evaluate = sub.add_parser("evaluate", help="Evaluate a pilot file and write plot data")
    evaluate.add_argument("pilots", type=Path, help="Pilot file written by synthesize")
    evaluate.add_argument("--out-dir", type=Path, default=None, help="Output directory (default: next to the pilot file)")
    evaluate.add_argument("--channels", type=str, default=None, help="random:SEED or a channel JSON file")
    evaluate.add_argument("--mixture-weights", type=str, default=None, help="Comma-separated per-pilot gains")

    info = sub.add_parser("info", help="Print time conversions and slot savings")
    info.add_argument("path", type=Path, help="Configuration file or pilot file")
    return parser


def cmd_synthesize(args: argparse.Namespace, workers: int) -> int:
    config = load_config(args.config)
    papr = None if args.papr is None else args.papr == "on"
    config = apply_overrides(
        config,
        seed=args.seed,
        max_iters=args.max_iters,
        method=args.method,
        papr=papr,
        out_dir=args.out_dir,
        workers=workers,
    )
    weights = _parse_weights(args.mixture_weights, config.n_pilots)
    channels = load_channels(args.channels, config.n_pilots, config.window) if args.channels else None

    console.print()
    console.print(
        Panel.fit(
            "[bold cyan]Zero-Tail Pilot Synthesis[/bold cyan]\n"
            f"dims ({config.dims.n_fft}, {config.dims.n_sc}, {config.dims.t_zero}), "
            f"{config.n_pilots} pilots, window ({config.window.t_min}, {config.window.t_max})\n"
            f"method [bold]{config.optimizer.method.value}[/bold], seed {config.optimizer.seed}, "
            f"PAPR {'on' if config.papr else 'off'}",
            border_style="cyan",
        )
    )
    start = time.time()
    with console.status("[bold green]Searching pilots..."):
        run = run_synthesis(config, channels=channels, weights=weights)
    console.print(f"[dim]Synthesis completed in {time.time() - start:.1f}s[/dim]")
    print_trace_summary(run.trace)
    print_report(run.report)
    for path in run.files:
        console.print(f"[dim]wrote {path}[/dim]")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, workers: int) -> int:
    out_dir = args.out_dir or args.pilots.parent
    channels_spec = None
    if args.channels:
        def channels_spec(n, window):
            return load_channels(args.channels, n, window)
    n_pilots = len(read_pilot_file(args.pilots).pilots)
    weights = _parse_weights(args.mixture_weights, n_pilots)
    run = run_evaluation(args.pilots, out_dir, channels_spec=channels_spec, weights=weights, workers=workers)
    print_report(run.report)
    for path in run.files:
        console.print(f"[dim]wrote {path}[/dim]")
    return EXIT_OK


def cmd_info(args: argparse.Namespace, workers: int) -> int:
    if args.path.suffix.lower() == ".json":
        config = file_config(read_pilot_file(args.path))
    else:
        config = load_config(args.path)
    savings = slot_savings(config.n_pilots) if config.n_pilots >= 3 else None
    print_info(config, time_conversions(config), savings)
    return EXIT_OK


COMMANDS = {"synthesize": cmd_synthesize, "evaluate": cmd_evaluate, "info": cmd_info}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    workers = args.workers if args.workers is not None else _default_workers()

    try:
        return COMMANDS[args.command](args, workers)
    except (PilotFileError, CacheFormatError, OSError) as e:
        console.print(f"\n[bold red]I/O error:[/bold red] {escape(str(e))}")
        return EXIT_IO
    except ConfigError as e:
        console.print(f"\n[bold red]Configuration error:[/bold red] {escape(str(e))}")
        return EXIT_CONFIG
    except PilotSynthesisError as e:
        console.print(f"\n[bold red]Error:[/bold red] {escape(str(e))}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
