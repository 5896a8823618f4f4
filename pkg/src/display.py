"""
Rich terminal display for synthesis and evaluation reports.
"""

from __future__ import annotations

import io
from typing import Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from src.correlation import to_db
from src.optimizer import ConvergenceTrace
from src.state import EvalReport, SynthesisConfig, TimeConversions


console = Console()


def _db(value: Optional[float]) -> str:
    # one decimal in human-readable output
    return "-" if value is None else f"{value:.1f}"


def _db_style(value: Optional[float]) -> str:
    if value is None:
        return "dim"
    return "green" if value >= 15.0 else "yellow" if value >= 10.0 else "red"


def _pilot_table(report: EvalReport) -> Table:
    table = Table(title="Per-pilot metrics (dB)", show_header=True, header_style="bold magenta")
    table.add_column("Pilot", style="cyan", justify="right")
    table.add_column("ACF", justify="right")
    table.add_column("Mixture", justify="right")
    if report.channel_db is not None:
        table.add_column("Channel", justify="right")
    table.add_column("PAPR", justify="right")
    table.add_column("PAPR (full)", justify="right")

    for p in range(report.n_pilots):
        acf = report.acf_db[p] if p < len(report.acf_db) else None
        row = [
            str(p),
            Text(_db(acf), style=_db_style(acf)),
            Text(_db(report.mixture_db[p]), style=_db_style(report.mixture_db[p])),
        ]
        if report.channel_db is not None:
            row.append(Text(_db(report.channel_db[p]), style=_db_style(report.channel_db[p])))
        row += [_db(report.papr_db[p]), _db(report.papr_full_db[p])]
        table.add_row(*row)
    return table


def _mcf_table(report: EvalReport) -> Table:
    table = Table(title="Pairwise MCF (dB)", show_header=True, header_style="bold magenta")
    table.add_column("", style="cyan", justify="right")
    for q in range(report.n_pilots):
        table.add_column(str(q), justify="right")
    for p, row in enumerate(report.mcf_db):
        table.add_row(str(p), *[Text(_db(v), style=_db_style(v)) for v in row])
    return table


def _summary(report: EvalReport) -> str:
    lines = [
        f"Worst mixture: [bold]{_db(report.worst_mixture_db)} dB[/bold]   "
        f"Mean mixture: {_db(report.mean_mixture_db)} dB"
    ]
    if report.slot_savings_pct is not None:
        lines.append(f"Slot savings vs 3 pairs per slot: {report.slot_savings_pct:.1f}%")
    if report.iterations is not None:
        lines.append(f"Iterations: {report.iterations}")
    if report.converged is False:
        lines.append("[bold yellow]WARNING: search did not converge; best set so far reported[/bold yellow]")
    if report.sanity_ok is False:
        lines.append("[bold yellow]WARNING: mixture metric exceeds the pairwise sanity bound[/bold yellow]")
    return "\n".join(lines)


def print_report(report: EvalReport, out: Optional[Console] = None) -> None:
    out = out or console
    out.print()
    out.print(Panel.fit("[bold cyan]Pilot Set Report[/bold cyan]", border_style="cyan"))
    out.print()
    out.print(_pilot_table(report))
    out.print()
    if report.n_pilots > 1:
        out.print(_mcf_table(report))
        out.print()
    out.print(_summary(report))
    out.print()


def render_report_text(report: EvalReport) -> str:
    """Plain aligned-text rendering of a report, for report.txt."""
    buf = io.StringIO()
    print_report(report, Console(file=buf, width=100, color_system=None, force_terminal=False))
    return buf.getvalue()


def print_trace_summary(trace: ConvergenceTrace) -> None:
    if not trace.records:
        console.print("[dim]No iterations run.[/dim]")
        return
    first, last = trace.records[0], trace.records[-1]
    best = float(trace.running_minimum()[-1])
    console.print(
        f"[dim]{len(trace)} iterations in {last.wall_ms / 1e3:.1f}s; worst side peak "
        f"{first.worst_peak_db:.1f} dB after the first update, {last.worst_peak_db:.1f} dB at the end "
        f"(best {to_db(best):.1f} dB)[/dim]"
    )


def print_info(config: SynthesisConfig, conversions: TimeConversions, savings: Optional[float]) -> None:
    table = Table(title="Configuration in physical units", show_header=True, header_style="bold magenta")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("FFT / subcarriers / zero tail", f"{config.dims.n_fft} / {config.dims.n_sc} / {config.dims.t_zero}")
    table.add_row("Subcarrier spacing", f"{config.delta_f / 1e3:g} kHz")
    table.add_row("Timing precision", f"{conversions.precision_ns:.1f} ns")
    table.add_row("Max initial clock offset", f"{conversions.max_offset_us:.3f} us")
    table.add_row("Zero tail", f"{conversions.tail_us:.2f} us")
    table.add_row("Pilots", str(config.n_pilots))
    table.add_row("Slot savings", "-" if savings is None else f"{savings:.1f}%")
    console.print(table)
