"""Rich renderers for CLI output."""

from __future__ import annotations

from typing import Sequence

from rich.console import Console, Group
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from src.models.data_models import PrunedSelection, RunRecord
from src.ui.styles import DYCP_THEME, method_label

console = Console(theme=DYCP_THEME)
err_console = Console(theme=DYCP_THEME, stderr=True)


def format_spans(selection: PrunedSelection) -> str:
    return ",".join(f"({s.start},{s.end})" for s in selection.spans)


def selection_panel(selection: PrunedSelection, dialogue_id: str, theta: float, show_context: bool = True) -> Panel:
    spans = Table(show_header=True, header_style="bold", box=None)
    spans.add_column("#", justify="right")
    spans.add_column("Span", style="span")
    spans.add_column("Turns", justify="right")
    spans.add_column("Gain", justify="right")
    for n, span in enumerate(selection.spans, start=1):
        style = "gain.high" if span.gain >= theta else "gain.low"
        spans.add_row(str(n), f"({span.start},{span.end})", str(span.length), f"[{style}]{span.gain:.4f}[/{style}]")

    stats = selection.stats
    ratio = selection.token_pruned / selection.token_full if selection.token_full else 0.0
    summary = Text.from_markup(
        f"[stat_label]spans[/stat_label] [stat_value]{format_spans(selection) or '-'}[/stat_value]  "
        f"[stat_label]turns[/stat_label] [stat_value]{list(selection.turn_indices)}[/stat_value]\n"
        f"[stat_label]RS[/stat_label] [stat_value]{stats.retrieved_segments}[/stat_value]  "
        f"[stat_label]TpS[/stat_label] [stat_value]{stats.turns_per_segment:.2f}[/stat_value]  "
        f"[stat_label]tokens[/stat_label] [stat_value]{selection.token_pruned}/{selection.token_full}"
        f" ({ratio:.1%})[/stat_value]"
    )
    parts: list = [summary, spans]
    if show_context and selection.rendered_context:
        parts.append(Panel(Text(selection.rendered_context), title="Context", border_style="panel_border"))
    return Panel(Group(*parts), title=f"[header] {dialogue_id} [/header]", border_style="panel_border")


def summary_table(records: Sequence[RunRecord], ks: Sequence[int]) -> Table:
    table = Table(show_header=True, header_style="bold", expand=False)
    table.add_column("Method")
    for k in ks:
        table.add_column(f"R@{k}", justify="right")
    table.add_column("H", justify="right")
    table.add_column("R", justify="right")
    table.add_column("P", justify="right")
    table.add_column("TpS", justify="right")
    table.add_column("RS", justify="right")
    table.add_column("Tokens", justify="right")
    table.add_column("ms", justify="right")
    table.add_column("Err", justify="right")

    for r in records:
        rep = r.report
        table.add_row(
            method_label(r.method),
            *(f"{rep.recall_at.get(k, 0.0):.3f}" for k in ks),
            f"{rep.hit:.3f}",
            f"{rep.recall:.3f}",
            f"{rep.precision:.3f}",
            f"{r.tps:.2f}",
            f"{r.rs:.2f}",
            f"{r.tokens_pruned_mean:.0f}/{r.tokens_full_mean:.0f}",
            f"{r.prune_ms_mean:.2f}",
            f"[error]{r.errors}[/error]" if r.errors else "0",
        )
    return table


def ablation_table(records: Sequence[RunRecord]) -> Table:
    table = Table(show_header=True, header_style="bold")
    table.add_column("Method")
    table.add_column("Recall", justify="right")
    table.add_column("Precision", justify="right")
    table.add_column("Turns", justify="right")
    table.add_column("Tokens", justify="right")
    table.add_column("Δ turns", justify="right")
    table.add_column("Δ tokens", justify="right")
    if not records:
        return table
    base = records[0]
    for r in records:
        table.add_row(
            method_label(r.method),
            f"{r.report.recall:.3f}",
            f"{r.report.precision:.3f}",
            f"{r.turns_mean:.2f}",
            f"{r.tokens_pruned_mean:.0f}",
            f"{r.turns_mean - base.turns_mean:+.2f}",
            f"{r.tokens_pruned_mean - base.tokens_pruned_mean:+.0f}",
        )
    return table
