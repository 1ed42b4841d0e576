"""Dialogue context pruner: command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 embedding
provider or transport error.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from rich.logging import RichHandler

from src.config import PruneConfig, Settings, _int_list, load_settings
from src.errors import DycpError, UnknownDialogueError
from src.models.data_models import MethodSpec
from src.models.payloads import selection_payload
from src.ui.tables import ablation_table, console, err_console, selection_panel, summary_table

EXIT_OK = 0
EXIT_USAGE = 1

# typer ships its own click; take the usage error base from its hierarchy
_UsageError = next(c for c in typer.BadParameter.__mro__ if c.__name__ == "UsageError")

logger = logging.getLogger(__name__)

app = typer.Typer(name="dycp", add_completion=False, help="Query-time dialogue context pruning")

DEFAULT_COMPARE = ["dycp", "topk:auto", "full", "none"]


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@contextmanager
def _guard() -> Iterator[None]:
    """Turn library errors into a message and the matching exit code."""
    try:
        yield
    except DycpError as exc:
        err_console.print(f"[error]{exc.code}[/error]: {exc}")
        raise typer.Exit(exc.exit_code) from exc


def _settings(ctx: typer.Context) -> Settings:
    if ctx.obj is None:
        ctx.obj = load_settings()
    return ctx.obj


def _apply_overrides(
    settings: Settings,
    embedder: Optional[str] = None,
    tau: Optional[float] = None,
    theta: Optional[float] = None,
    ks: Optional[str] = None,
    out: Optional[Path] = None,
    cache: Optional[Path] = None,
) -> Settings:
    if embedder:
        settings.embedder.spec = embedder
    if tau is not None or theta is not None:
        try:
            settings.prune = PruneConfig(
                settings.prune.tau if tau is None else tau,
                settings.prune.theta if theta is None else theta,
                settings.prune.max_spans,
            )
        except ValueError as exc:
            raise typer.BadParameter(str(exc)) from exc
    if ks:
        try:
            settings.eval.ks = _int_list(ks)
        except ValueError as exc:
            raise typer.BadParameter(f"--ks must be comma-separated integers: {exc}") from exc
    if out is not None:
        settings.eval.out_dir = out
    if cache is not None:
        settings.cache_dir = cache
    return settings


def _parse_methods(values: List[str], settings: Settings, k: Optional[int] = None) -> list[MethodSpec]:
    methods: list[MethodSpec] = []
    for value in values:
        for part in value.split(","):
            if not part.strip():
                continue
            try:
                method = MethodSpec.parse(part, settings.prune)
                if method.kind == "topk" and k is not None and method.k is None:
                    method = MethodSpec("topk", k, config=settings.prune)
            except ValueError as exc:
                raise typer.BadParameter(f"bad method '{part}': {exc}") from exc
            methods.append(method)
    if not methods:
        raise typer.BadParameter("no methods given")
    return methods


def _provider(settings: Settings):
    from src.collectors.embedders import make_provider

    return make_provider(settings.embedder.spec, settings.embedder)


def _llm(settings: Settings):
    if not settings.llm.endpoint:
        return None
    from src.collectors.llm_client import ChatClient

    return ChatClient(settings.llm)


@app.callback()
def root(
    ctx: typer.Context,
    config_file: Optional[Path] = typer.Option(None, "--config", help="JSON config file"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING, ERROR"),
):
    """Prune long dialogue histories down to the spans relevant to the next query."""
    try:
        settings = load_settings(config_file)
    except DycpError as exc:
        err_console.print(f"[error]{exc.code}[/error]: {exc}")
        raise typer.Exit(exc.exit_code) from exc
    if log_level:
        settings.log_level = log_level
    setup_logging(settings.log_level)
    ctx.obj = settings


@app.command()
def ingest(
    ctx: typer.Context,
    dialogues: Path = typer.Option(..., "--dialogues", "-d", help="JSONL dataset"),
    cache: Optional[Path] = typer.Option(None, "--cache", "-c", help="Cache output directory"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e", help="test:<dim> or http:<url>[:model]"),
):
    """Embed every turn of every dialogue and write one cache file per dialogue."""
    settings = _apply_overrides(_settings(ctx), embedder=embedder, cache=cache)
    with _guard():
        from src.collectors.dataset_loader import load_dialogues
        from src.store.cache import cache_path, save_cache
        from src.store.history import DialogueHistory, extend_turns

        dataset = load_dialogues(dialogues)
        provider = _provider(settings)
        turns = 0
        dim = None
        for source, _ in dataset:
            history = DialogueHistory(source.dialogue_id)
            extend_turns(history, ((t.user_text, t.agent_text) for t in source.turns), provider)
            save_cache(history, cache_path(settings.cache_dir, source.dialogue_id))
            turns += len(history)
            dim = history.dim or dim
    console.print(
        f"[success]ingested[/success] dialogues={len(dataset)} turns={turns} dim={dim} "
        f"cache={settings.cache_dir}"
    )


@app.command()
def prune(
    ctx: typer.Context,
    dialogue_id: str = typer.Argument(..., help="Dialogue to prune"),
    query: str = typer.Argument(..., help="The new user query"),
    dialogues: Path = typer.Option(..., "--dialogues", "-d", help="JSONL dataset holding the dialogue text"),
    cache: Optional[Path] = typer.Option(None, "--cache", "-c", help="Cache directory to read embeddings from"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e"),
    tau: Optional[float] = typer.Option(None, "--tau"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    method: str = typer.Option("dycp", "--method", "-m", help="dycp, full, none, topk:<k>, bottom:<m>"),
    k: Optional[int] = typer.Option(None, "--k", min=1),
    fmt: str = typer.Option("text", "--format", "-f", help="text or json"),
):
    """Select the context for one query against one dialogue."""
    if fmt not in ("text", "json"):
        raise typer.BadParameter("--format must be 'text' or 'json'")
    settings = _apply_overrides(_settings(ctx), embedder=embedder, tau=tau, theta=theta, cache=cache)
    spec = _parse_methods([method], settings, k)[0]
    if spec.is_auto:
        raise typer.BadParameter("topk needs an explicit --k for a single prune")

    with _guard():
        from src.analysis.pruner import select
        from src.collectors.dataset_loader import load_dialogues
        from src.harness.runner import build_histories

        sources = {s.dialogue_id: (s, c) for s, c in load_dialogues(dialogues)}
        if dialogue_id not in sources:
            raise UnknownDialogueError("unknown_dialogue", f"Dialogue '{dialogue_id}' is not in {dialogues}")
        provider = _provider(settings)
        prepared = build_histories([sources[dialogue_id]], provider, settings.cache_dir if settings.cache_dir.exists() else None)[0]
        selection = select(prepared.history, query, provider, spec, cosine=settings.embedder.cosine)

    if fmt == "json":
        typer.echo(selection_payload(selection).model_dump_json(indent=2))
    else:
        console.print(selection_panel(selection, dialogue_id, settings.prune.theta))


def _run_and_report(settings: Settings, dialogues: Path, methods: list[MethodSpec], ablation: bool = False, bottoms=None):
    from src.collectors.dataset_loader import load_dialogues
    from src.harness.reports import make_run_id, write_reports
    from src.harness.runner import run_ablation, run_comparison

    dataset = load_dialogues(dialogues)
    provider = _provider(settings)
    cache_dir = settings.cache_dir if settings.cache_dir.exists() else None
    if ablation:
        records = run_ablation(dataset, provider, settings, bottoms=bottoms, cache_dir=cache_dir)
    else:
        records = run_comparison(dataset, methods, provider, settings, llm=_llm(settings), cache_dir=cache_dir)
    run_id = make_run_id([s.dialogue_id for s, _ in dataset], records, settings.eval.timing)
    paths = write_reports(records, settings.eval.out_dir, run_id, ablation=ablation)
    return records, paths


def _print_paths(paths) -> None:
    for path in paths:
        console.print(f"[stat_label]wrote[/stat_label] {path}")


@app.command()
def evaluate(
    ctx: typer.Context,
    dialogues: Path = typer.Option(..., "--dialogues", "-d"),
    cache: Optional[Path] = typer.Option(None, "--cache", "-c"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e"),
    method: str = typer.Option("dycp", "--method", "-m"),
    k: Optional[int] = typer.Option(None, "--k", min=1),
    ks: Optional[str] = typer.Option(None, "--ks", help="Cutoffs, e.g. 1,3,5"),
    tau: Optional[float] = typer.Option(None, "--tau"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    timing: Optional[bool] = typer.Option(None, "--timing/--no-timing", help="Off makes reports byte-identical"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
):
    """Evaluate one method on a dataset and write its reports."""
    settings = _apply_overrides(_settings(ctx), embedder, tau, theta, ks, out, cache)
    if timing is not None:
        settings.eval.timing = timing
    if workers is not None:
        settings.eval.workers = workers
    methods = _parse_methods([method], settings, k)
    with _guard():
        records, paths = _run_and_report(settings, dialogues, methods)
    console.print(summary_table(records, settings.eval.ks))
    _print_paths(paths)


@app.command()
def compare(
    ctx: typer.Context,
    dialogues: Path = typer.Option(..., "--dialogues", "-d"),
    cache: Optional[Path] = typer.Option(None, "--cache", "-c"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e"),
    method: Optional[List[str]] = typer.Option(None, "--method", "-m", help="Repeat or comma-separate"),
    k: Optional[int] = typer.Option(None, "--k", min=1, help="Fixed k for topk instead of auto"),
    ks: Optional[str] = typer.Option(None, "--ks"),
    tau: Optional[float] = typer.Option(None, "--tau"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    timing: Optional[bool] = typer.Option(None, "--timing/--no-timing"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
):
    """Compare DyCP against the baselines (default: dycp, topk:auto, full, none)."""
    settings = _apply_overrides(_settings(ctx), embedder, tau, theta, ks, out, cache)
    if timing is not None:
        settings.eval.timing = timing
    if workers is not None:
        settings.eval.workers = workers
    methods = _parse_methods(method or DEFAULT_COMPARE, settings, k)
    with _guard():
        records, paths = _run_and_report(settings, dialogues, methods)
    console.print(summary_table(records, settings.eval.ks))
    _print_paths(paths)


@app.command()
def ablate(
    ctx: typer.Context,
    dialogues: Path = typer.Option(..., "--dialogues", "-d"),
    cache: Optional[Path] = typer.Option(None, "--cache", "-c"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e"),
    bottom: Optional[List[int]] = typer.Option(None, "--bottom", "-b", min=1, help="m values to sweep"),
    ks: Optional[str] = typer.Option(None, "--ks"),
    tau: Optional[float] = typer.Option(None, "--tau"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    out: Optional[Path] = typer.Option(None, "--out", "-o"),
    timing: Optional[bool] = typer.Option(None, "--timing/--no-timing"),
):
    """Remove the m least relevant turns from each span and measure the effect."""
    settings = _apply_overrides(_settings(ctx), embedder, tau, theta, ks, out, cache)
    if timing is not None:
        settings.eval.timing = timing
    bottoms = list(bottom) if bottom else list(settings.eval.bottoms)
    with _guard():
        records, paths = _run_and_report(settings, dialogues, [], ablation=True, bottoms=bottoms)
    console.print(ablation_table(records))
    _print_paths(paths)


@app.command()
def generate(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", "-o", help="JSONL file to write"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    count: int = typer.Option(20, "--count", min=1, help="Number of dialogues"),
    turns: int = typer.Option(60, "--turns", min=1),
    topics: int = typer.Option(6, "--topics", min=2),
    block_len: int = typer.Option(10, "--block-len", min=1),
    queries: Optional[int] = typer.Option(None, "--queries", min=1, help="Queries per dialogue (default: one per topic)"),
):
    """Write a synthetic planted-segment benchmark."""
    settings = _settings(ctx)
    from src.collectors.dataset_loader import write_dataset
    from src.collectors.planted import generate_planted_benchmark

    seed = settings.seed if seed is None else seed
    dataset = generate_planted_benchmark(seed, count, turns, topics, block_len, queries_per_dialogue=queries)
    write_dataset(out, dataset)
    cases = sum(len(c) for _, c in dataset)
    console.print(f"[success]generated[/success] dialogues={len(dataset)} cases={cases} seed={seed} -> {out}")


@app.command()
def serve(
    ctx: typer.Context,
    port: Optional[int] = typer.Option(None, "--port", "-p"),
    host: Optional[str] = typer.Option(None, "--host"),
    embedder: Optional[str] = typer.Option(None, "--embedder", "-e"),
    tau: Optional[float] = typer.Option(None, "--tau"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    snapshot_dir: Optional[Path] = typer.Option(None, "--snapshot-dir", help="Write caches here on shutdown"),
):
    """Run the sidecar HTTP service."""
    import uvicorn

    from src.api import ServiceState, create_app

    settings = _apply_overrides(_settings(ctx), embedder=embedder, tau=tau, theta=theta)
    if port is not None:
        settings.service.port = port
    if host is not None:
        settings.service.host = host
    if snapshot_dir is not None:
        settings.service.snapshot_dir = snapshot_dir
    with _guard():
        state = ServiceState.from_settings(settings)
    uvicorn.run(
        create_app(state),
        host=settings.service.host,
        port=settings.service.port,
        log_level=settings.log_level.lower(),
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit status; usage errors exit 1."""
    try:
        result = app(args=argv, prog_name="dycp", standalone_mode=False)
    except _UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except typer.Abort:
        err_console.print("[warning]aborted[/warning]")
        return EXIT_USAGE
    except DycpError as exc:
        err_console.print(f"[error]{exc.code}[/error]: {exc}")
        return exc.exit_code
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
