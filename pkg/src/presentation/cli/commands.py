"""CLI commands for the VIP adoption model."""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import typer
from pydantic import ValidationError
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from src.adoption.errors import AdoptionError
from src.services import ConfigService
from src.services.experiment_service import CHECKPOINT_NAME, ExperimentService

app = typer.Typer(
    help="VIP adoption model - train, evaluate, simulate and analyze",
    no_args_is_help=True,
)
console = Console(soft_wrap=True)

# Lets every command accept `--key value` config overrides.
OVERRIDABLE = {"allow_extra_args": True, "ignore_unknown_options": True}
TOP_ITEMS = 10


def configure_logging(verbose: bool = False, debug: bool = False) -> None:
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def parse_overrides(args: List[str]) -> Dict[str, str]:
    """``["--K", "5", "--seed=3"]`` -> ``{"K": "5", "seed": "3"}``."""
    overrides: Dict[str, str] = {}
    rest = list(args)
    while rest:
        token = rest.pop(0)
        if not token.startswith("--") or len(token) == 2:
            raise ValueError(f"unexpected argument '{token}', expected --key value")
        key, sep, value = token[2:].partition("=")
        if not sep:
            if not rest:
                raise ValueError(f"missing value for --{key}")
            value = rest.pop(0)
        overrides[key.replace("-", "_")] = value
    return overrides


def _cause(error: Exception) -> str:
    if isinstance(error, ValidationError):
        return "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in error.errors()
        )
    return str(error).splitlines()[0] if str(error) else type(error).__name__


@contextmanager
def reporting_errors() -> Iterator[None]:
    """Print a one-line cause and exit 1 on any validation or numeric failure."""
    try:
        yield
    except (AdoptionError, ValidationError, FileNotFoundError, ValueError) as e:
        console.print(f"[red][ERROR] {escape(_cause(e))}[/red]")
        raise typer.Exit(code=1)


def _service(ctx: typer.Context) -> ExperimentService:
    options: Dict[str, Any] = ctx.obj or {}
    overrides = dict(options.get("overrides", {}))
    overrides.update(parse_overrides(ctx.args))
    config_service = ConfigService(options.get("config"))
    config = config_service.load_config(overrides)
    return ExperimentService(config, config_service)


def _fmt(value: Optional[float]) -> str:
    if value is None or math.isnan(value):
        return "-"
    return f"{value:.4f}"


def _print_written(paths: List[Path]) -> None:
    for path in paths:
        console.print(f"[green][INFO] Wrote {escape(str(path))}[/green]")


@app.callback()
def main_options(
    ctx: typer.Context,
    config: Optional[str] = typer.Option(
        None, "--config", help="Config file (default: $VIP_CONFIG or vip_config.yaml)"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the seed"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker cap"),
    verbose: bool = typer.Option(False, "--verbose", help="Log phase summaries"),
    debug: bool = typer.Option(False, "--debug", help="Log every sweep"),
) -> None:
    """Global options shared by every command."""
    configure_logging(verbose=verbose, debug=debug)
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out_dir"] = out
    if threads is not None:
        overrides["threads"] = threads
    ctx.obj = {"config": config, "overrides": overrides}


@app.command(context_settings=OVERRIDABLE)
def train(ctx: typer.Context) -> None:
    """Fit the model; writes checkpoint, likelihood trace and resolved config."""
    with reporting_errors():
        result = _service(ctx).train()

    n_users, n_items = result["shape"]
    status = "converged" if result["converged"] else "stopped at max_iters"
    console.print(
        f"[green][SUCCESS] Trained on {n_users} users x {n_items} items: "
        f"{result['sweeps']} sweep(s), {status}, "
        f"loglik {result['trace'][-1]:.6g}[/green]"
    )
    _print_written(result["written"])


@app.command(context_settings=OVERRIDABLE)
def evaluate(
    ctx: typer.Context,
    checkpoint: Optional[str] = typer.Option(
        None, "--checkpoint", help="Reuse K and regularisers from a checkpoint"
    ),
) -> None:
    """Cross-validated recall@X for the configured models."""
    with reporting_errors():
        result = _service(ctx).evaluate(checkpoint)

    reports = result["reports"]
    xs = reports[0].x_values if reports else ()
    table = Table(title="Recall (cross-validated)", box=box.SIMPLE_HEAVY)
    table.add_column("Model", style="cyan", no_wrap=True)
    for X in xs:
        table.add_column(f"recall@{X}", style="bold green", justify="right")
    table.add_column("Users", justify="right")
    table.add_column("Skipped", style="yellow", justify="right")
    for report in reports:
        table.add_row(
            report.model_tag,
            *(_fmt(report.recall_at[X]) for X in xs),
            str(len(report.per_user)),
            str(report.skipped_users),
        )
    console.print(table)

    bucketed = [r for r in reports if r.activity_buckets]
    if bucketed:
        buckets = Table(title="Recall by training activity", box=box.SIMPLE_HEAVY)
        buckets.add_column("Activity", style="cyan")
        for report in bucketed:
            buckets.add_column(report.model_tag, justify="right")
        for row in zip(*(r.activity_buckets for r in bucketed)):
            buckets.add_row(
                row[0].label,
                *(f"{_fmt(b.mean)} ({b.n_users})" for b in row),
            )
        console.print(buckets)
        for tag, trend in result["trends"].items():
            console.print(f"[green][INFO] {tag} activity trend: {_fmt(trend)}[/green]")
    _print_written(result["written"])


@app.command(context_settings=OVERRIDABLE)
def simulate(ctx: typer.Context) -> None:
    """Sample a synthetic dataset with ground-truth factors."""
    with reporting_errors():
        result = _service(ctx).simulate()

    n_users, n_items = result["shape"]
    console.print(
        f"[green][SUCCESS] Simulated {n_users} users x {n_items} items "
        f"with {result['adoptions']} adoptions[/green]"
    )
    if result["adoptions"] == 0:
        console.print("[yellow][INFO] No adoptions were generated.[/yellow]")
    _print_written(result["written"])


@app.command(context_settings=OVERRIDABLE)
def analyze(
    ctx: typer.Context,
    checkpoint: Optional[str] = typer.Option(
        None, "--checkpoint", help="Trained checkpoint (default: <out>/checkpoint.txt)"
    ),
) -> None:
    """Item decomposition into visibility, fitness and relevance."""
    with reporting_errors():
        service = _service(ctx)
        result = service.analyze(checkpoint or service.out_dir / CHECKPOINT_NAME)

    decomposition = result["decomposition"]
    table = Table(title="Items by cascade size", box=box.SIMPLE_HEAVY)
    table.add_column("Item", style="cyan", no_wrap=True)
    table.add_column("Cascade", style="bold green", justify="right")
    table.add_column("E(V)", justify="right")
    table.add_column("E(I)", justify="right")
    table.add_column("E(P)", justify="right")
    top = sorted(decomposition.items, key=lambda d: (-d.cascade_size, d.item))
    for d in top[:TOP_ITEMS]:
        table.add_row(
            d.item_id,
            str(d.cascade_size),
            _fmt(d.expected_visibility),
            _fmt(d.expected_fitness),
            _fmt(d.expected_relevance),
        )
    console.print(table)
    console.print(
        "[green][INFO] Correlation with cascade size: "
        f"eta {_fmt(decomposition.fitness_correlation)}, "
        f"E(I+P) {_fmt(decomposition.quality_correlation)}, "
        f"E(V) {_fmt(decomposition.visibility_correlation)}[/green]"
    )
    _print_written(result["written"])


if __name__ == "__main__":  # pragma: no cover
    app()
