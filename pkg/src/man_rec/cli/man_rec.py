from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import typer
from rich.console import Console
from rich.table import Table

from man_rec.analysis.groups import (
    analyze_groups,
    export_group_representations,
    write_group_representations,
    write_projection,
)
from man_rec.constants import DEFAULT_GROUP_SWEEP, SEED_ENV_VAR
from man_rec.data.interactions import apply_k_core, load_interactions
from man_rec.data.sequences import make_split
from man_rec.data.storage import load_split, read_split, write_split
from man_rec.data.synthetic import read_groups, synth_generate, write_synthetic
from man_rec.errors import ConfigError
from man_rec.evaluation.evaluate import (
    MetricsReport,
    candidate_sets,
    evaluate,
    write_metrics,
)
from man_rec.experiments import (
    ABLATION_HEADER,
    BACKBONE_HEADER,
    SWEEP_HEADER,
    ablate,
    backbones,
    held_out_candidates,
    sweep_groups,
)
from man_rec.models.config import Domain, RunConfig, SynthConfig
from man_rec.models.records import DatasetSplit
from man_rec.models.util import dump_config, load_config, split_csv
from man_rec.training.checkpoint import load_checkpoint, save_checkpoint
from man_rec.training.gradients import AUDIT_FLOOR, verify_gradients
from man_rec.training.trainer import (
    checkpoint_config,
    model_from_checkpoint,
    train,
    write_training_log,
)
from man_rec.utils.logging import configure_logging
from man_rec.utils.results import write_csv
from man_rec.utils.typer import run_typer_app_as_main

logger = logging.getLogger(__name__)

app = typer.Typer(
    rich_markup_mode="rich",
    help="Mixed attention network for cross-domain sequential recommendation.",
)
stdout_console = Console()

CHECKPOINT_FILE = "checkpoint.man"
SPLIT_DIR = "split"


def main() -> None:
    run_typer_app_as_main(app, prog_name="man-rec")


@app.callback()
def setup(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug messages."),
) -> None:
    configure_logging(verbose)


def seed_option() -> Any:
    return typer.Option(
        None,
        "--seed",
        envvar=SEED_ENV_VAR,
        help="Overrides the configured seed.",
    )


def out_option() -> Any:
    return typer.Option(
        ...,
        "--out",
        "-o",
        help="Output directory.",
        file_okay=False,
        dir_okay=True,
        writable=True,
    )


def _resolve(path: Path | None, base: Path) -> Path | None:
    if path is None or path.is_absolute():
        return path
    return base / path


def read_run_config(path: Path, seed: int | None) -> RunConfig:
    """Load a run configuration; data paths are relative to the config file."""
    config = load_config(RunConfig, path)
    base = path.parent
    data = config.data.model_copy(
        update={
            "input_a": _resolve(config.data.input_a, base),
            "input_b": _resolve(config.data.input_b, base),
            "prepared": _resolve(config.data.prepared, base),
            "groups": _resolve(config.data.groups, base),
        }
    )
    config = config.model_copy(update={"data": data})
    return config if seed is None else config.with_seed(seed)


def print_report(report: MetricsReport, title: str) -> None:
    table = Table(title=title)
    table.add_column("Domain")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    for domain, metric, value in report.rows():
        table.add_row(domain, metric, f"{value:.4f}")
    stdout_console.print(table)


def split_for_checkpoint(config: RunConfig, split_dir: Path | None) -> DatasetSplit:
    if split_dir is not None:
        return read_split(split_dir)
    return load_split(config.data, config.model.max_len)


@app.command()
def prepare(
    input_a: Path = typer.Option(..., "--input-a", help="Domain A interactions TSV."),
    input_b: Path = typer.Option(..., "--input-b", help="Domain B interactions TSV."),
    k_core: int = typer.Option(
        1, "--k-core", min=1, help="Minimum interactions per user and item."
    ),
    max_len: int = typer.Option(20, "--max-len", min=1, help="History length T."),
    val_ts: int | None = typer.Option(
        None, "--val-ts", help="First validation timestamp."
    ),
    test_ts: int | None = typer.Option(None, "--test-ts", help="First test timestamp."),
    out: Path = out_option(),
) -> None:
    """Filter, sequence and split two interaction logs into a prepared split directory.

    Without [bold]--val-ts[/bold] and [bold]--test-ts[/bold], validation starts at
    midnight UTC of the last day in the data and test at noon of that day.
    """
    records = load_interactions(input_a, Domain.A)
    records += load_interactions(input_b, Domain.B)
    records = apply_k_core(records, k_core)
    write_split(make_split(records, max_len, val_ts, test_ts), out)


@app.command()
def synth(
    config_file: Path | None = typer.Option(
        None, "--config", "-c", help="Synthetic data config; defaults when omitted."
    ),
    seed: int | None = seed_option(),
    out: Path = out_option(),
) -> None:
    """Generate a synthetic dual-domain dataset with planted user groups."""
    config = load_config(SynthConfig, config_file)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    write_synthetic(synth_generate(config), config, out)
    logger.info("Wrote synthetic dataset to %s", out)


@app.command("train")
def train_command(
    config_file: Path = typer.Option(..., "--config", "-c", help="Run config."),
    seed: int | None = seed_option(),
    out: Path = out_option(),
) -> None:
    """Train a model, keep the best validation epoch and report its test metrics."""
    config = read_run_config(config_file, seed)
    split = load_split(config.data, config.model.max_len)
    if config.data.prepared is None:
        write_split(split, out / SPLIT_DIR)

    result = train(config, split)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.cfg").write_text(dump_config(config), encoding="utf-8")
    save_checkpoint(result.checkpoint, out / CHECKPOINT_FILE)
    write_training_log(result.log, out / "training_log.csv")

    report = evaluate(result.model, held_out_candidates(config, split))
    write_metrics(report, out / "metrics.csv")
    print_report(report, f"Test metrics, best epoch {result.best_epoch}")


@app.command("eval")
def eval_command(
    checkpoint_file: Path = typer.Option(..., "--checkpoint", help="Checkpoint file."),
    split_dir: Path | None = typer.Option(
        None, "--split", help="Prepared split; defaults to the checkpoint's data."
    ),
    part: str = typer.Option("test", "--part", help="train, validation or test."),
    out: Path = out_option(),
) -> None:
    """Evaluate a checkpoint on one part of a split."""
    checkpoint = load_checkpoint(checkpoint_file)
    split = split_for_checkpoint(checkpoint_config(checkpoint), split_dir)
    config, model = model_from_checkpoint(checkpoint, split)
    candidates = candidate_sets(
        split,
        part,
        tuple(Domain),
        negatives=config.train.eval_negatives,
        seed=config.train.seed,
        batch_size=config.train.eval_batch_size,
    )
    report = evaluate(model, candidates)
    write_metrics(report, out / "metrics.csv")
    print_report(report, f"{part.capitalize()} metrics")


@app.command("ablate")
def ablate_command(
    config_file: Path = typer.Option(..., "--config", "-c", help="Run config."),
    seed: int | None = seed_option(),
    out: Path = out_option(),
) -> None:
    """Train the full model and each variant with one attention component removed."""
    config = read_run_config(config_file, seed)
    split = load_split(config.data, config.model.max_len)
    write_csv(out / "ablation.csv", ABLATION_HEADER, ablate(config, split))


@app.command("sweep-groups")
def sweep_groups_command(
    config_file: Path = typer.Option(..., "--config", "-c", help="Run config."),
    values: str = typer.Option(
        ",".join(map(str, DEFAULT_GROUP_SWEEP)),
        "--values",
        help="Comma separated group numbers.",
    ),
    seed: int | None = seed_option(),
    out: Path = out_option(),
) -> None:
    """Train once per number of group prototypes."""
    try:
        group_numbers = [int(value) for value in split_csv(values)]
    except ValueError as e:
        raise ConfigError(
            f"--values must be comma separated integers: {values!r}"
        ) from e
    config = read_run_config(config_file, seed)
    split = load_split(config.data, config.model.max_len)
    rows = sweep_groups(config, split, group_numbers)
    write_csv(out / "group_sweep.csv", SWEEP_HEADER, rows)


@app.command("backbones")
def backbones_command(
    config_file: Path = typer.Option(..., "--config", "-c", help="Run config."),
    seed: int | None = seed_option(),
    out: Path = out_option(),
) -> None:
    """Train single, shared and cross models for every backbone."""
    config = read_run_config(config_file, seed)
    split = load_split(config.data, config.model.max_len)
    write_csv(out / "backbones.csv", BACKBONE_HEADER, backbones(config, split))


@app.command()
def analyze(
    checkpoint_file: Path = typer.Option(..., "--checkpoint", help="Checkpoint file."),
    split_dir: Path | None = typer.Option(
        None, "--split", help="Prepared split; defaults to the checkpoint's data."
    ),
    groups_file: Path | None = typer.Option(
        None, "--groups", help="Ground-truth `user_id \\t group` file."
    ),
    k: int | None = typer.Option(
        None, "--k", min=1, help="Number of clusters; defaults to the model's groups."
    ),
    out: Path = out_option(),
) -> None:
    """Export pooled group representations, cluster them and project them to 2D."""
    checkpoint = load_checkpoint(checkpoint_file)
    split = split_for_checkpoint(checkpoint_config(checkpoint), split_dir)
    config, model = model_from_checkpoint(checkpoint, split)
    groups_file = groups_file or config.data.groups
    groups = read_groups(groups_file) if groups_file is not None else None

    rows = export_group_representations(
        model, split, groups=groups, batch_size=config.train.eval_batch_size
    )
    write_group_representations(rows, out / "group_representations.csv")
    analyses = analyze_groups(rows, k or config.model.n_groups, config.train.seed)
    write_projection(analyses, out / "group_projection.csv")
    for analysis in analyses:
        if analysis.alignment is not None:
            stdout_console.print(
                f"Domain {analysis.domain.value}: "
                f"group alignment {analysis.alignment:.4f}"
            )


@app.command("verify-gradients")
def verify_gradients_command(
    seed: int = typer.Option(0, "--seed", envvar=SEED_ENV_VAR, help="Seed."),
    tolerance: float = typer.Option(
        1e-4, "--tolerance", help="Largest accepted error."
    ),
    floor: float = typer.Option(
        AUDIT_FLOOR, "--floor", help="Denominator floor of the relative errors."
    ),
    out: Path | None = typer.Option(None, "--out", "-o", help="Output directory."),
) -> None:
    """Check every gradient of a tiny model against finite differences."""
    report = verify_gradients(seed=seed, floor=floor)
    table = Table(title="Gradient audit")
    table.add_column("Module")
    table.add_column("Check")
    table.add_column("Value", justify="right")
    for module, check, value in report.rows():
        table.add_row(module, check, f"{value:.3g}")
    stdout_console.print(table)
    if out is not None:
        header = ("module", "check", "value")
        write_csv(out / "gradient_audit.csv", header, report.rows())
    if not report.passed(tolerance):
        logger.error("Gradient audit failed at tolerance %g", tolerance)
        raise typer.Exit(code=1)


if __name__ == "__main__":
    main()
