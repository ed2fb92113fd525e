import logging
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Optional

import typer
from rich.console import Console

from selfstereo.errors import SelfStereoError
from selfstereo.pipeline import RunPipeline, resolve_config
from selfstereo.utils.logging import set_log_level

app = typer.Typer(
    name="selfstereo",
    help="Self-supervised stereo matching on synthetic stereograms",
    add_completion=False,
)

console = Console()


class Precision(str, Enum):
    single = "32"
    double = "64"


class D1Mode(str, Enum):
    both = "and"
    either = "or"


@dataclass
class GlobalOptions:
    config_path: Optional[str] = None
    seed: Optional[int] = None
    output_dir: str = "runs"
    precision: Optional[int] = None


# Shared Typer options
RIGHT_BRIGHTNESS_OPTION = typer.Option(
    1.0, "--right-brightness", help="Multiply every right view by this factor before inference"
)
D1_MODE_OPTION = typer.Option(D1Mode.both, "--d1-mode", help="Combine the D1 thresholds with and (KITTI) or or")
EXPORT_OPTION = typer.Option(False, "--export/--no-export", help="Also write predicted disparities and error maps")


@contextmanager
def _reported_errors() -> Iterator[None]:
    try:
        yield
    except (SelfStereoError, ValueError, OSError) as exc:
        console.print(f"[red]Error:[/red] {exc}")
        raise typer.Exit(code=1)


def _options(ctx: typer.Context) -> GlobalOptions:
    return ctx.obj if isinstance(ctx.obj, GlobalOptions) else GlobalOptions()


@app.callback()
def main(
    ctx: typer.Context,
    config_path: Optional[str] = typer.Option(None, "--config", "-c", help="Path to a key = value training config"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
    output_dir: str = typer.Option("runs", "--out", "-o", help="Output directory"),
    precision: Optional[Precision] = typer.Option(None, "--precision", help="Float width: 32 or 64"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug messages"),
):
    """Options shared by every subcommand."""
    if verbose:
        set_log_level(logging.DEBUG)
    ctx.obj = GlobalOptions(
        config_path=config_path,
        seed=seed,
        output_dir=output_dir,
        precision=int(precision.value) if precision is not None else None,
    )


@app.command()
def gen(
    ctx: typer.Context,
    count: Optional[int] = typer.Option(None, "--count", "-n", help="Samples to list (default: dataset_size)"),
    split: str = typer.Option("train", "--split", help="Seed stream: train or eval"),
    dump: bool = typer.Option(False, "--dump/--no-dump", help="Write every sample as PFM/PGM files"),
):
    """Write a dataset manifest for the configured geometry."""
    from selfstereo.commands.generate import Generate

    opts = _options(ctx)
    with _reported_errors():
        cfg = resolve_config(opts.config_path, opts.seed, opts.precision)
        command = Generate()
        command.do(
            output_dir=opts.output_dir,
            count=count if count is not None else cfg.dataset_size,
            height=cfg.height,
            width=cfg.width,
            d_max=cfg.d_max,
            seed=cfg.seed,
            channels=cfg.channels,
            split=split,
            dump=dump,
        )


@app.command()
def train(
    ctx: typer.Context,
    resume: Optional[str] = typer.Option(None, "--resume", help="Checkpoint of the same config to continue from"),
):
    """Train from a config file."""
    from selfstereo.commands.train import Train

    opts = _options(ctx)
    with _reported_errors():
        cfg = resolve_config(opts.config_path, opts.seed, opts.precision)
        command = Train()
        result = command.do(output_dir=opts.output_dir, cfg=cfg, resume_path=resume)
    console.log(f"Checkpoint: {result.checkpoint_path}")


@app.command("eval")
def evaluate(
    ctx: typer.Context,
    checkpoint_path: str = typer.Argument(..., help="Trained checkpoint"),
    manifest_path: str = typer.Argument(..., help="Dataset manifest file or directory"),
    right_brightness: float = RIGHT_BRIGHTNESS_OPTION,
    d1_mode: D1Mode = D1_MODE_OPTION,
    export: bool = EXPORT_OPTION,
):
    """Score a checkpoint on a manifest and write metrics.csv."""
    from selfstereo.commands.evaluate import Evaluate

    opts = _options(ctx)
    with _reported_errors():
        expected = resolve_config(opts.config_path, opts.seed, opts.precision) if opts.config_path else None
        command = Evaluate()
        report = command.do(
            output_dir=opts.output_dir,
            checkpoint_path=checkpoint_path,
            manifest_path=manifest_path,
            right_brightness=right_brightness,
            d1_mode=d1_mode.value,
            export=export,
            expected_config=expected.canonical_json() if expected is not None else None,
        )
    console.print(report.to_table())


@app.command()
def infer(
    ctx: typer.Context,
    checkpoint_path: str = typer.Argument(..., help="Trained checkpoint"),
    left_path: str = typer.Argument(..., help="Left view (PFM)"),
    right_path: str = typer.Argument(..., help="Right view (PFM)"),
    stem: str = typer.Option("disparity", "--stem", help="Output file name without extension"),
):
    """Predict one pair and write the disparity as PFM and 16-bit PGM."""
    from selfstereo.commands.infer import Infer

    opts = _options(ctx)
    with _reported_errors():
        command = Infer()
        paths = command.do(
            output_dir=opts.output_dir,
            checkpoint_path=checkpoint_path,
            left_path=left_path,
            right_path=right_path,
            stem=stem,
        )
    console.log(f"Output: {paths['pfm']}")


@app.command()
def gradcheck(ctx: typer.Context):
    """Finite-difference check of every differentiable op and loss."""
    from selfstereo.commands.gradcheck import GradCheck

    opts = _options(ctx)
    with _reported_errors():
        command = GradCheck()
        reports = command.do(seed=opts.seed or 0)
    console.log(f"{len(reports)} gradient checks passed")


@app.command()
def wta(
    ctx: typer.Context,
    checkpoint_path: str = typer.Argument(..., help="Trained checkpoint"),
    manifest_path: str = typer.Argument(..., help="Dataset manifest file or directory"),
    limit: Optional[int] = typer.Option(None, "--limit", help="Only the first N samples"),
    export: bool = typer.Option(False, "--export/--no-export", help="Write the WTA maps as 16-bit PGM"),
):
    """Winner-take-all maps from trained versus freshly initialised stride-4 features."""
    from selfstereo.commands.wta import Wta

    opts = _options(ctx)
    with _reported_errors():
        command = Wta()
        report = command.do(
            output_dir=opts.output_dir,
            checkpoint_path=checkpoint_path,
            manifest_path=manifest_path,
            limit=limit,
            export=export,
        )
    console.log(f"WTA EPE trained {report.mean('epe_trained'):.4f} vs random {report.mean('epe_random'):.4f}")


@app.command()
def run(
    ctx: typer.Context,
    eval_count: int = typer.Option(20, "--eval-count", help="Held-out samples to evaluate"),
    right_brightness: float = RIGHT_BRIGHTNESS_OPTION,
    d1_mode: D1Mode = D1_MODE_OPTION,
):
    """Generate data, train and evaluate in one go."""
    opts = _options(ctx)
    pipeline = RunPipeline(console=console)
    with _reported_errors():
        return pipeline.run(
            output_dir=opts.output_dir,
            config_path=opts.config_path,
            seed=opts.seed,
            precision=opts.precision,
            eval_count=eval_count,
            right_brightness=right_brightness,
            d1_mode=d1_mode.value,
        )


if __name__ == "__main__":
    app()
