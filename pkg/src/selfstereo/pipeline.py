from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

from rich.console import Console

from selfstereo.metrics import EvalReport
from selfstereo.training.config import TrainConfig, load_train_config
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_EVAL_COUNT = 20


def default_config_path(config_path: Optional[str]) -> str:
    if config_path:
        return config_path
    return str(Path(__file__).resolve().parents[2] / "config" / "train.conf")


def resolve_config(
    config_path: Optional[str] = None,
    seed: Optional[int] = None,
    precision: Optional[int] = None,
) -> TrainConfig:
    """Load the config file (the shipped default when none is given) and apply CLI overrides."""
    path = Path(default_config_path(config_path))
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if precision is not None:
        overrides["precision"] = precision
    if not path.exists():
        if config_path:
            raise FileNotFoundError(f"Config file not found: {path}")
        logger.warning("Default config %s is missing; using built-in defaults", path)
        return load_train_config(None, overrides)
    return load_train_config(path, overrides)


class RunPipeline:
    """Reusable pipeline that mirrors the `selfstereo run` command."""

    def __init__(self, console: Optional[Console] = None) -> None:
        self.console = console or Console()

    def run(
        self,
        *,
        output_dir: str,
        config_path: Optional[str] = None,
        seed: Optional[int] = None,
        precision: Optional[int] = None,
        eval_count: int = DEFAULT_EVAL_COUNT,
        right_brightness: float = 1.0,
        d1_mode: str = "and",
    ) -> EvalReport:
        # Import lazily so tests can patch command classes
        from selfstereo.commands.evaluate import Evaluate
        from selfstereo.commands.generate import Generate
        from selfstereo.commands.train import Train

        cfg = resolve_config(config_path, seed, precision)
        out = Path(output_dir)
        geometry = dict(height=cfg.height, width=cfg.width, d_max=cfg.d_max, channels=cfg.channels, seed=cfg.seed)

        generate = Generate()
        generate.do(output_dir=str(out / "data" / "train"), count=cfg.dataset_size, split="train", **geometry)
        generate.do(output_dir=str(out / "data" / "eval"), count=eval_count, split="eval", **geometry)
        self.console.log(f"Generated {cfg.dataset_size} training and {eval_count} held-out samples")

        result = Train().do(output_dir=str(out / "train"), cfg=cfg)
        self.console.log(f"Trained {cfg.total_steps} steps: {result.checkpoint_path}")

        report = Evaluate().do(
            output_dir=str(out / "eval"),
            checkpoint_path=result.checkpoint_path,
            manifest_path=str(out / "data" / "eval"),
            right_brightness=right_brightness,
            d1_mode=d1_mode,
        )
        self.console.print(report.to_table())
        return report
