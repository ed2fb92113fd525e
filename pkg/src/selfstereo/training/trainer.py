"""Dual-branch self-supervised training loop."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from selfstereo.autodiff.tensor import Tensor, backward, no_grad, precision, reset_tape
from selfstereo.data.augment import AugmentationStrategy, apply_augmentation, curriculum_ratio
from selfstereo.data.manifest import derive_seeds
from selfstereo.data.synth import StereoSample, generate_sample
from selfstereo.errors import NonFiniteLossError
from selfstereo.losses.consistency import ValidMask, consistency_mask, disparity_diff_loss, flip_views
from selfstereo.losses.contrastive import contrastive_loss
from selfstereo.losses.momentum import MomentumState, momentum_update
from selfstereo.losses.photometric import photometric_loss, smoothness_loss
from selfstereo.losses.queue import MemoryQueue, queue_update
from selfstereo.losses.total import LossParts, total_loss
from selfstereo.model.network import StereoNetwork, as_image
from selfstereo.model.params import ModelParams, constant_view
from selfstereo.training.checkpoint import Checkpoint, save_checkpoint
from selfstereo.training.config import TrainConfig, config_from_json, learning_rate
from selfstereo.training.optimizer import AdamState, adamw_step, clip_grad_norm
from selfstereo.training.prefetch import BatchPrefetcher, StepBatch
from selfstereo.utils.filesystem import ensure_output_dir, write_csv
from selfstereo.utils.logging import get_logger

logger = get_logger(__name__)

# contrastive features are taken from the fused stride-4 level
CONTRAST_STRIDE = 4

TRAIN_METRICS_NAME = "train_metrics.csv"
FINAL_CHECKPOINT_NAME = "final.ckpt"
TRAIN_METRICS_HEADER = (
    "step",
    "lr",
    "loss_total",
    "loss_photo",
    "loss_smooth",
    "loss_flc",
    "loss_ild",
    "grad_norm",
    "occlusion_ratio",
)

# stream tags for per-(step, item) seeds
_AUGMENT, _PAIRS, _QUEUE, _ENQUEUE = 0, 1, 2, 3


def stream_seed(seed: int, step: int, item: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, step, item, stream)).generate_state(1)[0])


@dataclass
class StepMetrics:
    step: int
    lr: float
    loss_total: float
    loss_photo: float
    loss_smooth: float
    loss_flc: float
    loss_ild: float
    grad_norm: float
    occlusion_ratio: float
    skipped: bool = False
    valid_fraction: float = float("nan")

    def row(self) -> Dict[str, object]:
        values = asdict(self)
        return {key: values[key] for key in TRAIN_METRICS_HEADER}


@dataclass
class FitResult:
    checkpoint: Checkpoint
    metrics: List[StepMetrics]
    checkpoint_path: Optional[str] = None
    metrics_path: Optional[str] = None


class Trainer:
    """Owns the query network, key encoder, optimizer state and memory queue of one run."""

    def __init__(self, cfg: TrainConfig, network: Optional[StereoNetwork] = None) -> None:
        self.cfg = cfg
        with precision(cfg.precision):
            self.network = network or StereoNetwork(cfg.model, seed=cfg.seed)
            self.momentum = MomentumState.from_params(self.network.params, cfg.momentum)
            self.adam = AdamState.zeros(self.network.params)
            dim = cfg.model.channels_by_stride()[CONTRAST_STRIDE]
            self.queue = MemoryQueue(cfg.contrastive.queue_capacity, dim)
        self.step = 0
        self.dataset_seeds = derive_seeds(cfg.seed, cfg.dataset_size, "train")
        strategy = cfg.augmentation.strategy
        if not strategy.dual_branch and (cfg.losses.flc > 0 or cfg.losses.ild > 0):
            logger.warning("Augmentation strategy %s has no augmented branch; flc and ild are ignored", strategy.value)

    @property
    def params(self) -> ModelParams:
        return self.network.params

    # -- persistence -------------------------------------------------------

    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            step=self.step,
            config_json=self.cfg.canonical_json(),
            params={name: t.values.copy() for name, t in self.params.items()},
            momentum=MomentumState({k: v.copy() for k, v in self.momentum.params.items()}, self.momentum.momentum),
            adam=AdamState(
                m={k: v.copy() for k, v in self.adam.m.items()},
                v={k: v.copy() for k, v in self.adam.v.items()},
                step=self.adam.step,
                skipped_blocks=self.adam.skipped_blocks,
            ),
            queue=self._queue_copy(),
        )

    def _queue_copy(self) -> MemoryQueue:
        copy = MemoryQueue(self.queue.capacity, self.queue.dim, dtype=self.queue.buffer.dtype.type)
        copy.restore(self.queue.buffer, self.queue.cursor, self.queue.fill)
        return copy

    @classmethod
    def from_checkpoint(cls, cp: Checkpoint, cfg: Optional[TrainConfig] = None) -> "Trainer":
        """Rebuild a trainer mid-run; ``cfg`` defaults to the config stored in the checkpoint."""
        cfg = cfg or config_from_json(cp.config_json)
        _, network = network_from_checkpoint(cp, cfg)
        trainer = cls(cfg, network)
        trainer.momentum = MomentumState({k: v.copy() for k, v in cp.momentum.params.items()}, cp.momentum.momentum)
        trainer.adam = AdamState(
            m={k: v.copy() for k, v in cp.adam.m.items()},
            v={k: v.copy() for k, v in cp.adam.v.items()},
            step=cp.adam.step,
            skipped_blocks=cp.adam.skipped_blocks,
        )
        trainer.adam.check(trainer.params)
        trainer.queue = cp.queue
        trainer.step = cp.step
        return trainer

    # -- data --------------------------------------------------------------

    def occlusion_ratio(self, step: int) -> float:
        if self.cfg.fixed_occlusion_ratio is not None:
            return self.cfg.fixed_occlusion_ratio
        return curriculum_ratio(step, self.cfg.total_steps, self.cfg.occlusion_peak)

    def sample_seed(self, step: int, item: int) -> int:
        return self.dataset_seeds[(step * self.cfg.batch_size + item) % self.cfg.dataset_size]

    def make_batch(self, step: int) -> StepBatch:
        """Standard and augmented pairs for ``step``; a pure function of the config and step."""
        cfg = self.cfg
        ratio = self.occlusion_ratio(step)
        aug_cfg = cfg.augmentation.model_copy(update={"occlusion_ratio": ratio})
        seeds = [self.sample_seed(step, b) for b in range(cfg.batch_size)]
        standard = [generate_sample(s, cfg.height, cfg.width, cfg.d_max, cfg.channels) for s in seeds]
        if cfg.augmentation.strategy is AugmentationStrategy.NONE:
            augmented = list(standard)
        else:
            augmented = [
                apply_augmentation(sample, aug_cfg, stream_seed(cfg.seed, step, b, _AUGMENT))
                for b, sample in enumerate(standard)
            ]
        return StepBatch(step=step, standard=standard, augmented=augmented, occlusion_ratio=ratio, seeds=seeds)

    # -- one optimisation step ---------------------------------------------

    def _valid_mask(self, left: np.ndarray, right: np.ndarray, d_left: np.ndarray) -> ValidMask:
        """Left-right check of the standard prediction against the mirrored, swapped pair."""
        d_right = self.network.predict(*flip_views(left, right))[:, ::-1]
        return consistency_mask(d_left, np.ascontiguousarray(d_right), self.cfg.tau_warp)

    def _item_parts(
        self, step: int, item: int, standard: StereoSample, augmented: StereoSample
    ) -> Tuple[LossParts, List[np.ndarray], float]:
        """Loss terms of one pair plus the key maps to enqueue once the step is taken.

        The augmented branch runs the key encoder without gradients, so the
        disparity-difference loss reaches only the cost aggregation.
        """
        cfg = self.cfg
        weights = cfg.losses
        strategy = cfg.augmentation.strategy
        h, w = cfg.height, cfg.width
        clean_left, clean_right = as_image(standard.left), as_image(standard.right)
        if strategy in (AugmentationStrategy.VANILLA, AugmentationStrategy.INTERMEDIATE):
            net_left, net_right = as_image(augmented.left), as_image(augmented.right)
        else:
            net_left, net_right = clean_left, clean_right
        # the photometric reference is the clean pair except in the vanilla scheme
        if strategy is AugmentationStrategy.VANILLA:
            ref_left, ref_right = net_left, net_right
        else:
            ref_left, ref_right = clean_left, clean_right

        out = self.network.forward(net_left, net_right)
        stages = [m.full_resolution(h, w) for m in out.disparities]
        photo = sum(photometric_loss(ref_left, ref_right, d, ssim_weight=weights.ssim_weight) for d in stages)
        smooth = sum(smoothness_loss(d, ref_left) for d in stages)
        parts = LossParts(photo * (1.0 / len(stages)), smooth * (1.0 / len(stages)))
        key_maps: List[np.ndarray] = []
        valid_fraction = float("nan")
        if not strategy.dual_branch or (weights.flc <= 0 and weights.ild <= 0):
            return parts, key_maps, valid_fraction

        key_params = constant_view(self.momentum.params, self.params)
        with no_grad():
            key_left, key_right = self.network.extract_features(augmented.left, augmented.right, key_params)

        if weights.flc > 0:
            rng = np.random.default_rng(stream_seed(cfg.seed, step, item, _QUEUE))
            queue_keys = self.queue.draw(cfg.contrastive.queue_draw, rng)
            pair_seed = stream_seed(cfg.seed, step, item, _PAIRS)
            flc = Tensor(0.0)
            views = ((out.features_left, key_left), (out.features_right, key_right))
            for view, (query_pyr, key_pyr) in enumerate(views):
                query, key = query_pyr[CONTRAST_STRIDE], key_pyr[CONTRAST_STRIDE]
                flc = flc + contrastive_loss(query, key, queue_keys, pair_seed + view, cfg.contrastive)
                key_maps.append(key.values)
            parts.flc = flc * 0.5

        if weights.ild > 0:
            d_std = stages[-1].detach()
            mask = self._valid_mask(standard.left, standard.right, d_std.values)
            valid_fraction = mask.fraction
            d_aug = self.network.estimate(key_left, key_right)[-1].full_resolution(h, w)
            parts.ild = disparity_diff_loss(d_aug, d_std, mask)

        return parts, key_maps, valid_fraction

    def _enqueue(self, step: int, pending: List[List[np.ndarray]]) -> None:
        for item, key_maps in enumerate(pending):
            rng = np.random.default_rng(stream_seed(self.cfg.seed, step, item, _ENQUEUE))
            for key_map in key_maps:
                queue_update(self.queue, key_map, rng, self.cfg.contrastive.enqueue_per_image)

    def train_step(self, batch: StepBatch) -> StepMetrics:
        cfg = self.cfg
        step = batch.step
        lr = learning_rate(step, cfg)
        with precision(cfg.precision):
            reset_tape()
            scale = 1.0 / len(batch.standard)
            loss: Optional[Tensor] = None
            sums = {"photo": 0.0, "smooth": 0.0, "flc": 0.0, "ild": 0.0}
            pending_keys: List[List[np.ndarray]] = []
            valid: List[float] = []
            for item, (standard, augmented) in enumerate(zip(batch.standard, batch.augmented)):
                parts, key_maps, valid_fraction = self._item_parts(step, item, standard, augmented)
                item_loss = total_loss(parts, cfg.losses) * scale
                loss = item_loss if loss is None else loss + item_loss
                for name, value in parts.values().items():
                    sums[name] += value * scale
                pending_keys.append(key_maps)
                valid.append(valid_fraction)
            assert loss is not None

            total = loss.item()
            metrics = StepMetrics(
                step=step,
                lr=lr,
                loss_total=total,
                loss_photo=sums["photo"],
                loss_smooth=sums["smooth"],
                loss_flc=sums["flc"],
                loss_ild=sums["ild"],
                grad_norm=float("nan"),
                occlusion_ratio=batch.occlusion_ratio,
                valid_fraction=float(np.mean(valid)),
            )
            if not math.isfinite(total):
                logger.warning("Skipping step %d: non-finite loss %s", step, total)
                metrics.skipped = True
                self.step = step + 1
                return metrics

            grads = backward(loss, leaves=self.params.tensors())
            named = {name: grads[t] for name, t in self.params.items()}
            clipped, norm = clip_grad_norm(named, cfg.grad_clip)
            metrics.grad_norm = norm
            adamw_step(
                self.params, clipped, self.adam, lr, cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.adam_eps
            )
            momentum_update(self.momentum, self.params)
            self._enqueue(step, pending_keys)
            self.params.zero_grad()
        self.step = step + 1
        return metrics

    # -- full run ----------------------------------------------------------

    def fit(
        self,
        output_dir: str | Path,
        on_step: Optional[Callable[[StepMetrics], None]] = None,
    ) -> FitResult:
        """Run from the current step to ``total_steps``, logging metrics and writing checkpoints."""
        cfg = self.cfg
        out = Path(ensure_output_dir(output_dir))
        metrics_path = out / TRAIN_METRICS_NAME
        resuming = self.step > 0
        if not resuming:
            write_csv(metrics_path, TRAIN_METRICS_HEADER, [])
        history: List[StepMetrics] = []

        logger.info("Training steps %d..%d at %d-bit", self.step, cfg.total_steps - 1, cfg.precision)
        with BatchPrefetcher(self.make_batch, self.step, cfg.total_steps, depth=cfg.prefetch) as prefetcher:
            for step in range(self.step, cfg.total_steps):
                metrics = self.train_step(prefetcher.get(step))
                history.append(metrics)
                write_csv(metrics_path, TRAIN_METRICS_HEADER, [metrics.row()], append=True)
                if on_step is not None:
                    on_step(metrics)
                if step % cfg.log_every == 0 or step == cfg.total_steps - 1:
                    logger.info(
                        "step %d lr %.2e loss %.4f (photo %.4f smooth %.4f flc %.4f ild %.4f) |g| %.3f",
                        step,
                        metrics.lr,
                        metrics.loss_total,
                        metrics.loss_photo,
                        metrics.loss_smooth,
                        metrics.loss_flc,
                        metrics.loss_ild,
                        metrics.grad_norm,
                    )
                done = step + 1
                if cfg.checkpoint_every and done % cfg.checkpoint_every == 0 and done < cfg.total_steps:
                    save_checkpoint(out / f"step_{done:06d}.ckpt", self.to_checkpoint())

        skipped = sum(m.skipped for m in history)
        if history and skipped == len(history):
            raise NonFiniteLossError(f"all {skipped} training steps produced non-finite losses")
        final = self.to_checkpoint()
        path = save_checkpoint(out / FINAL_CHECKPOINT_NAME, final)
        return FitResult(checkpoint=final, metrics=history, checkpoint_path=path, metrics_path=str(metrics_path))


def fit(cfg: TrainConfig, output_dir: str | Path, resume: Optional[Checkpoint] = None) -> FitResult:
    trainer = Trainer.from_checkpoint(resume, cfg) if resume is not None else Trainer(cfg)
    return trainer.fit(output_dir)


def network_from_checkpoint(cp: Checkpoint, cfg: Optional[TrainConfig] = None) -> Tuple[TrainConfig, StereoNetwork]:
    """The query network stored in ``cp``, built at the run's precision."""
    cfg = cfg or config_from_json(cp.config_json)
    with precision(cfg.precision):
        params = ModelParams.from_arrays(cfg.model, cp.params)
    return cfg, StereoNetwork(cfg.model, params)
