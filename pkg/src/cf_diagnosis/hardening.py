#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Counterfactual training, a mini-max loop that keeps searching for fresh
counterfactuals and fine-tunes on them, plus the Flip Resistance metric.

see copyright/license in README.md
"""

import dataclasses
import logging
import pathlib
import typing

import numpy as np

from .counterfactual import (
    CounterfactualObjective,
    CounterfactualPair,
    OptimConfig,
    OptimizationResult,
    apply_edit,
    edit_step,
    flip_rate,
    optimize_edits,
)
from .diffcore import backward
from .embedding import EmbeddingSpace
from .errors import ConfigError, HardeningAbort, NumericError
from .targets import PseudoLabel, TargetModel, TrainConfig, eval_accuracy, train_target
from .toyworld import BiasedDatasetSpec, Dataset, World
from .util import rng_stream, write_jsonl

logger: logging.Logger = logging.getLogger(__name__)

__all__ = [
    "FRResult",
    "HardenConfig",
    "HardeningResult",
    "eval_accuracy",
    "flip_resistance",
    "harden",
]


@dataclasses.dataclass(frozen=True)
class HardenConfig:  # pylint: disable=R0902
    """
    Settings of counterfactual training and its evaluation.
    """

    rounds: int = 3
    batch_size: int = 256
    steps: int = 400
    lr: float = 0.1
    epochs: int = 3
    seed: int = 0
    max_drop: float = 0.10
    val_per_class: int = 250
    flip_samples: int = 64
    fr_steps: tuple[int, ...] = (25, 100)
    fr_images: int = 64

    def validate(
        self,
    ) -> None:
        """
        Reject unusable settings.
        """
        if self.rounds < 0 or self.steps < 0 or self.epochs < 0:
            raise ConfigError("hardening.rounds, hardening.steps and hardening.epochs must be >= 0")

        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"hardening.batch_size must be a positive even number, got {self.batch_size}")

        if self.lr <= 0.0 or self.val_per_class < 1 or self.flip_samples < 1 or self.fr_images < 1:
            raise ConfigError("hardening.lr, val_per_class, flip_samples and fr_images must be positive")

        if not self.fr_steps or any(k < 0 for k in self.fr_steps):
            raise ConfigError(f"hardening.fr_steps must be a nonempty list of values >= 0, got {self.fr_steps}")


@dataclasses.dataclass(frozen=True)
class FRResult:
    """
    Flip Resistance at one attack budget: the percentage of images whose
    prediction survives the attack.
    """

    k_steps: int
    n_images: int
    resist_count: int

    @property
    def fr_percent(
        self,
    ) -> float:
        """
        `100 * resist_count / n_images`.
        """
        return 100.0 * self.resist_count / self.n_images

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        Report form.
        """
        return {
            "k_steps": self.k_steps,
            "n_images": self.n_images,
            "resist_count": self.resist_count,
            "fr_percent": self.fr_percent,
        }


def attack_image(  # pylint: disable=R0913
    objective: CounterfactualObjective,
    s: np.ndarray,
    delta: np.ndarray,
    k_steps: int,
    *,
    backend_id: int = 0,
) -> CounterfactualPair:
    """
    Optimize one edit against one latent for `k_steps` updates of the full
    composite loss, the same update the multi-edit loop uses, then apply it.
    """
    pseudo: PseudoLabel = objective.pseudo(backend_id, s)
    edit: np.ndarray = np.asarray(delta, dtype=np.float32)

    for step in range(k_steps):
        tape, ev = objective.evaluate(backend_id, s, edit, pseudo)

        if not ev.breakdown.is_finite():
            raise NumericError(
                f"non-finite loss at attack step {step}: {ev.breakdown.to_dict()}",
                step=step,
                breakdown=ev.breakdown.to_dict(),
            )

        edit = edit_step(edit, backward(tape, ev.smooth)["delta"], objective.cfg)

    return apply_edit(
        objective.model,
        objective.world.backends[backend_id],
        s,
        edit,
        backend_id=backend_id,
    )


def flip_resistance(  # pylint: disable=R0913
    model: TargetModel,
    world: World,
    space: EmbeddingSpace,
    k_steps: int,
    n_images: int,
    optim: OptimConfig,
    seed: int,
) -> FRResult:
    """
    Attack each of `n_images` fresh latents with its own single edit,
    initialized from `N(0, init_std^2)`, and count the images whose
    prediction is not flipped.
    """
    if n_images < 1:
        raise ConfigError(f"n_images must be >= 1, got {n_images}")

    if k_steps < 0:
        raise ConfigError(f"k_steps must be >= 0, got {k_steps}")

    objective: CounterfactualObjective = CounterfactualObjective(model, world, space, optim)
    rng: np.random.Generator = rng_stream(seed, "flip-resistance")
    resist: int = 0

    for i in range(n_images):
        backend_id: int = i % len(world.backends)
        s: np.ndarray = world.backends[backend_id].sample_latent(rng)
        delta: np.ndarray = rng.normal(scale=optim.init_std, size=world.attr_count).astype(np.float32)

        pair: CounterfactualPair = attack_image(objective, s, delta, k_steps, backend_id=backend_id)
        resist += int(not pair.flipped)

    return FRResult(k_steps, n_images, resist)


@dataclasses.dataclass
class HardeningResult:
    """
    Hardened model plus one log entry per round.
    """

    model: TargetModel
    rounds: list[dict[str, typing.Any]]
    base_accuracy: float
    final_accuracy: float


def counterfactual_batch(
    objective: CounterfactualObjective,
    result: OptimizationResult,
    count: int,
    rng: np.random.Generator,
) -> Dataset:
    """
    Best-edit counterfactuals on fresh latents, labeled with the ground
    truth of their source latent.
    """
    world: World = objective.world
    latents: list[np.ndarray] = []
    images: list[np.ndarray] = []
    labels: list[typing.Any] = []
    backend_ids: list[int] = []

    for i in range(count):
        edits = result.edit_sets[i % len(result.edit_sets)]
        s: np.ndarray = world.backends[edits.backend].sample_latent(rng)
        pair: CounterfactualPair = objective.best_pair(edits, s)

        latents.append(s)
        images.append(pair.x_hat)
        labels.append(world.label(s, backend=edits.backend))
        backend_ids.append(edits.backend)

    return Dataset(
        task=world.rule.task,
        latents=np.stack(latents),
        labels=np.asarray(np.stack([np.asarray(lab) for lab in labels])),
        images=np.stack(images).astype(np.float32),
        planted=np.zeros(count, dtype=bool),
        backend_ids=np.asarray(backend_ids),
    )


def harden(  # pylint: disable=R0913,R0914
    model: TargetModel,
    world: World,
    space: EmbeddingSpace,
    cfg: HardenConfig,
    *,
    optim: OptimConfig,
    dataset_spec: BiasedDatasetSpec,
    train_batch: int = 32,
    log_path: pathlib.Path | None = None,
    debug: bool = False,
) -> HardeningResult:
    """
    Per round: optimize fresh edits against the current model, build a
    counterfactual batch and an equally sized fresh regular batch, and
    fine-tune on both. Aborts when validation accuracy falls more than
    `cfg.max_drop` below the starting model's.
    """
    cfg.validate()

    val_set: Dataset = world.sample_biased_dataset(
        dataclasses.replace(dataset_spec, n_per_class=cfg.val_per_class),
        rng_stream(cfg.seed, "harden", "validation"),
    )

    base_acc: float = eval_accuracy(model, val_set)
    current: TargetModel = model
    rounds: list[dict[str, typing.Any]] = []
    acc: float = base_acc

    for rnd in range(cfg.rounds):
        round_seed: int = int(rng_stream(cfg.seed, "harden", "round", rnd).integers(0, 2**31 - 1))
        round_optim: OptimConfig = dataclasses.replace(optim, steps=cfg.steps, seed=round_seed)
        objective: CounterfactualObjective = CounterfactualObjective(current, world, space, round_optim)
        result: OptimizationResult = optimize_edits(objective, debug=debug)

        before: float = float(np.mean([flip_rate(e, objective, cfg.flip_samples, round_seed) for e in result.edit_sets]))

        batch_rng: np.random.Generator = rng_stream(round_seed, "harden", "batch")
        cf_batch: Dataset = counterfactual_batch(objective, result, cfg.batch_size, batch_rng)
        regular: Dataset = world.sample_biased_dataset(
            dataclasses.replace(dataset_spec, n_per_class=cfg.batch_size // 2),
            batch_rng,
        )

        current = train_target(
            cf_batch.concat(regular),
            TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=train_batch, seed=round_seed, hidden=current.hidden),
            validation=val_set,
            model=current,
            early_stop=False,
            debug=debug,
        )

        after_obj: CounterfactualObjective = CounterfactualObjective(current, world, space, round_optim)
        after: float = float(np.mean([flip_rate(e, after_obj, cfg.flip_samples, round_seed) for e in result.edit_sets]))
        acc = eval_accuracy(current, val_set)

        entry: dict[str, typing.Any] = {
            "round": rnd,
            "seed": round_seed,
            "flip_rate_before": round(before, 6),
            "flip_rate_after": round(after, 6),
            "val_accuracy": round(acc, 6),
            "counterfactuals": len(cf_batch),
            "regular": len(regular),
        }

        rounds.append(entry)

        if debug:
            log_msg: str = f"round {rnd}: {entry}"
            logger.debug(log_msg)

        if base_acc - acc > cfg.max_drop:
            if log_path is not None:
                write_jsonl(rounds, log_path)

            log_msg = f"round {rnd}: validation accuracy fell from {base_acc:.4f} to {acc:.4f}"
            logger.error(log_msg)
            raise HardeningAbort(log_msg, round_log=rounds)

    if log_path is not None:
        write_jsonl(rounds, log_path)

    metrics: dict[str, typing.Any] = {**model.metrics, "hardened_rounds": cfg.rounds, "val_accuracy": round(acc, 6)}
    return HardeningResult(current.with_weights(current.weights, metrics=metrics), rounds, base_acc, acc)
