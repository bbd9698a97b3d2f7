#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Multi-edit counterfactual optimization: k edit vectors per backend, where
each step picks the edit that best fools the target model on a fresh
latent and updates it alone. An update is a clipped SGD step on the smooth
terms, L1 shrinkage, and projection onto a box around the original latent.

see copyright/license in README.md
"""

import dataclasses
import logging
import pathlib
import typing

import numpy as np

from .diffcore import Tape, backward, sgd_step
from .embedding import DEFAULT_TAU, EmbeddingSpace, zero_shot_classify
from .errors import ConfigError, FormatError, NumericError
from .losses import LossEvaluation, LossWeights, loss_target, total_loss
from .targets import KEYPOINT_TOLERANCE, PseudoLabel, PseudoLabeler, TargetModel
from .tensorio import load_tensor, save_tensor
from .toyworld import Backend, World
from .util import load_json, rng_stream, serialize_json, write_jsonl

logger: logging.Logger = logging.getLogger(__name__)

EDITS_FORMAT: str = "cf-diagnosis/edit-set"

# segmentation counts as flipped when more than this share of pixels change
SEGMENT_FLIP_SHARE: float = 0.25


@dataclasses.dataclass(frozen=True)
class OptimConfig:  # pylint: disable=R0902
    """
    Settings of one counterfactual optimization run.
    """

    k: int = 4
    steps: int = 2000
    lr: float = 0.05
    init_std: float = 0.1
    grad_clip: float = 2.0
    edit_range: float = 1.0
    weights: LossWeights = LossWeights()
    labels: tuple[str, ...] = ("female", "male")
    tau: float = DEFAULT_TAU
    seed: int = 0

    def validate(
        self,
    ) -> None:
        """
        Reject unusable settings.
        """
        if self.k < 1:
            raise ConfigError(f"optimizer.k must be >= 1, got {self.k}")

        if self.steps < 0:
            raise ConfigError(f"optimizer.steps must be >= 0, got {self.steps}")

        if self.lr <= 0.0 or self.init_std <= 0.0:
            raise ConfigError("optimizer.lr and optimizer.init_std must be positive")

        if self.grad_clip <= 0.0 or self.edit_range <= 0.0:
            raise ConfigError(
                f"optimizer.grad_clip and optimizer.edit_range must be positive, got {self.grad_clip}, {self.edit_range}"
            )

        if len(self.labels) < 2:
            raise ConfigError(f"optimizer.labels must name at least two zero-shot classes, got {list(self.labels)}")

        self.weights.validate()


@dataclasses.dataclass
class EditStats:
    """
    Running statistics of one edit vector during optimization.
    """

    selected: int = 0
    loss_sum: float = 0.0
    flips: int = 0

    @property
    def mean_target_loss(
        self,
    ) -> float:
        """
        Mean target loss over the steps this edit was selected.
        """
        return self.loss_sum / self.selected if self.selected else 0.0

    @property
    def flip_rate(
        self,
    ) -> float:
        """
        Share of its steps on which this edit flipped the prediction.
        """
        return self.flips / self.selected if self.selected else 0.0

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        Report form.
        """
        return {
            "selected": self.selected,
            "mean_target_loss": round(self.mean_target_loss, 6),
            "flip_rate": round(self.flip_rate, 6),
        }


@dataclasses.dataclass
class EditSet:
    """
    k edit vectors living in one backend's latent space.
    """

    vectors: np.ndarray
    stats: list[EditStats]
    backend: int = 0

    def __post_init__(
        self,
    ) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ConfigError(f"an edit set needs k >= 1 vectors, got shape {self.vectors.shape}")

        if not np.all(np.isfinite(self.vectors)):
            raise NumericError("edit vectors must be finite")

    def __len__(
        self,
    ) -> int:
        return int(self.vectors.shape[0])

    def replace(
        self,
        index: int,
        vector: np.ndarray,
    ) -> "EditSet":
        """
        Copy with one vector replaced; all others stay bitwise identical.
        """
        vectors: np.ndarray = self.vectors.copy()
        vectors[index] = vector
        return EditSet(vectors, self.stats, self.backend)

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        Report form, vectors included.
        """
        return {
            "backend": self.backend,
            "edits": [
                {"index": i, "vector": [round(float(v), 6) for v in self.vectors[i]], **self.stats[i].to_dict()}
                for i in range(len(self))
            ],
        }

    def save(
        self,
        out_dir: pathlib.Path,
    ) -> pathlib.Path:
        """
        Write a checkpoint directory: `manifest.json` plus the vectors.
        """
        out_path: pathlib.Path = pathlib.Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        save_tensor(self.vectors, out_path / "vectors.umot")

        serialize_json(
            {
                "format": EDITS_FORMAT,
                "backend": self.backend,
                "k": len(self),
                "attr_count": int(self.vectors.shape[1]),
                "stats": [dataclasses.asdict(stat) for stat in self.stats],
                "tensors": {"vectors": "vectors.umot"},
            },
            out_path / "manifest.json",
        )

        return out_path


def load_edits(
    in_dir: pathlib.Path,
) -> EditSet:
    """
    Load a checkpoint written by `EditSet.save()`.
    """
    in_path: pathlib.Path = pathlib.Path(in_dir)
    manifest_path: pathlib.Path = in_path / "manifest.json"

    if not manifest_path.is_file():
        raise ConfigError(f"not an edit-set checkpoint (no manifest.json): {in_path}")

    manifest: dict[str, typing.Any] = load_json(manifest_path)

    if manifest.get("format") != EDITS_FORMAT:
        raise FormatError(f"{manifest_path}: format is {manifest.get('format')!r}, expected {EDITS_FORMAT!r}")

    vectors: np.ndarray = load_tensor(in_path / manifest["tensors"]["vectors"])

    if vectors.shape != (manifest["k"], manifest["attr_count"]):
        raise FormatError(f"{manifest_path}: vectors have shape {vectors.shape}, manifest declares k/K")

    stats: list[EditStats] = [EditStats(**stat) for stat in manifest["stats"]]
    return EditSet(vectors, stats, int(manifest["backend"]))


def init_edits(
    k: int,
    seed: int,
    attr_count: int,
    *,
    std: float = 0.1,
    backend: int = 0,
) -> EditSet:
    """
    k vectors drawn i.i.d. from `N(0, std^2)`, 0.01 variance by default.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    rng: np.random.Generator = rng_stream(seed, "edits", "init", backend)
    vectors: np.ndarray = rng.normal(scale=std, size=(k, attr_count)).astype(np.float32)
    return EditSet(vectors, [EditStats() for _ in range(k)], backend)


######################################################################
# flips and pairs


def is_flipped(
    model: TargetModel,
    before: np.ndarray,
    after: np.ndarray,
) -> bool:
    """
    Binary: the decision changes. Keypoint: mean displacement above the
    tolerance. Segmentation: more than a quarter of pixels change class.
    """
    if model.task == "binary":
        return bool(model.decide(np.asarray(before)) != model.decide(np.asarray(after)))

    if model.task == "keypoint":
        return bool(np.linalg.norm(after - before, axis=-1).mean() > KEYPOINT_TOLERANCE)

    changed: np.ndarray = model.decide(before) != model.decide(after)
    return bool(changed.mean() > SEGMENT_FLIP_SHARE)


@dataclasses.dataclass
class CounterfactualPair:  # pylint: disable=R0902
    """
    An original image and its edited counterpart, with both predictions.
    """

    s: np.ndarray
    edit_index: int
    backend: int
    delta: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    prediction: np.ndarray
    edited_prediction: np.ndarray
    flipped: bool

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        Report form; images are referenced, not inlined.
        """
        return {
            "backend": self.backend,
            "edit_index": self.edit_index,
            "latent": [round(float(v), 6) for v in self.s],
            "prediction": np.round(np.asarray(self.prediction, dtype=np.float64), 6).tolist(),
            "edited_prediction": np.round(np.asarray(self.edited_prediction, dtype=np.float64), 6).tolist(),
            "flipped": self.flipped,
        }


def apply_edit(  # pylint: disable=R0913
    model: TargetModel,
    backend: Backend,
    s: np.ndarray,
    delta: np.ndarray,
    *,
    edit_index: int = 0,
    backend_id: int = 0,
) -> CounterfactualPair:
    """
    Render `x = G(s)` and `x_hat = G(s + delta)` and compare predictions.
    """
    lat: np.ndarray = np.asarray(s, dtype=np.float32)
    edit: np.ndarray = np.asarray(delta, dtype=np.float32)

    if lat.shape != edit.shape:
        raise ConfigError(f"latent shape {lat.shape} does not match edit shape {edit.shape}")

    x: np.ndarray = typing.cast(np.ndarray, backend.generate(lat))
    x_hat: np.ndarray = typing.cast(np.ndarray, backend.generate(lat + edit))
    before: np.ndarray = typing.cast(np.ndarray, model.predict(x))
    after: np.ndarray = typing.cast(np.ndarray, model.predict(x_hat))

    return CounterfactualPair(
        s=lat,
        edit_index=edit_index,
        backend=backend_id,
        delta=edit,
        x=x,
        x_hat=x_hat,
        prediction=before,
        edited_prediction=after,
        flipped=is_flipped(model, before, after),
    )


def target_losses(
    edits: EditSet,
    model: TargetModel,
    backend: Backend,
    s: np.ndarray,
    pseudo: PseudoLabel,
) -> np.ndarray:
    """
    Target loss of every candidate edit on one latent.
    """
    out: np.ndarray = np.zeros(len(edits), dtype=np.float64)

    for i in range(len(edits)):
        tape: Tape = Tape()
        x_hat = backend.generate_tensor(tape.const(np.asarray(s) + edits.vectors[i]))
        out[i] = loss_target(model, x_hat, pseudo).item()

    return out


def select_edit(
    edits: EditSet,
    model: TargetModel,
    backend: Backend,
    s: np.ndarray,
    pseudo: PseudoLabel,
) -> int:
    """
    Index of the edit with the lowest target loss, i.e. the one closest to
    flipping the prediction; ties go to the lower index.
    """
    return int(np.argmin(target_losses(edits, model, backend, s, pseudo)))


class CounterfactualObjective:
    """
    Everything one optimization needs besides the edits: the model, the
    world's backends, the embedding space and the frozen zero-shot labels.
    """

    def __init__(
        self,
        model: TargetModel,
        world: World,
        space: EmbeddingSpace,
        cfg: OptimConfig,
    ) -> None:
        """
        Constructor.
        """
        cfg.validate()

        if len(space.images) != len(world.backends):
            raise ConfigError(f"{len(space.images)} image encoders for {len(world.backends)} backends")

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.model: TargetModel = model
        self.world: World = world
        self.space: EmbeddingSpace = space
        self.cfg: OptimConfig = cfg
        self.label_matrix: np.ndarray = space.text.label_matrix(cfg.labels, world.cls_token)
        self.labeler: PseudoLabeler = PseudoLabeler(model, rng_stream(cfg.seed, "pseudo-label"))

    def pseudo(
        self,
        backend_id: int,
        s: np.ndarray,
    ) -> PseudoLabel:
        """
        Frozen pseudo label for one latent, from its original image.
        """
        x: np.ndarray = typing.cast(np.ndarray, self.world.backends[backend_id].generate(np.asarray(s)))
        gt: np.ndarray | None = None

        if self.model.task == "keypoint":
            gt = self.world.label(s, backend=backend_id)

        return self.labeler(x, gt)

    def evaluate(
        self,
        backend_id: int,
        s: np.ndarray,
        delta: np.ndarray,
        pseudo: PseudoLabel,
    ) -> tuple[Tape, LossEvaluation]:
        """
        Composite loss for one latent and edit, with `delta` as a parameter.
        """
        tape: Tape = Tape()

        evaluation: LossEvaluation = total_loss(
            self.model,
            self.world.backends[backend_id],
            s,
            delta,
            pseudo,
            self.cfg.weights,
            encoder=self.space.images[backend_id],
            label_matrix=self.label_matrix,
            tau=self.cfg.tau,
            tape=tape,
        )

        return tape, evaluation

    def best_pair(
        self,
        edits: EditSet,
        s: np.ndarray,
    ) -> CounterfactualPair:
        """
        Apply the most effective edit of the set to one latent.
        """
        backend: Backend = self.world.backends[edits.backend]
        index: int = select_edit(edits, self.model, backend, s, self.pseudo(edits.backend, s))

        return apply_edit(
            self.model,
            backend,
            s,
            edits.vectors[index],
            edit_index=index,
            backend_id=edits.backend,
        )

    def make_pairs(
        self,
        edits: EditSet,
        count: int,
        seed: int,
    ) -> list[CounterfactualPair]:
        """
        Best-edit pairs over fresh latents.
        """
        if count < 1:
            raise ConfigError(f"pair count must be >= 1, got {count}")

        rng: np.random.Generator = rng_stream(seed, "pairs", edits.backend)
        backend: Backend = self.world.backends[edits.backend]
        return [self.best_pair(edits, backend.sample_latent(rng)) for _ in range(count)]


def flip_rate(
    edits: EditSet,
    objective: CounterfactualObjective,
    n_samples: int,
    seed: int,
) -> float:
    """
    Share of fresh latents whose prediction the best edit flips.
    """
    pairs: list[CounterfactualPair] = objective.make_pairs(edits, n_samples, seed)
    return sum(pair.flipped for pair in pairs) / len(pairs)


def zero_shot_disagreement(
    pairs: typing.Sequence[CounterfactualPair],
    objective: CounterfactualObjective,
) -> float:
    """
    Share of pairs whose zero-shot class differs between `x` and `x_hat`.
    """
    if not pairs:
        return 0.0

    changed: int = 0

    for pair in pairs:
        encoder = objective.space.images[pair.backend]
        before: np.ndarray = zero_shot_classify(encoder, pair.x, objective.label_matrix, tau=objective.cfg.tau)
        after: np.ndarray = zero_shot_classify(encoder, pair.x_hat, objective.label_matrix, tau=objective.cfg.tau)
        changed += int(before.argmax() != after.argmax())

    return changed / len(pairs)


######################################################################
# optimization loop


def edit_step(
    vector: np.ndarray,
    grad: np.ndarray,
    cfg: OptimConfig,
) -> np.ndarray:
    """
    One update of an edit from the gradient of the smooth terms: clip the
    gradient elementwise to `grad_clip`, take an SGD step, shrink toward
    zero by `lr` (the L1 term has unit weight), and clip the result to
    `[-edit_range, edit_range]`.
    """
    clipped: np.ndarray = np.clip(grad, -cfg.grad_clip, cfg.grad_clip)
    updated, _ = sgd_step({"delta": np.asarray(vector, dtype=np.float32)}, {"delta": clipped}, cfg.lr)
    moved: np.ndarray = updated["delta"]

    shrunk: np.ndarray = np.sign(moved) * np.maximum(np.abs(moved) - cfg.lr, 0.0)
    return np.clip(shrunk, -cfg.edit_range, cfg.edit_range).astype(np.float32)


@dataclasses.dataclass
class OptimizationResult:
    """
    Per-backend edit sets and the per-step log.
    """

    edit_sets: list[EditSet]
    log: list[dict[str, typing.Any]]


def optimize_edits(  # pylint: disable=R0914
    objective: CounterfactualObjective,
    *,
    log_path: pathlib.Path | None = None,
    debug: bool = False,
) -> OptimizationResult:
    """
    Round-robin over backends: each step samples a latent, selects the edit
    with the lowest target loss, and updates that edit alone via
    `edit_step()`.

    Raises `NumericError` on a non-finite loss; the partial log is written
    to `log_path` first.
    """
    cfg: OptimConfig = objective.cfg
    world: World = objective.world
    count: int = len(world.backends)

    edit_sets: list[EditSet] = [
        init_edits(cfg.k, cfg.seed, world.attr_count, std=cfg.init_std, backend=b) for b in range(count)
    ]

    latent_rng: np.random.Generator = rng_stream(cfg.seed, "optimize", "latent")
    log: list[dict[str, typing.Any]] = []

    for step in range(cfg.steps):
        b_id: int = step % count
        backend: Backend = world.backends[b_id]
        edits: EditSet = edit_sets[b_id]

        s: np.ndarray = backend.sample_latent(latent_rng)
        pseudo: PseudoLabel = objective.pseudo(b_id, s)
        index: int = select_edit(edits, objective.model, backend, s, pseudo)

        tape, evaluation = objective.evaluate(b_id, s, edits.vectors[index], pseudo)
        breakdown = evaluation.breakdown

        if not breakdown.is_finite():
            if log_path is not None:
                write_jsonl(log, log_path)

            log_msg: str = f"non-finite loss at step {step} (backend {b_id}, edit {index}): {breakdown.to_dict()}"
            logger.error(log_msg)
            raise NumericError(log_msg, step=step, breakdown=breakdown.to_dict())

        grads: dict[str, np.ndarray] = backward(tape, evaluation.smooth)
        updated: np.ndarray = edit_step(edits.vectors[index], grads["delta"], cfg)

        before: np.ndarray = typing.cast(np.ndarray, objective.model.predict(evaluation.x.numpy()))
        after: np.ndarray = typing.cast(np.ndarray, objective.model.predict(evaluation.x_hat.numpy()))
        flipped: bool = is_flipped(objective.model, before, after)

        log.append(
            {
                "step": step,
                "backend": b_id,
                "edit": index,
                "flipped": flipped,
                **breakdown.to_dict(),
            }
        )

        if not np.all(np.isfinite(updated)):
            if log_path is not None:
                write_jsonl(log, log_path)

            log_msg = f"edit {index} of backend {b_id} diverged at step {step}"
            logger.error(log_msg)
            raise NumericError(log_msg, step=step, breakdown=breakdown.to_dict())

        stat: EditStats = edits.stats[index]
        stat.selected += 1
        stat.loss_sum += breakdown.target
        stat.flips += int(flipped)

        edit_sets[b_id] = edits.replace(index, updated)

        if debug and step % 100 == 0:
            log_msg = f"step {step} backend {b_id} edit {index}: total {breakdown.total:.5f} flipped {flipped}"
            logger.debug(log_msg)

    if log_path is not None:
        write_jsonl(log, log_path)

    return OptimizationResult(edit_sets, log)
