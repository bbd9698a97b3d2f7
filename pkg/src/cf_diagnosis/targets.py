#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Target models under diagnosis: a dense tanh trunk with a binary, keypoint
or segmentation head, minibatch SGD training, checkpoints, and the pseudo
labels that define each task's adversarial objective.

see copyright/license in README.md
"""

import dataclasses
import logging
import math
import pathlib
import typing

import numpy as np

from .diffcore import Tape, Tensor, backward, sgd_step
from .errors import ConfigError, FormatError, ShapeError
from .tensorio import load_tensor, save_tensor
from .toyworld import TASKS, Dataset
from .util import load_json, rng_stream, serialize_json

logger: logging.Logger = logging.getLogger(__name__)

MODEL_FORMAT: str = "cf-diagnosis/target-model"
MODEL_VERSION: int = 1

# a keypoint prediction counts as correct within this mean displacement
KEYPOINT_TOLERANCE: float = 0.05

PARAM_NAMES: tuple[str, ...] = ("w1", "b1", "w2", "b2")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Minibatch SGD settings for `train_target()`.
    """

    lr: float = 0.2
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    threshold: float = 0.95
    hidden: int = 32
    holdout: float = 0.2

    def validate(
        self,
    ) -> None:
        """
        Reject non-positive settings.
        """
        if self.lr <= 0.0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigError("train: lr, batch_size and hidden must be positive")

        if self.epochs < 0:
            raise ConfigError(f"train: epochs must be >= 0, got {self.epochs}")

        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"train: threshold must lie in (0, 1], got {self.threshold}")

        if not 0.0 < self.holdout < 1.0:
            raise ConfigError(f"train: holdout must lie in (0, 1), got {self.holdout}")


class TargetModel:
    """
    Dense MLP `f(x) = head(W2 tanh(W1 (x - 0.5) + b1) + b2)` over the
    flattened image. Weights are never mutated in place; training returns
    new arrays, so a model can be shared by concurrent readers.
    """

    def __init__(  # pylint: disable=R0913
        self,
        task: str,
        image_size: tuple[int, int],
        weights: dict[str, np.ndarray],
        *,
        keypoints: int = 4,
        seg_classes: int = 3,
        seed: int = 0,
        metrics: dict[str, typing.Any] | None = None,
    ) -> None:
        """
        Constructor; use `TargetModel.initialize()` for fresh weights.
        """
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")

        if task == "segmentation" and seg_classes < 2:
            raise ConfigError(f"segmentation needs at least 2 classes, got {seg_classes}")

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.task: str = task
        self.image_size: tuple[int, int] = (int(image_size[0]), int(image_size[1]))
        self.keypoints: int = keypoints
        self.seg_classes: int = seg_classes
        self.seed: int = seed
        self.metrics: dict[str, typing.Any] = dict(metrics or {})
        self.weights: dict[str, np.ndarray] = {name: np.asarray(weights[name], dtype=np.float32) for name in PARAM_NAMES}

        expected: dict[str, tuple[int, ...]] = self.param_shapes()

        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ShapeError(f"weight {name} has shape {self.weights[name].shape}, expected {shape}")

    @property
    def pixels(
        self,
    ) -> int:
        """
        Input size after flattening.
        """
        return self.image_size[0] * self.image_size[1]

    @property
    def hidden(
        self,
    ) -> int:
        """
        Trunk width.
        """
        return int(self.weights["w1"].shape[1])

    @property
    def output_dim(
        self,
    ) -> int:
        """
        Width of the raw output layer.
        """
        if self.task == "binary":
            return 1

        if self.task == "keypoint":
            return 2 * self.keypoints

        return self.pixels * self.seg_classes

    def param_shapes(
        self,
        hidden: int | None = None,
    ) -> dict[str, tuple[int, ...]]:
        """
        Shapes of the four weight tensors.
        """
        width: int = hidden if hidden is not None else int(self.weights["w1"].shape[1])

        return {
            "w1": (self.pixels, width),
            "b1": (width,),
            "w2": (width, self.output_dim),
            "b2": (self.output_dim,),
        }

    @classmethod
    def initialize(  # pylint: disable=R0913
        cls,
        task: str,
        image_size: tuple[int, int],
        *,
        hidden: int = 32,
        keypoints: int = 4,
        seg_classes: int = 3,
        seed: int = 0,
    ) -> "TargetModel":
        """
        Fresh model with scaled Gaussian weights and zero biases.
        """
        pixels: int = int(image_size[0]) * int(image_size[1])
        output_dim: int = {"binary": 1, "keypoint": 2 * keypoints}.get(task, pixels * seg_classes)
        rng: np.random.Generator = rng_stream(seed, "target", "init")

        weights: dict[str, np.ndarray] = {
            "w1": rng.normal(scale=1.0 / math.sqrt(pixels) * 4.0, size=(pixels, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(scale=1.0 / math.sqrt(hidden), size=(hidden, output_dim)),
            "b2": np.zeros(output_dim),
        }

        return cls(task, image_size, weights, keypoints=keypoints, seg_classes=seg_classes, seed=seed)

    def with_weights(
        self,
        weights: dict[str, np.ndarray],
        *,
        metrics: dict[str, typing.Any] | None = None,
    ) -> "TargetModel":
        """
        Copy of this model carrying other weights.
        """
        return TargetModel(
            self.task,
            self.image_size,
            weights,
            keypoints=self.keypoints,
            seg_classes=self.seg_classes,
            seed=self.seed,
            metrics=self.metrics if metrics is None else metrics,
        )

    def bind(
        self,
        tape: Tape,
        *,
        trainable: bool = False,
    ) -> dict[str, Tensor]:
        """
        Record the weights on a tape, as parameters or as constants.
        """
        if trainable:
            return {name: tape.param(name, self.weights[name]) for name in PARAM_NAMES}

        return {name: tape.const(self.weights[name]) for name in PARAM_NAMES}

    def raw(
        self,
        x: Tensor,
        params: dict[str, Tensor] | None = None,
    ) -> Tensor:
        """
        Pre-head outputs for one image (H, W) or a batch (N, H, W):
        binary logits, keypoint logits, or per-pixel class logits.
        """
        tape: Tape = x.tape
        bound: dict[str, Tensor] = params if params is not None else self.bind(tape)

        if x.shape[-2:] != self.image_size or len(x.shape) not in (2, 3):
            raise ShapeError(f"predict: image shape {x.shape} does not match model size {self.image_size}")

        batched: bool = len(x.shape) == 3
        flat: Tensor = tape.reshape(x, (x.shape[0], self.pixels) if batched else (self.pixels,))
        centred: Tensor = tape.sub(flat, 0.5)

        hidden: Tensor = tape.matmul(centred, bound["w1"])
        hidden = tape.rowadd(hidden, bound["b1"]) if batched else tape.add(hidden, bound["b1"])
        hidden = tape.tanh(hidden)

        out: Tensor = tape.matmul(hidden, bound["w2"])
        out = tape.rowadd(out, bound["b2"]) if batched else tape.add(out, bound["b2"])

        if self.task == "binary":
            return tape.slice(out, (slice(None), 0) if batched else 0)

        if self.task == "keypoint":
            return tape.reshape(out, ((x.shape[0],) if batched else ()) + (self.keypoints, 2))

        return tape.reshape(out, ((x.shape[0],) if batched else ()) + (self.pixels, self.seg_classes))

    def head(
        self,
        raw: Tensor,
    ) -> Tensor:
        """
        Map raw outputs to predictions: probability, points, or per-pixel
        class distributions.
        """
        tape: Tape = raw.tape

        if self.task == "segmentation":
            return tape.softmax(raw)

        return tape.sigmoid(raw)

    def predict_tensor(
        self,
        x: Tensor,
        params: dict[str, Tensor] | None = None,
    ) -> Tensor:
        """
        Differentiable prediction on the image's tape.
        """
        return self.head(self.raw(x, params))

    def predict(
        self,
        x: np.ndarray | Tensor,
    ) -> np.ndarray | Tensor:
        """
        Prediction for an image or batch; arrays evaluate eagerly.
        """
        if isinstance(x, Tensor):
            return self.predict_tensor(x)

        tape: Tape = Tape()
        return self.predict_tensor(tape.const(x)).numpy()

    def decide(
        self,
        prediction: np.ndarray,
    ) -> np.ndarray:
        """
        Discrete decision from a prediction: class, points, or pixel classes.
        """
        if self.task == "binary":
            return (prediction > 0.5).astype(np.int64)

        if self.task == "segmentation":
            return prediction.argmax(axis=-1)

        return prediction

    ######################################################################
    # checkpoints

    def save(
        self,
        out_dir: pathlib.Path,
    ) -> pathlib.Path:
        """
        Write a checkpoint directory: `manifest.json` plus UMOT weights.
        """
        out_path: pathlib.Path = pathlib.Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

        for name in PARAM_NAMES:
            save_tensor(self.weights[name], out_path / f"{name}.umot")

        manifest: dict[str, typing.Any] = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "task": self.task,
            "image_size": list(self.image_size),
            "hidden": self.hidden,
            "keypoints": self.keypoints,
            "seg_classes": self.seg_classes,
            "seed": self.seed,
            "metrics": self.metrics,
            "tensors": {name: f"{name}.umot" for name in PARAM_NAMES},
        }

        serialize_json(manifest, out_path / "manifest.json")
        return out_path


def load_model(
    in_dir: pathlib.Path,
) -> TargetModel:
    """
    Load a checkpoint written by `TargetModel.save()`.
    """
    in_path: pathlib.Path = pathlib.Path(in_dir)
    manifest_path: pathlib.Path = in_path / "manifest.json"

    if not manifest_path.is_file():
        raise ConfigError(f"not a model checkpoint (no manifest.json): {in_path}")

    manifest: dict[str, typing.Any] = load_json(manifest_path)

    if manifest.get("format") != MODEL_FORMAT:
        raise FormatError(f"{manifest_path}: format is {manifest.get('format')!r}, expected {MODEL_FORMAT!r}")

    try:
        weights: dict[str, np.ndarray] = {
            name: load_tensor(in_path / manifest["tensors"][name]) for name in PARAM_NAMES
        }

        return TargetModel(
            manifest["task"],
            tuple(manifest["image_size"]),
            weights,
            keypoints=int(manifest["keypoints"]),
            seg_classes=int(manifest["seg_classes"]),
            seed=int(manifest["seed"]),
            metrics=manifest.get("metrics", {}),
        )
    except KeyError as ex:
        raise FormatError(f"{manifest_path}: missing manifest entry {ex}") from ex
    except ShapeError as ex:
        raise FormatError(f"{manifest_path}: {ex}") from ex


######################################################################
# task losses and metrics


def one_hot(
    classes: np.ndarray,
    count: int,
) -> np.ndarray:
    """
    One-hot encode integer classes along a new last axis.
    """
    return np.eye(count, dtype=np.float32)[np.asarray(classes, dtype=np.int64)]


def task_loss(
    model: TargetModel,
    raw: Tensor,
    target: np.ndarray,
) -> Tensor:
    """
    Mean task loss of raw outputs against targets:
    binary cross-entropy from logits with soft or hard labels, keypoint
    squared error, or per-pixel cross-entropy against class indices.
    """
    tape: Tape = raw.tape

    if model.task == "binary":
        labels: np.ndarray = np.asarray(target, dtype=np.float32).reshape(raw.shape)
        # -(p log sigmoid(z) + (1-p) log(1 - sigmoid(z))) = softplus(z) - p z
        per_item: Tensor = tape.sub(tape.softplus(raw), tape.mul(raw, labels))
        return tape.mean(per_item)

    if model.task == "keypoint":
        points: np.ndarray = np.asarray(target, dtype=np.float32).reshape(raw.shape)
        diff: Tensor = tape.sub(tape.sigmoid(raw), points)
        return tape.mean(tape.mul(diff, diff))

    classes: np.ndarray = np.asarray(target, dtype=np.int64).reshape(raw.shape[:-1])
    hits: Tensor = tape.mul(tape.log_softmax(raw), one_hot(classes, model.seg_classes))
    return tape.scale(tape.sum(hits), -1.0 / max(classes.size, 1))


def correct(
    model: TargetModel,
    prediction: np.ndarray,
    target: np.ndarray,
) -> np.ndarray:
    """
    Per-sample score in [0, 1]: binary hit, keypoint displacement within
    tolerance, or per-image pixel accuracy.
    """
    if model.task == "binary":
        return (model.decide(prediction) == np.asarray(target)).astype(np.float64)

    if model.task == "keypoint":
        dist: np.ndarray = np.linalg.norm(prediction - target, axis=-1).mean(axis=-1)
        return (dist <= KEYPOINT_TOLERANCE).astype(np.float64)

    return (model.decide(prediction) == np.asarray(target)).mean(axis=-1)


def eval_accuracy(
    model: TargetModel,
    dataset: Dataset,
    *,
    batch_size: int = 256,
) -> float:
    """
    Task accuracy over a labeled dataset with rendered images.
    """
    if dataset.images is None or len(dataset) == 0:
        raise ConfigError("eval_accuracy needs a nonempty dataset with rendered images")

    scores: list[np.ndarray] = []

    for start in range(0, len(dataset), batch_size):
        stop: int = start + batch_size
        pred: np.ndarray = typing.cast(np.ndarray, model.predict(dataset.images[start:stop]))
        scores.append(correct(model, pred, dataset.labels[start:stop]))

    return float(np.concatenate(scores).mean())


def _holdout_split(
    dataset: Dataset,
    cfg: TrainConfig,
) -> tuple[Dataset, Dataset]:
    rng: np.random.Generator = rng_stream(cfg.seed, "train", "holdout")
    order: np.ndarray = rng.permutation(len(dataset))
    cut: int = max(1, int(round(cfg.holdout * len(dataset))))
    return dataset.subset(np.sort(order[cut:])), dataset.subset(np.sort(order[:cut]))


def train_target(  # pylint: disable=R0914
    dataset: Dataset,
    cfg: TrainConfig,
    *,
    validation: Dataset | None = None,
    model: TargetModel | None = None,
    keypoints: int = 4,
    seg_classes: int = 3,
    early_stop: bool = True,
    debug: bool = False,
) -> TargetModel:
    """
    Train, or continue training, a target model with minibatch SGD.

    Stops early once validation accuracy reaches `cfg.threshold`; when it
    never does, the model is returned anyway with
    `metrics["threshold_reached"] = False`. Without an explicit validation
    set a seeded holdout split of `dataset` is used. Fine-tuning passes
    `early_stop=False` to run exactly `cfg.epochs` epochs.
    """
    cfg.validate()

    if dataset.images is None or len(dataset) == 0:
        raise ConfigError("train_target needs a nonempty dataset with rendered images")

    train_set: Dataset = dataset
    val_set: Dataset | None = validation

    if val_set is None:
        train_set, val_set = _holdout_split(dataset, cfg)

    if model is None:
        model = TargetModel.initialize(
            dataset.task,
            typing.cast(tuple[int, int], dataset.images.shape[1:]),
            hidden=cfg.hidden,
            keypoints=keypoints,
            seg_classes=seg_classes,
            seed=cfg.seed,
        )
    elif model.task != dataset.task:
        raise ConfigError(f"cannot train a {model.task} model on a {dataset.task} dataset")

    images: np.ndarray = typing.cast(np.ndarray, train_set.images)
    shuffle_rng: np.random.Generator = rng_stream(cfg.seed, "train", "shuffle")
    weights: dict[str, np.ndarray] = dict(model.weights)
    val_acc: float = eval_accuracy(model, val_set)
    history: list[float] = []
    epochs_run: int = 0

    for epoch in range(cfg.epochs):
        order: np.ndarray = shuffle_rng.permutation(len(train_set))
        epoch_loss: float = 0.0

        for start in range(0, len(order), cfg.batch_size):
            rows: np.ndarray = order[start : start + cfg.batch_size]
            tape: Tape = Tape()
            params: dict[str, Tensor] = {name: tape.param(name, weights[name]) for name in PARAM_NAMES}
            raw: Tensor = model.raw(tape.const(images[rows]), params)
            loss: Tensor = task_loss(model, raw, train_set.labels[rows])

            weights, _ = sgd_step(weights, backward(tape, loss), cfg.lr)
            epoch_loss += loss.item() * len(rows)

        epochs_run = epoch + 1
        model = model.with_weights(weights)
        val_acc = eval_accuracy(model, val_set)
        history.append(val_acc)

        if debug:
            log_msg: str = f"epoch {epoch}: loss {epoch_loss / len(order):.5f} val_acc {val_acc:.4f}"
            logger.debug(log_msg)

        if early_stop and val_acc >= cfg.threshold:
            break

    reached: bool = val_acc >= cfg.threshold

    if early_stop and not reached:
        log_msg = f"validation accuracy {val_acc:.4f} below threshold {cfg.threshold} after {epochs_run} epochs"
        logger.warning(log_msg)

    metrics: dict[str, typing.Any] = {
        "val_accuracy": round(val_acc, 6),
        "epochs": epochs_run,
        "threshold": cfg.threshold,
        "threshold_reached": reached,
        "history": [round(acc, 6) for acc in history],
    }

    return model.with_weights(weights, metrics=metrics)


######################################################################
# pseudo labels


@dataclasses.dataclass(frozen=True)
class PseudoLabel:
    """
    Frozen adversarial target for one task; never depends on the edit.
    """

    task: str
    target: np.ndarray


def pseudo_label_binary(
    model: TargetModel,
    x: np.ndarray,
) -> PseudoLabel:
    """
    Opposite-class target `1 - f(x)`.
    """
    if model.task != "binary":
        raise ConfigError(f"binary pseudo label requested for a {model.task} model")

    prob: np.ndarray = np.asarray(model.predict(x), dtype=np.float64)
    return PseudoLabel("binary", (1.0 - prob).astype(np.float32))


@dataclasses.dataclass(frozen=True)
class KeypointTransform:
    """
    Global similarity transform of keypoints about the image centre.
    """

    shift: tuple[float, float] = (0.0, 0.0)
    angle: float = 0.0
    scale: float = 1.0

    @classmethod
    def sample(
        cls,
        rng: np.random.Generator,
    ) -> "KeypointTransform":
        """
        Translation in [-0.2, 0.2]^2, rotation in [-30, 30] degrees, scale in
        [0.8, 1.25].
        """
        shift: np.ndarray = rng.uniform(-0.2, 0.2, size=2)
        angle: float = math.radians(rng.uniform(-30.0, 30.0))
        scale: float = rng.uniform(0.8, 1.25)
        return cls((float(shift[0]), float(shift[1])), angle, scale)

    def apply(
        self,
        points: np.ndarray,
    ) -> np.ndarray:
        """
        Transform (..., 2) points and clamp them to the unit square.
        """
        cos_a, sin_a = math.cos(self.angle), math.sin(self.angle)
        rot: np.ndarray = self.scale * np.array([[cos_a, -sin_a], [sin_a, cos_a]])
        centred: np.ndarray = np.asarray(points, dtype=np.float64) - 0.5
        moved: np.ndarray = centred @ rot.T + 0.5 + np.asarray(self.shift)
        return np.clip(moved, 0.0, 1.0).astype(np.float32)


def pseudo_label_keypoint(
    gt: np.ndarray,
    rng: np.random.Generator | None = None,
    *,
    transform: KeypointTransform | None = None,
) -> PseudoLabel:
    """
    Ground-truth keypoints moved by one global similarity transform; pass
    `transform` to reuse a run's draw.
    """
    if transform is None:
        if rng is None:
            raise ConfigError("keypoint pseudo label needs an rng or a transform")
        transform = KeypointTransform.sample(rng)

    return PseudoLabel("keypoint", transform.apply(gt))


def second_argmax(
    probs: np.ndarray,
) -> np.ndarray:
    """
    Index of the second most probable class along the last axis. The first
    is the lowest index among maxima; among the remaining classes, ties go
    to the higher index.
    """
    arr: np.ndarray = np.asarray(probs, dtype=np.float64)

    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise ShapeError(f"second_argmax needs at least 2 classes, got shape {arr.shape}")

    first: np.ndarray = arr.argmax(axis=-1)
    rest: np.ndarray = arr.copy()
    np.put_along_axis(rest, first[..., None], -np.inf, axis=-1)

    flipped: np.ndarray = rest[..., ::-1]
    return (arr.shape[-1] - 1 - flipped.argmax(axis=-1)).astype(np.int64)


def pseudo_label_segmentation(
    model: TargetModel,
    x: np.ndarray,
) -> PseudoLabel:
    """
    Per pixel, the second most probable class under the model.
    """
    if model.task != "segmentation":
        raise ConfigError(f"segmentation pseudo label requested for a {model.task} model")

    probs: np.ndarray = typing.cast(np.ndarray, model.predict(x))
    return PseudoLabel("segmentation", second_argmax(probs))


class PseudoLabeler:  # pylint: disable=R0903
    """
    Per-run pseudo-label source: the keypoint transform is drawn once at
    construction and reused for every sample of the run.
    """

    def __init__(
        self,
        model: TargetModel,
        rng: np.random.Generator,
    ) -> None:
        """
        Constructor.
        """
        self.model: TargetModel = model
        self.transform: KeypointTransform | None = None

        if model.task == "keypoint":
            self.transform = KeypointTransform.sample(rng)

    def __call__(
        self,
        x: np.ndarray,
        gt: np.ndarray | None = None,
    ) -> PseudoLabel:
        """
        Pseudo label for an original image (binary, segmentation) or its
        ground-truth keypoints.
        """
        if self.model.task == "binary":
            return pseudo_label_binary(self.model, x)

        if self.model.task == "segmentation":
            return pseudo_label_segmentation(self.model, x)

        if gt is None:
            raise ConfigError("keypoint pseudo labels need the ground-truth keypoints")

        return pseudo_label_keypoint(gt, transform=self.transform)
