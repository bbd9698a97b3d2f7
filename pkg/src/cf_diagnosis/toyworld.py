#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
A differentiable toy generative world: seeded basis-image backends whose
latent space is the attribute cube itself, labeling oracles, and the
imbalanced sampler that plants spurious correlations.

see copyright/license in README.md
"""

import dataclasses
import logging
import math
import pathlib
import typing

import numpy as np

from .diffcore import Tape, Tensor
from .errors import ConfigError, ShapeError
from .tensorio import save_tensor
from .util import rng_stream

logger: logging.Logger = logging.getLogger(__name__)

DEFAULT_ATTRIBUTES: tuple[str, ...] = (
    "male",
    "smiling",
    "eyeglasses",
    "bangs",
    "lipstick",
    "beard",
    "hat",
    "blond hair",
    "earrings",
    "necktie",
    "pale skin",
    "wavy hair",
    "big nose",
    "mustache",
    "rosy cheeks",
    "bald",
)

BACKEND_KINDS: tuple[str, ...] = ("linear-basis", "mixed-basis")
TASKS: tuple[str, ...] = ("binary", "keypoint", "segmentation")

# samplers never draw a coordinate this close to the label boundary
LATENT_MARGIN: float = 1e-3


@dataclasses.dataclass(frozen=True)
class BackendSpec:
    """
    Construction parameters of one generator backend.
    """

    kind: str = "linear-basis"
    seed: int = 0
    image_size: tuple[int, int] = (32, 32)
    attr_count: int = 8
    mix_strength: float = 0.3

    def validate(
        self,
    ) -> None:
        """
        Reject specs that cannot produce a usable backend.
        """
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")

        height, width = self.image_size

        if height < 8 or width < 8:
            raise ConfigError(f"image_size must be at least 8x8, got {self.image_size}")

        if self.attr_count < 2:
            raise ConfigError(f"attr_count must be >= 2, got {self.attr_count}")

        if self.attr_count > height * width:
            raise ConfigError(
                f"attr_count {self.attr_count} exceeds pixel count {height * width}; bases would be degenerate"
            )

        if not 0.0 <= self.mix_strength <= 1.0:
            raise ConfigError(f"mix_strength must lie in [0, 1], got {self.mix_strength}")

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        JSON-ready representation.
        """
        return {
            "kind": self.kind,
            "seed": self.seed,
            "image_size": list(self.image_size),
            "attr_count": self.attr_count,
            "mix_strength": self.mix_strength,
        }


class Backend:
    """
    Fixed generator `x = sigmoid(sum_k s_k * B_k + b)`; the mixed-basis kind
    first bends the latent, `s' = s + mix_strength * tanh(W s)`.
    Immutable after construction, so `generate` is safe from many threads.
    """

    # peak of a plain basis blob; textured blobs are rescaled to the same energy
    AMPLITUDE: float = 3.0
    BACKGROUND_STD: float = 1.0

    def __init__(
        self,
        spec: BackendSpec,
        bases: np.ndarray,
        bias: np.ndarray,
        mixing: np.ndarray | None,
    ) -> None:
        """
        Constructor; use `make_backend()` to build from a spec.
        """
        self.spec: BackendSpec = spec
        self.bases: np.ndarray = bases.astype(np.float32)
        self.bias: np.ndarray = bias.astype(np.float32)
        self.mixing: np.ndarray | None = None if mixing is None else mixing.astype(np.float32)

        self.basis_rows: np.ndarray = self.bases.reshape(self.attr_count, -1)
        self.bias_flat: np.ndarray = self.bias.reshape(-1)

        for arr in (self.bases, self.bias, self.basis_rows, self.bias_flat):
            arr.setflags(write=False)

    @property
    def attr_count(
        self,
    ) -> int:
        """
        Latent dimension K.
        """
        return int(self.bases.shape[0])

    @property
    def image_size(
        self,
    ) -> tuple[int, int]:
        """
        Image height and width.
        """
        return (int(self.bases.shape[1]), int(self.bases.shape[2]))

    @property
    def pixels(
        self,
    ) -> int:
        """
        Number of pixels per image.
        """
        return int(self.bases.shape[1] * self.bases.shape[2])

    def generate_tensor(
        self,
        s: Tensor,
    ) -> Tensor:
        """
        Differentiable render of one latent (K,) into (H, W), or a batch
        (N, K) into (N, H, W).
        """
        tape: Tape = s.tape

        if len(s.shape) not in (1, 2) or s.shape[-1] != self.attr_count:
            raise ShapeError(f"generate: latent shape {s.shape} does not match K={self.attr_count}")

        if self.mixing is not None:
            bend: Tensor = tape.tanh(tape.matmul(s, self.mixing.T))
            s = tape.add(s, tape.scale(bend, self.spec.mix_strength))

        z: Tensor = tape.matmul(s, self.basis_rows)

        if len(s.shape) == 1:
            z = tape.add(z, self.bias_flat)
            return tape.reshape(tape.sigmoid(z), self.image_size)

        z = tape.rowadd(z, self.bias_flat)
        return tape.reshape(tape.sigmoid(z), (s.shape[0],) + self.image_size)

    def generate(
        self,
        s: Tensor | np.ndarray,
    ) -> Tensor | np.ndarray:
        """
        Render latents; tensors stay on their tape, arrays render eagerly.
        """
        if isinstance(s, Tensor):
            return self.generate_tensor(s)

        tape: Tape = Tape()
        return self.generate_tensor(tape.const(s)).numpy()

    def jacobian(
        self,
        s: np.ndarray,
    ) -> np.ndarray:
        """
        Analytic Jacobian `dx/ds` of the flattened image at one latent,
        shape (H*W, K), in float64.
        """
        lat: np.ndarray = np.asarray(s, dtype=np.float64)
        basis: np.ndarray = self.basis_rows.T.astype(np.float64)
        bend: np.ndarray = np.eye(self.attr_count)

        if self.mixing is not None:
            mixing: np.ndarray = self.mixing.astype(np.float64)
            pre: np.ndarray = mixing @ lat
            bend = bend + self.spec.mix_strength * (1.0 - np.tanh(pre) ** 2)[:, None] * mixing
            lat = lat + self.spec.mix_strength * np.tanh(pre)

        z: np.ndarray = basis @ lat + self.bias_flat.astype(np.float64)
        x: np.ndarray = 1.0 / (1.0 + np.exp(-z))

        return ((x * (1.0 - x))[:, None] * basis) @ bend

    def sample_latent(
        self,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """
        K independent uniform [0,1] coordinates.
        """
        return sample_uniform_latents(rng, 1, self.attr_count)[0]

    def export_bases(
        self,
        out_dir: pathlib.Path,
    ) -> list[pathlib.Path]:
        """
        Write basis and bias images as UMOT tensors for inspection.
        """
        out_path: pathlib.Path = pathlib.Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

        written: list[pathlib.Path] = []

        for k in range(self.attr_count):
            path: pathlib.Path = out_path / f"basis_{k:02d}.umot"
            save_tensor(self.bases[k], path)
            written.append(path)

        bias_path: pathlib.Path = out_path / "bias.umot"
        save_tensor(self.bias, bias_path)
        written.append(bias_path)

        return written


def _blob_bases(
    spec: BackendSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    One localized pattern per attribute: a Gaussian envelope, either plain,
    striped, or shaded. Attribute k always sits in grid cell k, so the same
    attribute covers the same image region under every seed. Every pattern
    carries the energy of a plain blob of peak `AMPLITUDE`, so no attribute
    is easier to see than another.
    """
    height, width = spec.image_size
    count: int = spec.attr_count
    cols: int = math.ceil(math.sqrt(count))
    rows: int = math.ceil(count / cols)
    cell_h: float = height / rows
    cell_w: float = width / cols

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64) + 0.5
    bases: np.ndarray = np.zeros((count, height, width), dtype=np.float64)

    for k in range(count):
        row, col = divmod(k, cols)
        cy: float = (row + 0.5 + rng.uniform(-0.15, 0.15)) * cell_h
        cx: float = (col + 0.5 + rng.uniform(-0.15, 0.15)) * cell_w
        sigma: float = max(0.2 * min(cell_h, cell_w) * rng.uniform(0.9, 1.1), 0.75)
        theta: float = rng.uniform(0.0, math.pi)
        phase: float = rng.uniform(0.0, 2.0 * math.pi)

        envelope: np.ndarray = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
        along: np.ndarray = (xx - cx) * math.cos(theta) + (yy - cy) * math.sin(theta)

        if k % 3 == 1:
            texture: np.ndarray = 0.6 + 0.4 * np.cos(2.0 * math.pi * along / (2.5 * sigma) + phase)
        elif k % 3 == 2:
            texture = 0.6 + 0.4 * np.tanh(along / sigma)
        else:
            texture = np.ones_like(envelope)

        pattern: np.ndarray = envelope * texture
        plain: float = float(np.linalg.norm(envelope / envelope.max()))
        bases[k] = Backend.AMPLITUDE * pattern * plain / float(np.linalg.norm(pattern))

    return bases


def _max_abs_correlation(
    bases: np.ndarray,
) -> float:
    flat: np.ndarray = bases.reshape(bases.shape[0], -1)
    corr: np.ndarray = np.corrcoef(flat)
    np.fill_diagonal(corr, 0.0)
    return float(np.abs(corr).max())


def _background(
    spec: BackendSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Smooth seeded texture with unit standard deviation.
    """
    height, width = spec.image_size
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    field: np.ndarray = np.zeros((height, width), dtype=np.float64)

    for _ in range(8):
        fy: int = int(rng.integers(-4, 5))
        fx: int = int(rng.integers(-4, 5))
        amp: float = rng.normal()
        phase: float = rng.uniform(0.0, 2.0 * math.pi)
        field += amp * np.cos(2.0 * math.pi * (fy * yy / height + fx * xx / width) + phase)

    std: float = float(field.std())
    return field / std if std > 0.0 else field


def make_backend(
    spec: BackendSpec,
) -> Backend:
    """
    Build a deterministic backend: same spec, bitwise identical bases.
    """
    spec.validate()

    basis_rng: np.random.Generator = rng_stream(spec.seed, "backend", "basis")
    bases: np.ndarray = _blob_bases(spec, basis_rng)

    # redraw placements until the bases are distinguishable
    for _ in range(16):
        if spec.attr_count < 2 or _max_abs_correlation(bases) < 0.5:
            break
        bases = _blob_bases(spec, basis_rng)
    else:
        log_msg: str = f"backend seed {spec.seed}: bases remain correlated after reseeding"
        logger.warning(log_msg)

    bg_rng: np.random.Generator = rng_stream(spec.seed, "backend", "background")
    bias: np.ndarray = Backend.BACKGROUND_STD * _background(spec, bg_rng) - 0.5 * bases.sum(axis=0)

    mixing: np.ndarray | None = None

    if spec.kind == "mixed-basis":
        mix_rng: np.random.Generator = rng_stream(spec.seed, "backend", "mixing")
        raw: np.ndarray = mix_rng.normal(size=(spec.attr_count, spec.attr_count))
        mixing = raw / np.linalg.norm(raw, ord=2)

    return Backend(spec, bases, bias, mixing)


def sample_uniform_latents(
    rng: np.random.Generator,
    count: int,
    attr_count: int,
) -> np.ndarray:
    """
    Uniform [0,1] latents, redrawing any coordinate within `LATENT_MARGIN`
    of the 0.5 label boundary.
    """
    values: np.ndarray = rng.uniform(0.0, 1.0, size=(count, attr_count))
    near: np.ndarray = np.abs(values - 0.5) < LATENT_MARGIN

    while near.any():
        values[near] = rng.uniform(0.0, 1.0, size=int(near.sum()))
        near = np.abs(values - 0.5) < LATENT_MARGIN

    return values.astype(np.float32)


def _side(
    rng: np.random.Generator,
    high: np.ndarray,
) -> np.ndarray:
    """
    Uniform draws on the upper (`high`) or lower side of 0.5, off the margin.
    """
    width: float = 0.5 - LATENT_MARGIN
    draws: np.ndarray = rng.uniform(0.0, width, size=high.shape)
    return np.where(high, 0.5 + LATENT_MARGIN + draws, draws)


######################################################################
# labeling oracles


@dataclasses.dataclass(frozen=True)
class LabelRule:
    """
    Ground-truth labeling rule; labels are pure functions of the latent.
    """

    task: str = "binary"
    main_attr: int = 0
    threshold: float = 0.5
    keypoints: int = 4
    seg_classes: int = 3
    seed: int = 0

    def validate(
        self,
        attr_count: int,
    ) -> None:
        """
        Reject rules that do not fit the world.
        """
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")

        if not 0 <= self.main_attr < attr_count:
            raise ConfigError(f"main_attr {self.main_attr} out of range for K={attr_count}")

        if self.keypoints < 1:
            raise ConfigError(f"keypoints must be >= 1, got {self.keypoints}")

        if self.seg_classes < 2:
            raise ConfigError(f"seg_classes must be >= 2, got {self.seg_classes}")


class KeypointMap:
    """
    Fixed smooth map from attributes to P points in [0,1]^2:
    `p_j = sigmoid(logit(base_j) + M_j (s - 0.5))`.
    """

    def __init__(
        self,
        rule: LabelRule,
        attr_count: int,
    ) -> None:
        """
        Constructor.
        """
        rng: np.random.Generator = rng_stream(rule.seed, "keypoint-map")
        self.base: np.ndarray = rng.uniform(0.25, 0.75, size=(rule.keypoints, 2))
        self.weights: np.ndarray = rng.normal(scale=0.8 / math.sqrt(attr_count), size=(rule.keypoints, 2, attr_count))

    def __call__(
        self,
        s: np.ndarray,
    ) -> np.ndarray:
        """
        Keypoints (P, 2) for one latent.
        """
        centred: np.ndarray = np.asarray(s, dtype=np.float64) - 0.5
        logits: np.ndarray = np.log(self.base / (1.0 - self.base)) + self.weights @ centred
        return (1.0 / (1.0 + np.exp(-logits))).astype(np.float32)

    def lipschitz_bound(
        self,
    ) -> float:
        """
        Upper bound on `|dp| / |ds|` over all points (sigmoid slope <= 1/4).
        """
        norms: list[float] = [float(np.linalg.norm(self.weights[j], ord=2)) for j in range(self.weights.shape[0])]
        return 0.25 * math.sqrt(sum(n**2 for n in norms))


def segment(
    s: np.ndarray,
    rule: LabelRule,
    backend: Backend,
) -> np.ndarray:
    """
    Per-pixel class: argmax over the background threshold (class 0) and the
    attribute-weighted basis responses of each foreground class.
    """
    lat: np.ndarray = np.asarray(s, dtype=np.float64)
    fg: int = rule.seg_classes - 1
    responses: np.ndarray = np.zeros((rule.seg_classes, backend.pixels), dtype=np.float64)
    responses[0, :] = 0.3

    for k in range(backend.attr_count):
        responses[1 + k % fg] += lat[k] * backend.basis_rows[k] / Backend.AMPLITUDE

    return responses.argmax(axis=0).astype(np.int64)


def label(
    s: np.ndarray,
    rule: LabelRule,
    *,
    backend: Backend | None = None,
    keypoint_map: KeypointMap | None = None,
) -> typing.Any:
    """
    Ground truth for one latent: class, keypoints or per-pixel classes.
    """
    if rule.task == "binary":
        return int(float(s[rule.main_attr]) > rule.threshold)

    if rule.task == "keypoint":
        kp_map: KeypointMap = keypoint_map or KeypointMap(rule, len(s))
        return kp_map(s)

    if backend is None:
        raise ConfigError("segmentation labels need the backend whose bases define the regions")

    return segment(s, rule, backend)


######################################################################
# datasets


@dataclasses.dataclass(frozen=True)
class BiasedDatasetSpec:
    """
    Imbalanced sampling that couples one or more spurious attributes to
    the main attribute's class.
    """

    main_attr: int = 0
    spurious_attr: tuple[int, ...] = (1,)
    epsilon: float = 0.0099
    n_per_class: int = 1000

    def validate(
        self,
        attr_count: int,
    ) -> None:
        """
        Reject specs that cannot plant a bias.
        """
        if not self.spurious_attr:
            raise ConfigError("spurious_attr must name at least one attribute")

        if self.main_attr in self.spurious_attr:
            raise ConfigError(f"spurious_attr {self.spurious_attr} must differ from main_attr {self.main_attr}")

        for idx in (self.main_attr,) + tuple(self.spurious_attr):
            if not 0 <= idx < attr_count:
                raise ConfigError(f"attribute index {idx} out of range for K={attr_count}")

        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")

        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class must be positive, got {self.n_per_class}")


@dataclasses.dataclass
class Dataset:
    """
    Latents with their rendered images and ground-truth labels.
    `planted` marks samples whose spurious coordinate was set congruent by
    construction.
    """

    task: str
    latents: np.ndarray
    labels: np.ndarray
    images: np.ndarray | None
    planted: np.ndarray
    backend_ids: np.ndarray

    def __len__(
        self,
    ) -> int:
        return int(self.latents.shape[0])

    def subset(
        self,
        mask: np.ndarray,
    ) -> "Dataset":
        """
        Select samples by boolean mask or index array.
        """
        return Dataset(
            task=self.task,
            latents=self.latents[mask],
            labels=self.labels[mask],
            images=None if self.images is None else self.images[mask],
            planted=self.planted[mask],
            backend_ids=self.backend_ids[mask],
        )

    def concat(
        self,
        other: "Dataset",
    ) -> "Dataset":
        """
        Append another dataset of the same task.
        """
        if other.task != self.task:
            raise ShapeError(f"cannot concatenate {self.task} and {other.task} datasets")

        images: np.ndarray | None = None

        if self.images is not None and other.images is not None:
            images = np.concatenate([self.images, other.images])

        return Dataset(
            task=self.task,
            latents=np.concatenate([self.latents, other.latents]),
            labels=np.concatenate([self.labels, other.labels]),
            images=images,
            planted=np.concatenate([self.planted, other.planted]),
            backend_ids=np.concatenate([self.backend_ids, other.backend_ids]),
        )

    def congruent(
        self,
        main_attr: int,
        spurious_attr: int,
    ) -> np.ndarray:
        """
        Samples whose spurious attribute lies on the same side of 0.5 as
        the main attribute.
        """
        main_side: np.ndarray = self.latents[:, main_attr] > 0.5
        spur_side: np.ndarray = self.latents[:, spurious_attr] > 0.5
        return main_side == spur_side


def sample_biased_latents(
    spec: BiasedDatasetSpec,
    attr_count: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draw `n_per_class` latents per class with `s[m]` on the class side;
    with probability `1 - epsilon` one spurious coordinate is set congruent
    with the class, otherwise left uniform. Returns (latents, planted).
    """
    spec.validate(attr_count)

    blocks: list[np.ndarray] = []
    planted_blocks: list[np.ndarray] = []

    for cls in (0, 1):
        count: int = spec.n_per_class
        lat: np.ndarray = sample_uniform_latents(rng, count, attr_count).astype(np.float64)
        lat[:, spec.main_attr] = _side(rng, np.full(count, cls == 1))

        planted: np.ndarray = rng.uniform(size=count) >= spec.epsilon
        which: np.ndarray = rng.integers(0, len(spec.spurious_attr), size=count)

        for slot, sp_idx in enumerate(spec.spurious_attr):
            rows: np.ndarray = planted & (which == slot)
            lat[rows, sp_idx] = _side(rng, np.full(int(rows.sum()), cls == 1))

        blocks.append(lat.astype(np.float32))
        planted_blocks.append(planted)

    return np.concatenate(blocks), np.concatenate(planted_blocks)


class World:
    """
    The ground-truth world: an ensemble of backends sharing one attribute
    semantics, a labeling rule, and the names used by the text side.
    """

    def __init__(  # pylint: disable=R0913
        self,
        backends: list[Backend],
        rule: LabelRule,
        *,
        attributes: typing.Sequence[str] | None = None,
        class_names: typing.Sequence[str] = ("female", "male"),
        cls_token: str = "person",
    ) -> None:
        """
        Constructor.
        """
        if not backends:
            raise ConfigError("a world needs at least one backend")

        attr_count: int = backends[0].attr_count

        for backend in backends:
            if backend.attr_count != attr_count or backend.image_size != backends[0].image_size:
                raise ConfigError("all backends must share K and image size")

        rule.validate(attr_count)

        names: list[str] = list(attributes) if attributes else list(DEFAULT_ATTRIBUTES[:attr_count])

        if len(names) < attr_count:
            names += [f"attribute {k}" for k in range(len(names), attr_count)]

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.backends: list[Backend] = backends
        self.rule: LabelRule = rule
        self.attributes: list[str] = names[:attr_count]
        self.class_names: list[str] = list(class_names)
        self.cls_token: str = cls_token
        self.keypoint_map: KeypointMap = KeypointMap(rule, attr_count)

    @property
    def attr_count(
        self,
    ) -> int:
        """
        Latent dimension K.
        """
        return self.backends[0].attr_count

    @property
    def image_size(
        self,
    ) -> tuple[int, int]:
        """
        Shared image height and width.
        """
        return self.backends[0].image_size

    def label(
        self,
        s: np.ndarray,
        *,
        backend: int = 0,
    ) -> typing.Any:
        """
        Ground truth for one latent rendered by one backend.
        """
        return label(s, self.rule, backend=self.backends[backend], keypoint_map=self.keypoint_map)

    def labels(
        self,
        latents: np.ndarray,
        backend_ids: np.ndarray,
    ) -> np.ndarray:
        """
        Ground truth for a batch of latents.
        """
        if self.rule.task == "binary":
            return (latents[:, self.rule.main_attr] > self.rule.threshold).astype(np.int64)

        return np.stack([self.label(lat, backend=int(b)) for lat, b in zip(latents, backend_ids)])

    def render(
        self,
        latents: np.ndarray,
        backend_ids: np.ndarray,
    ) -> np.ndarray:
        """
        Render a batch, each latent with its own backend.
        """
        height, width = self.image_size
        images: np.ndarray = np.zeros((latents.shape[0], height, width), dtype=np.float32)

        for b_idx, backend in enumerate(self.backends):
            rows: np.ndarray = np.flatnonzero(backend_ids == b_idx)

            if rows.size:
                images[rows] = backend.generate(latents[rows])

        return images

    def _dataset(
        self,
        latents: np.ndarray,
        planted: np.ndarray,
        *,
        render: bool,
    ) -> Dataset:
        backend_ids: np.ndarray = np.arange(latents.shape[0]) % len(self.backends)

        return Dataset(
            task=self.rule.task,
            latents=latents,
            labels=self.labels(latents, backend_ids),
            images=self.render(latents, backend_ids) if render else None,
            planted=planted,
            backend_ids=backend_ids,
        )

    def sample_biased_dataset(
        self,
        spec: BiasedDatasetSpec,
        rng: np.random.Generator,
        *,
        render: bool = True,
    ) -> Dataset:
        """
        Class-balanced dataset with planted spurious correlations.
        """
        latents, planted = sample_biased_latents(spec, self.attr_count, rng)
        return self._dataset(latents, planted, render=render)

    def sample_dataset(
        self,
        count: int,
        rng: np.random.Generator,
        *,
        render: bool = True,
    ) -> Dataset:
        """
        Dataset of uniform latents, no planted bias.
        """
        latents: np.ndarray = sample_uniform_latents(rng, count, self.attr_count)
        return self._dataset(latents, np.zeros(count, dtype=bool), render=render)


def sample_biased_dataset(
    spec: BiasedDatasetSpec,
    rng: np.random.Generator,
    world: World,
    *,
    render: bool = True,
) -> Dataset:
    """
    Module-level form of `World.sample_biased_dataset()`.
    """
    return world.sample_biased_dataset(spec, rng, render=render)
