#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Joint image/text embedding space: image encoders (oracle inverses of the
backends or loaded affine maps), a vocabulary-driven text encoder, and the
zero-shot classifier.

The semantic space has D axes: axes 0..K-1 are world attributes, axis K is
the object axis, the rest are free. A seeded orthogonal rotation Q maps
semantic codes into the embedding space, shared by both modalities.

see copyright/license in README.md
"""

import dataclasses
import logging
import pathlib
import re
import typing

import numpy as np

from .diffcore import Tape, Tensor
from .errors import ConfigError, FormatError, ShapeError
from .tensorio import load_tensor, save_tensor
from .toyworld import Backend, World
from .util import KeyValueStore, load_json, rng_stream, serialize_json

logger: logging.Logger = logging.getLogger(__name__)

ENCODER_FORMAT: str = "cf-diagnosis/encoder"
DEFAULT_DIM: int = 64
DEFAULT_TAU: float = 100.0

# object coordinate of every image in the semantic space
OBJECT_COORD: float = 3.0

# elementwise maps applied to pixels before the affine encoder
INPUT_MAPS: tuple[str, ...] = ("identity", "logit")

# pixels are squashed into [eps, 1 - eps] before the logit
LOGIT_EPS: float = 1e-6

PAT_TERM: re.Pattern[str] = re.compile(r"^\s*(?P<axis>-?\d+|obj|noise)\s*(?::\s*(?P<weight>[-+0-9.eE]+))?\s*$")


def rotation(
    dim: int,
    seed: int,
) -> np.ndarray:
    """
    Seeded orthogonal D x D matrix.
    """
    rng: np.random.Generator = rng_stream(seed, "embedding", "rotation")
    q_mat, r_mat = np.linalg.qr(rng.normal(size=(dim, dim)))
    return (q_mat * np.sign(np.diag(r_mat))).astype(np.float32)


def _unit(
    vec: np.ndarray,
) -> np.ndarray:
    norm: float = float(np.linalg.norm(vec))

    if norm == 0.0:
        return vec

    return vec / norm


class Vocabulary:
    """
    Phrase to semantic-code table. A line `phrase<TAB>code` maps a phrase;
    the code is one axis index, or comma-separated `axis:weight` terms where
    the axis is an index, `obj`, or `noise` (a seeded direction for the
    phrase). Unknown phrases get a seeded random unit code, stable per seed.
    """

    def __init__(
        self,
        attr_count: int,
        *,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
        store: KeyValueStore | None = None,
    ) -> None:
        """
        Constructor.
        """
        if dim < attr_count + 2:
            raise ConfigError(f"embedding dim {dim} too small for K={attr_count} plus object axis")

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.attr_count: int = attr_count
        self.dim: int = dim
        self.seed: int = seed
        self.specs: dict[str, str] = {}
        self.codes: dict[str, typing.Any] = (store or KeyValueStore()).allocate()

    @property
    def object_axis(
        self,
    ) -> int:
        """
        Index of the object/content axis.
        """
        return self.attr_count

    def random_code(
        self,
        phrase: str,
    ) -> np.ndarray:
        """
        Seeded unit direction keyed by the phrase text.
        """
        rng: np.random.Generator = rng_stream(self.seed, "phrase", phrase)
        return _unit(rng.normal(size=self.dim))

    def parse_spec(
        self,
        phrase: str,
        spec: str,
    ) -> np.ndarray:
        """
        Decode one spec string into a semantic code.
        """
        code: np.ndarray = np.zeros(self.dim, dtype=np.float64)

        for term in spec.split(","):
            hit: re.Match[str] | None = PAT_TERM.match(term)

            if hit is None:
                raise FormatError(f"vocabulary entry {phrase!r}: bad term {term!r}")

            axis: str = hit.group("axis")
            weight: float = float(hit.group("weight")) if hit.group("weight") else 1.0

            if axis == "noise":
                code += weight * self.random_code(phrase)
                continue

            idx: int = self.object_axis if axis == "obj" else int(axis)

            if not 0 <= idx < self.dim:
                raise FormatError(f"vocabulary entry {phrase!r}: axis {idx} outside [0, {self.dim})")

            code[idx] += weight

        return code

    def add(
        self,
        phrase: str,
        spec: str,
    ) -> None:
        """
        Map one phrase; later entries replace earlier ones.
        """
        key: str = phrase.strip()

        if not key:
            raise FormatError("vocabulary phrase must be nonempty")

        self.codes[key] = self.parse_spec(key, spec)
        self.specs[key] = spec.strip()

    def code(
        self,
        phrase: str,
    ) -> np.ndarray:
        """
        Semantic code of a phrase; unknown phrases are auto-seeded and cached.
        """
        key: str = phrase.strip()

        if key not in self.codes:
            self.codes[key] = self.random_code(key)

        return self.codes[key]

    def __contains__(
        self,
        phrase: str,
    ) -> bool:
        return phrase.strip() in self.specs

    def load(
        self,
        path: pathlib.Path,
        *,
        encoding: str = "utf-8",
    ) -> "Vocabulary":
        """
        Add entries from a vocabulary file; `#` lines are comments.
        """
        file_path: pathlib.Path = pathlib.Path(path)

        if not file_path.is_file():
            raise ConfigError(f"missing vocabulary file: {file_path}")

        with open(file_path, "r", encoding=encoding) as fp:
            for line_num, line in enumerate(fp, start=1):
                text: str = line.rstrip("\n")

                if not text.strip() or text.lstrip().startswith("#"):
                    continue

                if "\t" not in text:
                    raise FormatError(f"{file_path}:{line_num}: expected 'phrase<TAB>spec'")

                phrase, spec = text.split("\t", 1)
                self.add(phrase, spec)

        return self

    def dump(
        self,
        path: pathlib.Path,
        *,
        encoding: str = "utf-8",
    ) -> None:
        """
        Write the explicit entries back out in file order.
        """
        with open(pathlib.Path(path), "w", encoding=encoding) as fp:
            for phrase, spec in self.specs.items():
                fp.write(f"{phrase}\t{spec}\n")

    @classmethod
    def from_world(
        cls,
        world: World,
        *,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
    ) -> "Vocabulary":
        """
        Entries implied by the world: one axis per attribute name, the class
        token on the object axis, and class names on either side of the main
        attribute.
        """
        vocab: Vocabulary = cls(world.attr_count, dim=dim, seed=seed)
        vocab.add(world.cls_token, "obj:1")

        for k, name in enumerate(world.attributes):
            vocab.add(name, str(k))

        main: int = world.rule.main_attr

        if len(world.class_names) == 2:
            neg, pos = world.class_names

            if neg not in vocab:
                vocab.add(neg, f"{main}:-1")

            if pos not in vocab:
                vocab.add(pos, f"{main}:1")

        return vocab


class TextEncoder:
    """
    Prompt encoder: `normalize(Q (code(cls) + code(phrase)))` for attribute
    prompts and `normalize(Q code(cls))` for the base prompt.
    """

    TEMPLATE: str = "an image of {cls}"

    def __init__(
        self,
        vocab: Vocabulary,
        embed: np.ndarray,
        *,
        mode: str = "oracle",
    ) -> None:
        """
        Constructor.
        """
        if embed.shape != (vocab.dim, vocab.dim):
            raise ShapeError(f"text embed map has shape {embed.shape}, expected {(vocab.dim, vocab.dim)}")

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.vocab: Vocabulary = vocab
        self.embed: np.ndarray = np.asarray(embed, dtype=np.float32)
        self.mode: str = mode

    @property
    def dim(
        self,
    ) -> int:
        """
        Output dimension D.
        """
        return self.vocab.dim

    def prompt(
        self,
        phrase: str | None,
        cls: str,
    ) -> str:
        """
        Human-readable prompt text, as recorded in reports.
        """
        base: str = self.TEMPLATE.format(cls=cls)
        return base if phrase is None else f"{base}, {phrase}"

    def _project(
        self,
        code: np.ndarray,
    ) -> np.ndarray:
        return self.embed.astype(np.float64) @ code

    def encode_raw(
        self,
        phrase: str,
        cls: str | None = None,
    ) -> np.ndarray:
        """
        Un-normalized embedding of a prompt.
        """
        code: np.ndarray = self.vocab.code(phrase)

        if cls is not None:
            code = code + self.vocab.code(cls)

        return self._project(code)

    def encode_text(
        self,
        phrase: str,
        cls: str | None = None,
    ) -> np.ndarray:
        """
        Unit embedding of "an image of [cls], [phrase]", or of the bare
        phrase when no class token is given.
        """
        if not phrase.strip():
            raise ConfigError("encode_text needs a nonempty phrase")

        return _unit(self.encode_raw(phrase, cls))

    def encode_base(
        self,
        cls: str,
    ) -> np.ndarray:
        """
        Unit embedding of "an image of [cls]".
        """
        return _unit(self._project(self.vocab.code(cls)))

    def label_matrix(
        self,
        labels: typing.Sequence[str],
        cls: str | None = None,
    ) -> np.ndarray:
        """
        Stacked unit prompt embeddings for zero-shot labels, (|T|, D).
        """
        if len(labels) < 2:
            raise ShapeError(f"zero-shot classification needs at least two labels, got {len(labels)}")

        return np.stack([self.encode_text(label, cls) for label in labels])

    def save(
        self,
        out_dir: pathlib.Path,
    ) -> pathlib.Path:
        """
        Write manifest, rotation and vocabulary entries.
        """
        out_path: pathlib.Path = pathlib.Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

        save_tensor(self.embed, out_path / "embed.umot")
        self.vocab.dump(out_path / "vocab.tsv")

        serialize_json(
            {
                "format": ENCODER_FORMAT,
                "kind": "text",
                "mode": self.mode,
                "input_dims": [self.vocab.attr_count],
                "output_dim": self.dim,
                "seed": self.vocab.seed,
                "tensors": {"embed": "embed.umot"},
                "vocabulary": "vocab.tsv",
            },
            out_path / "manifest.json",
        )

        return out_path


class ImageEncoder:
    """
    Image encoder `h = normalize(E (R g(x) + r))`: g is an elementwise input
    map (identity or logit), the recovery map R takes the mapped, flattened
    image to semantic coordinates, E embeds them.
    """

    def __init__(  # pylint: disable=R0913
        self,
        recover: np.ndarray,
        offset: np.ndarray,
        embed: np.ndarray,
        image_size: tuple[int, int],
        *,
        mode: str = "loaded",
        input_map: str = "identity",
        normalize: bool = True,
        seed: int = 0,
    ) -> None:
        """
        Constructor.
        """
        if input_map not in INPUT_MAPS:
            raise ConfigError(f"input_map must be one of {INPUT_MAPS}, got {input_map!r}")

        pixels: int = int(image_size[0]) * int(image_size[1])

        if recover.shape[1] != pixels:
            raise ShapeError(f"recovery map takes {recover.shape[1]} pixels, image size {image_size} has {pixels}")

        if offset.shape != (recover.shape[0],) or embed.shape[1] != recover.shape[0]:
            raise ShapeError(
                f"encoder maps disagree: recover {recover.shape}, offset {offset.shape}, embed {embed.shape}"
            )

        self.logger: logging.Logger = logging.getLogger(__name__)
        self.recover: np.ndarray = np.asarray(recover, dtype=np.float32)
        self.offset: np.ndarray = np.asarray(offset, dtype=np.float32)
        self.embed: np.ndarray = np.asarray(embed, dtype=np.float32)
        self.image_size: tuple[int, int] = (int(image_size[0]), int(image_size[1]))
        self.mode: str = mode
        self.input_map: str = input_map
        self.normalize: bool = normalize
        self.seed: int = seed

        # fused affine map, (D, H*W) and (D,)
        self.weight: np.ndarray = self.embed @ self.recover
        self.bias: np.ndarray = self.embed @ self.offset

    @property
    def dim(
        self,
    ) -> int:
        """
        Output dimension D.
        """
        return int(self.embed.shape[0])

    @classmethod
    def oracle(
        cls,
        backend: Backend,
        embed: np.ndarray,
        *,
        seed: int = 0,
    ) -> "ImageEncoder":
        """
        Least-squares inverse of the render. The pixel logit is affine in
        the rendered latent, `logit(x) = B^T s' + b`, so
        `R(x) = pinv(B^T) (logit(x) - b) - 0.5` recovers the centred
        coordinates exactly, saturated pixels included, up to the logit
        squash. A constant object coordinate follows; images occupy the
        first K+1 semantic axes.

        For the mixed-basis kind this recovers the bent latent `s'`, which
        is what the image shows.
        """
        count: int = backend.attr_count
        pinv: np.ndarray = np.linalg.pinv(backend.basis_rows.T.astype(np.float64))
        bias: np.ndarray = backend.bias_flat.astype(np.float64)

        recover: np.ndarray = np.vstack([pinv, np.zeros((1, backend.pixels))])
        offset: np.ndarray = np.concatenate([-pinv @ bias - 0.5, [OBJECT_COORD]])

        return cls(
            recover,
            offset,
            np.asarray(embed)[:, : count + 1],
            backend.image_size,
            mode="oracle",
            input_map="logit",
            seed=seed,
        )

    def map_input(
        self,
        x: Tensor,
    ) -> Tensor:
        """
        Apply the elementwise input map on x's tape.
        """
        if self.input_map == "identity":
            return x

        tape: Tape = x.tape
        squashed: Tensor = tape.add(tape.scale(x, 1.0 - 2.0 * LOGIT_EPS), LOGIT_EPS)
        return tape.sub(tape.log(squashed), tape.log(tape.sub(1.0, squashed)))

    def encode_tensor(
        self,
        x: Tensor,
    ) -> Tensor:
        """
        Differentiable embedding of one image (H, W) or a batch (N, H, W).
        """
        tape: Tape = x.tape

        if x.shape[-2:] != self.image_size or len(x.shape) not in (2, 3):
            raise ShapeError(f"encode_image: image shape {x.shape} does not match encoder size {self.image_size}")

        pixels: int = self.image_size[0] * self.image_size[1]
        x = self.map_input(x)

        if len(x.shape) == 2:
            h: Tensor = tape.add(tape.matmul(self.weight, tape.reshape(x, (pixels,))), self.bias)
            return tape.normalize(h) if self.normalize else h

        flat: Tensor = tape.reshape(x, (x.shape[0], pixels))
        h = tape.rowadd(tape.matmul(flat, self.weight.T), self.bias)
        return row_normalize(h) if self.normalize else h

    def encode_image(
        self,
        x: np.ndarray | Tensor,
    ) -> np.ndarray | Tensor:
        """
        Embed an image or batch; arrays evaluate eagerly.
        """
        if isinstance(x, Tensor):
            return self.encode_tensor(x)

        tape: Tape = Tape()
        return self.encode_tensor(tape.const(x)).numpy()

    def save(
        self,
        out_dir: pathlib.Path,
    ) -> pathlib.Path:
        """
        Write manifest plus R, r and E as UMOT tensors.
        """
        out_path: pathlib.Path = pathlib.Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

        save_tensor(self.recover, out_path / "recover.umot")
        save_tensor(self.offset, out_path / "offset.umot")
        save_tensor(self.embed, out_path / "embed.umot")

        serialize_json(
            {
                "format": ENCODER_FORMAT,
                "kind": "image",
                "mode": self.mode,
                "input_dims": list(self.image_size),
                "output_dim": self.dim,
                "seed": self.seed,
                "input_map": self.input_map,
                "normalize": self.normalize,
                "tensors": {"recover": "recover.umot", "offset": "offset.umot", "embed": "embed.umot"},
            },
            out_path / "manifest.json",
        )

        return out_path


def row_normalize(
    h: Tensor,
) -> Tensor:
    """
    L2-normalize each row of an (N, D) tensor.
    """
    tape: Tape = h.tape
    norms: Tensor = tape.sqrt(tape.sum(tape.mul(h, h), axis=1))
    spread: Tensor = tape.matmul(tape.reshape(norms, (h.shape[0], 1)), np.ones((1, h.shape[1])))
    return tape.div(h, spread)


def load_encoder(
    in_dir: pathlib.Path,
    *,
    image_size: tuple[int, int] | None = None,
    dim: int | None = None,
    attr_count: int | None = None,
) -> ImageEncoder | TextEncoder:
    """
    Load an encoder directory in loaded mode, checking its declared dims
    against the world's when given.
    """
    in_path: pathlib.Path = pathlib.Path(in_dir)
    manifest_path: pathlib.Path = in_path / "manifest.json"

    if not manifest_path.is_file():
        raise ConfigError(f"not an encoder directory (no manifest.json): {in_path}")

    manifest: dict[str, typing.Any] = load_json(manifest_path)

    if manifest.get("format") != ENCODER_FORMAT:
        raise FormatError(f"{manifest_path}: format is {manifest.get('format')!r}, expected {ENCODER_FORMAT!r}")

    out_dim: int = int(manifest["output_dim"])

    if dim is not None and out_dim != dim:
        raise ConfigError(f"{manifest_path}: encoder output dim {out_dim} != embedding dim {dim}")

    tensors: dict[str, str] = manifest["tensors"]
    embed: np.ndarray = load_tensor(in_path / tensors["embed"])

    if manifest["kind"] == "text":
        in_count: int = int(manifest["input_dims"][0])

        if attr_count is not None and in_count != attr_count:
            raise ConfigError(f"{manifest_path}: text encoder built for K={in_count}, world has K={attr_count}")

        vocab: Vocabulary = Vocabulary(in_count, dim=out_dim, seed=int(manifest["seed"]))
        vocab.load(in_path / manifest["vocabulary"])
        return TextEncoder(vocab, embed, mode="loaded")

    size: tuple[int, int] = (int(manifest["input_dims"][0]), int(manifest["input_dims"][1]))

    if image_size is not None and tuple(image_size) != size:
        raise ConfigError(f"{manifest_path}: encoder input size {size} != backend image size {tuple(image_size)}")

    return ImageEncoder(
        load_tensor(in_path / tensors["recover"]),
        load_tensor(in_path / tensors["offset"]),
        embed,
        size,
        mode="loaded",
        input_map=str(manifest.get("input_map", "identity")),
        normalize=bool(manifest.get("normalize", True)),
        seed=int(manifest["seed"]),
    )


def zero_shot_tensor(
    h: Tensor,
    label_matrix: np.ndarray,
    *,
    tau: float = DEFAULT_TAU,
) -> Tensor:
    """
    Class log-probabilities `log_softmax(tau * cos(h, t))` on h's tape;
    h is a unit embedding (D,) or a batch (N, D).
    """
    tape: Tape = h.tape
    return tape.log_softmax(tape.scale(tape.matmul(h, label_matrix.T), tau))


def zero_shot_classify(
    encoder: ImageEncoder,
    x: np.ndarray,
    label_matrix: np.ndarray,
    *,
    tau: float = DEFAULT_TAU,
) -> np.ndarray:
    """
    Distribution over zero-shot labels for an image or batch.
    """
    if label_matrix.ndim != 2 or label_matrix.shape[0] < 2:
        raise ShapeError(f"zero-shot labels must form a (T, D) matrix with T >= 2, got {label_matrix.shape}")

    tape: Tape = Tape()
    h: Tensor = encoder.encode_tensor(tape.const(x))
    return tape.softmax(tape.scale(tape.matmul(h, label_matrix.T), tau)).numpy()


@dataclasses.dataclass
class EmbeddingSpace:
    """
    One joint space for a world: the shared rotation, a text encoder, and
    one image encoder per backend.
    """

    text: TextEncoder
    images: list[ImageEncoder]
    tau: float = DEFAULT_TAU

    @property
    def dim(
        self,
    ) -> int:
        """
        Output dimension D.
        """
        return self.text.dim

    @classmethod
    def oracle(
        cls,
        world: World,
        *,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
        tau: float = DEFAULT_TAU,
        vocab_files: typing.Sequence[pathlib.Path] = (),
    ) -> "EmbeddingSpace":
        """
        Build the oracle space for a world; vocabulary files add entries on
        top of the world's own names.
        """
        embed: np.ndarray = rotation(dim, seed)
        vocab: Vocabulary = Vocabulary.from_world(world, dim=dim, seed=seed)

        for path in vocab_files:
            vocab.load(path)

        images: list[ImageEncoder] = [ImageEncoder.oracle(backend, embed, seed=seed) for backend in world.backends]
        return cls(TextEncoder(vocab, embed, mode="oracle"), images, tau)
