#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Run configuration: one TOML or JSON document decoded into a tree of frozen
dataclasses. Unknown keys and ill-typed values are rejected with the dotted
key path; referenced files are checked at load time. Component seeds all
derive from the global seed.

see copyright/license in README.md
"""

import dataclasses
import json
import logging
import pathlib
import tomllib
import types
import typing

import numpy as np

from .analysis import AnalysisConfig, CandidateBank, load_bank
from .counterfactual import OptimConfig
from .embedding import DEFAULT_DIM, DEFAULT_TAU, EmbeddingSpace, ImageEncoder, TextEncoder, load_encoder
from .errors import ConfigError
from .hardening import HardenConfig
from .losses import LossWeights
from .sem import Thesaurus
from .targets import TrainConfig
from .toyworld import (
    DEFAULT_ATTRIBUTES,
    BackendSpec,
    BiasedDatasetSpec,
    Dataset,
    LabelRule,
    World,
    make_backend,
)
from .util import rng_stream

logger: logging.Logger = logging.getLogger(__name__)


def derive_seed(
    seed: int,
    *labels: str | int,
) -> int:
    """
    Component seed drawn from a named stream of the global seed.
    """
    return int(rng_stream(seed, "config", *labels).integers(0, 2**31 - 1))


@dataclasses.dataclass(frozen=True)
class BackendEntry:
    """
    One generator backend of the world; size and K come from the world.
    """

    kind: str = "linear-basis"
    mix_strength: float = 0.3


@dataclasses.dataclass(frozen=True)
class WorldConfig:  # pylint: disable=R0902
    """
    The toy world: backends, labeling rule, biased sampling, names.
    """

    image_size: tuple[int, int] = (32, 32)
    attr_count: int = 8
    attributes: tuple[str, ...] = ()
    class_names: tuple[str, ...] = ("female", "male")
    cls_token: str = "person"
    backends: tuple[BackendEntry, ...] = (BackendEntry(), BackendEntry(kind="mixed-basis"))
    rule: LabelRule = LabelRule()
    dataset: BiasedDatasetSpec = BiasedDatasetSpec()
    val_per_class: int = 250


@dataclasses.dataclass(frozen=True)
class EmbeddingConfig:
    """
    Joint embedding space; `encoders` names a directory of saved encoders
    (`text/`, `backend_<i>/`) to use instead of the oracle ones.
    """

    dim: int = DEFAULT_DIM
    tau: float = DEFAULT_TAU
    encoders: pathlib.Path | None = None


@dataclasses.dataclass(frozen=True)
class RunConfig:  # pylint: disable=R0902
    """
    Complete configuration of one run.
    """

    seed: int = 0
    output: pathlib.Path = pathlib.Path("runs/default")
    world: WorldConfig = WorldConfig()
    embedding: EmbeddingConfig = EmbeddingConfig()
    target: TrainConfig = TrainConfig()
    optimizer: OptimConfig = OptimConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    hardening: HardenConfig = HardenConfig()

    ######################################################################
    # decoding

    @classmethod
    def from_dict(
        cls,
        data: dict[str, typing.Any],
        *,
        base_dir: pathlib.Path | None = None,
        seed: int | None = None,
    ) -> "RunConfig":
        """
        Decode a nested mapping; relative input paths resolve against
        `base_dir`. A `seed` argument overrides the document's.
        """
        raw: RunConfig = _decode(cls, data, "", base_dir or pathlib.Path("."))

        if seed is not None:
            raw = dataclasses.replace(raw, seed=seed)

        return raw.with_derived_seeds()

    def with_derived_seeds(
        self,
    ) -> "RunConfig":
        """
        Copy with every component seed derived from the global seed.
        """
        return dataclasses.replace(
            self,
            target=dataclasses.replace(self.target, seed=derive_seed(self.seed, "target")),
            optimizer=dataclasses.replace(self.optimizer, seed=derive_seed(self.seed, "optimizer")),
            analysis=dataclasses.replace(self.analysis, seed=derive_seed(self.seed, "analysis")),
            hardening=dataclasses.replace(self.hardening, seed=derive_seed(self.seed, "hardening")),
            world=dataclasses.replace(
                self.world,
                rule=dataclasses.replace(self.world.rule, seed=derive_seed(self.seed, "rule")),
            ),
        )

    def validate(
        self,
    ) -> None:
        """
        Run every section's own checks.
        """
        self.target.validate()
        self.optimizer.validate()
        self.analysis.validate()
        self.hardening.validate()

        if self.world.val_per_class < 1:
            raise ConfigError("world.val_per_class must be >= 1")

        if self.embedding.encoders is not None and not self.embedding.encoders.is_dir():
            raise ConfigError(f"embedding.encoders is not a directory: {self.embedding.encoders}")

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        JSON-ready form, recorded in reports and run metadata.
        """
        return typing.cast(dict[str, typing.Any], _encode(self))

    ######################################################################
    # building the pipeline

    def backend_specs(
        self,
    ) -> list[BackendSpec]:
        """
        Concrete backend specs, each seeded from the global seed.
        """
        return [
            BackendSpec(
                kind=entry.kind,
                seed=derive_seed(self.seed, "backend", i),
                image_size=self.world.image_size,
                attr_count=self.world.attr_count,
                mix_strength=entry.mix_strength,
            )
            for i, entry in enumerate(self.world.backends)
        ]

    def build_world(
        self,
    ) -> World:
        """
        Construct the world.
        """
        self.world.dataset.validate(self.world.attr_count)

        return World(
            [make_backend(spec) for spec in self.backend_specs()],
            self.world.rule,
            attributes=self.world.attributes or DEFAULT_ATTRIBUTES[: self.world.attr_count],
            class_names=self.world.class_names,
            cls_token=self.world.cls_token,
        )

    def training_data(
        self,
        world: World,
    ) -> tuple[Dataset, Dataset]:
        """
        Biased training set plus a class-balanced validation split drawn
        from the same world with a fresh stream.
        """
        train: Dataset = world.sample_biased_dataset(self.world.dataset, rng_stream(self.seed, "data", "train"))
        val: Dataset = world.sample_biased_dataset(
            dataclasses.replace(self.world.dataset, n_per_class=self.world.val_per_class),
            rng_stream(self.seed, "data", "validation"),
        )
        return train, val

    def thesaurus(
        self,
    ) -> Thesaurus | None:
        """
        Candidate thesaurus, when configured.
        """
        if self.analysis.thesaurus is None:
            return None

        thesaurus: Thesaurus = Thesaurus()
        thesaurus.load_source(self.analysis.thesaurus)
        return thesaurus

    def embedding_space(
        self,
        world: World,
        thesaurus: Thesaurus | None = None,
    ) -> EmbeddingSpace:
        """
        Oracle space for the world, vocabulary extended by configured files
        and thesaurus axes; saved encoders replace the oracle ones.
        """
        emb_seed: int = derive_seed(self.seed, "embedding")
        space: EmbeddingSpace = EmbeddingSpace.oracle(
            world,
            dim=self.embedding.dim,
            seed=emb_seed,
            tau=self.embedding.tau,
            vocab_files=self.analysis.vocabulary,
        )

        if thesaurus is not None:
            for phrase, spec in thesaurus.vocabulary_entries():
                space.text.vocab.add(phrase, spec)

        if self.embedding.encoders is None:
            return space

        enc_dir: pathlib.Path = self.embedding.encoders
        text: TextEncoder = typing.cast(
            TextEncoder,
            load_encoder(enc_dir / "text", dim=self.embedding.dim, attr_count=world.attr_count),
        )
        images: list[ImageEncoder] = [
            typing.cast(ImageEncoder, load_encoder(enc_dir / f"backend_{i}", image_size=world.image_size, dim=self.embedding.dim))
            for i in range(len(world.backends))
        ]

        return EmbeddingSpace(text, images, self.embedding.tau)

    def candidate_bank(
        self,
        world: World,
        thesaurus: Thesaurus | None = None,
    ) -> CandidateBank:
        """
        Bank file if configured, else the thesaurus, else the world's own
        attribute names.
        """
        if self.analysis.bank is not None:
            return load_bank(self.analysis.bank)

        if thesaurus is not None:
            return thesaurus.bank(world.cls_token, source=str(self.analysis.thesaurus))

        return CandidateBank.build(world.attributes, world.cls_token, source="world")


def load_config(
    path: pathlib.Path,
    *,
    seed: int | None = None,
) -> RunConfig:
    """
    Read a TOML or JSON run configuration, chosen by file suffix.
    """
    file_path: pathlib.Path = pathlib.Path(path)

    if not file_path.is_file():
        raise ConfigError(f"missing config file: {file_path}")

    try:
        if file_path.suffix == ".toml":
            with open(file_path, "rb") as fp:
                data: dict[str, typing.Any] = tomllib.load(fp)
        elif file_path.suffix == ".json":
            with open(file_path, "r", encoding="utf-8") as fp:
                data = json.load(fp)
        else:
            raise ConfigError(f"config must be .toml or .json, got {file_path.name}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as ex:
        raise ConfigError(f"{file_path}: {ex}") from ex

    if not isinstance(data, dict):
        raise ConfigError(f"{file_path}: top level must be a table")

    config: RunConfig = RunConfig.from_dict(data, base_dir=file_path.parent, seed=seed)
    config.validate()
    return config


######################################################################
# generic dataclass decoding


def _decode(
    cls: type,
    data: typing.Any,
    key_path: str,
    base_dir: pathlib.Path,
) -> typing.Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{key_path or '<root>'}: expected a table, got {type(data).__name__}")

    hints: dict[str, typing.Any] = typing.get_type_hints(cls)
    names: set[str] = {field.name for field in dataclasses.fields(cls)}
    unknown: list[str] = sorted(set(data) - names)

    if unknown:
        raise ConfigError(f"unknown config key: {_join(key_path, unknown[0])}")

    values: dict[str, typing.Any] = {
        name: _coerce(hints[name], value, _join(key_path, name), base_dir) for name, value in data.items()
    }

    return cls(**values)


def _join(
    key_path: str,
    name: str,
) -> str:
    return f"{key_path}.{name}" if key_path else name


def _coerce(  # pylint: disable=R0911,R0912
    hint: typing.Any,
    value: typing.Any,
    key_path: str,
    base_dir: pathlib.Path,
) -> typing.Any:
    origin: typing.Any = typing.get_origin(hint)
    args: tuple[typing.Any, ...] = typing.get_args(hint)

    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None

        inner: list[typing.Any] = [arg for arg in args if arg is not type(None)]
        return _coerce(inner[0], value, key_path, base_dir)

    if dataclasses.is_dataclass(hint):
        return _decode(typing.cast(type, hint), value, key_path, base_dir)

    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{key_path}: expected a list, got {type(value).__name__}")

        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], item, f"{key_path}[{i}]", base_dir) for i, item in enumerate(value))

        if len(value) != len(args):
            raise ConfigError(f"{key_path}: expected {len(args)} items, got {len(value)}")

        return tuple(_coerce(arg, item, f"{key_path}[{i}]", base_dir) for i, (arg, item) in enumerate(zip(args, value)))

    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key_path}: expected true/false, got {value!r}")
        return value

    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key_path}: expected an integer, got {value!r}")
        return value

    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key_path}: expected a number, got {value!r}")
        return float(value)

    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key_path}: expected a string, got {value!r}")
        return value

    if hint is pathlib.Path:
        if not isinstance(value, str):
            raise ConfigError(f"{key_path}: expected a path string, got {value!r}")

        path: pathlib.Path = pathlib.Path(value)

        # outputs stay relative to the working directory
        if key_path == "output" or path.is_absolute():
            return path

        resolved: pathlib.Path = base_dir / path

        if not resolved.exists():
            raise ConfigError(f"{key_path}: referenced file does not exist: {resolved}")

        return resolved

    raise ConfigError(f"{key_path}: unsupported config type {hint!r}")


def _encode(
    value: typing.Any,
) -> typing.Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {field.name: _encode(getattr(value, field.name)) for field in dataclasses.fields(value)}

    if isinstance(value, (tuple, list)):
        return [_encode(item) for item in value]

    if isinstance(value, pathlib.Path):
        return value.as_posix()

    if isinstance(value, np.generic):
        return value.item()

    return value
