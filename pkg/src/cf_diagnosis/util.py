#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Shared helpers: a key/value store, JSON serialization, and seeded RNG streams.

see copyright/license in README.md
"""

import json
import pathlib
import typing
import zlib

import numpy as np


class KeyValueStore:  # pylint: disable=R0903
    """
    Factory for the phrase-keyed caches: semantic codes in a `Vocabulary`,
    synonym labels in a `Thesaurus`. Both grow with the candidate bank, so
    a subclass may hand out a dict subclass that spills to disk or counts
    lookups.
    """

    def allocate(
        self,
    ) -> dict[str, typing.Any]:
        """
        A fresh, empty phrase cache.
        """
        return {}


def serialize_json(
    data: list[typing.Any] | dict[str, typing.Any],
    out_file: pathlib.Path,
    *,
    encoding: str = "utf-8",
) -> None:
    """
    Write `data` to `out_file` as indented JSON with a trailing newline.
    """
    with open(pathlib.Path(out_file).resolve(), "w", encoding=encoding) as fp:
        fp.write(json.dumps(data, indent=2))
        fp.write("\n")


def load_json(
    in_file: pathlib.Path,
    *,
    encoding: str = "utf-8",
) -> typing.Any:
    """
    Load a JSON document from a text file.
    """
    with open(pathlib.Path(in_file).resolve(), "r", encoding=encoding) as fp:
        return json.load(fp)


def write_jsonl(
    records: typing.Iterable[dict[str, typing.Any]],
    out_file: pathlib.Path,
    *,
    encoding: str = "utf-8",
) -> None:
    """
    Write one JSON object per line.
    """
    with open(pathlib.Path(out_file).resolve(), "w", encoding=encoding) as fp:
        for rec in records:
            fp.write(json.dumps(rec, sort_keys=True))
            fp.write("\n")


def stream_key(
    label: str | int,
) -> int:
    """
    Map a stream label onto a stable integer, independent of `PYTHONHASHSEED`.
    """
    if isinstance(label, int):
        return label

    return zlib.crc32(label.encode("utf-8"))


def rng_stream(
    seed: int,
    *labels: str | int,
) -> np.random.Generator:
    """
    Create an independent RNG stream for one task, derived from a seed plus
    a path of labels, e.g. `rng_stream(7, "optimize", "backend", 1)`.
    Streams are never shared between tasks.
    """
    seq: np.random.SeedSequence = np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=tuple(stream_key(label) for label in labels),
    )

    return np.random.default_rng(seq)
