#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Counterfactual analysis: embed counterfactual pairs, score candidate
attributes by how well their text direction matches the image changes,
and select a ranked, uniqueness-weighted attribute list.

see copyright/license in README.md
"""

import dataclasses
import logging
import pathlib
import typing

import numpy as np

from .counterfactual import CounterfactualObjective, CounterfactualPair, OptimizationResult
from .embedding import ImageEncoder, TextEncoder
from .errors import ConfigError, FormatError
from .util import load_json, serialize_json

logger: logging.Logger = logging.getLogger(__name__)

REPORT_FORMAT: str = "cf-diagnosis/report"

# difference vectors shorter than this have no direction
ZERO_NORM: float = 1e-8


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:  # pylint: disable=R0902
    """
    Settings of the analysis stage.
    """

    bank: pathlib.Path | None = None
    thesaurus: pathlib.Path | None = None
    vocabulary: tuple[pathlib.Path, ...] = ()
    top: int = 5
    uniqueness: bool = True
    pairs: int = 128
    flipped_only: bool = True
    orient: bool = True
    export_pairs: int = 8
    seed: int = 0

    def validate(
        self,
    ) -> None:
        """
        Reject unusable settings.
        """
        if self.top < 1 or self.pairs < 1 or self.export_pairs < 0:
            raise ConfigError("analysis.top and analysis.pairs must be >= 1, analysis.export_pairs >= 0")

        for path in (self.bank, self.thesaurus, *self.vocabulary):
            if path is not None and not pathlib.Path(path).is_file():
                raise ConfigError(f"missing file referenced by analysis config: {path}")


@dataclasses.dataclass(frozen=True)
class CandidateBank:
    """
    Candidate attribute phrases, exact duplicates removed, plus the class
    token used in prompts.
    """

    attributes: tuple[str, ...]
    cls_token: str
    source: str = "inline"

    @classmethod
    def build(
        cls,
        phrases: typing.Iterable[str],
        cls_token: str,
        *,
        source: str = "inline",
    ) -> "CandidateBank":
        """
        Deduplicate exact strings, keeping first occurrences.
        """
        seen: dict[str, None] = {}

        for phrase in phrases:
            text: str = phrase.strip()

            if text and text not in seen:
                seen[text] = None

        if not seen:
            raise FormatError(f"candidate bank {source} is empty")

        if not cls_token.strip():
            raise FormatError(f"candidate bank {source} has an empty class token")

        return cls(tuple(seen), cls_token.strip(), source)

    def __len__(
        self,
    ) -> int:
        return len(self.attributes)


def load_bank(
    path: pathlib.Path,
    *,
    encoding: str = "utf-8",
) -> CandidateBank:
    """
    Read a bank file: one phrase per line, `#` comment lines ignored, the
    first non-comment line being `cls: <token>`.
    """
    file_path: pathlib.Path = pathlib.Path(path)

    if not file_path.is_file():
        raise ConfigError(f"missing candidate bank: {file_path}")

    cls_token: str | None = None
    phrases: list[str] = []

    with open(file_path, "r", encoding=encoding) as fp:
        for line in fp:
            text: str = line.strip()

            if not text or text.startswith("#"):
                continue

            if cls_token is None:
                if not text.startswith("cls:"):
                    raise FormatError(f"{file_path}: first entry must be 'cls: <token>', got {text!r}")

                cls_token = text[len("cls:") :].strip()
                continue

            phrases.append(text)

    if cls_token is None:
        raise FormatError(f"{file_path}: no 'cls:' line")

    return CandidateBank.build(phrases, cls_token, source=str(file_path))


@dataclasses.dataclass(frozen=True)
class AttributeScore:
    """
    One selected attribute with its similarity and uniqueness scores.
    """

    phrase: str
    s_sim: float
    s_uni: float
    rank: int

    @property
    def score(
        self,
    ) -> float:
        """
        Selection criterion, similarity times uniqueness.
        """
        return self.s_sim * self.s_uni

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        Report form.
        """
        return {"phrase": self.phrase, "s_sim": self.s_sim, "s_uni": self.s_uni, "rank": self.rank}

    @classmethod
    def from_dict(
        cls,
        data: dict[str, typing.Any],
    ) -> "AttributeScore":
        """
        Inverse of `to_dict()`.
        """
        return cls(str(data["phrase"]), float(data["s_sim"]), float(data["s_uni"]), int(data["rank"]))


######################################################################
# scoring


def orientation(
    pair: CounterfactualPair,
) -> float:
    """
    Sign that points a binary pair toward the positive class.
    """
    return float(np.sign(float(np.asarray(pair.edited_prediction)) - float(np.asarray(pair.prediction))))


def embed_pairs(
    pairs: typing.Sequence[CounterfactualPair],
    encoder: ImageEncoder,
    *,
    orient: bool = False,
) -> tuple[np.ndarray, int]:
    """
    Unit image-embedding differences `normalize(E(x_hat) - E(x))`, one row
    per kept pair, optionally oriented toward the positive class. Pairs
    without a difference are dropped and counted.
    """
    if not pairs:
        raise ConfigError("embed_pairs needs at least one pair")

    rows: list[np.ndarray] = []
    dropped: int = 0

    for pair in pairs:
        h: np.ndarray = np.asarray(encoder.encode_image(pair.x), dtype=np.float64)
        h_hat: np.ndarray = np.asarray(encoder.encode_image(pair.x_hat), dtype=np.float64)
        diff: np.ndarray = h_hat - h

        if orient:
            diff = orientation(pair) * diff

        norm: float = float(np.linalg.norm(diff))

        if norm < ZERO_NORM:
            dropped += 1
            continue

        rows.append(diff / norm)

    if not rows:
        raise ConfigError(f"all {len(pairs)} pairs have zero embedding difference; nothing to analyze")

    return np.stack(rows), dropped


def candidate_directions(
    bank: CandidateBank,
    text: TextEncoder,
) -> tuple[list[str], np.ndarray]:
    """
    Unit text directions `normalize(E("...[cls], [a]") - E("...[cls]"))`;
    candidates without a direction are dropped with a warning.
    """
    base: np.ndarray = text.encode_base(bank.cls_token)
    kept: list[str] = []
    rows: list[np.ndarray] = []

    for phrase in bank.attributes:
        diff: np.ndarray = text.encode_text(phrase, bank.cls_token) - base
        norm: float = float(np.linalg.norm(diff))

        if norm < ZERO_NORM:
            log_msg: str = f"candidate {phrase!r} has no text direction, dropped"
            logger.warning(log_msg)
            continue

        kept.append(phrase)
        rows.append(diff / norm)

    if not rows:
        return kept, np.zeros((0, text.dim))

    return kept, np.stack(rows)


def s_sim(
    groups: typing.Sequence[np.ndarray],
    direction: np.ndarray,
) -> float:
    """
    Mean over backends of the mean inner product between each backend's
    embedding differences and one candidate direction.
    """
    return float(similarity_scores(groups, direction[None, :])[0])


def similarity_scores(
    groups: typing.Sequence[np.ndarray],
    directions: np.ndarray,
) -> np.ndarray:
    """
    Similarity scores of all candidate directions at once.
    """
    if not groups or any(len(group) == 0 for group in groups):
        raise ConfigError("similarity scores need at least one nonempty backend group")

    per_backend: np.ndarray = np.stack([(group @ directions.T).mean(axis=0) for group in groups])
    return per_backend.mean(axis=0)


def s_uni(
    phrase: str,
    selected: typing.Sequence[str],
    text: TextEncoder,
) -> float:
    """
    1 for the first pick, else 1 minus the largest cosine between the bare
    phrase encoding and those already selected; may exceed 1.
    """
    if not selected:
        return 1.0

    vec: np.ndarray = text.encode_text(phrase)
    return 1.0 - max(float(vec @ text.encode_text(other)) for other in selected)


def select_top(  # pylint: disable=R0913
    bank: CandidateBank,
    groups: typing.Sequence[np.ndarray],
    top: int,
    text: TextEncoder,
    *,
    uniqueness: bool = True,
) -> list[AttributeScore]:
    """
    Iteratively pick the candidate maximizing similarity times uniqueness
    against the growing selection; with `uniqueness=False` the order is by
    similarity alone. Ties go to bank order.
    """
    if top > len(bank):
        raise ConfigError(f"cannot select top {top} from a bank of {len(bank)} candidates")

    phrases, directions = candidate_directions(bank, text)

    if len(phrases) < top:
        log_msg: str = f"only {len(phrases)} usable candidates, selecting {len(phrases)} instead of {top}"
        logger.warning(log_msg)
        top = len(phrases)

    sims: np.ndarray = similarity_scores(groups, directions) if phrases else np.zeros(0)
    remaining: list[int] = list(range(len(phrases)))
    chosen: list[str] = []
    ranking: list[AttributeScore] = []

    for rank in range(1, top + 1):
        unis: np.ndarray = np.array(
            [s_uni(phrases[i], chosen, text) if uniqueness else 1.0 for i in remaining],
        )
        pick: int = int(np.argmax(sims[remaining] * unis))
        idx: int = remaining.pop(pick)

        chosen.append(phrases[idx])
        ranking.append(AttributeScore(phrases[idx], float(sims[idx]), float(unis[pick]), rank))

    return ranking


######################################################################
# report


@dataclasses.dataclass
class DiagnosisReport:
    """
    Serializable diagnosis: run metadata, per-backend and pooled rankings,
    per-edit statistics, and references to exported pair images.
    """

    meta: dict[str, typing.Any]
    backends: list[dict[str, typing.Any]]
    edits: list[dict[str, typing.Any]]
    ranking: list[AttributeScore]
    pairs: list[dict[str, typing.Any]] = dataclasses.field(default_factory=list)

    def to_dict(
        self,
    ) -> dict[str, typing.Any]:
        """
        JSON-ready document.
        """
        return {
            "format": REPORT_FORMAT,
            "meta": self.meta,
            "backends": self.backends,
            "edits": self.edits,
            "ranking": [score.to_dict() for score in self.ranking],
            "pairs": self.pairs,
        }

    @classmethod
    def from_dict(
        cls,
        data: dict[str, typing.Any],
    ) -> "DiagnosisReport":
        """
        Inverse of `to_dict()`.
        """
        if data.get("format") != REPORT_FORMAT:
            raise FormatError(f"not a diagnosis report: format {data.get('format')!r}")

        return cls(
            meta=data["meta"],
            backends=data["backends"],
            edits=data["edits"],
            ranking=[AttributeScore.from_dict(item) for item in data["ranking"]],
            pairs=data.get("pairs", []),
        )

    def save(
        self,
        path: pathlib.Path,
    ) -> None:
        """
        Write the report as pretty-printed JSON.
        """
        serialize_json(self.to_dict(), path)

    def top_phrases(
        self,
        count: int | None = None,
    ) -> list[str]:
        """
        Pooled ranking phrases, best first.
        """
        return [score.phrase for score in self.ranking[:count]]


def load_report(
    path: pathlib.Path,
) -> DiagnosisReport:
    """
    Read a report written by `DiagnosisReport.save()`.
    """
    return DiagnosisReport.from_dict(load_json(path))


def build_report(  # pylint: disable=R0913
    meta: dict[str, typing.Any],
    ranking: list[AttributeScore],
    backend_rankings: typing.Sequence[list[AttributeScore]],
    backend_info: typing.Sequence[dict[str, typing.Any]],
    edits: list[dict[str, typing.Any]],
    *,
    scores: dict[str, float] | None = None,
    pairs: list[dict[str, typing.Any]] | None = None,
) -> DiagnosisReport:
    """
    Assemble a report; an empty pooled ranking is rejected.
    """
    if not ranking:
        raise ConfigError("cannot build a report from an empty ranking")

    backends: list[dict[str, typing.Any]] = []

    for info, ranked in zip(backend_info, backend_rankings):
        backends.append({**info, "ranking": [score.to_dict() for score in ranked]})

    full_meta: dict[str, typing.Any] = dict(meta)

    if scores is not None:
        full_meta["scores"] = {phrase: round(value, 8) for phrase, value in scores.items()}

    return DiagnosisReport(full_meta, backends, edits, ranking, pairs or [])


@dataclasses.dataclass
class Diagnosis:
    """
    Outcome of `diagnose()`: the report plus the analyzed pairs.
    """

    report: DiagnosisReport
    pairs: list[list[CounterfactualPair]]


def diagnose(  # pylint: disable=R0914
    objective: CounterfactualObjective,
    result: OptimizationResult,
    bank: CandidateBank,
    cfg: AnalysisConfig,
    *,
    meta: dict[str, typing.Any] | None = None,
    debug: bool = False,
) -> Diagnosis:
    """
    Generate best-edit pairs per backend, embed them, and rank the bank
    both pooled across backends and per backend.
    """
    cfg.validate()

    orient: bool = cfg.orient and objective.model.task == "binary"
    groups: list[np.ndarray] = []
    kept_pairs: list[list[CounterfactualPair]] = []
    backend_info: list[dict[str, typing.Any]] = []

    for edits in result.edit_sets:
        pairs: list[CounterfactualPair] = objective.make_pairs(edits, cfg.pairs, cfg.seed)
        use: list[CounterfactualPair] = [pair for pair in pairs if pair.flipped] if cfg.flipped_only else pairs

        if not use:
            log_msg: str = f"backend {edits.backend}: no flipped pairs, analyzing all {len(pairs)}"
            logger.warning(log_msg)
            use = pairs

        deltas, dropped = embed_pairs(use, objective.space.images[edits.backend], orient=orient)

        if debug:
            log_msg = f"backend {edits.backend}: {len(deltas)} pairs analyzed, {dropped} dropped"
            logger.debug(log_msg)

        groups.append(deltas)
        kept_pairs.append(use)

        backend_info.append(
            {
                "id": edits.backend,
                "spec": objective.world.backends[edits.backend].spec.to_dict(),
                "pairs": len(pairs),
                "flipped": sum(pair.flipped for pair in pairs),
                "analyzed": len(deltas),
                "dropped": dropped,
            }
        )

    text: TextEncoder = objective.space.text
    top: int = min(cfg.top, len(bank))
    pooled: list[AttributeScore] = select_top(bank, groups, top, text, uniqueness=cfg.uniqueness)
    per_backend: list[list[AttributeScore]] = [
        select_top(bank, [group], top, text, uniqueness=cfg.uniqueness) for group in groups
    ]

    phrases, directions = candidate_directions(bank, text)
    sims: np.ndarray = similarity_scores(groups, directions)

    report: DiagnosisReport = build_report(
        {
            **(meta or {}),
            "cls_token": bank.cls_token,
            "bank": bank.source,
            "uniqueness": cfg.uniqueness,
            "flipped_only": cfg.flipped_only,
            "oriented": orient,
        },
        pooled,
        per_backend,
        backend_info,
        [edits.to_dict() for edits in result.edit_sets],
        scores=dict(zip(phrases, (float(v) for v in sims))),
    )

    return Diagnosis(report, kept_pairs)
