#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
unit tests:

  * candidate banks
  * pair embedding and candidate directions
  * similarity and uniqueness scores, iterative selection
  * diagnosis reports, end to end on the planted-bias fixture

see copyright/license in README.md
"""

import math
import pathlib
import tempfile

import numpy as np
import pytest

from cf_diagnosis.analysis import (
    AnalysisConfig,
    AttributeScore,
    CandidateBank,
    Diagnosis,
    DiagnosisReport,
    build_report,
    candidate_directions,
    diagnose,
    embed_pairs,
    load_bank,
    load_report,
    orientation,
    s_sim,
    s_uni,
    select_top,
    similarity_scores,
)
from cf_diagnosis.counterfactual import CounterfactualPair
from cf_diagnosis.embedding import EmbeddingSpace, TextEncoder
from cf_diagnosis.errors import ConfigError, FormatError
from cf_diagnosis.sem import Thesaurus
from cf_diagnosis.toyworld import Backend, World

from tests.fixture_world import AXIS_NAMES, DATA_DIR, optimized, space_for, world_for


def _pair(
    x: np.ndarray,
    x_hat: np.ndarray,
    *,
    before: float = 0.2,
    after: float = 0.8,
) -> CounterfactualPair:
    return CounterfactualPair(
        s=np.zeros(8, dtype=np.float32),
        edit_index=0,
        backend=0,
        delta=np.zeros(8, dtype=np.float32),
        x=x,
        x_hat=x_hat,
        prediction=np.array(before),
        edited_prediction=np.array(after),
        flipped=(before > 0.5) != (after > 0.5),
    )


def _unit_rows(*rows: list[float]) -> np.ndarray:
    arr: np.ndarray = np.array(rows, dtype=np.float64)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def test_candidate_banks(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Bank files: comments, a class line, then phrases; exact duplicates
    collapse.
    """
    bank: CandidateBank = load_bank(DATA_DIR / "bank.txt")

    assert bank.cls_token == "person"
    assert len(bank) == 32
    assert bank.attributes[:8] == AXIS_NAMES

    built: CandidateBank = CandidateBank.build(["hat", " hat ", "beard", "hat"], "person")
    assert built.attributes == ("hat", "beard")

    with pytest.raises(FormatError):
        CandidateBank.build(["", "  "], "person")

    with tempfile.TemporaryDirectory() as tmp_dir:
        path: pathlib.Path = pathlib.Path(tmp_dir) / "bank.txt"

        path.write_text("# only a comment\nhat\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_bank(path)

        path.write_text("# nothing\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_bank(path)

        with pytest.raises(ConfigError):
            load_bank(pathlib.Path(tmp_dir) / "missing.txt")


def test_embed_pairs(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Unit differences, zero-difference pairs dropped, optional orientation,
    and pure axis edits matching their own attribute.
    """
    world: World = world_for()
    space: EmbeddingSpace = space_for()
    backend: Backend = world.backends[0]
    s: np.ndarray = np.full(8, 0.5, dtype=np.float32)
    x: np.ndarray = backend.generate(s)

    edited: np.ndarray = s.copy()
    edited[3] += 0.15
    x_hat: np.ndarray = backend.generate(edited)

    rows, dropped = embed_pairs([_pair(x, x_hat), _pair(x, x)], space.images[0])
    assert rows.shape == (1, space.dim)
    assert dropped == 1
    assert np.linalg.norm(rows[0]) == pytest.approx(1.0)

    bank: CandidateBank = CandidateBank.build(world.attributes, world.cls_token)
    _, directions = candidate_directions(bank, space.text)
    assert int(np.argmax(similarity_scores([rows], directions))) == 3

    backwards: CounterfactualPair = _pair(x, x_hat, before=0.8, after=0.2)
    assert orientation(backwards) == -1.0
    assert orientation(_pair(x, x_hat)) == 1.0

    flipped, _ = embed_pairs([backwards], space.images[0], orient=True)
    np.testing.assert_allclose(flipped[0], -rows[0])

    with pytest.raises(ConfigError):
        embed_pairs([_pair(x, x)], space.images[0])

    with pytest.raises(ConfigError):
        embed_pairs([], space.images[0])


def test_candidate_directions(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Unit, deterministic, and the class token itself has no direction.
    """
    world: World = world_for()
    text: TextEncoder = space_for().text

    phrases, directions = candidate_directions(CandidateBank.build(["hat", "earrings"], "person"), text)
    again, repeat = candidate_directions(CandidateBank.build(["earrings", "hat"], "person"), text)

    assert phrases == ["hat", "earrings"]
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), [1.0, 1.0])
    np.testing.assert_array_equal(directions[0], repeat[again.index("hat")])

    kept, rows = candidate_directions(CandidateBank.build([world.cls_token, "hat"], world.cls_token), text)
    assert kept == ["hat"]
    assert rows.shape == (1, text.dim)


def test_s_sim(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Inner mean over pairs, outer mean over backends.
    """
    direction: np.ndarray = np.array([1.0, 0.0, 0.0])

    assert s_sim([direction[None, :]], direction) == pytest.approx(1.0)
    assert s_sim([_unit_rows([0.0, 1.0, 0.0], [0.0, 0.0, 1.0])], direction) == pytest.approx(0.0)

    low: np.ndarray = _unit_rows([0.2, math.sqrt(0.96), 0.0])
    high: np.ndarray = _unit_rows([0.4, 0.0, math.sqrt(0.84)], [0.4, math.sqrt(0.84), 0.0])
    assert s_sim([low, high], direction) == pytest.approx(0.3)
    assert s_sim([high, low], direction) == pytest.approx(0.3)
    assert s_sim([high[::-1], low], direction) == pytest.approx(0.3)

    rng: np.random.Generator = np.random.default_rng(0)
    one: np.ndarray = rng.normal(size=(5, 3))
    two: np.ndarray = rng.normal(size=(3, 3))
    dirs: np.ndarray = rng.normal(size=(4, 3))
    np.testing.assert_allclose(
        similarity_scores([one, two], dirs),
        0.5 * (similarity_scores([one], dirs) + similarity_scores([two], dirs)),
    )

    with pytest.raises(ConfigError):
        s_sim([np.zeros((0, 3))], direction)


def test_s_uni(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    One on an empty selection, zero for an already selected phrase, and
    `1 - max cosine` in general.
    """
    space: EmbeddingSpace = EmbeddingSpace.oracle(world_for(), dim=32, seed=21)
    text: TextEncoder = space.text
    text.vocab.add("alpha", "1")
    text.vocab.add("beta", f"1:0.7827,2:{math.sqrt(1.0 - 0.7827**2):.6f}")

    assert s_uni("alpha", [], text) == 1.0
    assert s_uni("alpha", ["alpha"], text) == pytest.approx(0.0, abs=1e-9)
    assert s_uni("beta", ["alpha"], text) == pytest.approx(0.2173, abs=1e-4)
    assert s_uni("beta", ["hat", "alpha"], text) == pytest.approx(0.2173, abs=1e-4)


def _synonym_setup() -> tuple[TextEncoder, CandidateBank, list[np.ndarray]]:
    """
    A smiling-dominated edit direction, and a bank where "smiling" carries
    all fifteen near-synonyms from the thesaurus.
    """
    world: World = world_for()
    space: EmbeddingSpace = EmbeddingSpace.oracle(world, dim=32, seed=13)
    thesaurus: Thesaurus = Thesaurus()
    thesaurus.load_source(DATA_DIR / "bank.ttl")

    for phrase, spec in thesaurus.vocabulary_entries():
        space.text.vocab.add(phrase, spec)

    bank: CandidateBank = thesaurus.inject_synonyms(thesaurus.bank(world.cls_token), "smiling")
    _, directions = candidate_directions(CandidateBank.build(AXIS_NAMES, world.cls_token), space.text)

    mix: np.ndarray = directions[1] + 0.3 * (directions[2] + directions[3] + directions[4] + directions[6])
    groups: list[np.ndarray] = [(mix / np.linalg.norm(mix))[None, :]]
    return space.text, bank, groups


def test_uniqueness_dedups_synonyms(
    *,
    debug: bool = False,
) -> None:
    """
    Near-synonyms crowd the similarity-only ranking; uniqueness weighting
    keeps at most one of them.
    """
    text, bank, groups = _synonym_setup()
    synonyms: set[str] = set(bank.attributes[2:17])

    assert bank.attributes[1] == "smiling"
    assert len(synonyms) == 15

    plain: list[AttributeScore] = select_top(bank, groups, 5, text, uniqueness=False)
    unique: list[AttributeScore] = select_top(bank, groups, 5, text, uniqueness=True)

    if debug:
        print([s.phrase for s in plain])
        print([(s.phrase, round(s.s_uni, 4)) for s in unique])

    assert sum(score.phrase in synonyms for score in plain) >= 3
    assert sum(score.phrase in synonyms for score in unique) <= 1

    assert unique[0].s_uni == 1.0
    assert [score.rank for score in unique] == [1, 2, 3, 4, 5]
    assert all(score.s_uni == 1.0 for score in plain)
    assert [s.s_sim for s in plain] == sorted((s.s_sim for s in plain), reverse=True)


def test_select_top_edges(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    One pick is the plain argmax; oversized requests are rejected; the
    order is deterministic.
    """
    text, bank, groups = _synonym_setup()
    phrases, directions = candidate_directions(bank, text)
    sims: np.ndarray = similarity_scores(groups, directions)

    first: list[AttributeScore] = select_top(bank, groups, 1, text)
    assert first[0].phrase == phrases[int(np.argmax(sims))]
    assert first[0].s_uni == 1.0

    assert select_top(bank, groups, 5, text) == select_top(bank, groups, 5, text)

    with pytest.raises(ConfigError):
        select_top(bank, groups, len(bank) + 1, text)


def test_report_round_trip(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Reports survive their JSON file and refuse an empty ranking.
    """
    ranking: list[AttributeScore] = [AttributeScore("smiling", 0.41, 1.0, 1), AttributeScore("hat", 0.12, 0.93, 2)]
    report: DiagnosisReport = build_report(
        {"seed": 3},
        ranking,
        [ranking[:1]],
        [{"id": 0, "pairs": 4}],
        [{"backend": 0, "edits": []}],
        scores={"smiling": 0.41, "hat": 0.12},
    )

    assert report.meta["scores"]["hat"] == 0.12
    assert report.backends[0]["ranking"][0]["phrase"] == "smiling"

    with tempfile.TemporaryDirectory() as tmp_dir:
        path: pathlib.Path = pathlib.Path(tmp_dir) / "report.json"
        report.save(path)
        loaded: DiagnosisReport = load_report(path)

        assert loaded.to_dict() == report.to_dict()
        assert loaded.top_phrases(1) == ["smiling"]

    with pytest.raises(ConfigError):
        build_report({}, [], [], [], [])

    with pytest.raises(FormatError):
        DiagnosisReport.from_dict({"format": "other"})


def test_diagnose_planted_bias(
    *,
    debug: bool = False,
) -> None:
    """
    End to end: the planted attribute outranks every distractor.
    """
    objective, result = optimized()
    bank: CandidateBank = load_bank(DATA_DIR / "bank.txt")
    cfg: AnalysisConfig = AnalysisConfig(pairs=48, seed=4)

    diagnosis: Diagnosis = diagnose(objective, result, bank, cfg, meta={"command": "test"})
    report: DiagnosisReport = diagnosis.report
    scores: dict[str, float] = report.meta["scores"]
    distractors: list[str] = [phrase for phrase in bank.attributes if phrase not in AXIS_NAMES]

    if debug:
        print(report.top_phrases(), {p: scores[p] for p in AXIS_NAMES})

    assert "smiling" in report.top_phrases(3)
    assert scores["smiling"] > max(scores[p] for p in distractors)

    assert report.meta["command"] == "test"
    assert report.meta["oriented"] is True
    assert len(report.ranking) == 5
    assert report.ranking[0].s_uni == 1.0
    assert len(report.backends) == 2
    assert len(report.edits) == 2
    assert len(diagnosis.pairs) == 2

    for entry, kept in zip(report.backends, diagnosis.pairs):
        assert entry["pairs"] == 48
        assert entry["analyzed"] + entry["dropped"] == len(kept)

    plain: Diagnosis = diagnose(objective, result, bank, AnalysisConfig(pairs=48, seed=4, uniqueness=False))
    assert plain.report.meta["scores"] == scores
    assert plain.report.meta["uniqueness"] is False


def test_planted_bias_across_seeds(
    *,
    debug: bool = False,
) -> None:
    """
    Over five seeds, the planted attribute tops the pooled similarity
    scores in at least four, each time scoring at least 1.5 times the best
    distractor.
    """
    bank: CandidateBank = load_bank(DATA_DIR / "bank.txt")
    distractors: list[str] = [phrase for phrase in bank.attributes if phrase not in AXIS_NAMES]
    recovered: int = 0

    for seed in range(5):
        objective, result = optimized(seed)
        scores: dict[str, float] = diagnose(objective, result, bank, AnalysisConfig(pairs=48, seed=4)).report.meta[
            "scores"
        ]
        best: str = max(scores, key=lambda phrase: scores[phrase])
        runner_up: float = max(scores[phrase] for phrase in distractors)

        if debug:
            print("seed", seed, "best", best, scores["smiling"], "best distractor", runner_up)

        recovered += int(best == "smiling" and scores["smiling"] >= 1.5 * runner_up)

    assert recovered >= 4


def test_backend_rankings_agree(
    *,
    debug: bool = False,
) -> None:
    """
    The linear and the mixed backend share at least two of their top five
    attributes, for three seeds.
    """
    bank: CandidateBank = load_bank(DATA_DIR / "bank.txt")

    for seed in (0, 1, 2):
        objective, result = optimized(seed)
        report: DiagnosisReport = diagnose(objective, result, bank, AnalysisConfig(pairs=48, seed=4)).report
        tops: list[set[str]] = [{entry["phrase"] for entry in backend["ranking"][:5]} for backend in report.backends]
        jaccard: float = len(tops[0] & tops[1]) / len(tops[0] | tops[1])

        if debug:
            print("seed", seed, tops, jaccard)

        assert jaccard >= 0.25


if __name__ == "__main__":
    test_candidate_banks(debug=True)
    test_embed_pairs(debug=True)
    test_candidate_directions(debug=True)
    test_s_sim(debug=True)
    test_s_uni(debug=True)
    test_uniqueness_dedups_synonyms(debug=True)
    test_select_top_edges(debug=True)
    test_report_round_trip(debug=True)
    test_diagnose_planted_bias(debug=True)
    test_planted_bias_across_seeds(debug=True)
    test_backend_rankings_agree(debug=True)
