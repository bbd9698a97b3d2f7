#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
unit tests:

  * Flip Resistance
  * counterfactual training rounds and the accuracy guard

see copyright/license in README.md
"""

import dataclasses
import json
import pathlib
import tempfile

import pytest

from cf_diagnosis.config import RunConfig
from cf_diagnosis.errors import ConfigError, HardeningAbort
from cf_diagnosis.hardening import FRResult, HardenConfig, HardeningResult, flip_resistance, harden
from cf_diagnosis.targets import TargetModel, eval_accuracy
from cf_diagnosis.toyworld import Dataset, World
from cf_diagnosis.util import rng_stream

from tests.fixture_world import small_config, space_for, trained_model, world_for


def test_fr_result(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Percentages and report form.
    """
    result: FRResult = FRResult(25, 8, 6)

    assert result.fr_percent == 75.0
    assert result.to_dict() == {"k_steps": 25, "n_images": 8, "resist_count": 6, "fr_percent": 75.0}
    assert FRResult(0, 3, 3).fr_percent == 100.0


def test_flip_resistance_edges(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    No attack steps from a near-zero start leave every prediction intact;
    one image resists fully or not at all.
    """
    config: RunConfig = small_config()
    model: TargetModel = trained_model()
    quiet = dataclasses.replace(config.optimizer, init_std=1e-6)

    untouched: FRResult = flip_resistance(model, world_for(), space_for(), 0, 12, quiet, 3)
    assert untouched.fr_percent == 100.0
    assert untouched.n_images == 12

    single: FRResult = flip_resistance(model, world_for(), space_for(), 5, 1, config.optimizer, 3)
    assert single.fr_percent in (0.0, 100.0)

    again: FRResult = flip_resistance(model, world_for(), space_for(), 5, 1, config.optimizer, 3)
    assert again == single

    with pytest.raises(ConfigError):
        flip_resistance(model, world_for(), space_for(), 5, 0, config.optimizer, 3)

    with pytest.raises(ConfigError):
        flip_resistance(model, world_for(), space_for(), -1, 4, config.optimizer, 3)


def test_harden_config(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Unusable settings are rejected.
    """
    HardenConfig().validate()

    for changes in (
        {"rounds": -1},
        {"batch_size": 7},
        {"batch_size": 0},
        {"lr": 0.0},
        {"fr_steps": ()},
        {"fr_steps": (25, -4)},
    ):
        with pytest.raises(ConfigError):
            dataclasses.replace(HardenConfig(), **changes).validate()  # type: ignore


def test_harden_round(
    *,
    debug: bool = False,
) -> None:
    """
    One round fine-tunes on equal counterfactual and regular batches and
    logs it; the starting model is left untouched.
    """
    config: RunConfig = small_config()
    model: TargetModel = trained_model()
    before: dict[str, bytes] = {name: value.tobytes() for name, value in model.weights.items()}
    cfg: HardenConfig = dataclasses.replace(config.hardening, rounds=1, max_drop=1.0)

    with tempfile.TemporaryDirectory() as tmp_dir:
        log_path: pathlib.Path = pathlib.Path(tmp_dir) / "harden.jsonl"

        result: HardeningResult = harden(
            model,
            world_for(),
            space_for(),
            cfg,
            optim=config.optimizer,
            dataset_spec=config.world.dataset,
            log_path=log_path,
            debug=debug,
        )

        lines: list[str] = log_path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0]) == result.rounds[0]

    entry: dict = result.rounds[0]
    assert entry["round"] == 0
    assert entry["counterfactuals"] == cfg.batch_size
    assert entry["regular"] == cfg.batch_size
    assert 0.0 <= entry["flip_rate_before"] <= 1.0
    assert 0.0 <= entry["flip_rate_after"] <= 1.0

    assert result.model.metrics["hardened_rounds"] == 1
    assert result.final_accuracy == pytest.approx(entry["val_accuracy"], abs=1e-6)
    assert any(result.model.weights[name].tobytes() != blob for name, blob in before.items())
    assert all(model.weights[name].tobytes() == blob for name, blob in before.items())


def test_harden_abort(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    The accuracy guard stops after the offending round and keeps its log.
    """
    config: RunConfig = small_config()
    cfg: HardenConfig = dataclasses.replace(config.hardening, rounds=2, steps=20, epochs=1, max_drop=-1.0)

    with tempfile.TemporaryDirectory() as tmp_dir:
        log_path: pathlib.Path = pathlib.Path(tmp_dir) / "harden.jsonl"

        with pytest.raises(HardeningAbort) as info:
            harden(
                trained_model(),
                world_for(),
                space_for(),
                cfg,
                optim=config.optimizer,
                dataset_spec=config.world.dataset,
                log_path=log_path,
            )

        assert len(info.value.round_log) == 1
        assert info.value.exit_code == 4
        assert len(log_path.read_text(encoding="utf-8").splitlines()) == 1


def test_flip_resistance_falls_with_budget(
    *,
    debug: bool = False,
) -> None:
    """
    Averaged over three attack seeds, more attack steps never leave more
    predictions intact.
    """
    config: RunConfig = small_config()
    model: TargetModel = trained_model()
    budgets: tuple[int, ...] = (5, 25, 100)
    mean_fr: list[float] = []

    for k_steps in budgets:
        runs: list[float] = [
            flip_resistance(model, world_for(), space_for(), k_steps, 12, config.optimizer, seed).fr_percent
            for seed in (0, 1, 2)
        ]
        mean_fr.append(sum(runs) / len(runs))

    if debug:
        print(dict(zip(budgets, mean_fr)))

    assert mean_fr[0] >= mean_fr[1] >= mean_fr[2]


def test_hardening_resists_attacks(
    *,
    debug: bool = False,
) -> None:
    """
    Counterfactual training raises FR-25 by at least 50 points while test
    accuracy moves by at most 2 points.
    """
    config: RunConfig = small_config()
    model: TargetModel = trained_model()
    world: World = world_for()
    cfg: HardenConfig = dataclasses.replace(
        config.hardening, rounds=3, batch_size=256, steps=300, epochs=5, max_drop=1.0
    )

    result: HardeningResult = harden(
        model,
        world,
        space_for(),
        cfg,
        optim=config.optimizer,
        dataset_spec=config.world.dataset,
        debug=debug,
    )

    test_set: Dataset = world.sample_biased_dataset(
        dataclasses.replace(config.world.dataset, n_per_class=300),
        rng_stream(config.seed, "data", "test"),
    )
    base_acc: float = eval_accuracy(model, test_set)
    hard_acc: float = eval_accuracy(result.model, test_set)

    base_fr: FRResult = flip_resistance(model, world, space_for(), 25, 24, config.optimizer, cfg.seed)
    hard_fr: FRResult = flip_resistance(result.model, world, space_for(), 25, 24, config.optimizer, cfg.seed)

    if debug:
        print("accuracy", base_acc, hard_acc, "FR-25", base_fr.fr_percent, hard_fr.fr_percent)

    assert abs(hard_acc - base_acc) <= 0.02
    assert hard_fr.fr_percent >= base_fr.fr_percent + 50.0


if __name__ == "__main__":
    test_fr_result(debug=True)
    test_flip_resistance_edges(debug=True)
    test_harden_config(debug=True)
    test_harden_round(debug=True)
    test_harden_abort(debug=True)
    test_flip_resistance_falls_with_budget(debug=True)
    test_hardening_resists_attacks(debug=True)
