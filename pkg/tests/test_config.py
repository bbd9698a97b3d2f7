#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
unit tests:

  * loading TOML and JSON run configurations
  * key-path error reporting
  * seed derivation

see copyright/license in README.md
"""

import json
import pathlib
import tempfile

import pytest

from cf_diagnosis.config import RunConfig, derive_seed, load_config
from cf_diagnosis.errors import ConfigError

from tests.fixture_world import BASE_DIR, DATA_DIR


def _write(
    tmp_dir: str,
    name: str,
    text: str,
) -> pathlib.Path:
    path: pathlib.Path = pathlib.Path(tmp_dir) / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_default(
    *,
    debug: bool = False,
) -> None:
    """
    The shipped configuration loads, with inputs resolved next to it.
    """
    config: RunConfig = load_config(BASE_DIR / "config.toml")

    if debug:
        print(config)

    assert config.seed == 0
    assert config.world.image_size == (32, 32)
    assert [entry.kind for entry in config.world.backends] == ["linear-basis", "mixed-basis"]
    assert config.world.dataset.spurious_attr == (1,)
    assert config.optimizer.weights.gamma == 100.0
    assert config.optimizer.grad_clip == 2.0
    assert config.optimizer.edit_range == 1.0
    assert config.hardening.fr_steps == (25, 100)
    assert config.analysis.bank == DATA_DIR / "bank.txt"
    assert config.analysis.vocabulary == (DATA_DIR / "vocab.tsv",)
    assert config.output == pathlib.Path("runs/default")


def test_seed_override(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Every component seed follows the global seed.
    """
    config: RunConfig = load_config(BASE_DIR / "config.toml", seed=7)

    assert config.seed == 7
    assert config.optimizer.seed == derive_seed(7, "optimizer")
    assert config.target.seed == derive_seed(7, "target")
    assert config.world.rule.seed == derive_seed(7, "rule")

    assert derive_seed(7, "optimizer") == derive_seed(7, "optimizer")
    assert derive_seed(7, "optimizer") != derive_seed(7, "target")
    assert derive_seed(7, "optimizer") != derive_seed(8, "optimizer")
    assert 0 <= derive_seed(123, "x", 4) < 2**31 - 1


def test_round_trip(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    The recorded form decodes back to the same configuration.
    """
    config: RunConfig = load_config(BASE_DIR / "config.toml", seed=3)
    doc = json.loads(json.dumps(config.to_dict()))

    assert RunConfig.from_dict(doc) == config


def test_json_config(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    JSON documents decode the same way; omitted sections keep defaults.
    """
    with tempfile.TemporaryDirectory() as tmp_dir:
        path: pathlib.Path = _write(tmp_dir, "run.json", json.dumps({"seed": 3, "hardening": {"fr_steps": [5]}}))
        config: RunConfig = load_config(path)

        assert config.seed == 3
        assert config.hardening.fr_steps == (5,)
        assert config.optimizer.k == 4


@pytest.mark.parametrize(
    ("text", "key"),
    [
        ("[optimizer]\nstepz = 3\n", "optimizer.stepz"),
        ("[optimizer]\nk = true\n", "optimizer.k"),
        ("[optimizer]\nlr = \"fast\"\n", "optimizer.lr"),
        ("[world]\nimage_size = [32]\n", "world.image_size"),
        ("[analysis]\nbank = \"nowhere.txt\"\n", "analysis.bank"),
        ("[[world.backends]]\nkind = 3\n", "world.backends[0].kind"),
        ("colour = 1\n", "colour"),
    ],
)
def test_bad_keys(
    text: str,
    key: str,
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Rejections name the offending key path.
    """
    with tempfile.TemporaryDirectory() as tmp_dir:
        path: pathlib.Path = _write(tmp_dir, "run.toml", text)

        with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
            load_config(path)


def test_bad_files(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Missing, unparsable, and wrongly named files, and settings that fail
    validation.
    """
    with tempfile.TemporaryDirectory() as tmp_dir:
        with pytest.raises(ConfigError):
            load_config(pathlib.Path(tmp_dir) / "missing.toml")

        with pytest.raises(ConfigError):
            load_config(_write(tmp_dir, "broken.toml", "seed = = 1\n"))

        with pytest.raises(ConfigError):
            load_config(_write(tmp_dir, "run.yaml", "seed: 1\n"))

        with pytest.raises(ConfigError):
            load_config(_write(tmp_dir, "list.json", "[1, 2]"))

        with pytest.raises(ConfigError):
            load_config(_write(tmp_dir, "bad.toml", "[hardening]\nbatch_size = 7\n"))

        with pytest.raises(ConfigError, match="two zero-shot"):
            load_config(_write(tmp_dir, "one_label.toml", "[optimizer]\nlabels = [\"male\"]\n"))

        with pytest.raises(ConfigError, match="edit_range"):
            load_config(_write(tmp_dir, "no_box.toml", "[optimizer]\nedit_range = 0.0\n"))


if __name__ == "__main__":
    test_load_default(debug=True)
    test_seed_override(debug=True)
    test_round_trip(debug=True)
    test_json_config(debug=True)
    test_bad_keys("colour = 1\n", "colour", debug=True)
    test_bad_files(debug=True)
