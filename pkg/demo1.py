#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Example using `cf_diagnosis` to plant a bias in a toy world, train a
classifier on it, and recover the bias from counterfactual edits alone.

see copyright/license in README.md
"""

import logging
import pathlib
import sys

from cf_diagnosis import (
    CounterfactualObjective,
    RunConfig,
    TargetModel,
    diagnose,
    load_config,
    optimize_edits,
    train_target,
)


if __name__ == "__main__":
    logger: logging.Logger = logging.getLogger(__name__)
    logging.basicConfig(level=logging.WARNING)  # DEBUG

    ## load the run config, from the CLI argument if given
    config_path: pathlib.Path = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "config.toml")
    config: RunConfig = load_config(config_path)

    ## build the world and train a classifier on its biased data
    world = config.build_world()
    train, val = config.training_data(world)

    model: TargetModel = train_target(
        train,
        config.target,
        validation=val,
        keypoints=config.world.rule.keypoints,
        seg_classes=config.world.rule.seg_classes,
    )

    print(f"validation accuracy: {model.metrics['val_accuracy']:.4f}")
    print(f"planted attributes: {[world.attributes[k] for k in config.world.dataset.spurious_attr]}")

    ## optimize edit vectors per backend, then rank candidate attributes
    thesaurus = config.thesaurus()
    space = config.embedding_space(world, thesaurus)
    bank = config.candidate_bank(world, thesaurus)

    objective: CounterfactualObjective = CounterfactualObjective(model, world, space, config.optimizer)
    result = optimize_edits(objective, debug=False)  # True

    for edits in result.edit_sets:
        busiest: int = max(range(len(edits)), key=lambda i: edits.stats[i].selected)
        print(f"backend {edits.backend}: edit {busiest} chosen most, flip rate {edits.stats[busiest].flip_rate:.3f}")

    diagnosis = diagnose(objective, result, bank, config.analysis, meta={"demo": "demo1"})

    print("\n   ###  RANKED ATTRIBUTES:")

    for score in diagnosis.report.ranking:
        print(f"{score.rank:>3}  {score.phrase:<20}  s_sim {score.s_sim:+.4f}  s_uni {score.s_uni:.4f}")
