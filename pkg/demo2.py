#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Example using `cf_diagnosis` for counterfactual training: harden a biased
classifier, then compare accuracy and Flip Resistance before and after.

see copyright/license in README.md
"""

import json
import logging
import pathlib
import sys

from cf_diagnosis import (
    FRResult,
    HardeningAbort,
    RunConfig,
    TargetModel,
    flip_resistance,
    harden,
    load_config,
    train_target,
)


if __name__ == "__main__":
    logger: logging.Logger = logging.getLogger(__name__)
    logging.basicConfig(level=logging.WARNING)  # DEBUG

    config_path: pathlib.Path = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "config.toml")
    config: RunConfig = load_config(config_path)

    world = config.build_world()
    space = config.embedding_space(world, config.thesaurus())
    train, val = config.training_data(world)

    base: TargetModel = train_target(train, config.target, validation=val)

    # run the mini-max rounds: fresh edits against the current model,
    # then fine-tuning on counterfactual plus regular batches
    try:
        result = harden(
            base,
            world,
            space,
            config.hardening,
            optim=config.optimizer,
            dataset_spec=config.world.dataset,
            train_batch=config.target.batch_size,
            debug=False,  # True
        )
    except HardeningAbort as ex:
        print(f"hardening aborted: {ex}")
        print(json.dumps(ex.round_log, indent=2))
        sys.exit(ex.exit_code)

    print(json.dumps(result.rounds, indent=2))
    print(f"validation accuracy: {result.base_accuracy:.4f} -> {result.final_accuracy:.4f}")

    # the same attack latents for both models, at every budget
    for k_steps in config.hardening.fr_steps:
        before: FRResult = flip_resistance(
            base, world, space, k_steps, config.hardening.fr_images, config.optimizer, config.hardening.seed
        )
        after: FRResult = flip_resistance(
            result.model, world, space, k_steps, config.hardening.fr_images, config.optimizer, config.hardening.seed
        )

        print(f"FR-{k_steps}: {before.fr_percent:6.2f} -> {after.fr_percent:6.2f}")
