#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Example using `cf_diagnosis` to check uniqueness-weighted selection: the
thesaurus injects near-synonyms of one attribute into the candidate bank,
and the rankings with and without the uniqueness score are compared on the
pure text direction of that attribute.

see copyright/license in README.md
"""

import logging
import pathlib
import sys

import numpy as np

from cf_diagnosis import CandidateBank, EmbeddingSpace, RunConfig, Thesaurus, load_config
from cf_diagnosis.analysis import candidate_directions, select_top


if __name__ == "__main__":
    logger: logging.Logger = logging.getLogger(__name__)
    logging.basicConfig(level=logging.WARNING)  # DEBUG

    phrase: str = sys.argv[1] if len(sys.argv) > 1 else "smiling"

    config: RunConfig = load_config(pathlib.Path("config.toml"))
    world = config.build_world()

    # initialize a thesaurus and load the candidate attributes
    thesaurus: Thesaurus = Thesaurus()
    thesaurus.load_source(pathlib.Path("data/bank.ttl"))

    space: EmbeddingSpace = config.embedding_space(world, thesaurus)
    bank: CandidateBank = thesaurus.inject_synonyms(thesaurus.bank(world.cls_token), phrase)
    synonyms: set[str] = set(bank.attributes) - set(thesaurus.bank(world.cls_token).attributes)

    # stand-in for a diagnosis whose edits move exactly along the phrase
    _, directions = candidate_directions(CandidateBank.build([phrase], world.cls_token), space.text)
    groups: list[np.ndarray] = [directions]

    for uniqueness in (False, True):
        ranking = select_top(bank, groups, config.analysis.top, space.text, uniqueness=uniqueness)
        hits: int = sum(score.phrase in synonyms for score in ranking)

        print(f"\n   ###  UNIQUENESS {'ON' if uniqueness else 'OFF'}: {hits} synonyms in top {len(ranking)}")

        for score in ranking:
            mark: str = "*" if score.phrase in synonyms else " "
            print(f"{score.rank:>3} {mark} {score.phrase:<20}  s_sim {score.s_sim:+.4f}  s_uni {score.s_uni:.4f}")
