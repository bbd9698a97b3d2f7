#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Package definitions.

see copyright/license in README.md
"""

from .analysis import AnalysisConfig, AttributeScore, CandidateBank, DiagnosisReport, diagnose, load_bank  # noqa: F401
from .config import RunConfig, load_config  # noqa: F401
from .counterfactual import CounterfactualObjective, EditSet, OptimConfig, optimize_edits  # noqa: F401
from .diffcore import Tape, Tensor, backward, finite_difference_check, sgd_step  # noqa: F401
from .embedding import EmbeddingSpace, ImageEncoder, TextEncoder, Vocabulary  # noqa: F401
from .errors import (  # noqa: F401
    ConfigError,
    DiagnosisError,
    FormatError,
    HardeningAbort,
    NumericError,
    ShapeError,
)
from .hardening import FRResult, HardenConfig, flip_resistance, harden  # noqa: F401
from .losses import LossBreakdown, LossWeights, ssim, total_loss  # noqa: F401
from .sem import Thesaurus  # noqa: F401
from .targets import TargetModel, TrainConfig, load_model, train_target  # noqa: F401
from .toyworld import Backend, BackendSpec, BiasedDatasetSpec, LabelRule, World, make_backend  # noqa: F401
from .util import KeyValueStore  # noqa: F401

__all__ = [
    "AnalysisConfig",
    "AttributeScore",
    "Backend",
    "BackendSpec",
    "BiasedDatasetSpec",
    "CandidateBank",
    "ConfigError",
    "CounterfactualObjective",
    "DiagnosisError",
    "DiagnosisReport",
    "EditSet",
    "EmbeddingSpace",
    "FRResult",
    "FormatError",
    "HardenConfig",
    "HardeningAbort",
    "ImageEncoder",
    "KeyValueStore",
    "LabelRule",
    "LossBreakdown",
    "LossWeights",
    "NumericError",
    "OptimConfig",
    "RunConfig",
    "ShapeError",
    "Tape",
    "TargetModel",
    "Tensor",
    "TextEncoder",
    "Thesaurus",
    "TrainConfig",
    "Vocabulary",
    "World",
    "backward",
    "diagnose",
    "finite_difference_check",
    "flip_resistance",
    "harden",
    "load_bank",
    "load_config",
    "load_model",
    "make_backend",
    "optimize_edits",
    "sgd_step",
    "ssim",
    "total_loss",
    "train_target",
]
