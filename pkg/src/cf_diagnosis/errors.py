#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Exception hierarchy, where each class knows the CLI exit code it maps to.

see copyright/license in README.md
"""

import typing


class DiagnosisError(Exception):
    """
    Base class for all errors raised by `cf_diagnosis`.
    """

    exit_code: int = 1


class ShapeError(DiagnosisError, ValueError):
    """
    Operand shapes are incompatible with the requested operation.
    """

    exit_code = 2


class ConfigError(DiagnosisError):
    """
    Invalid configuration, missing input file, or unusable checkpoint.
    """

    exit_code = 2


class FormatError(ConfigError):
    """
    A file on disk does not conform to its declared format.
    """


class NumericError(DiagnosisError):
    """
    A loss became non-finite during optimization.
    """

    exit_code = 3

    def __init__(
        self,
        message: str,
        *,
        step: int = -1,
        breakdown: dict[str, float] | None = None,
    ) -> None:
        """
        Constructor.
        """
        super().__init__(message)
        self.step: int = step
        self.breakdown: dict[str, float] = breakdown or {}


class HardeningAbort(DiagnosisError):
    """
    Counterfactual training collapsed the validation accuracy.
    """

    exit_code = 4

    def __init__(
        self,
        message: str,
        *,
        round_log: list[dict[str, typing.Any]] | None = None,
    ) -> None:
        """
        Constructor.
        """
        super().__init__(message)
        self.round_log: list[dict[str, typing.Any]] = round_log or []
