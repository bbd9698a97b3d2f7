#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Counterfactual loss terms and their weighted composite
`alpha * target + beta * clip + gamma * ssim + reg`, differentiable down to
the edit vector.

see copyright/license in README.md
"""

import dataclasses
import logging
import math
import typing

import numpy as np

from .diffcore import Tape, Tensor
from .embedding import DEFAULT_TAU, ImageEncoder, zero_shot_tensor
from .errors import ConfigError, ShapeError
from .targets import PseudoLabel, TargetModel, task_loss
from .toyworld import Backend

logger: logging.Logger = logging.getLogger(__name__)

SSIM_WINDOW: int = 8
SSIM_K1: float = 0.01
SSIM_K2: float = 0.03


@dataclasses.dataclass(frozen=True)
class LossWeights:
    """
    Weights of the target, zero-shot consistency and SSIM terms; the L1
    regularizer has unit weight.
    """

    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 100.0

    def validate(
        self,
    ) -> None:
        """
        Weights must be finite and nonnegative.
        """
        for name in ("alpha", "beta", "gamma"):
            value: float = getattr(self, name)

            if not math.isfinite(value) or value < 0.0:
                raise ConfigError(f"loss weight {name} must be finite and >= 0, got {value}")


@dataclasses.dataclass(frozen=True)
class LossBreakdown:
    """
    Per-term values of one composite evaluation.
    """

    target: float
    clip: float
    ssim: float
    reg: float
    total: float

    @classmethod
    def compose(  # pylint: disable=R0913
        cls,
        weights: LossWeights,
        target: float,
        clip: float,
        ssim: float,
        reg: float,
    ) -> "LossBreakdown":
        """
        Build a breakdown whose total is recomposed from its components.
        """
        total: float = weights.alpha * target + weights.beta * clip + weights.gamma * ssim + reg
        return cls(float(target), float(clip), float(ssim), float(reg), float(total))

    def is_finite(
        self,
    ) -> bool:
        """
        All terms finite.
        """
        return all(math.isfinite(v) for v in dataclasses.astuple(self))

    def to_dict(
        self,
    ) -> dict[str, float]:
        """
        Plain mapping for logs.
        """
        return dataclasses.asdict(self)


######################################################################
# structural similarity


def window_matrix(
    size: int,
    window: int = SSIM_WINDOW,
) -> np.ndarray:
    """
    Averaging matrix over non-overlapping windows along one axis, shape
    (groups, size) with `groups = max(1, size // window)`. Every pixel
    belongs to exactly one group; when `size` is not a multiple of
    `window` the remainder is spread over the leading groups, so widths
    differ by at most one. Sizes below one window collapse to a single
    group.
    """
    groups: int = max(1, size // window)
    mat: np.ndarray = np.zeros((groups, size), dtype=np.float64)

    for row, cols in enumerate(np.array_split(np.arange(size), groups)):
        mat[row, cols] = 1.0 / len(cols)

    return mat


def ssim_tensor(
    x: Tensor,
    y: Tensor,
    *,
    window: int = SSIM_WINDOW,
    data_range: float = 1.0,
) -> Tensor:
    """
    Mean SSIM over non-overlapping windows of two (H, W) images, with
    `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`.
    """
    tape: Tape = x.tape

    if x.shape != y.shape or len(x.shape) != 2:
        raise ShapeError(f"ssim: expects two equal 2-D images, got {x.shape} and {y.shape}")

    rows: np.ndarray = window_matrix(x.shape[0], window)
    cols: np.ndarray = window_matrix(x.shape[1], window).T
    c1: float = (SSIM_K1 * data_range) ** 2
    c2: float = (SSIM_K2 * data_range) ** 2

    def pool(img: Tensor) -> Tensor:
        return tape.matmul(tape.matmul(rows, img), cols)

    mu_x: Tensor = pool(x)
    mu_y: Tensor = pool(y)
    mu_xx: Tensor = tape.mul(mu_x, mu_x)
    mu_yy: Tensor = tape.mul(mu_y, mu_y)
    mu_xy: Tensor = tape.mul(mu_x, mu_y)

    var_x: Tensor = tape.sub(pool(tape.mul(x, x)), mu_xx)
    var_y: Tensor = tape.sub(pool(tape.mul(y, y)), mu_yy)
    cov: Tensor = tape.sub(pool(tape.mul(x, y)), mu_xy)

    num: Tensor = tape.mul(tape.add(tape.scale(mu_xy, 2.0), c1), tape.add(tape.scale(cov, 2.0), c2))
    den: Tensor = tape.mul(tape.add(tape.add(mu_xx, mu_yy), c1), tape.add(tape.add(var_x, var_y), c2))

    return tape.mean(tape.div(num, den))


def ssim(
    x: np.ndarray,
    y: np.ndarray,
    *,
    dtype: typing.Any = np.float64,
) -> float:
    """
    Eager SSIM of two images.
    """
    tape: Tape = Tape(dtype=dtype)
    return ssim_tensor(tape.const(x), tape.const(y)).item()


def loss_ssim(
    x: Tensor,
    x_hat: Tensor,
) -> Tensor:
    """
    `1 - SSIM(x, x_hat)`, in [0, 2].
    """
    return x.tape.sub(1.0, ssim_tensor(x, x_hat))


######################################################################
# remaining terms


def loss_reg(
    delta: Tensor,
) -> Tensor:
    """
    L1 norm of the edit.
    """
    tape: Tape = delta.tape
    return tape.sum(tape.abs(delta))


def loss_target(
    model: TargetModel,
    x_hat: Tensor,
    pseudo: PseudoLabel,
) -> Tensor:
    """
    Task loss of the edited image against its frozen pseudo label.
    """
    if pseudo.task != model.task:
        raise ConfigError(f"pseudo label for {pseudo.task} given to a {model.task} model")

    return task_loss(model, model.raw(x_hat), pseudo.target)


def loss_clip(
    x: Tensor,
    x_hat: Tensor,
    encoder: ImageEncoder,
    label_matrix: np.ndarray,
    *,
    tau: float = DEFAULT_TAU,
) -> Tensor:
    """
    Cross-entropy of the edited image's zero-shot distribution against the
    original's, which is a frozen target: no gradient reaches `x`.
    """
    tape: Tape = x_hat.tape
    frozen: Tensor = encoder.encode_tensor(tape.detach(x))
    target: np.ndarray = np.exp(zero_shot_tensor(frozen, label_matrix, tau=tau).data)

    log_probs: Tensor = zero_shot_tensor(encoder.encode_tensor(x_hat), label_matrix, tau=tau)
    return tape.scale(tape.sum(tape.mul(log_probs, target)), -1.0)


@dataclasses.dataclass
class LossEvaluation:
    """
    One composite evaluation: the differentiable total plus its breakdown
    and the rendered pair. `smooth` is the total without the L1 term, for
    optimizers that apply the L1 term as a shrinkage step.
    """

    total: Tensor
    smooth: Tensor
    breakdown: LossBreakdown
    x: Tensor
    x_hat: Tensor
    delta: Tensor


def total_loss(  # pylint: disable=R0913,R0914
    model: TargetModel,
    backend: Backend,
    s: np.ndarray,
    delta: Tensor | np.ndarray,
    pseudo: PseudoLabel,
    weights: LossWeights,
    *,
    encoder: ImageEncoder,
    label_matrix: np.ndarray,
    tau: float = DEFAULT_TAU,
    tape: Tape | None = None,
) -> LossEvaluation:
    """
    Render `x = G(s)` and `x_hat = G(s + delta)` and evaluate all four terms.
    An array `delta` is recorded as the tape parameter `"delta"`.
    """
    if isinstance(delta, Tensor):
        tape = delta.tape
        edit: Tensor = delta
    else:
        # an empty tape has len() == 0, so test for None explicitly
        tape = tape if tape is not None else Tape()
        edit = tape.param("delta", delta)

    if edit.shape != (backend.attr_count,):
        raise ShapeError(f"edit shape {edit.shape} does not match K={backend.attr_count}")

    base: Tensor = tape.const(s)
    x: Tensor = backend.generate_tensor(base)
    x_hat: Tensor = backend.generate_tensor(tape.add(base, edit))

    term_target: Tensor = loss_target(model, x_hat, pseudo)
    term_clip: Tensor = loss_clip(x, x_hat, encoder, label_matrix, tau=tau)
    term_ssim: Tensor = loss_ssim(x, x_hat)
    term_reg: Tensor = loss_reg(edit)

    smooth: Tensor = tape.add(
        tape.add(tape.scale(term_target, weights.alpha), tape.scale(term_clip, weights.beta)),
        tape.scale(term_ssim, weights.gamma),
    )
    total: Tensor = tape.add(smooth, term_reg)

    breakdown: LossBreakdown = LossBreakdown.compose(
        weights,
        term_target.item(),
        term_clip.item(),
        term_ssim.item(),
        term_reg.item(),
    )

    return LossEvaluation(total, smooth, breakdown, x, x_hat, edit)
