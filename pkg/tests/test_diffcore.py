#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
unit tests:

  * reverse-mode autodiff tape
  * finite-difference gradient oracle

see copyright/license in README.md
"""

import typing

from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from cf_diagnosis.diffcore import Tape, Tensor, backward, finite_difference_check, sgd_step
from cf_diagnosis.errors import ShapeError

SMOOTH_UNARY: tuple[str, ...] = ("tanh", "sigmoid", "softplus", "softmax", "log_softmax")
COMBINE: tuple[str, ...] = ("add", "sub", "mul")


def random_graph(
    seed: int,
) -> tuple[typing.Callable[[Tape, dict[str, Tensor]], Tensor], dict[str, np.ndarray]]:
    """
    A small seeded graph: combine two parameters, a chain of smooth unary
    ops, a matrix product, and a weighted sum.
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    rows: int = int(rng.integers(1, 4))
    cols: int = int(rng.integers(2, 5))
    out: int = int(rng.integers(1, 4))

    params: dict[str, np.ndarray] = {
        "a": rng.normal(size=(rows, cols)),
        "b": rng.normal(size=(rows, cols)),
        "w": rng.normal(size=(cols, out)),
    }

    chain: list[str] = [str(kind) for kind in rng.choice(SMOOTH_UNARY, size=int(rng.integers(1, 4)))]
    combine: str = str(rng.choice(COMBINE))
    weight: np.ndarray = rng.normal(size=(rows, out))

    def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
        h: Tensor = tape.apply(combine, p["a"], p["b"])

        for kind in chain:
            h = tape.apply(kind, h)

        z: Tensor = tape.matmul(h, p["w"])
        return tape.sum(tape.mul(z, tape.const(weight)))

    return build, params


def test_random_graphs(
    *,
    debug: bool = False,
) -> None:
    """
    Analytic gradients of 200 seeded graphs agree with central differences.
    """
    for seed in range(200):
        build, params = random_graph(seed)
        check = finite_difference_check(build, params, rel_tol=1e-4)

        if debug:
            print(seed, check)

        assert check.passed, (seed, check)


def test_known_gradients(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Hand-derived gradients of `sum(a * b + a)`.
    """
    tape: Tape = Tape(dtype=np.float64)
    a: Tensor = tape.param("a", [1.0, 2.0, 3.0])
    b: Tensor = tape.param("b", [4.0, 5.0, 6.0])
    out: Tensor = tape.sum(a * b + a)

    grads: dict[str, np.ndarray] = backward(tape, out)

    assert out.item() == pytest.approx(38.0)
    np.testing.assert_allclose(grads["a"], [5.0, 6.0, 7.0])
    np.testing.assert_allclose(grads["b"], [1.0, 2.0, 3.0])


def test_structural_primitives(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Concat, slice, reshape, mean along an axis, and normalize.
    """
    rng: np.random.Generator = np.random.default_rng(3)
    params: dict[str, np.ndarray] = {
        "a": rng.normal(size=(2, 3)),
        "b": rng.normal(size=(2, 2)),
    }

    def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
        joined: Tensor = tape.concat([p["a"], p["b"]], axis=1)
        flat: Tensor = tape.reshape(joined, (10,))
        part: Tensor = tape.slice(flat, slice(1, 8))
        unit: Tensor = tape.normalize(part)
        rows: Tensor = tape.mean(tape.tanh(joined), axis=1)
        return tape.add(tape.sum(tape.mul(unit, np.arange(7.0))), tape.sum(rows))

    assert finite_difference_check(build, params).passed


def test_relu_abs_away_from_kinks(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Piecewise-linear primitives differentiate exactly off their kinks.
    """
    params: dict[str, np.ndarray] = {"v": np.array([-1.5, -0.3, 0.4, 2.0])}

    def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
        return tape.sum(tape.add(tape.relu(p["v"]), tape.scale(tape.abs(p["v"]), 0.5)))

    assert finite_difference_check(build, params).passed


def test_scalar_broadcast(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    A ()-shaped operand combines with any tensor; its gradient is summed.
    """
    tape: Tape = Tape(dtype=np.float64)
    m: Tensor = tape.param("m", np.ones((2, 3)))
    c: Tensor = tape.param("c", 2.0)
    grads: dict[str, np.ndarray] = backward(tape, tape.sum(tape.mul(m, c)))

    assert grads["c"].shape == ()
    assert float(grads["c"]) == pytest.approx(6.0)
    np.testing.assert_allclose(grads["m"], np.full((2, 3), 2.0))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=0, max_size=3),
    st.lists(st.integers(1, 3), min_size=0, max_size=3),
)
def test_binary_shape_rule(
    a_shape: list[int],
    b_shape: list[int],
) -> None:
    """
    Binary ops accept equal shapes or a scalar operand, nothing else.
    """
    tape: Tape = Tape()
    a: Tensor = tape.const(np.ones(a_shape))
    b: Tensor = tape.const(np.ones(b_shape))
    allowed: bool = a_shape == b_shape or not a_shape or not b_shape

    if allowed:
        assert tape.add(a, b).shape == tuple(a_shape or b_shape)
    else:
        with pytest.raises(ShapeError):
            tape.add(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_matmul_gradients(
    rows: int,
    inner: int,
    cols: int,
    seed: int,
) -> None:
    """
    Matrix products of any compatible 2-D shapes differentiate correctly.
    """
    rng: np.random.Generator = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {
        "a": rng.normal(size=(rows, inner)),
        "b": rng.normal(size=(inner, cols)),
    }

    def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
        return tape.sum(tape.tanh(tape.matmul(p["a"], p["b"])))

    assert finite_difference_check(build, params).passed


def test_vector_matmul_and_rowadd(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    1-D operands in matmul, and the explicit row-bias add.
    """
    rng: np.random.Generator = np.random.default_rng(11)
    params: dict[str, np.ndarray] = {
        "v": rng.normal(size=4),
        "m": rng.normal(size=(4, 3)),
        "bias": rng.normal(size=3),
    }

    def build(tape: Tape, p: dict[str, Tensor]) -> Tensor:
        row: Tensor = tape.matmul(p["v"], p["m"])
        back: Tensor = tape.matmul(p["m"], tape.sigmoid(row))
        batch: Tensor = tape.rowadd(tape.reshape(tape.concat([row, row], axis=0), (2, 3)), p["bias"])
        return tape.add(tape.sum(tape.softplus(batch)), tape.sum(tape.mul(back, back)))

    assert finite_difference_check(build, params).passed

    tape: Tape = Tape()

    with pytest.raises(ShapeError):
        tape.rowadd(tape.const(np.ones((2, 3))), tape.const(np.ones(2)))

    with pytest.raises(ShapeError):
        tape.matmul(tape.const(np.ones((2, 3))), tape.const(np.ones((2, 3))))


def test_backward_needs_scalar(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Gradients are only defined for scalar outputs; shape errors are also
    `ValueError`s.
    """
    tape: Tape = Tape()
    v: Tensor = tape.param("v", np.ones(3))

    with pytest.raises(ShapeError):
        backward(tape, tape.tanh(v))

    with pytest.raises(ValueError):
        backward(tape, tape.tanh(v))


def test_detach_and_unreachable(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Detached values pass no gradient; unused parameters get zeros.
    """
    tape: Tape = Tape(dtype=np.float64)
    a: Tensor = tape.param("a", [1.0, -2.0])
    unused: Tensor = tape.param("unused", np.ones((2, 2)))
    out: Tensor = tape.sum(tape.mul(a, tape.detach(a)))

    grads: dict[str, np.ndarray] = backward(tape, out)

    np.testing.assert_allclose(grads["a"], [1.0, -2.0])
    np.testing.assert_array_equal(grads["unused"], np.zeros_like(unused.data))


def test_log_sqrt_clamp(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    `log` and `sqrt` stay finite at zero, with a zero adjoint there.
    """
    tape: Tape = Tape()
    z: Tensor = tape.param("z", np.zeros(2))
    out: Tensor = tape.add(tape.sum(tape.log(z)), tape.sum(tape.sqrt(z)))
    grads: dict[str, np.ndarray] = backward(tape, out)

    assert np.isfinite(out.item())
    np.testing.assert_array_equal(grads["z"], np.zeros(2))


def test_softmax_rank(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Softmax runs along the last axis of any rank >= 1, never on scalars.
    """
    tape: Tape = Tape(dtype=np.float64)
    logits: Tensor = tape.const(np.arange(24.0).reshape(2, 3, 4))

    np.testing.assert_allclose(tape.softmax(logits).data.sum(axis=-1), np.ones((2, 3)))
    np.testing.assert_allclose(np.exp(tape.log_softmax(logits).data), tape.softmax(logits).data)

    with pytest.raises(ShapeError):
        tape.softmax(tape.const(1.0))


def test_sgd_step(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Plain SGD returns new arrays and reports parameters without gradients.
    """
    params: dict[str, np.ndarray] = {
        "w": np.array([1.0, 2.0], dtype=np.float32),
        "b": np.array([0.5], dtype=np.float32),
    }

    updated, missing = sgd_step(params, {"w": np.array([1.0, -1.0], dtype=np.float32)}, 0.5)

    np.testing.assert_allclose(updated["w"], [0.5, 2.5])
    assert updated["w"].dtype == np.float32
    assert missing == ["b"]
    np.testing.assert_array_equal(params["w"], [1.0, 2.0])

    with pytest.raises(ValueError):
        sgd_step(params, {}, 0.0)

    with pytest.raises(ShapeError):
        sgd_step(params, {"w": np.ones(3, dtype=np.float32)}, 0.1)


def test_tape_isolation(
    *,
    debug: bool = False,  # pylint: disable=W0613
) -> None:
    """
    Operands from another tape are rejected.
    """
    one: Tape = Tape()
    two: Tape = Tape()

    with pytest.raises(ValueError):
        one.add(one.const(1.0), two.const(1.0))


if __name__ == "__main__":
    test_random_graphs(debug=True)
    test_known_gradients(debug=True)
    test_structural_primitives(debug=True)
    test_relu_abs_away_from_kinks(debug=True)
    test_scalar_broadcast(debug=True)
    test_vector_matmul_and_rowadd(debug=True)
    test_backward_needs_scalar(debug=True)
    test_detach_and_unreachable(debug=True)
    test_log_sqrt_clamp(debug=True)
    test_softmax_rank(debug=True)
    test_sgd_step(debug=True)
    test_tape_isolation(debug=True)
