#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Reverse-mode automatic differentiation over dense `numpy` arrays.

A `Tape` records each primitive application in topological order
(define-by-run, rebuilt for every optimization step); `backward()` walks
the tape once in reverse to accumulate adjoints for the marked parameters.

see copyright/license in README.md
"""

import dataclasses
import logging
import typing

import numpy as np

from .errors import ShapeError

logger: logging.Logger = logging.getLogger(__name__)

Shape = tuple[int, ...]
ArrayLike = typing.Union[np.ndarray, float, int, list[typing.Any]]


@dataclasses.dataclass
class Node:
    """
    One recorded primitive application: operand indices precede this node.
    """

    kind: str
    operands: tuple[int, ...]
    value: np.ndarray
    attrs: dict[str, typing.Any]


class Tensor:
    """
    Handle to a value recorded on a `Tape`.
    """

    __slots__ = ("tape", "index")

    def __init__(
        self,
        tape: "Tape",
        index: int,
    ) -> None:
        """
        Constructor.
        """
        self.tape: Tape = tape
        self.index: int = index

    @property
    def data(
        self,
    ) -> np.ndarray:
        """
        The recorded value; treat as read-only.
        """
        return self.tape.nodes[self.index].value

    @property
    def shape(
        self,
    ) -> Shape:
        """
        Dimension sizes of the recorded value.
        """
        return tuple(self.data.shape)

    @property
    def size(
        self,
    ) -> int:
        """
        Number of elements.
        """
        return int(self.data.size)

    def item(
        self,
    ) -> float:
        """
        Scalar value as a Python float.
        """
        return float(self.data.reshape(()))

    def numpy(
        self,
    ) -> np.ndarray:
        """
        Copy of the recorded value.
        """
        return np.array(self.data, copy=True)

    def __repr__(
        self,
    ) -> str:
        return f"Tensor(shape={self.shape}, index={self.index})"

    def __add__(self, other: typing.Any) -> "Tensor":
        return self.tape.add(self, other)

    def __radd__(self, other: typing.Any) -> "Tensor":
        return self.tape.add(other, self)

    def __sub__(self, other: typing.Any) -> "Tensor":
        return self.tape.sub(self, other)

    def __rsub__(self, other: typing.Any) -> "Tensor":
        return self.tape.sub(other, self)

    def __mul__(self, other: typing.Any) -> "Tensor":
        if isinstance(other, (int, float)):
            return self.tape.scale(self, float(other))
        return self.tape.mul(self, other)

    def __rmul__(self, other: typing.Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: typing.Any) -> "Tensor":
        return self.tape.div(self, other)

    def __matmul__(self, other: typing.Any) -> "Tensor":
        return self.tape.matmul(self, other)

    def __neg__(self) -> "Tensor":
        return self.tape.scale(self, -1.0)


######################################################################
# primitive registry


@dataclasses.dataclass(frozen=True)
class Primitive:
    """
    Forward rule, shape rule and vector-Jacobian product of one kind.
    """

    kind: str
    shape_rule: typing.Callable[[list[Shape], dict[str, typing.Any]], Shape]
    forward: typing.Callable[[list[np.ndarray], dict[str, typing.Any]], np.ndarray]
    vjp: typing.Callable[
        [np.ndarray, list[np.ndarray], np.ndarray, dict[str, typing.Any]],
        list[np.ndarray | None],
    ]


PRIMITIVES: dict[str, Primitive] = {}


def _register(
    kind: str,
    shape_rule: typing.Callable[[list[Shape], dict[str, typing.Any]], Shape],
    forward: typing.Callable[[list[np.ndarray], dict[str, typing.Any]], np.ndarray],
    vjp: typing.Callable[
        [np.ndarray, list[np.ndarray], np.ndarray, dict[str, typing.Any]],
        list[np.ndarray | None],
    ],
) -> None:
    PRIMITIVES[kind] = Primitive(kind, shape_rule, forward, vjp)


def _reject(
    kind: str,
    shapes: list[Shape],
    reason: str = "incompatible shapes",
) -> typing.NoReturn:
    shape_list: str = ", ".join(str(shape) for shape in shapes)
    raise ShapeError(f"{kind}: {reason} {shape_list}")


def _unary_shape(kind: str) -> typing.Callable[[list[Shape], dict[str, typing.Any]], Shape]:
    def rule(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:  # pylint: disable=W0613
        if len(shapes) != 1:
            _reject(kind, shapes, "expects one operand, got")
        return shapes[0]

    return rule


def _binary_shape(kind: str) -> typing.Callable[[list[Shape], dict[str, typing.Any]], Shape]:
    # no broadcasting beyond scalar-tensor
    def rule(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:  # pylint: disable=W0613
        if len(shapes) != 2:
            _reject(kind, shapes, "expects two operands, got")

        a_shape, b_shape = shapes

        if a_shape == b_shape or b_shape == ():
            return a_shape

        if a_shape == ():
            return b_shape

        _reject(kind, shapes)

    return rule


def _unbroadcast(
    grad: np.ndarray,
    shape: Shape,
) -> np.ndarray:
    if shape == () and grad.shape != ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    return grad


def _sigmoid(
    a: np.ndarray,
) -> np.ndarray:
    e: np.ndarray = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype, copy=False)


def _softmax(
    a: np.ndarray,
) -> np.ndarray:
    shifted: np.ndarray = a - a.max(axis=-1, keepdims=True)
    e: np.ndarray = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(
    a: np.ndarray,
) -> np.ndarray:
    shifted: np.ndarray = a - a.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _tiny(
    a: np.ndarray,
) -> float:
    return float(np.finfo(a.dtype).tiny)


# elementwise arithmetic

_register(
    "add",
    _binary_shape("add"),
    lambda v, attrs: v[0] + v[1],
    lambda g, v, out, attrs: [_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)],
)

_register(
    "sub",
    _binary_shape("sub"),
    lambda v, attrs: v[0] - v[1],
    lambda g, v, out, attrs: [_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)],
)

_register(
    "mul",
    _binary_shape("mul"),
    lambda v, attrs: v[0] * v[1],
    lambda g, v, out, attrs: [
        _unbroadcast(g * v[1], v[0].shape),
        _unbroadcast(g * v[0], v[1].shape),
    ],
)

_register(
    "div",
    _binary_shape("div"),
    lambda v, attrs: v[0] / v[1],
    lambda g, v, out, attrs: [
        _unbroadcast(g / v[1], v[0].shape),
        _unbroadcast(-g * v[0] / (v[1] * v[1]), v[1].shape),
    ],
)

_register(
    "scale",
    _unary_shape("scale"),
    lambda v, attrs: v[0] * v[0].dtype.type(attrs["factor"]),
    lambda g, v, out, attrs: [g * g.dtype.type(attrs["factor"])],
)


def _rowadd_shape(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:  # pylint: disable=W0613
    if len(shapes) != 2 or len(shapes[0]) != 2 or shapes[1] != (shapes[0][1],):
        _reject("rowadd", shapes)
    return shapes[0]


_register(
    "rowadd",
    _rowadd_shape,
    lambda v, attrs: v[0] + v[1][np.newaxis, :],
    lambda g, v, out, attrs: [g, g.sum(axis=0)],
)


# matrix product


def _matmul_shape(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:  # pylint: disable=W0613
    if len(shapes) != 2:
        _reject("matmul", shapes, "expects two operands, got")

    a_shape, b_shape = shapes

    if not 1 <= len(a_shape) <= 2 or not 1 <= len(b_shape) <= 2:
        _reject("matmul", shapes, "expects 1-D or 2-D operands, got")

    if a_shape[-1] != b_shape[0]:
        _reject("matmul", shapes)

    return a_shape[:-1] + b_shape[1:]


def _matmul_vjp(
    g: np.ndarray,
    v: list[np.ndarray],
    out: np.ndarray,  # pylint: disable=W0613
    attrs: dict[str, typing.Any],  # pylint: disable=W0613
) -> list[np.ndarray | None]:
    a, b = v

    if a.ndim == 2 and b.ndim == 2:
        return [g @ b.T, a.T @ g]

    if a.ndim == 1 and b.ndim == 2:
        return [b @ g, np.outer(a, g)]

    if a.ndim == 2 and b.ndim == 1:
        return [np.outer(g, b), a.T @ g]

    return [g * b, g * a]


_register(
    "matmul",
    _matmul_shape,
    lambda v, attrs: np.asarray(v[0] @ v[1]),
    _matmul_vjp,
)


# elementwise nonlinearities

_register(
    "tanh",
    _unary_shape("tanh"),
    lambda v, attrs: np.tanh(v[0]),
    lambda g, v, out, attrs: [g * (1.0 - out * out)],
)

_register(
    "sigmoid",
    _unary_shape("sigmoid"),
    lambda v, attrs: _sigmoid(v[0]),
    lambda g, v, out, attrs: [g * out * (1.0 - out)],
)

_register(
    "relu",
    _unary_shape("relu"),
    lambda v, attrs: np.maximum(v[0], 0.0).astype(v[0].dtype, copy=False),
    lambda g, v, out, attrs: [g * (v[0] > 0.0)],
)

_register(
    "abs",
    _unary_shape("abs"),
    lambda v, attrs: np.abs(v[0]),
    lambda g, v, out, attrs: [g * np.sign(v[0])],
)

_register(
    "softplus",
    _unary_shape("softplus"),
    lambda v, attrs: np.maximum(v[0], 0.0) + np.log1p(np.exp(-np.abs(v[0]))),
    lambda g, v, out, attrs: [g * _sigmoid(v[0])],
)

# log and sqrt clamp at the smallest normal value, with zero adjoint there
_register(
    "log",
    _unary_shape("log"),
    lambda v, attrs: np.log(np.maximum(v[0], _tiny(v[0]))),
    lambda g, v, out, attrs: [np.where(v[0] > _tiny(v[0]), g / np.maximum(v[0], _tiny(v[0])), 0.0)],
)

_register(
    "sqrt",
    _unary_shape("sqrt"),
    lambda v, attrs: np.sqrt(np.maximum(v[0], _tiny(v[0]))),
    lambda g, v, out, attrs: [np.where(v[0] > _tiny(v[0]), g / (2.0 * out), 0.0)],
)


def _last_axis_shape(kind: str) -> typing.Callable[[list[Shape], dict[str, typing.Any]], Shape]:
    def rule(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:  # pylint: disable=W0613
        if len(shapes) != 1 or len(shapes[0]) == 0:
            _reject(kind, shapes, "expects one operand with rank >= 1, got")
        return shapes[0]

    return rule


_register(
    "softmax",
    _last_axis_shape("softmax"),
    lambda v, attrs: _softmax(v[0]),
    lambda g, v, out, attrs: [out * (g - (g * out).sum(axis=-1, keepdims=True))],
)

_register(
    "log_softmax",
    _last_axis_shape("log_softmax"),
    lambda v, attrs: _log_softmax(v[0]),
    lambda g, v, out, attrs: [g - np.exp(out) * g.sum(axis=-1, keepdims=True)],
)


# reductions


def _reduce_shape(kind: str) -> typing.Callable[[list[Shape], dict[str, typing.Any]], Shape]:
    def rule(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:
        if len(shapes) != 1:
            _reject(kind, shapes, "expects one operand, got")

        axis: int | None = attrs.get("axis")

        if axis is None:
            return ()

        if not -len(shapes[0]) <= axis < len(shapes[0]):
            _reject(kind, shapes, f"axis {axis} out of range for")

        shape: list[int] = list(shapes[0])
        del shape[axis]
        return tuple(shape)

    return rule


def _reduce_vjp(mean: bool) -> typing.Callable[..., list[np.ndarray | None]]:
    def vjp(
        g: np.ndarray,
        v: list[np.ndarray],
        out: np.ndarray,  # pylint: disable=W0613
        attrs: dict[str, typing.Any],
    ) -> list[np.ndarray | None]:
        in_shape: Shape = v[0].shape
        axis: int | None = attrs.get("axis")

        if axis is None:
            count: int = max(v[0].size, 1)
            full: np.ndarray = np.broadcast_to(g, in_shape)
        else:
            count = in_shape[axis]
            full = np.broadcast_to(np.expand_dims(g, axis), in_shape)

        if mean:
            full = full / g.dtype.type(count)

        return [np.array(full, dtype=g.dtype)]

    return vjp


_register(
    "sum",
    _reduce_shape("sum"),
    lambda v, attrs: np.asarray(v[0].sum(axis=attrs.get("axis")), dtype=v[0].dtype),
    _reduce_vjp(mean=False),
)

_register(
    "mean",
    _reduce_shape("mean"),
    lambda v, attrs: np.asarray(v[0].mean(axis=attrs.get("axis")), dtype=v[0].dtype),
    _reduce_vjp(mean=True),
)


# structural


def _concat_shape(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:
    axis: int = attrs.get("axis", 0)

    if not shapes or any(len(shape) != len(shapes[0]) or len(shape) == 0 for shape in shapes):
        _reject("concat", shapes)

    for shape in shapes[1:]:
        rest_a: list[int] = [d for i, d in enumerate(shape) if i != axis]
        rest_b: list[int] = [d for i, d in enumerate(shapes[0]) if i != axis]

        if rest_a != rest_b:
            _reject("concat", shapes)

    out: list[int] = list(shapes[0])
    out[axis] = sum(shape[axis] for shape in shapes)
    return tuple(out)


def _concat_vjp(
    g: np.ndarray,
    v: list[np.ndarray],
    out: np.ndarray,  # pylint: disable=W0613
    attrs: dict[str, typing.Any],
) -> list[np.ndarray | None]:
    axis: int = attrs.get("axis", 0)
    offsets: list[int] = list(np.cumsum([x.shape[axis] for x in v])[:-1])
    return list(np.split(g, offsets, axis=axis))


_register(
    "concat",
    _concat_shape,
    lambda v, attrs: np.concatenate(v, axis=attrs.get("axis", 0)),
    _concat_vjp,
)


def _slice_shape(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:
    if len(shapes) != 1:
        _reject("slice", shapes, "expects one operand, got")

    try:
        return tuple(np.empty(shapes[0], dtype=np.int8)[attrs["key"]].shape)
    except IndexError:
        _reject("slice", shapes, f"key {attrs['key']} out of range for")


def _slice_vjp(
    g: np.ndarray,
    v: list[np.ndarray],
    out: np.ndarray,  # pylint: disable=W0613
    attrs: dict[str, typing.Any],
) -> list[np.ndarray | None]:
    full: np.ndarray = np.zeros(v[0].shape, dtype=g.dtype)
    full[attrs["key"]] = g
    return [full]


_register(
    "slice",
    _slice_shape,
    lambda v, attrs: np.array(v[0][attrs["key"]], copy=True),
    _slice_vjp,
)


def _reshape_shape(shapes: list[Shape], attrs: dict[str, typing.Any]) -> Shape:
    target: Shape = tuple(attrs["shape"])

    if len(shapes) != 1 or int(np.prod(target)) != int(np.prod(shapes[0])):
        _reject("reshape", shapes + [target], "cannot reshape")

    return target


_register(
    "reshape",
    _reshape_shape,
    lambda v, attrs: v[0].reshape(attrs["shape"]),
    lambda g, v, out, attrs: [g.reshape(v[0].shape)],
)


######################################################################
# the tape


class Tape:
    """
    Append-only record of primitive applications. Single writer; independent
    tapes may run in parallel.
    """

    def __init__(
        self,
        *,
        dtype: typing.Any = np.float32,
    ) -> None:
        """
        Constructor.

        The default 32-bit floats match inference precision; gradient checks
        run the same graphs on a `float64` tape.
        """
        self.dtype: np.dtype = np.dtype(dtype)
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}

    def __len__(
        self,
    ) -> int:
        return len(self.nodes)

    def _push(
        self,
        kind: str,
        operands: tuple[int, ...],
        value: np.ndarray,
        attrs: dict[str, typing.Any],
    ) -> Tensor:
        self.nodes.append(Node(kind, operands, value, attrs))
        return Tensor(self, len(self.nodes) - 1)

    def const(
        self,
        value: ArrayLike,
    ) -> Tensor:
        """
        Record a constant leaf; no gradient is reported for it.
        """
        return self._push("const", (), np.asarray(value, dtype=self.dtype), {})

    def param(
        self,
        name: str,
        value: ArrayLike,
    ) -> Tensor:
        """
        Record a marked parameter leaf, whose gradient `backward()` reports.
        """
        if name in self.params:
            raise ValueError(f"parameter already recorded: {name}")

        tensor: Tensor = self._push("param", (), np.array(value, dtype=self.dtype), {"name": name})
        self.params[name] = tensor.index
        return tensor

    def detach(
        self,
        tensor: Tensor,
    ) -> Tensor:
        """
        Re-record a value as a constant, which stops gradient flow.
        """
        return self.const(tensor.data)

    def _operand(
        self,
        value: typing.Any,
    ) -> Tensor:
        if isinstance(value, Tensor):
            if value.tape is not self:
                raise ValueError("operand belongs to a different tape")
            return value

        return self.const(value)

    def apply(
        self,
        kind: str,
        *operands: typing.Any,
        **attrs: typing.Any,
    ) -> Tensor:
        """
        Evaluate one primitive on recorded operands and record it.
        """
        prim: Primitive | None = PRIMITIVES.get(kind)

        if prim is None:
            raise ValueError(f"unknown primitive: {kind}")

        tensors: list[Tensor] = [self._operand(op) for op in operands]
        prim.shape_rule([t.shape for t in tensors], attrs)

        values: list[np.ndarray] = [t.data for t in tensors]
        result: np.ndarray = np.asarray(prim.forward(values, attrs), dtype=self.dtype)

        return self._push(kind, tuple(t.index for t in tensors), result, attrs)

    # convenience wrappers, one per primitive kind

    def add(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("add", a, b)

    def sub(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("sub", a, b)

    def mul(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("mul", a, b)

    def div(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("div", a, b)

    def matmul(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("matmul", a, b)

    def rowadd(self, a: typing.Any, b: typing.Any) -> Tensor:
        return self.apply("rowadd", a, b)

    def scale(self, a: typing.Any, factor: float) -> Tensor:
        return self.apply("scale", a, factor=float(factor))

    def tanh(self, a: typing.Any) -> Tensor:
        return self.apply("tanh", a)

    def sigmoid(self, a: typing.Any) -> Tensor:
        return self.apply("sigmoid", a)

    def relu(self, a: typing.Any) -> Tensor:
        return self.apply("relu", a)

    def abs(self, a: typing.Any) -> Tensor:
        return self.apply("abs", a)

    def log(self, a: typing.Any) -> Tensor:
        return self.apply("log", a)

    def sqrt(self, a: typing.Any) -> Tensor:
        return self.apply("sqrt", a)

    def softplus(self, a: typing.Any) -> Tensor:
        return self.apply("softplus", a)

    def softmax(self, a: typing.Any) -> Tensor:
        return self.apply("softmax", a)

    def log_softmax(self, a: typing.Any) -> Tensor:
        return self.apply("log_softmax", a)

    def sum(self, a: typing.Any, *, axis: int | None = None) -> Tensor:
        return self.apply("sum", a, axis=axis)

    def mean(self, a: typing.Any, *, axis: int | None = None) -> Tensor:
        return self.apply("mean", a, axis=axis)

    def concat(self, parts: typing.Sequence[typing.Any], *, axis: int = 0) -> Tensor:
        return self.apply("concat", *parts, axis=axis)

    def slice(self, a: typing.Any, key: typing.Any) -> Tensor:
        return self.apply("slice", a, key=key)

    def reshape(self, a: typing.Any, shape: typing.Sequence[int]) -> Tensor:
        return self.apply("reshape", a, shape=tuple(int(d) for d in shape))

    def normalize(
        self,
        a: Tensor,
    ) -> Tensor:
        """
        L2-normalize a vector: `a / sqrt(sum(a * a))`.
        """
        return self.div(a, self.sqrt(self.sum(self.mul(a, a))))


def forward_primitive(
    kind: str,
    operands: typing.Sequence[typing.Any],
    tape: Tape,
    **attrs: typing.Any,
) -> Tensor:
    """
    Apply one primitive kind to operands, recording it on the tape.
    """
    return tape.apply(kind, *operands, **attrs)


def backward(
    tape: Tape,
    output: Tensor,
) -> dict[str, np.ndarray]:
    """
    Gradient of a scalar output with respect to every marked parameter on
    the tape; unreachable parameters get zero gradients.
    """
    if output.tape is not tape:
        raise ValueError("output belongs to a different tape")

    if output.shape != ():
        raise ShapeError(f"backward: output must be scalar, got shape {output.shape}")

    adjoints: list[np.ndarray | None] = [None] * len(tape.nodes)
    adjoints[output.index] = np.ones((), dtype=tape.dtype)

    for index in range(output.index, -1, -1):
        grad: np.ndarray | None = adjoints[index]
        node: Node = tape.nodes[index]

        if grad is None or not node.operands:
            continue

        operand_values: list[np.ndarray] = [tape.nodes[i].value for i in node.operands]
        local: list[np.ndarray | None] = PRIMITIVES[node.kind].vjp(
            grad, operand_values, node.value, node.attrs
        )

        for op_index, op_grad in zip(node.operands, local):
            if op_grad is None:
                continue

            op_grad = np.asarray(op_grad, dtype=tape.dtype)
            prior: np.ndarray | None = adjoints[op_index]
            adjoints[op_index] = op_grad if prior is None else prior + op_grad

    result: dict[str, np.ndarray] = {}

    for name, index in tape.params.items():
        found: np.ndarray | None = adjoints[index]
        result[name] = (
            np.zeros_like(tape.nodes[index].value) if found is None else found.reshape(tape.nodes[index].value.shape)
        )

    return result


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
) -> tuple[dict[str, np.ndarray], list[str]]:
    """
    Plain SGD update `p <- p - lr * g`, elementwise, returning new arrays.
    Parameters without a gradient stay unchanged and are reported.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")

    updated: dict[str, np.ndarray] = {}
    missing: list[str] = []

    for name, value in params.items():
        grad: np.ndarray | None = grads.get(name)

        if grad is None:
            missing.append(name)
            updated[name] = value
            continue

        if grad.shape != value.shape:
            raise ShapeError(f"sgd_step: gradient shape {grad.shape} != parameter shape {value.shape} for {name}")

        updated[name] = (value - value.dtype.type(lr) * grad.astype(value.dtype, copy=False)).astype(
            value.dtype, copy=False
        )

    if missing:
        log_msg: str = f"sgd_step: no gradient for {missing}, left unchanged"
        logger.warning(log_msg)

    return updated, missing


######################################################################
# finite-difference oracle


@dataclasses.dataclass
class GradientCheck:
    """
    Outcome of comparing `backward()` with central finite differences.
    """

    max_rel_error: float
    max_abs_error: float
    worst: tuple[str, tuple[int, ...]] | None
    checked: int
    passed: bool


def finite_difference_check(  # pylint: disable=R0913,R0914
    build: typing.Callable[[Tape, dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    *,
    step: float = 1e-4,
    rel_tol: float = 1e-4,
    abs_floor: float = 1e-6,
    dtype: typing.Any = np.float64,
    sample: int | None = None,
    seed: int = 0,
) -> GradientCheck:
    """
    Compare analytic gradients of `build(tape, params)` against central
    differences. An element passes when its absolute error is within
    `abs_floor` or its relative error is within `rel_tol`.

    Use `sample` to check a random subset of elements per parameter.
    """

    def evaluate(values: dict[str, np.ndarray]) -> tuple[Tape, Tensor]:
        tape: Tape = Tape(dtype=dtype)
        tensors: dict[str, Tensor] = {name: tape.param(name, val) for name, val in values.items()}
        return tape, build(tape, tensors)

    base: dict[str, np.ndarray] = {name: np.array(val, dtype=dtype) for name, val in params.items()}
    tape, out = evaluate(base)
    analytic: dict[str, np.ndarray] = backward(tape, out)

    rng: np.random.Generator = np.random.default_rng(seed)
    max_rel: float = 0.0
    max_abs: float = 0.0
    worst: tuple[str, tuple[int, ...]] | None = None
    checked: int = 0
    passed: bool = True

    for name, value in base.items():
        indices: list[tuple[int, ...]] = list(np.ndindex(value.shape))

        if sample is not None and len(indices) > sample:
            picks: np.ndarray = rng.choice(len(indices), size=sample, replace=False)
            indices = [indices[i] for i in sorted(picks)]

        for idx in indices:
            plus: dict[str, np.ndarray] = {k: v.copy() for k, v in base.items()}
            minus: dict[str, np.ndarray] = {k: v.copy() for k, v in base.items()}
            plus[name][idx] += step
            minus[name][idx] -= step

            f_plus: float = evaluate(plus)[1].item()
            f_minus: float = evaluate(minus)[1].item()
            numeric: float = (f_plus - f_minus) / (2.0 * step)
            exact: float = float(analytic[name][idx])

            abs_err: float = abs(exact - numeric)
            rel_err: float = abs_err / max(abs(exact), abs(numeric), abs_floor)
            checked += 1

            if abs_err > abs_floor and rel_err > rel_tol:
                passed = False

            if rel_err > max_rel:
                max_rel = rel_err
                worst = (name, idx)

            max_abs = max(max_abs, abs_err)

    return GradientCheck(max_rel, max_abs, worst, checked, passed)
