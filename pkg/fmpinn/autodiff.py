"""Automatic differentiation on numpy arrays.

Three kinds of values flow through the primitives of this module:

- plain numpy arrays and floats, evaluated directly with numpy;
- `Variable`, an array recorded on a `Tape` and differentiated in reverse mode
  with respect to the watched parameters;
- `Dual1` / `Dual2`, forward-mode numbers carrying the first (and second)
  directional derivative along one input coordinate.

The components of a dual number may themselves be `Variable` objects. This is
how the input derivatives of a network (its gradient and the divergence of the
flux head) end up on the tape, so that the parameter gradient of a loss built
from them is obtained with a single reverse sweep (reverse over forward).

All arithmetic is done in 64-bit floating point. Division by zero and the log
or square root of values outside their domain raise `NumericError` instead of
propagating NaN.
"""

import logging
import math
from collections import namedtuple
from typing import Callable, Dict, Mapping, Sequence

import numpy as np

from .exceptions import NumericError

logger = logging.getLogger("fmpinn")


Node = namedtuple("Node", ["op", "parents"])
"""A primitive record on the tape: the op kind and a tuple of
(operand node index, vector-Jacobian product) pairs."""

Backprop = namedtuple("Backprop", ["loss", "gradient", "aux"])
"""Result of `record_and_backprop`: the scalar loss value, a dict mapping
parameter names to gradient arrays and whatever auxiliary value the loss
function returned."""

Directional = namedtuple("Directional", ["value", "d1", "d2"])
"""Result of `forward_directional`. `d2` is None for first-order passes."""


class Tape:
    """Ordered record of the primitives applied to watched parameters.

    Nodes are appended as operations execute, so every node's operands
    precede it and a single reversed pass visits them in topological order.

    Attributes:
        nodes (list of Node): The recorded primitives.
        slots (dict): Mapping of parameter name to the index of its leaf node.
    """

    def __init__(self):
        self.nodes = []
        self.slots = {}
        self._shapes = {}

    def __len__(self):
        return len(self.nodes)

    def watch(self, name: str, value) -> "Variable":
        """Register a parameter as a leaf of the tape.

        Args:
            name (str): Name of the parameter.
            value (array-like): Its current value.

        Returns:
            Variable: The leaf variable to compute with.
        """
        value = np.asarray(value, dtype=float)
        var = self.record("param", value, ())
        self.slots[name] = var.index
        self._shapes[name] = value.shape
        return var

    def record(self, op: str, value, parents) -> "Variable":
        """Append a primitive to the tape.

        Args:
            op (str): Name of the primitive.
            value (np.ndarray): Result of the primitive.
            parents (iterable): Pairs (operand Variable, vjp) where vjp maps the
                adjoint of the result to the adjoint contribution of the operand.

        Returns:
            Variable: The recorded result.
        """
        entries = []
        for operand, vjp in parents:
            if operand.tape is not self:
                raise ValueError("Cannot combine variables recorded on different tapes")
            entries.append((operand.index, vjp))
        self.nodes.append(Node(op, tuple(entries)))
        return Variable(self, len(self.nodes) - 1, value)

    def backward(self, output: "Variable") -> Dict[str, np.ndarray]:
        """Run the reverse sweep from a scalar output.

        Args:
            output (Variable): Scalar recorded on this tape.

        Returns:
            dict: Gradient of the output for every watched parameter.

        Raises:
            NumericError: If the output is not finite.
        """
        if output.tape is not self:
            raise ValueError("Output was not recorded on this tape")
        if np.ndim(output.value) != 0:
            raise ValueError(f"Output must be a scalar, got shape {np.shape(output.value)}")
        if not np.isfinite(output.value):
            raise NumericError(f"Non-finite loss value {float(output.value)}")
        adjoints = [None] * len(self.nodes)
        adjoints[output.index] = np.ones((), dtype=float)
        for index in range(output.index, -1, -1):
            grad = adjoints[index]
            if grad is None:
                continue
            for parent, vjp in self.nodes[index].parents:
                contribution = vjp(grad)
                if adjoints[parent] is None:
                    adjoints[parent] = contribution
                else:
                    adjoints[parent] = adjoints[parent] + contribution
        gradient = {}
        for name, index in self.slots.items():
            grad = adjoints[index]
            gradient[name] = (
                np.zeros(self._shapes[name]) if grad is None else np.array(grad, dtype=float)
            )
        return gradient


class _Arithmetic:
    """Operator overloads routed to the primitives of this module."""

    __slots__ = ()
    # let numpy hand binary operators back to us
    __array_ufunc__ = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)


class Variable(_Arithmetic):
    """An array value recorded on a tape."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: Tape, index: int, value):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        """Shape of the recorded value."""
        return np.shape(self.value)

    @property
    def ndim(self):
        """Number of dimensions of the recorded value."""
        return np.ndim(self.value)

    def __repr__(self):
        return f"Variable(index={self.index}, shape={self.shape})"


def value_of(x):
    """Return the plain numerical value of a Variable, dual number or array."""
    while isinstance(x, (Variable, Dual1, Dual2)):
        x = x.value
    return x


def _is_dual(x) -> bool:
    return isinstance(x, (Dual1, Dual2))


def _is_zero(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x == 0


def _unbroadcast(grad, shape):
    """Sum a broadcast adjoint back to the shape of its operand."""
    grad = np.asarray(grad)
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _tape_of(*operands):
    tapes = [x.tape for x in operands if isinstance(x, Variable)]
    return tapes[0] if tapes else None


def _binary(op, a, b, forward, vjp_a, vjp_b):
    """Apply a binary primitive to arrays or tape variables.

    `vjp_a(g, x, y, z)` / `vjp_b(g, x, y, z)` receive the adjoint of the
    result and the raw operand and result values.
    """
    x, y = value_of(a), value_of(b)
    z = forward(x, y)
    tape = _tape_of(a, b)
    if tape is None:
        return z
    parents = []
    if isinstance(a, Variable):
        shape_a = np.shape(x)
        parents.append((a, lambda g: _unbroadcast(vjp_a(g, x, y, z), shape_a)))
    if isinstance(b, Variable):
        shape_b = np.shape(y)
        parents.append((b, lambda g: _unbroadcast(vjp_b(g, x, y, z), shape_b)))
    return tape.record(op, z, parents)


def _unary(op, a, forward, derivative):
    """Apply an elementwise primitive; `derivative(x, y)` gives f'(x) from the
    operand x and the result y."""
    x = value_of(a)
    y = forward(x)
    if not isinstance(a, Variable):
        return y
    return a.tape.record(op, y, [(a, lambda g: g * derivative(x, y))])


# Zero-aware helpers used by the dual rules, so that constants lifted with a
# zero derivative do not add work or tape nodes.


def _add0(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return add(a, b)


def _sub0(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    return sub(a, b)


def _mul0(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return mul(a, b)


def _neg0(a):
    return 0.0 if _is_zero(a) else neg(a)


class Dual1(_Arithmetic):
    """First-order forward-mode number.

    Attributes:
        value: The primal value (array, float or Variable).
        deriv: Its directional derivative along the seeded input direction.
    """

    __slots__ = ("value", "deriv")

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    @classmethod
    def lift(cls, x):
        """Lift a constant (zero derivative)."""
        if isinstance(x, cls):
            return x
        if _is_dual(x):
            raise TypeError("Cannot mix Dual1 and Dual2 numbers")
        return cls(x, 0.0)

    @property
    def shape(self):
        """Shape of the primal value."""
        return np.shape(value_of(self.value))

    def components(self):
        """Tuple of the derivative components."""
        return (self.deriv,)

    def apply(self, f, df, d2f=None):  # pylint: disable=unused-argument
        """Chain rule for an elementwise function with derivative df."""
        return Dual1(f(self.value), _mul0(df(self.value), self.deriv))

    def map_linear(self, fn):
        """Apply a linear map to value and derivative alike."""
        deriv = 0.0 if _is_zero(self.deriv) else fn(self.deriv)
        return Dual1(fn(self.value), deriv)

    @staticmethod
    def sum_rule(a, b):
        return Dual1(add(a.value, b.value), _add0(a.deriv, b.deriv))

    @staticmethod
    def difference_rule(a, b):
        return Dual1(sub(a.value, b.value), _sub0(a.deriv, b.deriv))

    @staticmethod
    def product_rule(a, b):
        return Dual1(
            mul(a.value, b.value),
            _add0(_mul0(a.value, b.deriv), _mul0(a.deriv, b.value)),
        )

    @staticmethod
    def quotient_rule(a, b):
        quotient = div(a.value, b.value)
        return Dual1(quotient, _div_deriv(a.deriv, b.deriv, quotient, b.value))

    @staticmethod
    def bilinear(fn, a, b):
        """Product rule for a bilinear map fn(a, b)."""
        return Dual1(
            fn(a.value, b.value),
            _add0(_apply0(fn, a.deriv, b.value), _apply0(fn, a.value, b.deriv)),
        )

    def __repr__(self):
        return f"Dual1(value={self.value!r}, deriv={self.deriv!r})"


class Dual2(_Arithmetic):
    """Second-order forward-mode number along one input direction.

    Attributes:
        value: The primal value.
        d1: First directional derivative.
        d2: Second directional derivative.
    """

    __slots__ = ("value", "d1", "d2")

    def __init__(self, value, d1=0.0, d2=0.0):
        self.value = value
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def lift(cls, x):
        """Lift a constant (zero derivatives)."""
        if isinstance(x, cls):
            return x
        if _is_dual(x):
            raise TypeError("Cannot mix Dual1 and Dual2 numbers")
        return cls(x, 0.0, 0.0)

    @property
    def shape(self):
        """Shape of the primal value."""
        return np.shape(value_of(self.value))

    def components(self):
        """Tuple of the derivative components."""
        return (self.d1, self.d2)

    def apply(self, f, df, d2f=None):
        """Faa di Bruno at order two: (f o x)'' = f''(x) x'^2 + f'(x) x''."""
        slope = df(self.value)
        d1 = _mul0(slope, self.d1)
        curvature = 0.0
        if not _is_zero(self.d1) and d2f is not None:
            curvature = _mul0(d2f(self.value), _mul0(self.d1, self.d1))
        d2 = _add0(curvature, _mul0(slope, self.d2))
        return Dual2(f(self.value), d1, d2)

    def map_linear(self, fn):
        """Apply a linear map to the value and both derivatives."""
        d1 = 0.0 if _is_zero(self.d1) else fn(self.d1)
        d2 = 0.0 if _is_zero(self.d2) else fn(self.d2)
        return Dual2(fn(self.value), d1, d2)

    @staticmethod
    def sum_rule(a, b):
        return Dual2(add(a.value, b.value), _add0(a.d1, b.d1), _add0(a.d2, b.d2))

    @staticmethod
    def difference_rule(a, b):
        return Dual2(sub(a.value, b.value), _sub0(a.d1, b.d1), _sub0(a.d2, b.d2))

    @staticmethod
    def product_rule(a, b):
        d1 = _add0(_mul0(a.value, b.d1), _mul0(a.d1, b.value))
        d2 = _add0(
            _add0(_mul0(a.d2, b.value), _mul0(2.0, _mul0(a.d1, b.d1))),
            _mul0(a.value, b.d2),
        )
        return Dual2(mul(a.value, b.value), d1, d2)

    @staticmethod
    def quotient_rule(a, b):
        quotient = div(a.value, b.value)
        d1 = _div_deriv(a.d1, b.d1, quotient, b.value)
        # q'' = (a'' - 2 q' b' - q b'') / b
        numerator = _sub0(_sub0(a.d2, _mul0(2.0, _mul0(d1, b.d1))), _mul0(quotient, b.d2))
        d2 = 0.0 if _is_zero(numerator) else div(numerator, b.value)
        return Dual2(quotient, d1, d2)

    @staticmethod
    def bilinear(fn, a, b):
        """Product rule for a bilinear map fn(a, b)."""
        d1 = _add0(_apply0(fn, a.d1, b.value), _apply0(fn, a.value, b.d1))
        d2 = _add0(
            _add0(_apply0(fn, a.d2, b.value), _mul0(2.0, _apply0(fn, a.d1, b.d1))),
            _apply0(fn, a.value, b.d2),
        )
        return Dual2(fn(a.value, b.value), d1, d2)

    def __repr__(self):
        return f"Dual2(value={self.value!r}, d1={self.d1!r}, d2={self.d2!r})"


def _apply0(fn, a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    return fn(a, b)


def _div_deriv(da, db, quotient, denominator):
    """(a/b)' = (a' - q b') / b."""
    numerator = _sub0(da, _mul0(quotient, db))
    return 0.0 if _is_zero(numerator) else div(numerator, denominator)


def _dual_pair(a, b):
    cls = Dual2 if isinstance(a, Dual2) or isinstance(b, Dual2) else Dual1
    return cls, cls.lift(a), cls.lift(b)


# Primitives


def add(a, b):
    """a + b."""
    if _is_dual(a) or _is_dual(b):
        cls, a, b = _dual_pair(a, b)
        return cls.sum_rule(a, b)
    return _binary("add", a, b, np.add, lambda g, x, y, z: g, lambda g, x, y, z: g)


def sub(a, b):
    """a - b."""
    if _is_dual(a) or _is_dual(b):
        cls, a, b = _dual_pair(a, b)
        return cls.difference_rule(a, b)
    return _binary("sub", a, b, np.subtract, lambda g, x, y, z: g, lambda g, x, y, z: -g)


def mul(a, b):
    """a * b."""
    if _is_dual(a) or _is_dual(b):
        cls, a, b = _dual_pair(a, b)
        return cls.product_rule(a, b)
    return _binary(
        "mul", a, b, np.multiply, lambda g, x, y, z: g * y, lambda g, x, y, z: g * x
    )


def div(a, b):
    """a / b; raises NumericError on division by zero."""
    if _is_dual(a) or _is_dual(b):
        cls, a, b = _dual_pair(a, b)
        return cls.quotient_rule(a, b)
    if np.any(np.asarray(value_of(b)) == 0):
        raise NumericError("Division by zero")
    return _binary(
        "div",
        a,
        b,
        np.true_divide,
        lambda g, x, y, z: g / y,
        lambda g, x, y, z: -g * z / y,
    )


def neg(a):
    """-a."""
    if _is_dual(a):
        return a.map_linear(neg)
    return _unary("neg", a, np.negative, lambda x, y: -1.0)


def power(a, exponent: int):
    """a ** n for an integer exponent n."""
    if int(exponent) != exponent:
        raise ValueError(f"Only integer exponents are supported, got {exponent}")
    n = int(exponent)
    if _is_dual(a):
        return a.apply(
            lambda v: power(v, n),
            lambda v: mul(float(n), power(v, n - 1)),
            lambda v: mul(float(n * (n - 1)), power(v, n - 2)),
        )
    if n < 0 and np.any(np.asarray(value_of(a)) == 0):
        raise NumericError("Division by zero in negative power")
    if n == 0:
        return _unary("power", a, np.ones_like, lambda x, y: 0.0)
    return _unary(
        "power",
        a,
        lambda x: np.power(x, float(n)),
        lambda x, y: n * np.power(x, float(n - 1)),
    )


def square(a):
    """a ** 2."""
    if _is_dual(a):
        return a.apply(square, lambda v: mul(2.0, v), lambda v: 2.0)
    return _unary("square", a, np.square, lambda x, y: 2.0 * x)


def sqrt(a):
    """Square root; raises NumericError for negative input."""
    if _is_dual(a):
        return a.apply(
            sqrt,
            lambda v: div(0.5, sqrt(v)),
            lambda v: div(-0.25, mul(v, sqrt(v))),
        )
    if np.any(np.asarray(value_of(a)) < 0):
        raise NumericError("Square root of a negative value")
    return _unary("sqrt", a, np.sqrt, lambda x, y: 0.5 / y)


def sin(a):
    """Sine."""
    if _is_dual(a):
        return a.apply(sin, cos, lambda v: neg(sin(v)))
    return _unary("sin", a, np.sin, lambda x, y: np.cos(x))


def cos(a):
    """Cosine."""
    if _is_dual(a):
        return a.apply(cos, lambda v: neg(sin(v)), lambda v: neg(cos(v)))
    return _unary("cos", a, np.cos, lambda x, y: -np.sin(x))


def tanh(a):
    """Hyperbolic tangent."""
    if _is_dual(a):

        def slope(v):
            return sub(1.0, square(tanh(v)))

        return a.apply(tanh, slope, lambda v: mul(-2.0, mul(tanh(v), slope(v))))
    return _unary("tanh", a, np.tanh, lambda x, y: 1.0 - y * y)


def exp(a):
    """Exponential."""
    if _is_dual(a):
        return a.apply(exp, exp, exp)
    return _unary("exp", a, np.exp, lambda x, y: y)


def log(a):
    """Natural logarithm; raises NumericError for non-positive input."""
    if _is_dual(a):
        return a.apply(log, lambda v: div(1.0, v), lambda v: neg(div(1.0, square(v))))
    if np.any(np.asarray(value_of(a)) <= 0):
        raise NumericError("Logarithm of a non-positive value")
    return _unary("log", a, np.log, lambda x, y: 1.0 / x)


def relu(a):
    """max(0, a)."""
    if _is_dual(a):
        return a.apply(relu, lambda v: _heaviside(v), lambda v: 0.0)
    return _unary("relu", a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(float))


def requ(a):
    """Rectified quadratic unit max(0, a)**2."""
    if _is_dual(a):
        return a.apply(requ, lambda v: mul(2.0, relu(v)), lambda v: 2.0 * _heaviside(v))
    return _unary(
        "requ", a, lambda x: np.square(np.maximum(x, 0.0)), lambda x, y: 2.0 * np.maximum(x, 0.0)
    )


def _heaviside(v):
    return (np.asarray(value_of(v)) > 0).astype(float)


def linear(x, weight):
    """Batched affine map without bias: x @ weight^T.

    Args:
        x: Array of shape (..., n, in).
        weight: Array of shape (..., out, in).

    Returns:
        Array of shape (..., n, out).
    """
    if _is_dual(x) or _is_dual(weight):
        cls, x, weight = _dual_pair(x, weight)
        return cls.bilinear(linear, x, weight)
    return _binary(
        "linear",
        x,
        weight,
        lambda a, w: np.matmul(a, np.swapaxes(w, -1, -2)),
        lambda g, a, w, z: np.matmul(g, w),
        lambda g, a, w, z: np.matmul(np.swapaxes(g, -1, -2), a),
    )


def concatenate(items: Sequence, axis: int = -1):
    """Concatenate arrays along an axis."""
    if any(_is_dual(item) for item in items):
        cls = Dual2 if any(isinstance(item, Dual2) for item in items) else Dual1
        lifted = [cls.lift(item) for item in items]
        shapes = [item.shape for item in lifted]
        value = concatenate([item.value for item in lifted], axis)
        parts = []
        for position in range(len(lifted[0].components())):
            comps = [item.components()[position] for item in lifted]
            if all(_is_zero(c) for c in comps):
                parts.append(0.0)
            else:
                parts.append(
                    concatenate(
                        [np.zeros(s) if _is_zero(c) else c for c, s in zip(comps, shapes)],
                        axis,
                    )
                )
        return cls(value, *parts)
    values = [value_of(item) for item in items]
    result = np.concatenate(values, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return result
    bounds = np.cumsum([0] + [np.shape(v)[axis] for v in values])
    parents = []
    for position, item in enumerate(items):
        if isinstance(item, Variable):
            lo, hi = int(bounds[position]), int(bounds[position + 1])
            parents.append((item, _slice_vjp(axis, lo, hi)))
    return tape.record("concatenate", result, parents)


def _slice_vjp(axis, lo, hi):
    def vjp(g):
        index = [slice(None)] * np.ndim(g)
        index[axis] = slice(lo, hi)
        return g[tuple(index)]

    return vjp


def reduce_sum(x, axis=None, exact: bool = False):
    """Sum of array elements.

    Args:
        x: Value to reduce.
        axis (int, optional): Axis to reduce; all axes when None.
        exact (bool): Use a correctly rounded summation (math.fsum) for a full
            reduction. The result then does not depend on the element order.
    """
    if _is_dual(x):
        return x.map_linear(lambda v: reduce_sum(v, axis=axis, exact=exact))
    raw = value_of(x)
    if axis is None and exact:
        value = np.float64(math.fsum(np.ravel(raw)))
    else:
        value = np.sum(raw, axis=axis)
    if not isinstance(x, Variable):
        return value
    shape = np.shape(raw)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)

    return x.tape.record("sum", value, [(x, vjp)])


def expand_dims(x, axis: int):
    """Insert a size-one axis."""
    if _is_dual(x):
        return x.map_linear(lambda v: expand_dims(v, axis))
    raw = value_of(x)
    value = np.expand_dims(raw, axis)
    if not isinstance(x, Variable):
        return value
    shape = np.shape(raw)
    return x.tape.record("expand_dims", value, [(x, lambda g: np.reshape(g, shape))])


def getitem(x, key):
    """Indexing / slicing."""
    if _is_dual(x):
        return x.map_linear(lambda v: getitem(v, key))
    raw = value_of(x)
    value = raw[key]
    if not isinstance(x, Variable):
        return value
    shape = np.shape(raw)
    basic = _is_basic_key(key)

    def vjp(g):
        grad = np.zeros(shape)
        if basic:
            grad[key] += g
        else:
            np.add.at(grad, key, g)
        return grad

    return x.tape.record("getitem", value, [(x, vjp)])


def _is_basic_key(key) -> bool:
    """True for keys built from ints, slices, Ellipsis and None only."""
    items = key if isinstance(key, tuple) else (key,)
    return all(
        item is None or item is Ellipsis or isinstance(item, (int, np.integer, slice))
        for item in items
    )


PRIMITIVES: Dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "power": power,
    "square": square,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "relu": relu,
    "requ": requ,
    "linear": linear,
    "concatenate": concatenate,
    "sum": reduce_sum,
    "getitem": getitem,
    "expand_dims": expand_dims,
}


def primitive_set():
    """Names of the supported primitives."""
    return sorted(PRIMITIVES)


def check_finite(x, layer=None):
    """Raise NumericError if any component of x is not finite.

    Args:
        x: Array, Variable or dual number.
        layer (int, optional): Layer index reported in the error.
    """
    parts = [x.value, *x.components()] if _is_dual(x) else [x]
    for part in parts:
        raw = value_of(part)
        if not np.all(np.isfinite(raw)):
            raise NumericError(
                f"Non-finite value in layer {layer}" if layer is not None else "Non-finite value",
                layer=layer,
            )
    return x


def lift_input(x, direction: int, order: int = 1):
    """Seed points for a directional derivative along one coordinate.

    Args:
        x (np.ndarray): Points of shape (n, d).
        direction (int): Coordinate to differentiate along.
        order (int): 1 for Dual1, 2 for Dual2.

    Returns:
        Dual1 | Dual2: Lifted points with derivative e_direction.
    """
    x = np.asarray(x, dtype=float)
    if not 0 <= direction < x.shape[-1]:
        raise ValueError(f"Direction {direction} out of range for dimension {x.shape[-1]}")
    seed = np.zeros_like(x)
    seed[..., direction] = 1.0
    if order == 1:
        return Dual1(x, seed)
    if order == 2:
        return Dual2(x, seed, 0.0)
    raise ValueError(f"Unsupported derivative order {order}")


def forward_directional(fn: Callable, x, direction: int, order: int = 1) -> Directional:
    """Evaluate fn and its exact directional derivatives along a coordinate.

    Args:
        fn (callable): Function of the (lifted) points returning an array-like
            value built from the primitives of this module.
        x (np.ndarray): Points of shape (n, d).
        direction (int): Coordinate index.
        order (int): 1 for first derivatives, 2 for first and second.

    Returns:
        Directional: value, d1 and (order 2 only) d2 as arrays.
    """
    out = fn(lift_input(x, direction, order))
    shape = np.shape(value_of(out))

    def materialize(component):
        if _is_zero(component):
            return np.zeros(shape)
        return np.broadcast_to(value_of(component), shape).copy()

    if not _is_dual(out):
        zeros = np.zeros(shape)
        return Directional(value_of(out), zeros, zeros.copy() if order == 2 else None)
    if isinstance(out, Dual2):
        return Directional(value_of(out.value), materialize(out.d1), materialize(out.d2))
    return Directional(value_of(out.value), materialize(out.deriv), None)


def record_and_backprop(
    loss_fn: Callable, params: Mapping, frozen: Sequence[str] = ()
) -> Backprop:
    """Record a loss on a fresh tape and compute its parameter gradient.

    Args:
        loss_fn (callable): Called with a dict name -> Variable (frozen
            parameters are passed as plain arrays); returns the scalar loss
            Variable, or a tuple (loss, aux).
        params (Mapping): Parameter name -> array.
        frozen (sequence of str): Names excluded from differentiation; they
            receive a zero gradient.

    Returns:
        Backprop: loss value, gradient dict (same keys as params) and aux.

    Raises:
        NumericError: If the loss is not finite.
    """
    tape = Tape()
    watched = {
        name: (np.asarray(value) if name in frozen else tape.watch(name, value))
        for name, value in params.items()
    }
    result = loss_fn(watched)
    aux = None
    if isinstance(result, tuple):
        result, aux = result
    if not isinstance(result, Variable):
        value = float(value_of(result))
        if not math.isfinite(value):
            raise NumericError(f"Non-finite loss value {value}")
        gradient = {name: np.zeros(np.shape(v)) for name, v in params.items()}
        return Backprop(value, gradient, aux)
    gradient = tape.backward(result)
    logger.debug("Reverse sweep over %s tape nodes", len(tape))
    for name in frozen:
        gradient[name] = np.zeros(np.shape(params[name]))
    ordered = {name: gradient[name] for name in params}
    return Backprop(float(result.value), ordered, aux)
