"""User-defined problems from arithmetic expressions.

Expressions over the coordinates x1, ..., xd are parsed with sympy and
evaluated by walking the expression tree onto the primitives of
`fmpinn.autodiff`, so the compiled functions accept dual numbers just like the
shipped problems. Derivatives needed for the forcing and the flux of a
manufactured solution are taken symbolically.

A problem file is an INI file::

    [problem]
    name = smooth_2d
    dim = 2
    lo = 0, 0
    hi = 1, 1
    coefficient = 2 + sin(2*pi*x1/eps) * sin(2*pi*x2/eps)
    exact_u = sin(pi*x1) * sin(pi*x2)
    epsilons = eps

    [constants]
    eps = 0.125

`forcing` and `boundary` may be given explicitly; when omitted they are
derived from `exact_u` (forcing -div(A grad u), boundary u).
"""

import configparser
import logging
import os
from functools import reduce
from typing import Mapping, Optional, Sequence

import numpy as np
import sympy

from . import autodiff as ad
from .exceptions import ConfigurationError
from .problems import EvaluationSet, ProblemDefinition, constant
from .sampling import Box

logger = logging.getLogger("fmpinn")

FUNCTIONS = {
    sympy.sin: ad.sin,
    sympy.cos: ad.cos,
    sympy.tanh: ad.tanh,
    sympy.exp: ad.exp,
    sympy.log: ad.log,
}

# Default finite-difference reference mesh per dimension.
REFERENCE_MESH = {1: 1.0 / 4096, 2: 1.0 / 128, 3: 1.0 / 64}


class CompiledExpression:
    """A sympy expression evaluated with autodiff primitives.

    Attributes:
        expr (sympy.Expr): The expression.
        symbols (tuple of sympy.Symbol): Coordinate symbols x1, ..., xd.
    """

    def __init__(self, expr, symbols: Sequence):
        self.expr = expr
        self.symbols = tuple(symbols)
        self._index = {symbol: k for k, symbol in enumerate(self.symbols)}

    def __call__(self, x):
        columns = {}
        result = self._evaluate(self.expr, x, columns)
        if np.ndim(ad.value_of(result)) == 0 and not isinstance(result, (ad.Dual1, ad.Dual2)):
            return constant(result)(x)
        return result

    def __repr__(self):
        return f"CompiledExpression({self.expr})"

    def derivative(self, k: int) -> "CompiledExpression":
        """Symbolic partial derivative along coordinate k."""
        return CompiledExpression(sympy.diff(self.expr, self.symbols[k]), self.symbols)

    def _column(self, x, k, columns):
        if k not in columns:
            columns[k] = ad.getitem(x, (Ellipsis, k))
        return columns[k]

    def _evaluate(self, expr, x, columns):
        if expr.is_Symbol:
            return self._column(x, self._index[expr], columns)
        if expr.is_number:
            return float(expr)
        args = [self._evaluate(arg, x, columns) for arg in expr.args] if not expr.is_Pow else None
        if expr.is_Add:
            return reduce(ad.add, args)
        if expr.is_Mul:
            return reduce(ad.mul, args)
        if expr.is_Pow:
            base, exponent = expr.args
            value = self._evaluate(base, x, columns)
            if exponent.is_Integer:
                return ad.power(value, int(exponent))
            if exponent == sympy.S.Half:
                return ad.sqrt(value)
            if exponent == -sympy.S.Half:
                return ad.div(1.0, ad.sqrt(value))
            raise ConfigurationError(f"Unsupported exponent {exponent} in '{expr}'")
        if expr.func in FUNCTIONS:
            return FUNCTIONS[expr.func](args[0])
        raise ConfigurationError(f"Unsupported operation '{expr.func.__name__}' in '{expr}'")


def coordinate_symbols(dim: int):
    """The symbols x1, ..., xd."""
    return sympy.symbols(f"x1:{dim + 1}")


def compile_expression(
    text: str, dim: int, constants: Optional[Mapping[str, float]] = None
) -> CompiledExpression:
    """Parse an expression over x1..xd into a callable on points of shape (n, d).

    Args:
        text (str): The expression, e.g. '2 + cos(2*pi*x1/eps)'.
        dim (int): Number of coordinates.
        constants (dict, optional): Named constants substituted at parse time.

    Raises:
        ConfigurationError: If the text does not parse or uses unknown names.
    """
    symbols = coordinate_symbols(dim)
    namespace = {symbol.name: symbol for symbol in symbols}
    namespace.update({name: sympy.Float(value) for name, value in (constants or {}).items()})
    try:
        expr = sympy.sympify(text, locals=namespace)
    except (sympy.SympifyError, SyntaxError, TypeError) as err:
        raise ConfigurationError(f"Cannot parse expression '{text}': {err}") from err
    unknown = expr.free_symbols - set(symbols)
    if unknown:
        names = ", ".join(sorted(str(symbol) for symbol in unknown))
        raise ConfigurationError(f"Unknown names {names} in expression '{text}'")
    return CompiledExpression(expr, symbols)


def _floats(text: str, dim: int, what: str):
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError as err:
        raise ConfigurationError(f"Cannot parse {what} '{text}'") from err
    if len(values) == 1:
        values = values * dim
    if len(values) != dim:
        raise ConfigurationError(f"{what} needs {dim} values, got {len(values)}")
    return tuple(values)


def load_problem_file(path: str) -> ProblemDefinition:
    """Build a ProblemDefinition from an INI problem file.

    Raises:
        ConfigurationError: For missing or invalid entries.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ConfigurationError(f"Problem file {path} could not be read")
    if not parser.has_section("problem"):
        raise ConfigurationError(f"Problem file {path} has no [problem] section")
    section = parser["problem"]
    constants = {}
    if parser.has_section("constants"):
        for name, value in parser["constants"].items():
            try:
                constants[name] = float(value)
            except ValueError as err:
                raise ConfigurationError(f"Constant '{name}' is not a number: {value}") from err
    try:
        dim = section.getint("dim")
    except ValueError as err:
        raise ConfigurationError("dim must be an integer") from err
    if dim is None or dim < 1:
        raise ConfigurationError("The [problem] section needs a positive 'dim'")
    if "coefficient" not in section:
        raise ConfigurationError("The [problem] section needs a 'coefficient'")

    domain = Box(
        _floats(section.get("lo", "0"), dim, "lo"), _floats(section.get("hi", "1"), dim, "hi")
    )
    coefficient = compile_expression(section["coefficient"], dim, constants)
    exact_u = exact_flux = None
    if "exact_u" in section:
        exact_u = compile_expression(section["exact_u"], dim, constants)
        fluxes = [
            CompiledExpression(coefficient.expr * exact_u.derivative(k).expr, exact_u.symbols)
            for k in range(dim)
        ]

        def exact_flux(x):
            return tuple(component(x) for component in fluxes)

    if "forcing" in section:
        forcing = compile_expression(section["forcing"], dim, constants)
    elif exact_u is not None:
        divergence = sum(
            sympy.diff(coefficient.expr * exact_u.derivative(k).expr, exact_u.symbols[k])
            for k in range(dim)
        )
        forcing = CompiledExpression(-divergence, exact_u.symbols)
    else:
        raise ConfigurationError("Give either 'forcing' or 'exact_u' in the [problem] section")

    if "boundary" in section:
        boundary = compile_expression(section["boundary"], dim, constants)
    else:
        boundary = exact_u if exact_u is not None else constant(0.0)

    epsilons = tuple(
        constants[name.strip()] if name.strip() in constants else float(name)
        for name in section.get("epsilons", "").split(",")
        if name.strip()
    )
    if "test_h" in section:
        evaluation_set = EvaluationSet(kind="grid", h=section.getfloat("test_h"))
    else:
        evaluation_set = EvaluationSet(kind="random", n_points=section.getint("n_test", 1600))

    name = section.get("name", os.path.splitext(os.path.basename(path))[0])
    logger.info("Loaded custom problem %s (dimension %s) from %s", name, dim, path)
    defaults = ProblemDefinition.__dataclass_fields__
    return ProblemDefinition(
        name=name,
        domain=domain,
        coefficient=coefficient,
        forcing=forcing,
        boundary=boundary,
        exact_u=exact_u,
        exact_flux=exact_flux,
        epsilons=epsilons,
        n_interior=section.getint("n_interior", defaults["n_interior"].default),
        n_boundary=section.getint("n_boundary", defaults["n_boundary"].default),
        evaluation_set=evaluation_set,
        reference_h=section.getfloat("reference_h", REFERENCE_MESH.get(dim)),
    )
