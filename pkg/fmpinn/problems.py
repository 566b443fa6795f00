"""Catalog of multi-scale elliptic benchmark problems.

Every problem is -div(A grad u) = f on a box with Dirichlet data u = g. The
coefficient, forcing, boundary data and (when known) the exact solution and
flux are closures over points of shape (n, d) returning arrays of shape (n,).
They are written with the primitives of `fmpinn.autodiff`, so they accept
dual numbers and can be differentiated exactly.
"""

import logging
import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigurationError, NumericError
from .sampling import STREAM_PROBE, Box, make_rng, sample_interior

logger = logging.getLogger("fmpinn")

PI = np.pi

HIDDEN_1D = (30, 40, 30, 30, 30)
HIDDEN_2D = (40, 60, 40, 40, 40)
HIDDEN_8D = (60, 80, 60, 60, 60)


@dataclass(frozen=True)
class EvaluationSet:
    """How the test points of a problem are built.

    Attributes:
        kind (str): 'grid' for an equidistant grid, 'random' for uniform points.
        h (float): Mesh size of the grid.
        pinned (dict): Axis index -> fixed coordinate for sliced grids.
        n_points (int): Number of random points.
        seed (int): Seed of the dedicated test stream.
    """

    kind: str = "grid"
    h: Optional[float] = None
    pinned: Dict[int, float] = field(default_factory=dict)
    n_points: int = 1600
    seed: int = 20240


@dataclass(frozen=True)
class ProblemDefinition:
    """A Dirichlet problem -div(A grad u) = f on a box.

    Attributes:
        name (str): Identifier, e.g. 'ex1_eps0.1'.
        domain (Box): The box domain.
        coefficient (callable): A(x) > 0.
        forcing (callable): f(x).
        boundary (callable): g(x), evaluated on boundary points.
        exact_u (callable, optional): Closed-form solution.
        exact_flux (callable, optional): Closed-form A grad u, a tuple of d
            components.
        epsilons (tuple of float): Scale parameters of the coefficient.
        n_interior (int): Default number of interior points per epoch.
        n_boundary (int): Default number of boundary points per epoch.
        hidden (tuple of int): Default hidden widths of each subnetwork.
        evaluation_set (EvaluationSet): How to build the test points.
        reference_h (float, optional): Mesh size of the finite-difference
            reference when there is no exact solution.
    """

    name: str
    domain: Box
    coefficient: Callable
    forcing: Callable
    boundary: Callable
    exact_u: Optional[Callable] = None
    exact_flux: Optional[Callable] = None
    epsilons: Tuple[float, ...] = ()
    n_interior: int = 3000
    n_boundary: int = 500
    hidden: Tuple[int, ...] = HIDDEN_1D
    evaluation_set: EvaluationSet = field(default_factory=EvaluationSet)
    reference_h: Optional[float] = None

    @property
    def dim(self) -> int:
        """Dimension d."""
        return self.domain.dim

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None


def coordinate(x, k: int):
    """Column k of points x (array or dual number)."""
    return ad.getitem(x, (Ellipsis, k))


def constant(value: float) -> Callable:
    """A constant function of the points."""

    def fn(x):
        return np.full(np.shape(ad.value_of(x))[:-1], float(value))

    return fn


def _product(terms):
    return reduce(ad.mul, terms)


def _total(terms):
    return reduce(ad.add, terms)


def check_inverse_integer(eps: float, name: str = "epsilon"):
    """Raise ConfigurationError unless eps > 0 and 1/eps is a positive integer."""
    if not eps > 0:
        raise ConfigurationError(f"{name} must be positive, got {eps}")
    inverse = 1.0 / eps
    if abs(inverse - round(inverse)) > 1e-9 * max(1.0, inverse):
        raise ConfigurationError(f"1/{name} must be a positive integer, got 1/{eps} = {inverse}")


def differentiate_forcing(coefficient: Callable, exact_u: Callable) -> Callable:
    """Build f = -sum_k d_k(A d_k u) by exact forward-mode differentiation.

    For each coordinate k the points are lifted to second-order dual numbers,
    which yields d_k A, d_k u and d_k^2 u; then
    d_k(A d_k u) = d_k A * d_k u + A * d_k^2 u.

    Args:
        coefficient (callable): A(x), written with autodiff primitives.
        exact_u (callable): u(x), twice differentiable through the primitives.

    Returns:
        callable: f(x) for points of shape (n, d).
    """

    def forcing(x):
        x = np.asarray(ad.value_of(x), dtype=float)
        total = np.zeros(x.shape[:-1])
        for k in range(x.shape[-1]):
            a = ad.forward_directional(coefficient, x, k, order=1)
            u = ad.forward_directional(exact_u, x, k, order=2)
            total = total + a.d1 * u.d1 + a.value * u.d2
        if not np.all(np.isfinite(total)):
            raise NumericError("Non-finite value while differentiating the forcing")
        return -total

    return forcing


def flux_from_solution(coefficient: Callable, exact_u: Callable) -> Callable:
    """A grad u evaluated with forward-mode derivatives.

    The result holds plain arrays and is meant for checks, not for further
    differentiation.
    """

    def flux(x):
        x = np.asarray(ad.value_of(x), dtype=float)
        a = np.asarray(ad.value_of(coefficient(x)))
        return tuple(
            a * ad.forward_directional(exact_u, x, k, order=1).d1 for k in range(x.shape[-1])
        )

    return flux


def pde_residual(problem: ProblemDefinition, x) -> np.ndarray:
    """|-div(A grad u*) - f| at points x, for a problem with an exact solution."""
    if not problem.has_exact:
        raise ConfigurationError(f"Problem '{problem.name}' has no exact solution")
    lhs = differentiate_forcing(problem.coefficient, problem.exact_u)(x)
    return np.abs(lhs - np.asarray(ad.value_of(problem.forcing(x))))


def ellipticity_bounds(problem: ProblemDefinition, n: int = 10000, seed: int = 0):
    """Empirical min and max of A over a uniform random probe of the domain.

    Returns:
        tuple: (lambda_min, lambda_max)

    Raises:
        ConfigurationError: If the coefficient is not strictly positive.
    """
    points = sample_interior(n, problem.domain, make_rng(seed, STREAM_PROBE))
    values = np.asarray(ad.value_of(problem.coefficient(points)), dtype=float)
    lam_min, lam_max = float(values.min()), float(values.max())
    if not lam_min > 0:
        raise ConfigurationError(
            f"Coefficient of '{problem.name}' is not uniformly elliptic (min {lam_min})"
        )
    logger.info(
        "Ellipticity probe for %s: lambda_min=%.6g lambda_max=%.6g", problem.name, lam_min, lam_max
    )
    return lam_min, lam_max


def reference_mesh_1d(epsilons) -> float:
    """Power-of-two mesh size resolving the finest scale ten times, at most 1/4096."""
    h = 1.0 / 4096
    finest = min(epsilons) if epsilons else 1.0
    while h > finest / 10:
        h /= 2
    return h


def pinn_failure_1d(eps: float) -> ProblemDefinition:
    """-(A u')' = 5 cos(pi x) on [0, 1], u(0) = u(1) = 0,
    A = (1 + x^2) / (2 + sin(2 pi x / eps)).

    A classical residual network fails on this problem for small eps. There is
    no closed-form solution; the reference is a finite-difference solve.
    """
    check_inverse_integer(eps)

    def coefficient(x):
        x1 = coordinate(x, 0)
        return ad.div(ad.add(1.0, ad.square(x1)), ad.add(2.0, ad.sin(ad.mul(2 * PI / eps, x1))))

    def forcing(x):
        return ad.mul(5.0, ad.cos(ad.mul(PI, coordinate(x, 0))))

    return ProblemDefinition(
        name=f"ex0_eps{eps:g}",
        domain=Box((0.0,), (1.0,)),
        coefficient=coefficient,
        forcing=forcing,
        boundary=constant(0.0),
        epsilons=(eps,),
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 999),
        reference_h=reference_mesh_1d((eps,)),
    )


def example_1d_two_scale(eps: float) -> ProblemDefinition:
    """A = 1 / (2 + cos(2 pi x / eps)), f = 1 on [0, 1] with a closed-form solution.

    The flux A u' equals 1/2 - x for every eps.
    """
    check_inverse_integer(eps)
    omega = 2 * PI / eps

    def coefficient(x):
        return ad.div(1.0, ad.add(2.0, ad.cos(ad.mul(omega, coordinate(x, 0)))))

    def exact_u(x):
        x1 = coordinate(x, 0)
        theta = ad.mul(omega, x1)
        sin_t, cos_t = ad.sin(theta), ad.cos(theta)
        oscillation = _total(
            [
                ad.mul(1 / (4 * PI), sin_t),
                ad.mul(-1 / (2 * PI), ad.mul(x1, sin_t)),
                ad.mul(-eps / (4 * PI**2), cos_t),
                eps / (4 * PI**2),
            ]
        )
        return ad.add(ad.sub(x1, ad.square(x1)), ad.mul(eps, oscillation))

    def exact_flux(x):
        return (ad.sub(0.5, coordinate(x, 0)),)

    return ProblemDefinition(
        name=f"ex1_eps{eps:g}",
        domain=Box((0.0,), (1.0,)),
        coefficient=coefficient,
        forcing=constant(1.0),
        boundary=constant(0.0),
        exact_u=exact_u,
        exact_flux=exact_flux,
        epsilons=(eps,),
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 999),
        reference_h=reference_mesh_1d((eps,)),
    )


def example_1d_three_scale(eps1: float = 0.1, eps2: float = 0.01) -> ProblemDefinition:
    """A = (2 + cos(2 pi x / eps1)) (2 + cos(2 pi x / eps2)) on [0, 1].

    The forcing is derived from the closed-form solution by exact
    differentiation.
    """
    check_inverse_integer(eps1, "epsilon1")
    check_inverse_integer(eps2, "epsilon2")
    omega1, omega2 = 2 * PI / eps1, 2 * PI / eps2

    def coefficient(x):
        x1 = coordinate(x, 0)
        return ad.mul(
            ad.add(2.0, ad.cos(ad.mul(omega1, x1))), ad.add(2.0, ad.cos(ad.mul(omega2, x1)))
        )

    def exact_u(x):
        x1 = coordinate(x, 0)
        return _total(
            [
                ad.sub(x1, ad.square(x1)),
                ad.mul(eps1 / (4 * PI), ad.sin(ad.mul(omega1, x1))),
                ad.mul(eps2 / (4 * PI), ad.sin(ad.mul(omega2, x1))),
            ]
        )

    def exact_flux(x):
        x1 = coordinate(x, 0)
        slope = _total(
            [
                ad.sub(1.0, ad.mul(2.0, x1)),
                ad.mul(0.5, ad.cos(ad.mul(omega1, x1))),
                ad.mul(0.5, ad.cos(ad.mul(omega2, x1))),
            ]
        )
        return (ad.mul(coefficient(x), slope),)

    name = "ex2" if (eps1, eps2) == (0.1, 0.01) else f"ex2_eps{eps1:g}_{eps2:g}"
    return ProblemDefinition(
        name=name,
        domain=Box((0.0,), (1.0,)),
        coefficient=coefficient,
        forcing=differentiate_forcing(coefficient, exact_u),
        boundary=constant(0.0),
        exact_u=exact_u,
        exact_flux=exact_flux,
        epsilons=(eps1, eps2),
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 999),
        reference_h=reference_mesh_1d((eps1, eps2)),
    )


def example_2d_two_scale(eps: float = 0.05) -> ProblemDefinition:
    """Two-scale coefficient with scale separation on [-1, 1]^2, f = 5, g = 0."""
    check_inverse_integer(eps)
    omega = 2 * PI / eps

    def coefficient(x):
        x1, x2 = coordinate(x, 0), coordinate(x, 1)
        s1 = ad.add(1.5, ad.sin(ad.mul(omega, x1)))
        s2 = ad.add(1.5, ad.sin(ad.mul(omega, x2)))
        c1 = ad.add(1.5, ad.cos(ad.mul(omega, x1)))
        smooth = ad.sin(ad.mul(4.0, ad.square(ad.mul(x1, x2))))
        return _total([ad.div(s1, s2), ad.div(s2, c1), smooth, 1.0])

    return ProblemDefinition(
        name=f"ex3_eps{eps:g}",
        domain=Box.cube(-1.0, 1.0, 2),
        coefficient=coefficient,
        forcing=constant(5.0),
        boundary=constant(0.0),
        epsilons=(eps,),
        n_interior=5000,
        n_boundary=2000,
        hidden=HIDDEN_2D,
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 128),
        reference_h=1.0 / 128,
    )


def example_2d_multifreq() -> ProblemDefinition:
    """Product of five frequency pairs on [-1, 1]^2, f = 1, g = 0."""

    def coefficient(x):
        x1, x2 = coordinate(x, 0), coordinate(x, 1)
        diagonal = ad.add(x1, x2)
        skew = ad.sub(x2, ad.mul(3.0, x1))
        factors = []
        for i in range(1, 6):
            frequency = 2**i * PI
            factors.append(ad.add(1.0, ad.mul(0.5, ad.cos(ad.mul(frequency, diagonal)))))
            factors.append(ad.add(1.0, ad.mul(0.5, ad.sin(ad.mul(frequency, skew)))))
        return _product(factors)

    return ProblemDefinition(
        name="ex4",
        domain=Box.cube(-1.0, 1.0, 2),
        coefficient=coefficient,
        forcing=constant(1.0),
        boundary=constant(0.0),
        n_interior=5000,
        n_boundary=2000,
        hidden=HIDDEN_2D,
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 128),
        reference_h=1.0 / 128,
    )


def example_3d(eps: float = 0.1) -> ProblemDefinition:
    """A = 2 + prod_k sin(2 pi x_k / eps) on [0, 1]^3, f = 20, g = 0.

    Tested on the grid slice x3 = 0.3125.
    """
    check_inverse_integer(eps)
    omega = 2 * PI / eps

    def coefficient(x):
        return ad.add(2.0, _product([ad.sin(ad.mul(omega, coordinate(x, k))) for k in range(3)]))

    return ProblemDefinition(
        name=f"ex5_eps{eps:g}",
        domain=Box.cube(0.0, 1.0, 3),
        coefficient=coefficient,
        forcing=constant(20.0),
        boundary=constant(0.0),
        epsilons=(eps,),
        n_interior=7500,
        n_boundary=1000,
        hidden=HIDDEN_2D,
        evaluation_set=EvaluationSet(kind="grid", h=1.0 / 64, pinned={2: 0.3125}),
        reference_h=1.0 / 64,
    )


EIGHT_D_FREQUENCIES = (2, 4, 8, 16, 16, 8, 4, 2)


def example_8d() -> ProblemDefinition:
    """A = 1 + (1/8) sum_j cos(c_j pi x_j), u = prod_j sin(pi x_j) on [0, 1]^8.

    The forcing is derived from u; the boundary data vanish.
    """
    dim = len(EIGHT_D_FREQUENCIES)

    def coefficient(x):
        terms = [
            ad.cos(ad.mul(c * PI, coordinate(x, j))) for j, c in enumerate(EIGHT_D_FREQUENCIES)
        ]
        return ad.add(1.0, ad.mul(1.0 / 8, _total(terms)))

    def exact_u(x):
        return _product([ad.sin(ad.mul(PI, coordinate(x, j))) for j in range(dim)])

    def exact_flux(x):
        a = coefficient(x)
        sines = [ad.sin(ad.mul(PI, coordinate(x, j))) for j in range(dim)]
        flux = []
        for k in range(dim):
            others = [s for j, s in enumerate(sines) if j != k]
            slope = ad.mul(PI, ad.mul(ad.cos(ad.mul(PI, coordinate(x, k))), _product(others)))
            flux.append(ad.mul(a, slope))
        return tuple(flux)

    return ProblemDefinition(
        name="ex6",
        domain=Box.cube(0.0, 1.0, dim),
        coefficient=coefficient,
        forcing=differentiate_forcing(coefficient, exact_u),
        boundary=constant(0.0),
        exact_u=exact_u,
        exact_flux=exact_flux,
        n_interior=20000,
        n_boundary=5000,
        hidden=HIDDEN_8D,
        evaluation_set=EvaluationSet(kind="random", n_points=1600),
    )


# name prefix -> (builder, number of epsilons accepted, default epsilons)
CATALOG = {
    "ex0": (pinn_failure_1d, 1, None),
    "ex1": (example_1d_two_scale, 1, None),
    "ex2": (example_1d_three_scale, 2, (0.1, 0.01)),
    "ex3": (example_2d_two_scale, 1, (0.05,)),
    "ex4": (example_2d_multifreq, 0, ()),
    "ex5": (example_3d, 1, (0.1,)),
    "ex6": (example_8d, 0, ()),
}

PROBLEM_NAME = re.compile(r"^(?P<prefix>ex\d)(?:_eps(?P<eps>[0-9eE.+\-]+(?:_[0-9eE.+\-]+)*))?$")


def problem_names():
    """Canonical names of the shipped problems."""
    return ["ex0_eps0.03125", "ex1_eps0.1", "ex2", "ex3_eps0.05", "ex4", "ex5_eps0.1", "ex6"]


def get_problem(name: str) -> ProblemDefinition:
    """Resolve a problem by name, e.g. 'ex1_eps0.01', 'ex2', 'ex5_eps0.1'.

    Raises:
        ConfigurationError: If the name does not resolve.
    """
    match = PROBLEM_NAME.match(name or "")
    if match is None or match.group("prefix") not in CATALOG:
        raise ConfigurationError(
            f"Unknown problem '{name}'; expected one of {', '.join(problem_names())}"
        )
    builder, n_eps, defaults = CATALOG[match.group("prefix")]
    raw = match.group("eps")
    if raw is None:
        if defaults is None:
            raise ConfigurationError(f"Problem '{name}' needs an epsilon, e.g. '{name}_eps0.1'")
        epsilons = defaults
    else:
        try:
            epsilons = tuple(float(part) for part in raw.split("_"))
        except ValueError as err:
            raise ConfigurationError(f"Cannot parse epsilons of problem '{name}'") from err
    if len(epsilons) != n_eps:
        raise ConfigurationError(
            f"Problem '{match.group('prefix')}' takes {n_eps} epsilon(s), got {len(epsilons)}"
        )
    return builder(*epsilons)
