"""Loss assembly for the mixed (FMPINN) and classical (MPINN) formulations.

A model is anything with `forward(params, x) -> NetworkOutput`: the
multi-scale network or an `AnalyticModel` wrapping closed-form functions.
Input derivatives are taken with forward-mode dual numbers, one pass per
coordinate; when params are tape variables the derivatives are recorded too,
so the parameter gradient of a loss comes from one reverse sweep.

All reductions over points use correctly rounded summation, which makes the
losses independent of the order of the points.
"""

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .constants import GAMMA_BREAKPOINTS, GAMMA_MULTIPLIERS
from .exceptions import ConfigurationError
from .problems import ProblemDefinition
from .sampling import SampleBatch

logger = logging.getLogger("fmpinn")


@dataclass
class LossBreakdown:
    """The parts of a total loss, as floats.

    total = interior_pde + beta * interior_flux + gamma * boundary, where the
    interior parts already carry the |Omega| / N_in Monte-Carlo weight.

    Attributes:
        interior_pde (float): Divergence residual part.
        interior_flux (float): Flux discrepancy part.
        boundary (float): Boundary mismatch.
        gamma (float): Boundary penalty used.
        beta (float): Flux weight used.
        total (float): The total loss.
        objective: The differentiable total (a tape variable during training).
    """

    interior_pde: float
    interior_flux: float
    boundary: float
    gamma: float
    beta: float
    total: float
    objective: object = field(default=None, repr=False, compare=False)

    def recompute_total(self) -> float:
        """Total recomputed from the parts."""
        return self.interior_pde + self.beta * self.interior_flux + self.gamma * self.boundary

    def as_row(self) -> dict:
        """Mapping used for the run CSV."""
        return {
            "pde": self.interior_pde,
            "flux": self.interior_flux,
            "boundary": self.boundary,
            "gamma": self.gamma,
            "total": self.total,
        }


def _primal(value):
    return value.value if isinstance(value, (ad.Dual1, ad.Dual2)) else value


def _first(value):
    if isinstance(value, ad.Dual1):
        return value.deriv
    if isinstance(value, ad.Dual2):
        return value.d1
    return 0.0


def _second(value):
    return value.d2 if isinstance(value, ad.Dual2) else 0.0


def weighted_square_sum(values, weight: float):
    """weight * sum(values ** 2), summed with correct rounding."""
    return ad.mul(weight, ad.reduce_sum(ad.square(values), exact=True))


def _check_points(points, what):
    if np.shape(points)[0] == 0:
        raise ConfigurationError(f"The batch has no {what} points")


def fmpinn_interior_loss(model, params, batch: SampleBatch, problem: ProblemDefinition):
    """Interior parts of the mixed loss.

    Returns:
        tuple: (interior_pde, interior_flux) with
            interior_pde = |Omega|/N * sum |-div phi - f|^2 and
            interior_flux = |Omega|/N * sum |phi - A grad u|^2.
    """
    x = np.asarray(batch.interior, dtype=float)
    _check_points(x, "interior")
    dim = x.shape[-1]
    divergence, grad_u, flux = 0.0, [], None
    for k in range(dim):
        out = model.forward(params, ad.lift_input(x, k, order=1))
        if len(out.flux) != dim:
            raise ConfigurationError(
                f"The mixed loss needs {dim} flux outputs, the model has {len(out.flux)}"
            )
        if flux is None:
            flux = [_primal(component) for component in out.flux]
        divergence = ad.add(divergence, _first(out.flux[k]))
        grad_u.append(_first(out.u))
    coefficient = np.asarray(ad.value_of(problem.coefficient(x)), dtype=float)
    forcing = np.asarray(ad.value_of(problem.forcing(x)), dtype=float)
    weight = batch.domain_measure / x.shape[0]
    residual = ad.sub(ad.neg(divergence), forcing)
    pde = weighted_square_sum(residual, weight)
    mismatch = [ad.sub(flux[k], ad.mul(coefficient, grad_u[k])) for k in range(dim)]
    if dim == 1:
        flux_part = weighted_square_sum(mismatch[0], weight)
    else:
        flux_part = weighted_square_sum(ad.concatenate(mismatch, axis=0), weight)
    return pde, flux_part


def boundary_loss(model, params, batch: SampleBatch, problem: ProblemDefinition):
    """(1/N_bd) * sum (u(x_b) - g(x_b))^2."""
    x = np.asarray(batch.boundary, dtype=float)
    _check_points(x, "boundary")
    u = model.forward(params, x).u
    target = np.asarray(ad.value_of(problem.boundary(x)), dtype=float)
    return weighted_square_sum(ad.sub(u, target), 1.0 / x.shape[0])


def gamma_schedule(
    epoch: int,
    max_epochs: int,
    gamma0: float,
    breakpoints: Sequence[Fraction] = GAMMA_BREAKPOINTS,
    multipliers: Sequence[float] = GAMMA_MULTIPLIERS,
) -> float:
    """Piecewise constant boundary penalty.

    The interval [0, max_epochs) is cut at the given fractions; every interval
    is closed on the left, so epoch = 0.1 * max_epochs already gets the second
    multiplier.

    Raises:
        ConfigurationError: If epoch is outside [0, max_epochs).
    """
    if len(multipliers) != len(breakpoints) + 1:
        raise ConfigurationError("The gamma schedule needs one multiplier more than breakpoints")
    if not 0 <= epoch < max_epochs:
        raise ConfigurationError(f"Epoch {epoch} outside [0, {max_epochs})")
    position = Fraction(int(epoch), int(max_epochs))
    return float(gamma0 * multipliers[bisect_right(list(breakpoints), position)])


@dataclass(frozen=True)
class GammaSchedule:
    """Callable boundary penalty schedule epoch -> gamma.

    Attributes:
        gamma0 (float): Base penalty.
        max_epochs (int): Epoch budget M_max.
        breakpoints (tuple of Fraction): Interval cut points as budget fractions.
        multipliers (tuple of float): Multiplier of gamma0 on each interval.
    """

    gamma0: float
    max_epochs: int
    breakpoints: tuple = GAMMA_BREAKPOINTS
    multipliers: tuple = GAMMA_MULTIPLIERS

    def __call__(self, epoch: int) -> float:
        return gamma_schedule(
            epoch, self.max_epochs, self.gamma0, self.breakpoints, self.multipliers
        )

    def table(self, epochs: Sequence[int]):
        """Pairs (epoch, gamma) for the given epochs."""
        return [(int(epoch), self(epoch)) for epoch in epochs]


def _breakdown(pde, flux, bd, gamma: float, beta: float) -> LossBreakdown:
    objective = ad.add(ad.add(pde, ad.mul(beta, flux)), ad.mul(gamma, bd))
    return LossBreakdown(
        interior_pde=float(ad.value_of(pde)),
        interior_flux=float(ad.value_of(flux)),
        boundary=float(ad.value_of(bd)),
        gamma=float(gamma),
        beta=float(beta),
        total=float(ad.value_of(objective)),
        objective=objective,
    )


def fmpinn_total_loss(
    model,
    params,
    batch: SampleBatch,
    problem: ProblemDefinition,
    epoch: int,
    schedule: Callable[[int], float],
    beta: float = 10.0,
) -> LossBreakdown:
    """interior_pde + beta * interior_flux + gamma(epoch) * boundary."""
    if not beta > 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    pde, flux = fmpinn_interior_loss(model, params, batch, problem)
    bd = boundary_loss(model, params, batch, problem)
    return _breakdown(pde, flux, bd, schedule(epoch), beta)


def mpinn_interior_loss(model, params, batch: SampleBatch, problem: ProblemDefinition):
    """Classical residual (1/N) * sum |-div(A grad u) - f|^2.

    div(A grad u) = sum_k (d_k A d_k u + A d_k^2 u), with second derivatives
    of the model from second-order duals and d_k A from first-order duals.
    """
    x = np.asarray(batch.interior, dtype=float)
    _check_points(x, "interior")
    divergence = 0.0
    for k in range(x.shape[-1]):
        u = model.forward(params, ad.lift_input(x, k, order=2)).u
        a = problem.coefficient(ad.lift_input(x, k, order=1))
        term = ad.add(
            ad.mul(ad.value_of(_first(a)), _first(u)),
            ad.mul(np.asarray(ad.value_of(_primal(a))), _second(u)),
        )
        divergence = ad.add(divergence, term)
    forcing = np.asarray(ad.value_of(problem.forcing(x)), dtype=float)
    residual = ad.sub(ad.neg(divergence), forcing)
    return weighted_square_sum(residual, 1.0 / x.shape[0])


def mpinn_total_loss(
    model,
    params,
    batch: SampleBatch,
    problem: ProblemDefinition,
    epoch: int,
    schedule: Callable[[int], float],
) -> LossBreakdown:
    """Residual loss plus gamma(epoch) * boundary; the flux part is zero."""
    pde = mpinn_interior_loss(model, params, batch, problem)
    bd = boundary_loss(model, params, batch, problem)
    return _breakdown(pde, 0.0, bd, schedule(epoch), 0.0)
