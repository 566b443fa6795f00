"""Fast self-checks of the solver stack.

Each check is a function returning a short detail string and raising
`AssertionError` when the property it tests does not hold. `run_checks` runs
them all (or a selection) and collects a `CheckResult` per check.
"""

import logging
from collections import namedtuple
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .exceptions import CheckFailed, FmpinnError
from .fdm import fdm_solve, interpolate
from .loss import GammaSchedule, boundary_loss, fmpinn_interior_loss, fmpinn_total_loss
from .network import (
    AGGREGATIONS,
    FIRST_ACTIVATIONS,
    AnalyticModel,
    MscaleNetwork,
    NetworkConfig,
    Parameters,
)
from .problems import ProblemDefinition, constant, coordinate, get_problem
from .sampling import Box, sample_batch
from .trainer import lr_schedule, relative_l2

logger = logging.getLogger("fmpinn")

CheckResult = namedtuple("CheckResult", ["name", "passed", "detail"])

# Epoch budget and base penalty of the reference schedule table.
SCHEDULE_EPOCHS = 50000
SCHEDULE_GAMMA0 = 10.0
SCHEDULE_TABLE = (
    (0, 10.0),
    (4999, 10.0),
    (5000, 100.0),
    (9999, 100.0),
    (10000, 500.0),
    (12499, 500.0),
    (12500, 1000.0),
    (24999, 1000.0),
    (25000, 2000.0),
    (37499, 2000.0),
    (37500, 5000.0),
    (49999, 5000.0),
)
LR_TABLE = ((0, 0.01), (100, 0.00975), (250, 0.00950625))

# Tape gradients against finite differences: number of random networks, their
# size limit, batch size, relative step, tolerance and noise floor (fraction
# of the loss).
GRADIENT_NETWORKS = 50
GRADIENT_MAX_PARAMETERS = 500
GRADIENT_BATCH = 10
GRADIENT_STEP = 2e-4
GRADIENT_TOLERANCE = 1e-5
GRADIENT_FLOOR = 1e-6

CHECKS: Dict[str, Callable] = {}


def check(name: str):
    """Register a check function under a name."""

    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


def random_network(seed: int, dim: int = 1):
    """Small random architecture (scales, depth, widths, activations, aggregation)
    and its initial parameters, both drawn from the seed."""
    rng = np.random.default_rng(seed)
    n_scales = int(rng.integers(1, 4))
    scales = sorted(float(a) for a in rng.choice([1, 2, 3, 4], size=n_scales, replace=False))
    hidden = tuple(int(w) for w in rng.integers(2, 6, size=int(rng.integers(1, 4))))
    config = NetworkConfig(
        dim_in=dim,
        dim_out=dim + 1,
        scales=scales,
        hidden=hidden,
        first_activation=str(rng.choice(FIRST_ACTIVATIONS)),
        # requ has a jump in its second derivative
        hidden_activation=str(rng.choice(["sincos", "tanh"])),
        soften=float(rng.choice([0.5, 1.0])),
        aggregation=str(rng.choice(AGGREGATIONS)),
        resnet_skips=bool(rng.integers(0, 2)),
    )
    model = MscaleNetwork(config)
    return model, model.init_parameters(seed)


def gradient_errors(model, params: Parameters, problem: ProblemDefinition, seed: int = 0):
    """Per-coordinate relative error of the tape gradient of the mixed loss.

    The reference is the five-point central difference. Errors are measured
    against max(|tape|, |difference|, GRADIENT_FLOOR * |loss|); derivatives
    below that level are at the rounding noise of the differences.
    """
    batch = sample_batch(problem.domain, GRADIENT_BATCH, 2, seed=seed)
    schedule = GammaSchedule(SCHEDULE_GAMMA0, 100)

    def total(p):
        return fmpinn_total_loss(model, p, batch, problem, 0, schedule).objective

    result = ad.record_and_backprop(total, params)
    gradient = Parameters(result.gradient).flatten()
    level = GRADIENT_FLOOR * abs(float(result.loss))
    vector = params.flatten()
    errors = np.empty(vector.size)
    for index in range(vector.size):
        h = GRADIENT_STEP * max(1.0, abs(vector[index]))
        values = []
        for offset in (2.0, 1.0, -1.0, -2.0):
            shifted = vector.copy()
            shifted[index] += offset * h
            values.append(float(total(params.unflatten(shifted))))
        approx = (-values[0] + 8.0 * values[1] - 8.0 * values[2] + values[3]) / (12.0 * h)
        scale = max(abs(gradient[index]), abs(approx), level)
        errors[index] = abs(gradient[index] - approx) / scale
    return errors


def _small_network(dim: int = 1, seed: int = 3):
    config = NetworkConfig(dim_in=dim, dim_out=dim + 1, scales=(1.0, 2.0), hidden=(4, 4))
    model = MscaleNetwork(config)
    return model, model.init_parameters(seed)


@check("gamma_schedule_table")
def check_gamma_schedule(schedule: Optional[Callable[[int], float]] = None) -> str:
    """The boundary penalty matches the reference table at every breakpoint."""
    schedule = schedule or GammaSchedule(SCHEDULE_GAMMA0, SCHEDULE_EPOCHS)
    wrong = [(e, schedule(e), g) for e, g in SCHEDULE_TABLE if schedule(e) != g]
    assert not wrong, f"(epoch, got, expected): {wrong}"
    return f"{len(SCHEDULE_TABLE)} epochs match"


@check("lr_schedule_table")
def check_lr_schedule() -> str:
    wrong = [(e, lr_schedule(e), lr) for e, lr in LR_TABLE if lr_schedule(e) != lr]
    assert not wrong, f"(epoch, got, expected): {wrong}"
    return "0.01, 0.00975, 0.00950625"


@check("primitive_derivatives")
def check_primitive_derivatives() -> str:
    """Forward-mode derivatives of the unary primitives against central differences."""
    x = np.linspace(0.3, 1.7, 15)
    h = 1e-6
    worst = 0.0
    for name in ("sin", "cos", "tanh", "exp", "log", "sqrt", "square", "requ"):
        fn = ad.PRIMITIVES[name]
        exact = ad.value_of(fn(ad.Dual1(x, np.ones_like(x))).deriv)
        approx = (fn(x + h) - fn(x - h)) / (2 * h)
        error = float(np.max(np.abs(exact - approx) / np.maximum(1.0, np.abs(exact))))
        assert error < 1e-6, f"{name}: derivative error {error:.2e}"
        worst = max(worst, error)
    return f"max error {worst:.2e}"


@check("reverse_mode_gradient")
def check_reverse_gradient(n_networks: int = GRADIENT_NETWORKS) -> str:
    """Tape gradient of the mixed loss against central differences, every coordinate."""
    problem = quadratic_problem()
    worst, largest = 0.0, 0
    for seed in range(n_networks):
        model, params = random_network(seed)
        largest = max(largest, params.count)
        assert params.count <= GRADIENT_MAX_PARAMETERS, f"seed {seed}: {params.count} parameters"
        errors = gradient_errors(model, params, problem, seed)
        index = int(np.argmax(errors))
        assert errors[index] <= GRADIENT_TOLERANCE, (
            f"seed {seed}, coordinate {index}: relative error {errors[index]:.2e}"
        )
        worst = max(worst, float(errors[index]))
    return f"{n_networks} networks up to {largest} parameters, max relative error {worst:.2e}"


@check("input_derivatives")
def check_input_derivatives() -> str:
    """Forward-mode input derivatives of a 2D network against central differences."""
    model, params = _small_network(dim=2)
    x = np.random.default_rng(1).uniform(-1, 1, size=(10, 2))
    h = 1e-6
    worst = 0.0
    for k in range(2):
        exact = model.directional(params, x, k).d1
        step = np.zeros_like(x)
        step[:, k] = h
        approx = (model.forward_raw(params, x + step) - model.forward_raw(params, x - step)) / (
            2 * h
        )
        error = float(np.max(np.abs(exact - approx)))
        assert error < 1e-6, f"direction {k}: error {error:.2e}"
        worst = max(worst, error)
    return f"max error {worst:.2e}"


@check("fourier_layer_range")
def check_fourier_range() -> str:
    model, params = _small_network(dim=2)
    x = np.random.default_rng(2).uniform(-50, 50, size=(200, 2))
    scaled = np.asarray(model.config.scales).reshape(-1, 1, 1) * x
    features = model.first_layer(params, scaled)
    assert np.all(np.abs(features) <= 1.0), "Fourier features leave [-1, 1]"
    return f"{features.size} features in [-1, 1]"


@check("aggregation_equivalence")
def check_aggregation_equivalence() -> str:
    """A linear head with weights 1/(Q a_i) reproduces the scale-weighted mean."""
    mean_model, params = _small_network(dim=2)
    config = NetworkConfig(
        dim_in=2, dim_out=3, scales=(1.0, 2.0), hidden=(4, 4), aggregation="linear_head"
    )
    head_model = MscaleNetwork(config)
    weights = np.stack([np.eye(3) / (2 * a) for a in config.scales])
    head_params = Parameters(dict(params, **{"head.weight": weights, "head.bias": np.zeros(3)}))
    x = np.random.default_rng(4).uniform(-1, 1, size=(25, 2))
    error = float(
        np.max(np.abs(mean_model.forward_raw(params, x) - head_model.forward_raw(head_params, x)))
    )
    assert error <= 1e-14, f"difference {error:.2e}"
    return f"max difference {error:.2e}"


def _plug_in(problem: ProblemDefinition, seed: int = 5):
    model = AnalyticModel(problem.exact_u, problem.exact_flux)
    batch = sample_batch(problem.domain, 1000, 1000, seed)
    pde, flux = fmpinn_interior_loss(model, None, batch, problem)
    bd = boundary_loss(model, None, batch, problem)
    return float(pde), float(flux), float(bd)


@check("exact_solution_plug_in")
def check_exact_plug_in() -> str:
    """Closed-form (u, flux) pairs give vanishing loss parts."""
    details = []
    for name in ("ex1_eps0.1", "ex1_eps0.01", "ex2", "ex6"):
        pde, flux, bd = _plug_in(get_problem(name))
        assert pde <= 1e-8 and flux <= 1e-8, f"{name}: pde {pde:.2e}, flux {flux:.2e}"
        assert bd <= 1e-12, f"{name}: boundary {bd:.2e}"
        details.append(f"{name} {max(pde, flux):.1e}")
    return ", ".join(details)


@check("batch_permutation_invariance")
def check_permutation_invariance() -> str:
    problem = get_problem("ex1_eps0.1")
    model, params = _small_network()
    batch = sample_batch(problem.domain, 50, 10, seed=6)
    schedule = GammaSchedule(SCHEDULE_GAMMA0, 100)
    first = fmpinn_total_loss(model, params, batch, problem, 0, schedule)
    second = fmpinn_total_loss(model, params, batch.permuted(9), problem, 0, schedule)
    assert first.total == second.total, f"{first.total!r} != {second.total!r}"
    return f"total {first.total:.6e} under permutation"


def quadratic_problem(h_test: float = 1.0 / 128) -> ProblemDefinition:
    """-u'' = 2 on [0, 1] with u = x (1 - x)."""

    def exact_u(x):
        x1 = coordinate(x, 0)
        return ad.mul(x1, ad.sub(1.0, x1))

    return ProblemDefinition(
        name="quadratic",
        domain=Box((0.0,), (1.0,)),
        coefficient=constant(1.0),
        forcing=constant(2.0),
        boundary=constant(0.0),
        exact_u=exact_u,
        reference_h=h_test,
    )


@check("fdm_quadratic_exact")
def check_fdm_quadratic() -> str:
    problem = quadratic_problem()
    grid = fdm_solve(problem, 1.0 / 128)
    points = grid.points()
    error = float(np.max(np.abs(grid.values - ad.value_of(problem.exact_u(points)))))
    assert error <= 1e-12, f"max nodal error {error:.2e}"
    return f"max nodal error {error:.2e}"


@check("fdm_cross_validation")
def check_fdm_cross_validation() -> str:
    """FDM and the closed-form solution of the two-scale 1D problem agree."""
    problem = get_problem("ex1_eps0.1")
    grid = fdm_solve(problem, 1.0 / 1024)
    x = np.linspace(0.0, 1.0, 333)[:, None]
    rel = relative_l2(interpolate(grid, x), ad.value_of(problem.exact_u(x)))
    assert rel <= 1e-3, f"REL {rel:.2e}"
    return f"REL {rel:.2e} at h=1/1024"


@check("discrete_maximum_principle")
def check_maximum_principle() -> str:
    problem = get_problem("ex4")
    grid = fdm_solve(problem, 1.0 / 16)
    lowest = float(grid.values.min())
    assert lowest >= -1e-12, f"minimum {lowest:.2e}"
    return f"minimum {lowest:.2e}"


@check("sampling_in_box")
def check_sampling() -> str:
    box = Box((-1.0, 0.0, 2.0), (1.0, 0.5, 3.0))
    batch = sample_batch(box, 500, 120, seed=8)
    assert np.all(box.contains(batch.interior, strict=True)), "interior point on or outside"
    on_face = np.zeros(batch.n_boundary, dtype=bool)
    for k in range(box.dim):
        on_face |= (batch.boundary[:, k] == box.lo[k]) | (batch.boundary[:, k] == box.hi[k])
    assert np.all(on_face) and np.all(box.contains(batch.boundary)), "boundary point off faces"
    return f"{batch.n_interior} interior, {batch.n_boundary} boundary points"


def run_checks(
    names: Optional[Sequence[str]] = None,
    gamma_schedule: Optional[Callable[[int], float]] = None,
):
    """Run checks and collect their results.

    Args:
        names (sequence of str, optional): Checks to run; all when None.
        gamma_schedule (callable, optional): Schedule given to the boundary
            penalty check instead of the built-in one.

    Returns:
        list of CheckResult
    """
    results = []
    for name in names or list(CHECKS):
        if name not in CHECKS:
            results.append(CheckResult(name, False, "unknown check"))
            continue
        fn = CHECKS[name]
        try:
            detail = fn(gamma_schedule) if name == "gamma_schedule_table" else fn()
            results.append(CheckResult(name, True, detail))
        except (AssertionError, FmpinnError, ArithmeticError) as err:
            results.append(CheckResult(name, False, str(err)))
        logger.info("check %s: %s", name, "pass" if results[-1].passed else "FAIL")
    return results


def format_report(results) -> str:
    """One line per check, then a count."""
    width = max((len(result.name) for result in results), default=0)
    lines = [
        f"{'PASS' if result.passed else 'FAIL'}  {result.name:<{width}}  {result.detail}"
        for result in results
    ]
    passed = sum(result.passed for result in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)


def assert_all_passed(results):
    """Raise CheckFailed naming the failing checks."""
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise CheckFailed(f"{len(failed)} check(s) failed: {', '.join(failed)}", failed)

