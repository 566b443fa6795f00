"""Training loop: resampling, loss assembly, Adam updates and evaluation.

Every epoch draws a fresh collocation batch, records the total loss on a
tape, takes its parameter gradient with one reverse sweep and applies one Adam
update. Learning rate and boundary penalty follow fixed schedules of the
epoch index, so a run is fully determined by its configuration and seed.
"""

import logging
import math
import os
import time
from collections import namedtuple
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from .exceptions import ConfigurationError, NumericError, TrainingAborted
from .fdm import fdm_solve, interpolate
from .loss import GammaSchedule, fmpinn_total_loss, mpinn_total_loss
from .network import MscaleNetwork, NetworkConfig, Parameters, save_checkpoint
from .problems import ProblemDefinition, ellipticity_bounds
from .reporting import PointwiseError, RunRecord
from .sampling import eval_grid, random_test_points, sample_batch

logger = logging.getLogger("fmpinn")

METHODS = ("fmpinn", "mpinn")

# Points per forward pass during evaluation.
EVAL_CHUNK = 4096

ReferenceSet = namedtuple("ReferenceSet", ["points", "values", "source"])
"""Test points, reference solution values at them and where they came from."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings of one run.

    Attributes:
        epochs (int): Epoch budget M_max.
        lr0 (float): Initial learning rate.
        lr_decay (float): Fractional decay applied every `decay_every` epochs.
        decay_every (int): Epochs between two decays.
        eval_every (int): Epochs between two evaluations.
        n_interior (int): Interior points per epoch.
        n_boundary (int): Boundary points per epoch.
        beta (float): Flux weight of the mixed loss.
        gamma0 (float): Base boundary penalty.
        seed (int): Seed of initialization and sampling.
        method (str): 'fmpinn' or 'mpinn'.
        fixed_batch (bool): Reuse the epoch-0 batch instead of resampling.
        checkpoint_every_eval (bool): Also write a checkpoint at each evaluation.
    """

    epochs: int = 50000
    lr0: float = 0.01
    lr_decay: float = 0.025
    decay_every: int = 100
    eval_every: int = 1000
    n_interior: int = 3000
    n_boundary: int = 500
    beta: float = 10.0
    gamma0: float = 10.0
    seed: int = 0
    method: str = "fmpinn"
    fixed_batch: bool = False
    checkpoint_every_eval: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}")
        for name in ("decay_every", "eval_every", "n_interior", "n_boundary"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.lr0 > 0:
            raise ConfigurationError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.lr_decay < 1:
            raise ConfigurationError(f"lr_decay must lie in (0, 1), got {self.lr_decay}")
        if not self.gamma0 > 0:
            raise ConfigurationError(f"gamma0 must be positive, got {self.gamma0}")
        if self.method not in METHODS:
            raise ConfigurationError(f"Unknown method '{self.method}', expected one of {METHODS}")
        if self.method == "fmpinn" and not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")

    def lr(self, epoch: int) -> float:
        """Learning rate used at an epoch."""
        return lr_schedule(epoch, self.lr0, self.lr_decay, self.decay_every)

    def gamma_schedule(self) -> GammaSchedule:
        """Boundary penalty schedule over this epoch budget."""
        return GammaSchedule(self.gamma0, max(self.epochs, 1))

    def eval_epochs(self):
        """Epoch counts after which an evaluation is recorded."""
        epochs = list(range(self.eval_every, self.epochs + 1, self.eval_every))
        if self.epochs > 0 and (not epochs or epochs[-1] != self.epochs):
            epochs.append(self.epochs)
        return epochs

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        """Build a config from a dict as produced by `to_dict`."""
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"Unknown training settings: {sorted(unknown)}")
        return cls(**data)


@lru_cache(maxsize=512)
def _decayed(lr0: Fraction, keep: Fraction, steps: int) -> float:
    return float(lr0 * keep**steps)


def lr_schedule(epoch: int, lr0: float = 0.01, decay: float = 0.025, every: int = 100) -> float:
    """lr0 * (1 - decay) ** (epoch // every).

    The product is formed with exact rationals of the decimal inputs and
    rounded once, so 0.01 * 0.975**2 gives the double nearest 0.00950625.

    Raises:
        ConfigurationError: If epoch is negative.
    """
    if epoch < 0:
        raise ConfigurationError(f"Epoch must be non-negative, got {epoch}")
    lr0 = Fraction(str(float(lr0)))
    keep = 1 - Fraction(str(float(decay)))
    return _decayed(lr0, keep, int(epoch) // int(every))


@dataclass
class TrainState:
    """Optimizer state.

    Attributes:
        epoch (int): Completed epochs.
        params (Parameters): Current parameters.
        m (Parameters): Adam first moments.
        v (Parameters): Adam second moments.
        t (int): Number of updates applied.
        lr (float): Learning rate of the last update.
        rng_state (dict): Seed and epoch that reproduce the next batch.
    """

    epoch: int
    params: Parameters
    m: Parameters
    v: Parameters
    t: int = 0
    lr: float = 0.0
    rng_state: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, params: Parameters, lr: float = 0.0, seed: int = 0) -> "TrainState":
        zeros = params.map(lambda name, value: np.zeros_like(value))
        return cls(0, params, zeros, zeros.copy(), 0, lr, {"seed": seed, "epoch": 0})


def adam_step(state: TrainState, gradient, lr: Optional[float] = None, frozen=()) -> TrainState:
    """One bias-corrected Adam update.

    Args:
        state (TrainState): Current state.
        gradient (Mapping): Parameter name -> gradient array.
        lr (float, optional): Step size; defaults to state.lr.
        frozen (sequence of str): Names left unchanged.

    Returns:
        TrainState: New state with t incremented.

    Raises:
        NumericError: If a gradient entry is not finite.
        ConfigurationError: If a gradient shape differs from its parameter.
    """
    lr = state.lr if lr is None else lr
    for name, value in state.params.items():
        grad = np.asarray(gradient[name])
        if grad.shape != np.shape(value):
            raise ConfigurationError(
                f"Gradient of '{name}' has shape {grad.shape}, expected {np.shape(value)}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient for '{name}'", epoch=state.epoch)
    t = state.t + 1
    correction1 = 1 - ADAM_BETA1**t
    correction2 = 1 - ADAM_BETA2**t
    step_size = lr / correction1
    params, m, v = {}, {}, {}
    for name, value in state.params.items():
        grad = np.asarray(gradient[name], dtype=float)
        m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * grad
        v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * grad * grad
        if name in frozen:
            params[name] = value
            continue
        params[name] = value - step_size * m[name] / (np.sqrt(v[name] / correction2) + ADAM_EPS)
    return replace(state, params=Parameters(params), m=Parameters(m), v=Parameters(v), t=t, lr=lr)


def evaluation_points(problem: ProblemDefinition) -> np.ndarray:
    """Points of the problem's evaluation set."""
    evaluation = problem.evaluation_set
    if evaluation.kind == "grid":
        return eval_grid(problem.domain, evaluation.h, evaluation.pinned)
    if evaluation.kind == "random":
        return random_test_points(problem.domain, evaluation.n_points, evaluation.seed)
    raise ConfigurationError(f"Unknown evaluation set kind '{evaluation.kind}'")


def build_reference_set(problem: ProblemDefinition, method: str = "auto") -> ReferenceSet:
    """Test points with reference values: the exact solution when known,
    otherwise the finite-difference solution on the problem's reference mesh,
    interpolated to the points."""
    points = evaluation_points(problem)
    if problem.has_exact:
        values = np.asarray(ad.value_of(problem.exact_u(points)), dtype=float)
        return ReferenceSet(points, np.broadcast_to(values, (len(points),)).copy(), "exact")
    if problem.reference_h is None:
        raise ConfigurationError(f"Problem '{problem.name}' has neither exact solution nor mesh")
    grid = fdm_solve(problem, problem.reference_h, method=method, allow_underresolved=True)
    return ReferenceSet(points, interpolate(grid, points), f"fdm h={problem.reference_h:g}")


def predict(model, params, points, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """u at the points, evaluated in chunks."""
    points = np.asarray(points, dtype=float)
    values = [
        np.asarray(ad.value_of(model.forward(params, points[start : start + chunk]).u))
        for start in range(0, len(points), chunk)
    ]
    return np.concatenate(values) if values else np.zeros(0)


def relative_l2(prediction, reference) -> float:
    """sqrt(sum |prediction - reference|^2 / sum |reference|^2), exactly summed.

    Raises:
        NumericError: If the reference is identically zero.
    """
    prediction = np.asarray(prediction, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if prediction.shape != reference.shape:
        raise ConfigurationError(
            f"Prediction shape {prediction.shape} does not match reference {reference.shape}"
        )
    denominator = math.fsum((reference * reference).ravel())
    if denominator == 0:
        raise NumericError("Reference values are all zero; the relative error is undefined")
    diff = prediction - reference
    return math.sqrt(math.fsum((diff * diff).ravel()) / denominator)


def evaluate(model, params, points, reference_values):
    """REL and pointwise |u - u*| of a model on a test set.

    Returns:
        tuple: (rel, pointwise)
    """
    prediction = predict(model, params, points)
    reference = np.asarray(reference_values, dtype=float)
    return relative_l2(prediction, reference), np.abs(prediction - reference)


def check_compatible(problem: ProblemDefinition, net_config: NetworkConfig, method: str):
    """Raise ConfigurationError if the network does not fit the problem and method."""
    if net_config.dim_in != problem.dim:
        raise ConfigurationError(
            f"Network input dimension {net_config.dim_in} differs from problem "
            f"dimension {problem.dim}"
        )
    expected = problem.dim + 1 if method == "fmpinn" else 1
    if net_config.dim_out != expected:
        raise ConfigurationError(
            f"Method '{method}' needs {expected} outputs, the network has {net_config.dim_out}"
        )


def _loss_function(model, problem, batch, epoch, schedule, train_config):
    if train_config.method == "fmpinn":

        def objective(params):
            parts = fmpinn_total_loss(
                model, params, batch, problem, epoch, schedule, beta=train_config.beta
            )
            return parts.objective, replace(parts, objective=None)

    else:

        def objective(params):
            parts = mpinn_total_loss(model, params, batch, problem, epoch, schedule)
            return parts.objective, replace(parts, objective=None)

    return objective


def train(
    problem: ProblemDefinition,
    net_config: NetworkConfig,
    train_config: TrainConfig,
    reference: Optional[ReferenceSet] = None,
    output_dir: Optional[str] = None,
    callback: Optional[Callable] = None,
    config_hash: str = "",
    config_echo: Optional[dict] = None,
    schedule: Optional[Callable[[int], float]] = None,
):
    """Train a multi-scale network on a problem.

    Args:
        problem (ProblemDefinition): The problem.
        net_config (NetworkConfig): Architecture; dim_out must be d + 1 for
            the mixed method and 1 for the residual method.
        train_config (TrainConfig): Optimization settings.
        reference (ReferenceSet, optional): Test set; built from the problem
            when omitted.
        output_dir (str, optional): Directory for checkpoints.
        callback (callable, optional): Called as callback(epoch, breakdown)
            after every loss evaluation.
        config_hash (str): Hash stored in the run record.
        config_echo (dict, optional): Configuration stored in the run record.
        schedule (callable, optional): Boundary penalty schedule replacing
            the one of train_config.

    Returns:
        tuple: (final Parameters, RunRecord)

    Raises:
        ConfigurationError: If the configs do not fit together.
        TrainingAborted: On a numeric failure; carries the checkpoint of the
            last finite parameters and the partial record.
    """
    check_compatible(problem, net_config, train_config.method)
    model = MscaleNetwork(net_config)
    params = model.init_parameters(train_config.seed)
    lam_min, lam_max = ellipticity_bounds(problem, seed=train_config.seed)
    record = RunRecord(
        problem=problem.name,
        method=train_config.method,
        seed=train_config.seed,
        config_hash=config_hash or net_config.config_hash(),
        parameter_count=params.count,
        lambda_min=lam_min,
        lambda_max=lam_max,
        config=config_echo or {"network": net_config.to_dict(), "training": train_config.to_dict()},
    )
    logger.info(
        "Training %s on %s: %s parameters, %s epochs, config %s",
        train_config.method,
        problem.name,
        params.count,
        train_config.epochs,
        record.config_hash[:12],
    )
    if train_config.epochs == 0:
        record.status = "ok"
        return params, record

    if reference is None:
        reference = build_reference_set(problem)
    record.reference_source = reference.source
    schedule = schedule or train_config.gamma_schedule()
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
    fixed = None
    if train_config.fixed_batch:
        fixed = sample_batch(
            problem.domain, train_config.n_interior, train_config.n_boundary, train_config.seed
        )

    state = TrainState.initial(params, train_config.lr(0), train_config.seed)
    evaluations = set(train_config.eval_epochs())
    start = time.perf_counter()
    try:
        for epoch in range(train_config.epochs):
            batch = fixed or sample_batch(
                problem.domain,
                train_config.n_interior,
                train_config.n_boundary,
                train_config.seed,
                epoch,
            )
            lr = train_config.lr(epoch)
            objective = _loss_function(model, problem, batch, epoch, schedule, train_config)
            try:
                result = ad.record_and_backprop(objective, state.params, frozen=model.frozen)
            except NumericError as err:
                err.epoch = epoch
                raise
            breakdown = result.aux
            logger.debug(
                "epoch %s: pde=%.6e flux=%.6e boundary=%.6e total=%.6e",
                epoch,
                breakdown.interior_pde,
                breakdown.interior_flux,
                breakdown.boundary,
                breakdown.total,
            )
            if callback is not None:
                callback(epoch, breakdown)
            state.epoch = epoch
            state = adam_step(state, result.gradient, lr, frozen=model.frozen)
            state.epoch = epoch + 1
            state.rng_state = {"seed": train_config.seed, "epoch": epoch + 1}

            if state.epoch in evaluations:
                prediction = predict(model, state.params, reference.points)
                rel = relative_l2(prediction, reference.values)
                record.add_row(state.epoch, lr, breakdown, rel)
                if state.epoch == train_config.epochs:
                    record.pointwise = PointwiseError(
                        reference.points,
                        prediction,
                        reference.values,
                        np.abs(prediction - reference.values),
                    )
                elif output_dir and train_config.checkpoint_every_eval:
                    path = os.path.join(output_dir, f"checkpoint_{state.epoch:06d}.bin")
                    save_checkpoint(path, state.params, net_config)
                    record.artifacts[f"checkpoint_{state.epoch:06d}"] = path
    except NumericError as err:
        record.wall_time = time.perf_counter() - start
        record.status = "aborted"
        checkpoint = None
        if output_dir:
            checkpoint = os.path.join(output_dir, "checkpoint_last_finite.bin")
            save_checkpoint(checkpoint, state.params, net_config)
            record.artifacts["checkpoint"] = checkpoint
        epoch = err.epoch if err.epoch is not None else state.epoch
        logger.error("Training of %s aborted at epoch %s: %s", problem.name, epoch, err)
        raise TrainingAborted(
            f"Training aborted at epoch {epoch}: {err}",
            layer=err.layer,
            epoch=epoch,
            checkpoint=checkpoint,
            record=record,
        ) from err

    record.wall_time = time.perf_counter() - start
    record.status = "ok"
    if output_dir:
        path = os.path.join(output_dir, "checkpoint.bin")
        save_checkpoint(path, state.params, net_config)
        record.artifacts["checkpoint"] = path
    logger.info(
        "Finished %s on %s in %.1f s, final rel %.6e",
        train_config.method,
        problem.name,
        record.wall_time,
        record.final_rel,
    )
    return state.params, record
