"""Collocation sampling on box domains and deterministic evaluation grids."""

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .exceptions import ConfigurationError

logger = logging.getLogger("fmpinn")

# Sub-stream identifiers mixed into the seed sequence.
STREAM_INTERIOR = 0
STREAM_BOUNDARY = 1
STREAM_TEST = 2
STREAM_PROBE = 3
STREAM_INIT = 4


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d].

    Attributes:
        lo (tuple of float): Lower corner.
        hi (tuple of float): Upper corner.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or len(lo) == 0:
            raise ConfigurationError(f"Box corners {lo} and {hi} do not match")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigurationError(f"Degenerate box: lo {lo} must be below hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        """The box [lo, hi]^dim."""
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        """Dimension d."""
        return len(self.lo)

    @property
    def edges(self) -> np.ndarray:
        """Edge lengths hi - lo."""
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def measure(self) -> float:
        """Lebesgue measure |Omega|."""
        return float(np.prod(self.edges))

    def contains(self, points, strict: bool = False) -> np.ndarray:
        """Boolean mask of points inside the box (open box when strict)."""
        points = np.atleast_2d(points)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        if strict:
            return np.all((points > lo) & (points < hi), axis=-1)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


@dataclass
class SampleBatch:
    """Interior and boundary collocation points of one training step.

    Attributes:
        interior (np.ndarray): Points of shape (N_in, d), inside the open box.
        boundary (np.ndarray): Points of shape (N_bd, d), each on one face.
        domain_measure (float): |Omega|.
        seed_state (dict): Seed, epoch and stream identifiers that reproduce
            the batch.
    """

    interior: np.ndarray
    boundary: np.ndarray
    domain_measure: float
    seed_state: dict = field(default_factory=dict)

    @property
    def n_interior(self) -> int:
        return int(self.interior.shape[0])

    @property
    def n_boundary(self) -> int:
        return int(self.boundary.shape[0])

    def permuted(self, seed: int) -> "SampleBatch":
        """The same batch with both point sets shuffled."""
        rng = make_rng(seed)
        return SampleBatch(
            interior=self.interior[rng.permutation(self.n_interior)],
            boundary=self.boundary[rng.permutation(self.n_boundary)],
            domain_measure=self.domain_measure,
            seed_state=dict(self.seed_state),
        )


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator (Philox) for a seed and optional sub-stream ids."""
    sequence = np.random.SeedSequence([int(seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(sequence))


def _check_count(n: int, what: str):
    if int(n) != n or n <= 0:
        raise ConfigurationError(f"Number of {what} points must be a positive integer, got {n}")


def sample_interior(n: int, box: Box, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. uniform points in the open box.

    Returns:
        np.ndarray: Array of shape (n, d).
    """
    _check_count(n, "interior")
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    points = lo + rng.random((int(n), box.dim)) * (hi - lo)
    # keep the open box even for a draw of exactly 0
    return np.clip(points, np.nextafter(lo, hi), np.nextafter(hi, lo))


def sample_boundary(n: int, box: Box, rng: np.random.Generator) -> np.ndarray:
    """Draw n points on the boundary of the box.

    Each point picks one of the 2d faces uniformly and is uniform on that face
    (its other coordinates lie strictly inside). In one dimension the points
    alternate between the two endpoints.

    Returns:
        np.ndarray: Array of shape (n, d).
    """
    _check_count(n, "boundary")
    n = int(n)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    if box.dim == 1:
        return np.where(np.arange(n) % 2 == 0, lo[0], hi[0]).reshape(n, 1)
    faces = rng.integers(0, 2 * box.dim, size=n)
    points = sample_interior(n, box, rng)
    axis, upper = faces // 2, faces % 2 == 1
    points[np.arange(n), axis] = np.where(upper, hi[axis], lo[axis])
    return points


def face_counts(points, box: Box) -> np.ndarray:
    """Number of points pinned to each face, ordered (lo_1, hi_1, lo_2, ...)."""
    points = np.atleast_2d(points)
    counts = []
    for k in range(box.dim):
        counts.append(int(np.sum(points[:, k] == box.lo[k])))
        counts.append(int(np.sum(points[:, k] == box.hi[k])))
    return np.asarray(counts)


def sample_batch(
    box: Box, n_interior: int, n_boundary: int, seed: int, epoch: int = 0
) -> SampleBatch:
    """Draw the collocation batch of one epoch.

    Interior and boundary points come from independent sub-streams derived
    from (seed, stream, epoch), so a batch depends on nothing but these.
    """
    interior = sample_interior(n_interior, box, make_rng(seed, STREAM_INTERIOR, epoch))
    boundary = sample_boundary(n_boundary, box, make_rng(seed, STREAM_BOUNDARY, epoch))
    return SampleBatch(
        interior=interior,
        boundary=boundary,
        domain_measure=box.measure,
        seed_state={"seed": int(seed), "epoch": int(epoch), "generator": "philox"},
    )


def grid_axes(box: Box, h: float, pinned: Optional[Mapping[int, float]] = None):
    """Equidistant nodes along every axis of the box.

    Args:
        box (Box): The domain.
        h (float): Mesh size, must divide every edge length.
        pinned (dict, optional): Axis index -> pinned coordinate value.

    Returns:
        list of np.ndarray: One node array per axis.
    """
    if not h > 0:
        raise ConfigurationError(f"Mesh size must be positive, got {h}")
    pinned = dict(pinned or {})
    axes = []
    for k, (lo, hi) in enumerate(zip(box.lo, box.hi)):
        if k in pinned:
            value = float(pinned[k])
            if not lo <= value <= hi:
                raise ConfigurationError(f"Slice value {value} outside [{lo}, {hi}] on axis {k}")
            axes.append(np.array([value]))
            continue
        cells = int(round((hi - lo) / h))
        if cells < 1 or abs((hi - lo) - cells * h) > 1e-12:
            raise ConfigurationError(f"Mesh size {h} does not divide the edge [{lo}, {hi}]")
        axes.append(np.linspace(lo, hi, cells + 1))
    unknown = set(pinned) - set(range(box.dim))
    if unknown:
        raise ConfigurationError(
            f"Slice axes {sorted(unknown)} out of range for dimension {box.dim}"
        )
    return axes


def eval_grid(box: Box, h: float, pinned: Optional[Mapping[int, float]] = None) -> np.ndarray:
    """Tensor-product grid of the box, row-major by coordinate order.

    Returns:
        np.ndarray: Array of shape (n_points, d).
    """
    axes = grid_axes(box, h, pinned)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    logger.debug("Evaluation grid with %s points (h=%s)", len(points), h)
    return points


def random_test_points(box: Box, n: int, seed: int) -> np.ndarray:
    """Uniform test points drawn from the dedicated test stream."""
    return sample_interior(n, box, make_rng(seed, STREAM_TEST))


def ks_statistic(samples: Sequence[float], lo: float, hi: float) -> float:
    """Kolmogorov-Smirnov distance of samples to the uniform law on [lo, hi]."""
    result = stats.kstest(np.asarray(samples, dtype=float), "uniform", args=(lo, hi - lo))
    return float(result.statistic)
