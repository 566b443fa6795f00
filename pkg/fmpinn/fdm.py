"""Finite-difference reference solver for -div(A grad u) = f on boxes, d <= 3.

The scheme is the flux-conservative (2d + 1)-point stencil on a uniform grid
of mesh size h, with harmonic-mean face coefficients
A_{i+1/2} = 2 / (1/A_i + 1/A_{i+1}). Dirichlet nodes are eliminated, which
leaves a symmetric positive-definite system for the interior nodes.
"""

import csv
import logging
import math
import struct
from collections import namedtuple
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import linalg as sla

from . import autodiff as ad
from .constants import GRID_MAGIC
from .exceptions import ConfigurationError, SolverError
from .problems import ProblemDefinition
from .sampling import Box, grid_axes

logger = logging.getLogger("fmpinn")

FdmSystem = namedtuple("FdmSystem", ["matrix", "rhs", "axes", "index", "nodal_boundary"])
"""Assembled interior system: sparse matrix (scaled by h^2), right-hand side,
grid node axes, the full-grid array mapping nodes to unknowns (-1 on the
boundary) and g at every node."""

ConvergenceResult = namedtuple(
    "ConvergenceResult", ["order", "errors", "mesh_sizes", "reliable", "monotone"]
)
"""Observed order of convergence, the max nodal errors per mesh size and two
flags: `reliable` is False when the errors sit at rounding level, `monotone` is
False when they do not decrease with h."""


@dataclass
class GridField:
    """Nodal values on a uniform tensor grid.

    Attributes:
        domain (Box): The box.
        h (float): Mesh size.
        values (np.ndarray): Values with one axis per coordinate (row-major).
    """

    domain: Box
    h: float
    values: np.ndarray

    @property
    def axes(self):
        """Node coordinates along each axis."""
        return grid_axes(self.domain, self.h)

    def points(self) -> np.ndarray:
        """All nodes as an array of shape (n_nodes, d), row-major."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def save(self, path: str):
        """Write the field as a flat binary file.

        Layout: magic, uint32 dimension, float64 h, float64 lo and hi corners,
        uint64 node count per axis, then little-endian float64 values.
        """
        values = np.ascontiguousarray(self.values, dtype="<f8")
        with open(path, "wb") as f:
            f.write(GRID_MAGIC)
            f.write(struct.pack("<I", self.domain.dim))
            f.write(struct.pack("<d", self.h))
            f.write(struct.pack(f"<{self.domain.dim}d", *self.domain.lo))
            f.write(struct.pack(f"<{self.domain.dim}d", *self.domain.hi))
            f.write(struct.pack(f"<{self.domain.dim}Q", *values.shape))
            f.write(values.tobytes())

    @classmethod
    def load(cls, path: str) -> "GridField":
        """Read a field written by `save`."""
        with open(path, "rb") as f:
            if f.read(len(GRID_MAGIC)) != GRID_MAGIC:
                raise ConfigurationError(f"{path} is not a grid field file")
            (dim,) = struct.unpack("<I", f.read(4))
            (h,) = struct.unpack("<d", f.read(8))
            lo = struct.unpack(f"<{dim}d", f.read(8 * dim))
            hi = struct.unpack(f"<{dim}d", f.read(8 * dim))
            shape = struct.unpack(f"<{dim}Q", f.read(8 * dim))
            values = np.frombuffer(f.read(), dtype="<f8")
        if values.size != int(np.prod(shape)):
            raise ConfigurationError(f"{path} holds {values.size} values, expected {shape}")
        return cls(Box(lo, hi), h, values.reshape(shape).astype(float))

    def write_csv(self, path: str, pinned: Optional[Mapping[int, float]] = None):
        """Export nodes and values as CSV, optionally restricted to a slice.

        Args:
            path (str): Output file.
            pinned (dict, optional): Axis index -> coordinate of a grid plane.
        """
        points = self.points()
        values = self.values.ravel()
        mask = np.ones(len(points), dtype=bool)
        for axis, value in (pinned or {}).items():
            mask &= np.isclose(points[:, axis], value, rtol=0.0, atol=1e-12)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow([f"x{k + 1}" for k in range(self.domain.dim)] + ["u"])
            for point, value in zip(points[mask], values[mask]):
                writer.writerow([repr(float(c)) for c in point] + [repr(float(value))])


def _nodes(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _evaluate(fn, points, shape) -> np.ndarray:
    values = np.asarray(ad.value_of(fn(points)), dtype=float)
    return np.broadcast_to(values, (len(points),)).reshape(shape)


def check_resolution(problem: ProblemDefinition, h: float, allow_underresolved: bool = False):
    """Require h <= eps / 10 for the finest scale eps of the problem.

    Raises:
        ConfigurationError: If the mesh is too coarse and no override is given.
    """
    if not problem.epsilons:
        return
    finest = min(problem.epsilons)
    if h <= finest / 10 * (1 + 1e-12):
        return
    message = f"Mesh size {h:g} does not resolve the scale {finest:g} of {problem.name}"
    if not allow_underresolved:
        raise ConfigurationError(message + f" (need h <= {finest / 10:g})")
    logger.warning("%s; continuing on request", message)


def assemble(problem: ProblemDefinition, h: float) -> FdmSystem:
    """Assemble the interior system of the harmonic-mean stencil, scaled by h^2."""
    axes = grid_axes(problem.domain, h)
    shape = tuple(len(a) for a in axes)
    if min(shape) < 3:
        raise ConfigurationError(f"Mesh size {h} leaves no interior nodes")
    nodes = _nodes(axes)
    coefficient = _evaluate(problem.coefficient, nodes, shape)
    if not np.all(coefficient > 0):
        raise SolverError(f"Coefficient of {problem.name} is not positive on the grid")
    boundary = _evaluate(problem.boundary, nodes, shape)

    interior = tuple(slice(1, -1) for _ in shape)
    index = -np.ones(shape, dtype=np.int64)
    n_unknowns = int(np.prod([n - 2 for n in shape]))
    index[interior] = np.arange(n_unknowns).reshape([n - 2 for n in shape])

    forcing = _evaluate(problem.forcing, nodes[index.ravel() >= 0], (n_unknowns,))
    rhs = h * h * forcing
    diagonal = np.zeros(n_unknowns)
    rows, cols, vals = [], [], []
    for k in range(len(shape)):
        # faces along axis k between interior lines of the other axes
        left = tuple(slice(0, -1) if j == k else slice(1, -1) for j in range(len(shape)))
        right = tuple(slice(1, None) if j == k else slice(1, -1) for j in range(len(shape)))
        a_left, a_right = coefficient[left].ravel(), coefficient[right].ravel()
        face = 2.0 * a_left * a_right / (a_left + a_right)
        i_left, i_right = index[left].ravel(), index[right].ravel()
        for own, other, other_side in ((i_left, i_right, right), (i_right, i_left, left)):
            active = own >= 0
            np.add.at(diagonal, own[active], face[active])
            coupled = active & (other >= 0)
            rows.append(own[coupled])
            cols.append(other[coupled])
            vals.append(-face[coupled])
            eliminated = active & (other < 0)
            g = boundary[other_side].ravel()
            np.add.at(rhs, own[eliminated], face[eliminated] * g[eliminated])
    rows.append(np.arange(n_unknowns))
    cols.append(np.arange(n_unknowns))
    vals.append(diagonal)
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknowns, n_unknowns),
    ).tocsr()
    return FdmSystem(matrix, rhs, axes, index, boundary)


def iteration_cap(n_unknowns: int, dim: int) -> int:
    """Maximum number of CG iterations for a system of this size."""
    return 1000 + 100 * int(math.ceil(n_unknowns ** (1.0 / dim)))


def definite_operator(matrix) -> sla.LinearOperator:
    """The matrix as a linear operator that checks the curvature v^T A v of
    every nonzero vector it is applied to.

    Conjugate gradients applies the operator to its search directions, so a
    non-positive curvature there is a breakdown.

    Raises:
        SolverError: On the first nonzero v with v^T A v <= 0.
    """

    def matvec(v):
        v = np.ravel(v)
        product = matrix @ v
        curvature = float(v @ product)
        if curvature <= 0 and np.any(v):
            raise SolverError(
                f"System matrix is not positive definite (curvature {curvature:.3e})"
            )
        return product

    return sla.LinearOperator(matrix.shape, matvec=matvec, dtype=float)


def fdm_solve(
    problem: ProblemDefinition,
    h: float,
    method: str = "auto",
    x0: Optional[np.ndarray] = None,
    rtol: float = 1e-10,
    allow_underresolved: bool = False,
) -> GridField:
    """Solve the problem on a grid of mesh size h.

    Args:
        problem (ProblemDefinition): Problem of dimension 1, 2 or 3.
        h (float): Mesh size; must divide every edge of the domain.
        method (str): 'auto' solves 1D systems directly and uses
            Jacobi-preconditioned conjugate gradients otherwise; 'cg' and
            'direct' force one of them.
        x0 (np.ndarray, optional): Initial guess for CG over the unknowns.
        rtol (float): Relative residual target of CG.
        allow_underresolved (bool): Only warn when h > eps / 10.

    Returns:
        GridField: Nodal values, g on the boundary nodes.

    Raises:
        ConfigurationError: For unsupported dimensions or meshes.
        SolverError: If CG does not converge or the system is not definite.
    """
    if problem.dim not in (1, 2, 3):
        raise ConfigurationError(f"The finite-difference solver handles d <= 3, got {problem.dim}")
    if method not in ("auto", "cg", "direct"):
        raise ConfigurationError(f"Unknown solver method '{method}'")
    check_resolution(problem, h, allow_underresolved)
    system = assemble(problem, h)
    matrix, rhs = system.matrix, system.rhs
    n_unknowns = matrix.shape[0]
    diagonal = matrix.diagonal()
    if not np.all(diagonal > 0):
        raise SolverError("System matrix has a non-positive diagonal entry")

    if method == "direct" or (method == "auto" and problem.dim == 1):
        solution = sla.spsolve(matrix.tocsc(), rhs)
        iterations, residual = 0, float(np.linalg.norm(matrix @ solution - rhs))
    else:
        counter = {"iterations": 0}

        def count(_):
            counter["iterations"] += 1

        preconditioner = sla.LinearOperator(
            matrix.shape, matvec=lambda r: r / diagonal, dtype=float
        )
        cap = iteration_cap(n_unknowns, problem.dim)
        solution, info = sla.cg(
            definite_operator(matrix),
            rhs,
            x0=x0,
            rtol=rtol,
            atol=0.0,
            maxiter=cap,
            M=preconditioner,
            callback=count,
        )
        iterations = counter["iterations"]
        scale = max(float(np.linalg.norm(rhs)), np.finfo(float).tiny)
        residual = float(np.linalg.norm(matrix @ solution - rhs)) / scale
        if info != 0:
            raise SolverError(
                f"Conjugate gradients stopped after {iterations} iterations "
                f"with relative residual {residual:.3e} (info={info})",
                iterations=iterations,
                residual=residual,
            )
    if not np.all(np.isfinite(solution)):
        raise SolverError("Finite-difference solution is not finite", iterations, residual)

    values = system.nodal_boundary.copy()
    values[system.index >= 0] = solution
    logger.info(
        "FDM solve for %s: h=%g, %s unknowns, %s iterations, residual %.3e",
        problem.name,
        h,
        n_unknowns,
        iterations,
        residual,
    )
    return GridField(problem.domain, h, values)


def interpolate(field: GridField, x) -> np.ndarray:
    """Multilinear interpolation of a grid field at points x.

    Args:
        field (GridField): The field.
        x (array-like): One point of shape (d,) or points of shape (n, d).

    Returns:
        np.ndarray: Values of shape (n,) (a scalar array for a single point).

    Raises:
        ConfigurationError: If a point lies outside the domain.
    """
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if not np.all(field.domain.contains(points)):
        raise ConfigurationError("Interpolation point outside the grid domain")
    interpolator = RegularGridInterpolator(tuple(field.axes), field.values, method="linear")
    values = interpolator(points)
    return values[0] if single else values


def nodal_error(problem: ProblemDefinition, field: GridField) -> float:
    """Max nodal error of a field against the exact solution."""
    if not problem.has_exact:
        raise ConfigurationError(f"Problem '{problem.name}' has no exact solution")
    points = field.points()
    exact = _evaluate(problem.exact_u, points, field.values.shape)
    return float(np.max(np.abs(field.values - exact)))


def relative_error(problem: ProblemDefinition, field: GridField) -> float:
    """Relative l2 error of a field against the exact solution over all nodes."""
    if not problem.has_exact:
        raise ConfigurationError(f"Problem '{problem.name}' has no exact solution")
    points = field.points()
    exact = _evaluate(problem.exact_u, points, field.values.shape)
    return float(np.linalg.norm(field.values - exact) / np.linalg.norm(exact))


def convergence_order(
    problem: ProblemDefinition, mesh_sizes: Sequence[float], method: str = "auto"
) -> ConvergenceResult:
    """Observed order: least-squares slope of log(error) against log(h).

    Args:
        problem (ProblemDefinition): Problem with an exact solution.
        mesh_sizes (sequence of float): At least three sizes in geometric
            progression.
        method (str): Solver method passed to `fdm_solve`.
    """
    hs = np.asarray(sorted(mesh_sizes, reverse=True), dtype=float)
    if len(hs) < 3:
        raise ConfigurationError("Convergence studies need at least three mesh sizes")
    ratios = hs[1:] / hs[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9, atol=0.0):
        raise ConfigurationError(f"Mesh sizes {list(hs)} are not in geometric progression")
    errors = np.asarray([nodal_error(problem, fdm_solve(problem, h, method)) for h in hs])
    finest = _nodes(grid_axes(problem.domain, hs[-1]))
    scale = max(1.0, float(np.max(np.abs(_evaluate(problem.exact_u, finest, (-1,))))))
    reliable = bool(np.min(errors) > 1e-11 * scale)
    order = float(np.polyfit(np.log(hs), np.log(np.maximum(errors, np.finfo(float).tiny)), 1)[0])
    monotone = bool(np.all(np.diff(errors) < 0))
    if not monotone:
        logger.warning("Errors %s of %s do not decrease monotonically", list(errors), problem.name)
    if not reliable:
        logger.warning("Errors of %s are at rounding level; the order is unreliable", problem.name)
    return ConvergenceResult(order, list(errors), list(hs), reliable, monotone)
