# pylint: disable=missing-docstring

import csv
import logging
import os
import tempfile
import unittest
from unittest import mock

import numpy as np
import scipy.sparse as sp

from fmpinn import autodiff as ad
from fmpinn.checks import quadratic_problem
from fmpinn.exceptions import ConfigurationError, SolverError
from fmpinn.fdm import (
    FdmSystem,
    GridField,
    assemble,
    convergence_order,
    definite_operator,
    fdm_solve,
    interpolate,
    iteration_cap,
    nodal_error,
    relative_error,
)
from fmpinn.problems import ProblemDefinition, constant, coordinate, get_problem
from fmpinn.sampling import Box, make_rng, sample_interior

# Set up logging
logger = logging.getLogger("fmpinn")
logger.setLevel(logging.DEBUG)


def paraboloid_problem():
    """-Laplace u = -4 on the unit square with u = x1^2 + x2^2."""

    def exact_u(x):
        return ad.add(ad.square(coordinate(x, 0)), ad.square(coordinate(x, 1)))

    return ProblemDefinition(
        name="paraboloid",
        domain=Box.cube(0.0, 1.0, 2),
        coefficient=constant(1.0),
        forcing=constant(-4.0),
        boundary=exact_u,
        exact_u=exact_u,
    )


def eigenfunction_problem():
    """-Laplace u = 2 pi^2 u on the unit square with u = sin(pi x1) sin(pi x2)."""

    def exact_u(x):
        return ad.mul(
            ad.sin(ad.mul(np.pi, coordinate(x, 0))), ad.sin(ad.mul(np.pi, coordinate(x, 1)))
        )

    return ProblemDefinition(
        name="eigenfunction",
        domain=Box.cube(0.0, 1.0, 2),
        coefficient=constant(1.0),
        forcing=lambda x: ad.mul(2 * np.pi**2, exact_u(x)),
        boundary=constant(0.0),
        exact_u=exact_u,
    )


class TestSolve(unittest.TestCase):
    def test_quadratic_is_reproduced_exactly(self):
        problem = quadratic_problem()
        self.assertLessEqual(nodal_error(problem, fdm_solve(problem, 1.0 / 64)), 1e-12)
        grid = fdm_solve(paraboloid_problem(), 1.0 / 16, method="direct")
        self.assertLessEqual(nodal_error(paraboloid_problem(), grid), 1e-12)

    def test_boundary_values_are_kept(self):
        grid = fdm_solve(paraboloid_problem(), 1.0 / 8, method="direct")
        np.testing.assert_array_equal(grid.values[0, :], grid.axes[1] ** 2)
        np.testing.assert_array_equal(grid.values[:, -1], grid.axes[0] ** 2 + 1.0)

    def test_two_scale_problem(self):
        problem = get_problem("ex1_eps0.1")
        grid = fdm_solve(problem, 1.0 / 4096)
        self.assertLessEqual(relative_error(problem, grid), 1e-4)

    def test_cg_matches_direct_solve(self):
        problem = eigenfunction_problem()
        iterative = fdm_solve(problem, 1.0 / 32, method="cg", rtol=1e-12)
        direct = fdm_solve(problem, 1.0 / 32, method="direct")
        np.testing.assert_allclose(iterative.values, direct.values, rtol=0, atol=1e-9)

    def test_initial_guess_does_not_change_solution(self):
        problem = get_problem("ex3_eps0.05")
        h = 1.0 / 32
        first = fdm_solve(problem, h, rtol=1e-12, allow_underresolved=True)
        unknowns = assemble(problem, h).matrix.shape[0]
        guess = make_rng(0).uniform(-1.0, 1.0, unknowns)
        second = fdm_solve(problem, h, x0=guess, rtol=1e-12, allow_underresolved=True)
        np.testing.assert_allclose(first.values, second.values, rtol=1e-6, atol=1e-8)

    def test_maximum_principle(self):
        # f >= 0 and g = 0 give a non-negative discrete solution
        grid = fdm_solve(get_problem("ex3_eps0.05"), 1.0 / 32, allow_underresolved=True)
        self.assertGreaterEqual(float(grid.values.min()), -1e-12)
        self.assertGreater(float(grid.values.max()), 0.0)

    def test_resolution_check(self):
        problem = get_problem("ex1_eps0.1")
        with self.assertRaises(ConfigurationError):
            fdm_solve(problem, 1.0 / 64)
        with self.assertLogs("fmpinn", level="WARNING"):
            grid = fdm_solve(problem, 1.0 / 64, allow_underresolved=True)
        self.assertEqual(grid.values.shape, (65,))

    def test_invalid_requests(self):
        with self.assertRaises(ConfigurationError):
            fdm_solve(get_problem("ex6"), 0.25)
        with self.assertRaises(ConfigurationError):
            fdm_solve(quadratic_problem(), 1.0 / 64, method="multigrid")
        with self.assertRaises(ConfigurationError):
            fdm_solve(quadratic_problem(), 0.3)
        with self.assertRaises(ConfigurationError):
            fdm_solve(quadratic_problem(), 1.0)

    def test_non_positive_coefficient(self):
        problem = ProblemDefinition(
            name="negative",
            domain=Box((0.0,), (1.0,)),
            coefficient=constant(-1.0),
            forcing=constant(1.0),
            boundary=constant(0.0),
        )
        with self.assertRaises(SolverError):
            fdm_solve(problem, 1.0 / 8)

    def test_indefinite_system_breaks_down(self):
        # positive diagonal, eigenvalues 3, -1 and 1
        matrix = sp.csr_matrix([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        system = FdmSystem(
            matrix=matrix,
            rhs=np.array([1.0, 0.0, 0.0]),
            axes=[np.linspace(0.0, 1.0, 5)],
            index=np.array([-1, 0, 1, 2, -1]),
            nodal_boundary=np.zeros(5),
        )
        with mock.patch("fmpinn.fdm.assemble", return_value=system):
            with self.assertRaises(SolverError) as cm:
                fdm_solve(quadratic_problem(), 0.25, method="cg")
        self.assertIn("not positive definite", str(cm.exception))

    def test_curvature_check(self):
        operator = definite_operator(sp.identity(3, format="csr") * 2.0)
        np.testing.assert_array_equal(operator.matvec(np.array([1.0, 0.0, -1.0])), [2, 0, -2])
        np.testing.assert_array_equal(operator.matvec(np.zeros(3)), np.zeros(3))
        with self.assertRaises(SolverError):
            definite_operator(-sp.identity(2, format="csr")).matvec(np.array([0.0, 1.0]))



class TestAssembly(unittest.TestCase):
    def test_matrix_is_symmetric(self):
        system = assemble(get_problem("ex4"), 1.0 / 16)
        asymmetry = abs(system.matrix - system.matrix.T)
        self.assertEqual(asymmetry.max(), 0.0)
        self.assertEqual(system.matrix.shape, (31**2, 31**2))

    def test_constant_coefficient_stencil(self):
        system = assemble(quadratic_problem(), 0.25)
        np.testing.assert_array_equal(
            system.matrix.toarray(), [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]
        )
        np.testing.assert_array_equal(system.rhs, np.full(3, 2.0 / 16))

    def test_iteration_cap(self):
        self.assertEqual(iteration_cap(100, 2), 2000)


class TestConvergence(unittest.TestCase):
    def test_second_order(self):
        mesh_sizes = [1.0 / 32, 1.0 / 64, 1.0 / 128]
        result = convergence_order(eigenfunction_problem(), mesh_sizes)
        self.assertTrue(result.reliable)
        self.assertTrue(result.monotone)
        self.assertGreaterEqual(result.order, 1.9)
        self.assertLessEqual(result.order, 2.1)
        self.assertEqual(result.mesh_sizes, mesh_sizes)

    def test_two_scale_problem_resolved_mesh(self):
        # h well below epsilon = 0.1
        result = convergence_order(get_problem("ex1_eps0.1"), [1.0 / 256, 1.0 / 512, 1.0 / 1024])
        self.assertTrue(result.reliable)
        self.assertTrue(result.monotone)
        self.assertGreaterEqual(result.order, 1.8)
        self.assertLessEqual(result.order, 2.1)

    def test_exact_scheme_is_flagged_unreliable(self):
        result = convergence_order(quadratic_problem(), [1.0 / 8, 1.0 / 16, 1.0 / 32])
        self.assertFalse(result.reliable)

    def test_invalid_mesh_sequences(self):
        with self.assertRaises(ConfigurationError):
            convergence_order(quadratic_problem(), [1.0 / 8, 1.0 / 16])
        with self.assertRaises(ConfigurationError):
            convergence_order(quadratic_problem(), [1.0 / 8, 1.0 / 16, 1.0 / 64])


class TestInterpolation(unittest.TestCase):
    def setUp(self):
        box = Box.cube(0.0, 1.0, 2)
        self.field = GridField(box, 0.25, np.zeros((5, 5)))
        nodes = self.field.points()
        self.field.values = (1.0 + 2.0 * nodes[:, 0] + 3.0 * nodes[:, 1]).reshape(5, 5)

    def test_nodes(self):
        self.assertAlmostEqual(float(interpolate(self.field, [0.25, 0.5])), 3.0, places=14)

    def test_linear_field_is_exact(self):
        x = sample_interior(50, self.field.domain, make_rng(0))
        expected = 1.0 + 2.0 * x[:, 0] + 3.0 * x[:, 1]
        np.testing.assert_allclose(interpolate(self.field, x), expected, rtol=1e-14)

    def test_cell_midpoint(self):
        field = GridField(Box((0.0,), (1.0,)), 0.5, np.array([0.0, 4.0, 2.0]))
        self.assertAlmostEqual(float(interpolate(field, [0.75])), 3.0, places=14)

    def test_outside(self):
        with self.assertRaises(ConfigurationError):
            interpolate(self.field, [[0.5, 1.5]])


class TestGridField(unittest.TestCase):
    def test_save_and_load(self):
        grid = fdm_solve(paraboloid_problem(), 1.0 / 8, method="direct")
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "field.bin")
            grid.save(path)
            loaded = GridField.load(path)
        self.assertEqual(loaded.domain, grid.domain)
        self.assertEqual(loaded.h, grid.h)
        np.testing.assert_array_equal(loaded.values, grid.values)

    def test_load_foreign_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "other.bin")
            with open(path, "wb") as f:
                f.write(b"not a grid field")
            with self.assertRaises(ConfigurationError):
                GridField.load(path)

    def test_csv_slice(self):
        grid = fdm_solve(paraboloid_problem(), 1.0 / 8, method="direct")
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "slice.csv")
            grid.write_csv(path, pinned={0: 0.5})
            with open(path, newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["x1", "x2", "u"])
        self.assertEqual(len(rows), 10)
        for x1, x2, u in rows[1:]:
            self.assertEqual(float(x1), 0.5)
            self.assertAlmostEqual(float(u), 0.25 + float(x2) ** 2, places=12)


if __name__ == "__main__":
    unittest.main()
