# pylint: disable=missing-docstring

import logging
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fmpinn.exceptions import ConfigurationError
from fmpinn.sampling import (
    Box,
    eval_grid,
    face_counts,
    grid_axes,
    ks_statistic,
    make_rng,
    random_test_points,
    sample_batch,
    sample_boundary,
    sample_interior,
)

# Set up logging
logger = logging.getLogger("fmpinn")
logger.setLevel(logging.DEBUG)


class TestBox(unittest.TestCase):
    def test_properties(self):
        box = Box.cube(-1.0, 1.0, 2)
        self.assertEqual(box.dim, 2)
        self.assertEqual(box.measure, 4.0)
        np.testing.assert_array_equal(box.edges, [2.0, 2.0])
        self.assertEqual(box.to_dict(), {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]})

    def test_contains(self):
        box = Box((0.0,), (1.0,))
        points = np.array([[0.0], [0.5], [1.0], [1.5]])
        np.testing.assert_array_equal(box.contains(points), [True, True, True, False])
        strict = box.contains(points, strict=True)
        np.testing.assert_array_equal(strict, [False, True, False, False])

    def test_invalid_boxes(self):
        with self.assertRaises(ConfigurationError):
            Box((0.0,), (0.0,))
        with self.assertRaises(ConfigurationError):
            Box((0.0, 0.0), (1.0,))
        with self.assertRaises(ConfigurationError):
            Box((), ())


class TestInterior(unittest.TestCase):
    def test_uniform_mean(self):
        box = Box.cube(0.0, 1.0, 3)
        points = sample_interior(10000, box, make_rng(0))
        self.assertEqual(points.shape, (10000, 3))
        for mean in points.mean(axis=0):
            self.assertAlmostEqual(mean, 0.5, delta=0.05)

    def test_strictly_inside(self):
        box = Box.cube(-1.0, 1.0, 2)
        points = sample_interior(5000, box, make_rng(1))
        self.assertTrue(np.all(box.contains(points, strict=True)))

    def test_deterministic(self):
        box = Box.cube(0.0, 1.0, 2)
        np.testing.assert_array_equal(
            sample_interior(10, box, make_rng(3)), sample_interior(10, box, make_rng(3))
        )
        self.assertFalse(
            np.array_equal(
                sample_interior(10, box, make_rng(3)), sample_interior(10, box, make_rng(4))
            )
        )

    def test_invalid_counts(self):
        box = Box((0.0,), (1.0,))
        for n in (0, -3, 2.5):
            with self.assertRaises(ConfigurationError):
                sample_interior(n, box, make_rng(0))
            with self.assertRaises(ConfigurationError):
                sample_boundary(n, box, make_rng(0))

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_ks_distance(self, seed):
        points = sample_interior(20000, Box((0.0,), (1.0,)), make_rng(seed))
        self.assertLessEqual(ks_statistic(points[:, 0], 0.0, 1.0), 0.02)


class TestBoundary(unittest.TestCase):
    def test_one_dimension_alternates(self):
        points = sample_boundary(5, Box((0.0,), (1.0,)), make_rng(0))
        np.testing.assert_array_equal(points[:, 0], [0.0, 1.0, 0.0, 1.0, 0.0])

    def test_faces_are_balanced(self):
        box = Box.cube(-1.0, 1.0, 2)
        points = sample_boundary(8000, box, make_rng(2))
        counts = face_counts(points, box)
        self.assertEqual(len(counts), 4)
        self.assertEqual(int(counts.sum()), 8000)
        for count in counts:
            self.assertAlmostEqual(count, 2000, delta=150)

    def test_one_coordinate_pinned(self):
        box = Box.cube(0.0, 1.0, 3)
        points = sample_boundary(1000, box, make_rng(5))
        self.assertTrue(np.all(box.contains(points)))
        on_face = (points == 0.0) | (points == 1.0)
        np.testing.assert_array_equal(on_face.sum(axis=1), np.ones(1000))


class TestBatch(unittest.TestCase):
    def test_batch(self):
        box = Box.cube(0.0, 1.0, 2)
        batch = sample_batch(box, 300, 40, seed=11, epoch=2)
        self.assertEqual((batch.n_interior, batch.n_boundary), (300, 40))
        self.assertEqual(batch.domain_measure, 1.0)
        self.assertEqual(batch.seed_state["seed"], 11)
        self.assertEqual(batch.seed_state["epoch"], 2)

    def test_batch_reproducible_and_fresh_per_epoch(self):
        box = Box.cube(0.0, 1.0, 2)
        first = sample_batch(box, 50, 20, seed=1, epoch=0)
        again = sample_batch(box, 50, 20, seed=1, epoch=0)
        later = sample_batch(box, 50, 20, seed=1, epoch=1)
        np.testing.assert_array_equal(first.interior, again.interior)
        np.testing.assert_array_equal(first.boundary, again.boundary)
        self.assertFalse(np.array_equal(first.interior, later.interior))
        self.assertFalse(np.array_equal(first.boundary, later.boundary))

    def test_permuted_keeps_points(self):
        batch = sample_batch(Box((0.0,), (1.0,)), 30, 10, seed=4)
        shuffled = batch.permuted(9)
        pairs = ((batch.interior, shuffled.interior), (batch.boundary, shuffled.boundary))
        for before, after in pairs:
            np.testing.assert_array_equal(np.sort(after, axis=0), np.sort(before, axis=0))


class TestGrids(unittest.TestCase):
    def test_one_dimensional_grid(self):
        points = eval_grid(Box((0.0,), (1.0,)), 1.0 / 999)
        self.assertEqual(points.shape, (1000, 1))
        self.assertEqual(points[0, 0], 0.0)
        self.assertEqual(points[-1, 0], 1.0)

    def test_square_grid(self):
        points = eval_grid(Box.cube(-1.0, 1.0, 2), 1.0 / 128)
        self.assertEqual(points.shape, (257**2, 2))
        # row-major: the last coordinate varies fastest
        np.testing.assert_array_equal(points[:2], [[-1.0, -1.0], [-1.0, -1.0 + 1.0 / 128]])

    def test_sliced_cube(self):
        points = eval_grid(Box.cube(0.0, 1.0, 3), 1.0 / 64, pinned={2: 0.3125})
        self.assertEqual(points.shape, (65**2, 3))
        np.testing.assert_array_equal(points[:, 2], np.full(65**2, 0.3125))

    def test_invalid_grids(self):
        box = Box.cube(0.0, 1.0, 2)
        with self.assertRaises(ConfigurationError):
            grid_axes(box, 0.3)
        with self.assertRaises(ConfigurationError):
            grid_axes(box, 0.0)
        with self.assertRaises(ConfigurationError):
            grid_axes(box, 0.25, pinned={1: 2.0})
        with self.assertRaises(ConfigurationError):
            grid_axes(box, 0.25, pinned={5: 0.5})

    def test_random_test_points(self):
        box = Box.cube(0.0, 1.0, 8)
        points = random_test_points(box, 1600, seed=20240)
        self.assertEqual(points.shape, (1600, 8))
        self.assertTrue(np.all(box.contains(points, strict=True)))
        np.testing.assert_array_equal(points, random_test_points(box, 1600, seed=20240))


if __name__ == "__main__":
    unittest.main()
