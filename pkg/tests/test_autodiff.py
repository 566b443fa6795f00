"""Tests for the autodiff module."""

# pylint: disable=missing-docstring

import logging
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fmpinn import autodiff as ad
from fmpinn.exceptions import NumericError

# Set up logging
logger = logging.getLogger("fmpinn")
logger.setLevel(logging.DEBUG)

# primitive -> (derivative, second derivative, input range)
UNARY = {
    "sin": (np.cos, lambda x: -np.sin(x), (-3.0, 3.0)),
    "cos": (lambda x: -np.sin(x), lambda x: -np.cos(x), (-3.0, 3.0)),
    "tanh": (
        lambda x: 1 - np.tanh(x) ** 2,
        lambda x: -2 * np.tanh(x) * (1 - np.tanh(x) ** 2),
        (-3.0, 3.0),
    ),
    "exp": (np.exp, np.exp, (-3.0, 3.0)),
    "log": (lambda x: 1 / x, lambda x: -1 / x**2, (0.2, 5.0)),
    "sqrt": (lambda x: 0.5 / np.sqrt(x), lambda x: -0.25 * x**-1.5, (0.2, 5.0)),
    "square": (lambda x: 2 * x, lambda x: 2.0 + 0 * x, (-3.0, 3.0)),
}


class TestForwardMode(unittest.TestCase):
    def test_linear_neuron(self):
        result = ad.forward_directional(
            lambda z: ad.add(ad.mul(2.0, z), 1.0), np.array([[3.0]]), 0, order=2
        )
        self.assertEqual(result.value[0, 0], 7.0)
        self.assertEqual(result.d1[0, 0], 2.0)
        self.assertEqual(result.d2[0, 0], 0.0)

    def test_sine_at_zero(self):
        result = ad.forward_directional(ad.sin, np.array([[0.0]]), 0, order=2)
        self.assertEqual(result.value[0, 0], 0.0)
        self.assertEqual(result.d1[0, 0], 1.0)
        self.assertEqual(result.d2[0, 0], 0.0)

    def test_first_order_has_no_second_derivative(self):
        result = ad.forward_directional(ad.exp, np.array([[0.0]]), 0, order=1)
        self.assertIsNone(result.d2)
        self.assertEqual(result.d1[0, 0], 1.0)

    def test_lift_constant_and_input(self):
        self.assertEqual(ad.Dual1.lift(3.0).deriv, 0.0)
        lifted = ad.lift_input(np.array([[1.0, 2.0]]), 1)
        np.testing.assert_array_equal(lifted.deriv, [[0.0, 1.0]])
        with self.assertRaises(ValueError):
            ad.lift_input(np.array([[1.0, 2.0]]), 2)
        with self.assertRaises(TypeError):
            ad.Dual1.lift(ad.Dual2(1.0, 1.0, 0.0))

    def test_product_rule(self):
        x = np.array([0.3, 1.1])
        a = ad.Dual1(x, np.ones(2))
        result = ad.mul(ad.sin(a), ad.exp(a))
        np.testing.assert_allclose(result.deriv, np.exp(x) * (np.cos(x) + np.sin(x)), rtol=1e-14)

    def test_quotient_rule_second_order(self):
        x = np.array([0.5, 2.0])
        result = ad.div(1.0, ad.Dual2(x, np.ones(2), 0.0))
        np.testing.assert_allclose(result.d1, -1 / x**2, rtol=1e-14)
        np.testing.assert_allclose(result.d2, 2 / x**3, rtol=1e-14)

    def test_integer_power(self):
        x = np.array([0.5, 2.0])
        result = ad.power(ad.Dual2(x, np.ones(2), 0.0), 3)
        np.testing.assert_allclose(result.value, x**3)
        np.testing.assert_allclose(result.d1, 3 * x**2)
        np.testing.assert_allclose(result.d2, 6 * x)
        with self.assertRaises(ValueError):
            ad.power(x, 0.5)

    def test_dual2_first_component_matches_dual1(self):
        x = np.linspace(-1.0, 1.0, 7)

        def fn(z):
            return ad.div(ad.mul(ad.sin(z), ad.exp(z)), ad.add(2.0, ad.cos(z)))

        first = fn(ad.Dual1(x, np.ones_like(x)))
        second = fn(ad.Dual2(x, np.ones_like(x), 0.0))
        np.testing.assert_array_equal(first.value, second.value)
        np.testing.assert_array_equal(first.deriv, second.d1)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from(sorted(UNARY)), st.floats(0.0, 1.0))
    def test_derivatives_against_central_differences(self, name, t):
        derivative, second, (lo, hi) = UNARY[name]
        x = np.array([lo + t * (hi - lo)])
        fn = ad.PRIMITIVES[name]
        h = 1e-6
        exact = ad.value_of(fn(ad.Dual1(x, np.ones(1))).deriv)
        approx = (fn(x + h) - fn(x - h)) / (2 * h)
        self.assertLessEqual(
            abs(exact[0] - approx[0]), 1e-6 * max(1.0, abs(derivative(x)[0]))
        )
        result = fn(ad.Dual2(x, np.ones(1), 0.0))
        np.testing.assert_allclose(result.d1, derivative(x), rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(result.d2, second(x), rtol=1e-12, atol=1e-14)


class TestReverseMode(unittest.TestCase):
    def test_square(self):
        result = ad.record_and_backprop(lambda p: ad.square(p["theta"]), {"theta": 3.0})
        self.assertEqual(result.loss, 9.0)
        self.assertEqual(float(result.gradient["theta"]), 6.0)

    def test_least_squares(self):
        def loss(p):
            return ad.square(ad.sub(ad.mul(p["theta"], 2.0), 1.0))

        result = ad.record_and_backprop(loss, {"theta": 1.0})
        self.assertEqual(float(result.gradient["theta"]), 4.0)

    def test_aux_value_is_returned(self):
        result = ad.record_and_backprop(lambda p: (ad.square(p["a"]), "aux"), {"a": 2.0})
        self.assertEqual(result.aux, "aux")

    def test_non_finite_loss(self):
        with self.assertRaises(NumericError):
            ad.record_and_backprop(lambda p: ad.mul(p["a"], np.inf), {"a": 1.0})

    def test_frozen_parameters_get_zero_gradient(self):
        params = {"a": np.array([1.0, 2.0]), "b": np.array([3.0])}

        def loss(p):
            return ad.reduce_sum(ad.mul(p["a"], p["b"]))

        result = ad.record_and_backprop(loss, params, frozen=("b",))
        np.testing.assert_array_equal(result.gradient["a"], [3.0, 3.0])
        np.testing.assert_array_equal(result.gradient["b"], [0.0])
        self.assertEqual(list(result.gradient), ["a", "b"])

    def test_broadcast_gradient(self):
        params = {"w": np.array([2.0])}
        x = np.array([[1.0], [2.0], [3.0]])
        result = ad.record_and_backprop(lambda p: ad.reduce_sum(ad.mul(p["w"], x)), params)
        np.testing.assert_array_equal(result.gradient["w"], [6.0])

    def test_advanced_indexing_accumulates(self):
        result = ad.record_and_backprop(
            lambda p: ad.reduce_sum(ad.getitem(p["x"], [0, 0, 2])), {"x": np.ones(3)}
        )
        np.testing.assert_array_equal(result.gradient["x"], [2.0, 0.0, 1.0])

    def test_concatenate_gradient(self):
        weights = np.array([1.0, 2.0, 3.0, 4.0, 5.0])

        def loss(p):
            return ad.reduce_sum(ad.mul(ad.concatenate([p["x"], p["y"]], axis=0), weights))

        result = ad.record_and_backprop(loss, {"x": np.zeros(2), "y": np.zeros(3)})
        np.testing.assert_array_equal(result.gradient["x"], [1.0, 2.0])
        np.testing.assert_array_equal(result.gradient["y"], [3.0, 4.0, 5.0])

    def test_reverse_over_forward(self):
        x = np.array([[0.5], [1.0]])
        w = 2.0

        def loss(p):
            out = ad.mul(p["w"], ad.sin(ad.lift_input(x, 0)))
            return ad.reduce_sum(ad.square(out.deriv))

        result = ad.record_and_backprop(loss, {"w": np.array([w])})
        expected = 2 * w * np.sum(np.cos(x) ** 2)
        np.testing.assert_allclose(result.gradient["w"], [expected], rtol=1e-14)

    def test_forward_reverse_consistency(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(5, 3))
        weight = rng.uniform(-1, 1, size=(2, 3))

        def fn(w):
            return ad.reduce_sum(ad.sin(ad.linear(x, w)))

        reverse = ad.record_and_backprop(lambda p: fn(p["w"]), {"w": weight}).gradient["w"]
        for i in range(2):
            for j in range(3):
                direction = np.zeros_like(weight)
                direction[i, j] = 1.0
                forward = ad.value_of(fn(ad.Dual1(weight, direction)).deriv)
                self.assertAlmostEqual(
                    float(forward), reverse[i, j], delta=1e-10 * max(1.0, abs(reverse[i, j]))
                )

    def test_variables_from_different_tapes(self):
        first, second = ad.Tape(), ad.Tape()
        a = first.watch("a", 1.0)
        b = second.watch("b", 2.0)
        with self.assertRaises(ValueError):
            ad.add(a, b)


class TestDomainErrors(unittest.TestCase):
    def test_division_by_zero(self):
        with self.assertRaises(NumericError):
            ad.div(1.0, np.array([1.0, 0.0]))

    def test_log_and_sqrt(self):
        with self.assertRaises(NumericError):
            ad.log(np.array([0.0]))
        with self.assertRaises(NumericError):
            ad.sqrt(np.array([-1.0]))

    def test_check_finite_reports_layer(self):
        with self.assertRaises(NumericError) as context:
            ad.check_finite(np.array([1.0, np.nan]), layer=3)
        self.assertEqual(context.exception.layer, 3)

    def test_primitive_set(self):
        names = ad.primitive_set()
        for name in ("add", "sub", "mul", "div", "sin", "cos", "square", "sqrt", "tanh"):
            self.assertIn(name, names)
        self.assertIn("exp", names)
        self.assertIn("power", names)


if __name__ == "__main__":
    unittest.main()
