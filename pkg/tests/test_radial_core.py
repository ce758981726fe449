import math
import unittest

import numpy as np

from lab_errors import IncompatibleGrids, InvalidArgument, NumericalFailure, ResolutionError
from radial_core import (
    OperatorSample,
    RadialField,
    StatePair,
    apply_operator,
    energy,
    evaluate,
    fit_power,
    inner,
    loglog_slope,
    make_grid,
    norm_H,
    potential_P,
    rescale,
)


def _bump(grid, k, scale=1.0):
    x = grid.nodes / scale
    with np.errstate(under="ignore"):
        return RadialField(grid, x ** k * np.exp(-x * x), k, None)


class GridTests(unittest.TestCase):
    def test_uniform_grid_ends_at_r_max(self):
        grid = make_grid(2.0, 100)
        self.assertAlmostEqual(grid.nodes[0], 0.02)
        self.assertEqual(grid.nodes[-1], 2.0)
        self.assertIsNone(grid.ratio)

    def test_weights_integrate_r_exactly(self):
        grid = make_grid(2.0, 100)
        r0 = grid.nodes[0]
        self.assertAlmostEqual(float(np.sum(grid.weights)), (4.0 - r0 * r0) / 2.0, places=12)

    def test_geometric_grid_has_constant_ratio(self):
        grid = make_grid(1e4, 2048, "geometric", r_min=1e-4)
        ratios = grid.nodes[1:] / grid.nodes[:-1]
        self.assertTrue(np.allclose(ratios, grid.ratio, rtol=1e-10))
        self.assertAlmostEqual(grid.nodes[0], 1e-4, delta=1e-12)

    def test_invalid_grids_are_rejected(self):
        with self.assertRaises(InvalidArgument):
            make_grid(1.0, 8)
        with self.assertRaises(InvalidArgument):
            make_grid(-1.0, 64)
        with self.assertRaises(InvalidArgument):
            make_grid(1.0, 64, "chebyshev")
        with self.assertRaises(InvalidArgument):
            make_grid(1.0, 64, "uniform", ratio=1.1)
        # almost no nodes near the origin
        with self.assertRaises(InvalidArgument):
            make_grid(1.0, 100, "geometric", r_min=0.5)


class FieldTests(unittest.TestCase):
    def test_field_size_must_match_grid(self):
        grid = make_grid(1.0, 32)
        with self.assertRaises(InvalidArgument):
            RadialField(grid, np.zeros(31))

    def test_non_finite_values_are_rejected(self):
        grid = make_grid(1.0, 32)
        values = np.zeros(32)
        values[3] = np.nan
        with self.assertRaises(NumericalFailure):
            RadialField(grid, values)

    def test_fields_on_different_grids_do_not_mix(self):
        f = RadialField(make_grid(1.0, 32), np.ones(32))
        g = RadialField(make_grid(2.0, 32), np.ones(32))
        with self.assertRaises(IncompatibleGrids):
            f + g
        with self.assertRaises(IncompatibleGrids):
            inner(f, g)

    def test_state_pair_defaults_to_zero_velocity(self):
        grid = make_grid(1.0, 32)
        s = StatePair.from_arrays(grid, np.ones(32))
        self.assertFalse(np.any(s.udot.values))


class QuadratureTests(unittest.TestCase):
    def test_bubble_energy_is_4_pi_k(self):
        for k in (4, 5):
            grid = make_grid(1e4, 16384, "geometric", r_min=1e-4)
            q = 2.0 * np.arctan(grid.nodes ** k)
            e = energy(StatePair.from_arrays(grid, q), k)
            self.assertAlmostEqual(e / (4.0 * math.pi * k), 1.0, delta=1e-5)

    def test_h_norm_matches_l0_pairing(self):
        grid = make_grid(50.0, 4096, "geometric", r_min=1e-3)
        f = _bump(grid, 4)
        l0f = apply_operator(OperatorSample("L0", k=4), f)
        self.assertAlmostEqual(inner(l0f, f) / norm_H(f, 4) ** 2, 1.0, places=10)

    def test_l0_is_symmetric(self):
        grid = make_grid(50.0, 4096, "geometric", r_min=1e-3)
        f = _bump(grid, 4, 1.0)
        g = _bump(grid, 4, 2.5)
        op = OperatorSample("L0", k=4)
        left = inner(apply_operator(op, f), g)
        right = inner(f, apply_operator(op, g))
        self.assertAlmostEqual(left, right, delta=1e-10 * abs(left))

    def test_lambda0_is_antisymmetric(self):
        grid = make_grid(20.0, 2048)
        rng = np.random.default_rng(7)
        f = RadialField(grid, rng.normal(size=grid.n))
        g = RadialField(grid, rng.normal(size=grid.n))
        op = OperatorSample("Lambda0")
        left = inner(apply_operator(op, f), g)
        right = inner(f, apply_operator(op, g))
        self.assertLess(abs(left + right), 1e-10 * (abs(left) + 1.0))

    def test_l0_needs_a_field_vanishing_at_the_origin(self):
        grid = make_grid(1.0, 64)
        with self.assertRaises(ResolutionError):
            apply_operator(OperatorSample("L0", k=4), RadialField(grid, np.ones(64)))

    def test_operator_sample_validation(self):
        with self.assertRaises(InvalidArgument):
            OperatorSample("L0")
        with self.assertRaises(InvalidArgument):
            OperatorSample("curl")
        with self.assertRaises(InvalidArgument):
            OperatorSample("L_about_U", k=4)

    def test_potential_at_one(self):
        for k in (4, 6):
            self.assertAlmostEqual(float(potential_P(np.array([1.0]), k)[0]), -k * k)


class ScalingTests(unittest.TestCase):
    def test_evaluate_reproduces_nodes(self):
        grid = make_grid(100.0, 1024, "geometric", r_min=1e-3)
        f = _bump(grid, 4, 3.0)
        self.assertTrue(np.allclose(evaluate(f, grid.nodes[10:20]), f.values[10:20], rtol=1e-12, atol=0.0))

    def test_rescale_conventions(self):
        grid = make_grid(1e3, 8192, "geometric", r_min=1e-4)
        f = _bump(grid, 4, 1.0)
        h = rescale(f, 2.0, "H")
        l2 = rescale(f, 2.0, "L2")
        x = grid.nodes / 2.0
        exact = x ** 4 * np.exp(-x * x)
        self.assertLess(float(np.max(np.abs(h.values - exact))), 1e-5)
        self.assertTrue(np.allclose(l2.values, h.values / 2.0, rtol=1e-14, atol=0.0))

    def test_rescale_below_resolution(self):
        grid = make_grid(10.0, 64)
        f = _bump(grid, 4, 1.0)
        with self.assertRaises(ResolutionError):
            rescale(f, 1e-4)

    def test_power_fits(self):
        self.assertAlmostEqual(fit_power([1.0, 2.0, 4.0], [3.0, 12.0, 48.0]), 2.0)
        grid = make_grid(1.0, 512, "geometric", r_min=1e-4)
        self.assertAlmostEqual(loglog_slope(RadialField(grid, grid.nodes ** 3), "origin"), 3.0, places=8)
        with self.assertRaises(NumericalFailure):
            fit_power([1.0, 2.0], [0.0, 1.0])


if __name__ == "__main__":
    unittest.main()
