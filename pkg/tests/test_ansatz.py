import math
import unittest

import numpy as np

from ansatz_service import (
    ModParams,
    bracket_gaps,
    bracket_norms,
    bracket_scaling,
    cross_term_norms,
    equation_residual,
    modulation_terms,
    phi,
    remainder_constants,
    static_residual,
    taylor_remainder,
    two_bubble,
)
from lab_errors import InvalidArgument, InvalidRegime, ResolutionError
from profile_service import bubble
from radial_core import energy, make_grid, norm_L2
from support import cached_profiles
from virial_service import battery_fields


class ModParamsTests(unittest.TestCase):
    def test_scales_must_be_positive_and_finite(self):
        with self.assertRaises(InvalidArgument):
            ModParams(mu=0.0, lam=0.01)
        with self.assertRaises(InvalidArgument):
            ModParams(mu=1.0, lam=0.01, a=math.nan)

    def test_regime(self):
        self.assertEqual(ModParams(mu=1.0, lam=0.05, a=0.01, b=0.02).check_regime().nu, 0.05)
        for params in (
            ModParams(mu=1.0, lam=0.1),
            ModParams(mu=1.0, lam=0.05, a=0.2),
            ModParams(mu=1.0, lam=0.05, b=-0.1),
        ):
            with self.assertRaises(InvalidRegime):
                params.check_regime()

    def test_to_dict_carries_ratio(self):
        self.assertAlmostEqual(ModParams(mu=2.0, lam=0.1).to_dict()["nu"], 0.05)


class TwoBubbleTests(unittest.TestCase):
    def test_matches_difference_of_bubbles(self):
        grid = make_grid(1e3, 4096, "geometric", r_min=1e-4)
        field = two_bubble(0.01, 1.0, grid, 4)
        direct = bubble(4, grid.nodes, 0.01) - bubble(4, grid.nodes, 1.0)
        self.assertTrue(np.allclose(field.values, direct, rtol=0.0, atol=1e-12))

    def test_ordering(self):
        grid = make_grid(10.0, 64)
        with self.assertRaises(InvalidRegime):
            two_bubble(1.0, 0.5, grid, 4)
        self.assertFalse(np.any(two_bubble(0.5, 0.5, grid, 4).values))

    def test_energy_of_separated_pair(self):
        ps = cached_profiles()
        pair = phi(ModParams(mu=1.0, lam=0.01), ps)
        self.assertAlmostEqual(energy(pair, 4) / (8.0 * math.pi * 4), 1.0, delta=1e-2)

    def test_energy_is_twice_the_bubble_at_other_separations(self):
        ps = cached_profiles()
        for mu, lam in ((1.0, 0.002), (1.0, 0.02), (1.0, 0.05), (2.0, 0.02)):
            pair = phi(ModParams(mu=mu, lam=lam), ps)
            self.assertAlmostEqual(energy(pair, 4) / (8.0 * math.pi * 4), 1.0, delta=1e-3, msg=f"lam={lam} mu={mu}")

    def test_velocity_adds_kinetic_energy(self):
        ps = cached_profiles()
        a = b = 0.02
        at_rest = energy(phi(ModParams(mu=1.0, lam=0.01), ps), 4)
        moving = energy(phi(ModParams(mu=1.0, lam=0.01, a=a, b=b), ps), 4)
        expected = math.pi * (a * a + b * b) * ps.constants.lamQ_norm_sq
        self.assertAlmostEqual((moving - at_rest) / expected, 1.0, delta=2e-2)


class PhiTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ps = cached_profiles()

    def test_static_members_have_no_velocity(self):
        state = phi(ModParams(mu=1.0, lam=0.02), self.ps)
        self.assertFalse(np.any(state.udot.values))

    def test_velocity_is_linear_in_small_b(self):
        base = ModParams(mu=1.0, lam=0.02, b=1e-4)
        double = ModParams(mu=1.0, lam=0.02, b=2e-4)
        v1 = phi(base, self.ps).udot.values
        v2 = phi(double, self.ps).udot.values
        self.assertTrue(np.allclose(v2, 2.0 * v1, rtol=1e-6, atol=1e-14))

    def test_velocity_is_bounded_by_the_modulation_speeds(self):
        rng = np.random.default_rng(20)
        norm_lamq = math.sqrt(self.ps.constants.lamQ_norm_sq)
        for _ in range(20):
            mu = rng.uniform(0.5, 2.0)
            nu = 10.0 ** rng.uniform(math.log10(0.005), math.log10(0.05))
            a, b = rng.uniform(-0.05, 0.05, 2)
            state = phi(ModParams(mu=mu, lam=nu * mu, a=a, b=b), self.ps)
            ratio = norm_L2(state.udot) / (abs(a) + abs(b))
            self.assertLessEqual(ratio, 2.0 * norm_lamq)
            self.assertGreaterEqual(ratio, 0.5 * norm_lamq)

    def test_inner_pairing_reads_off_b(self):
        ps = self.ps
        grid = ps.grid
        lam = 0.01
        direction = ps.sample("LamQ", grid.nodes, lam, "L2")
        for a, b in ((0.01, 0.01), (-0.01, 0.005), (0.0, -0.008)):
            velocity = phi(ModParams(mu=1.0, lam=lam, a=a, b=b), ps).udot.values
            pairing = float(np.dot(grid.weights, direction * velocity)) / ps.constants.lamQ_norm_sq
            self.assertAlmostEqual(pairing / b, 1.0, delta=2e-2, msg=f"a={a} b={b}")

    def test_scale_covariance(self):
        # grid halved in r_max with the same node count is the old grid divided by two
        ps = self.ps
        grid = make_grid(2.0, 4096, "geometric", r_min=1e-3)
        half = make_grid(1.0, 4096, "geometric", r_min=5e-4)
        big = phi(ModParams(mu=2.0, lam=0.08, a=0.01, b=0.02), ps, grid)
        small = phi(ModParams(mu=1.0, lam=0.04, a=0.01, b=0.02), ps, half)
        self.assertTrue(np.allclose(big.u.values, small.u.values, rtol=0.0, atol=1e-10))
        self.assertTrue(np.allclose(big.udot.values, small.udot.values / 2.0, rtol=0.0, atol=1e-10))

    def test_unresolved_inner_scale(self):
        grid = make_grid(4.0, 64)
        with self.assertRaises(ResolutionError):
            phi(ModParams(mu=1.0, lam=0.05), self.ps, grid)

    def test_out_of_regime(self):
        with self.assertRaises(InvalidRegime):
            phi(ModParams(mu=1.0, lam=0.5), self.ps)


class ResidualTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.ps = cached_profiles()

    def test_taylor_remainder_direct(self):
        u = np.linspace(-2.0, 2.0, 41)
        w = np.full_like(u, 0.3)
        k = 4
        f = lambda x: 0.5 * k * k * np.sin(2.0 * x)
        direct = f(u + w) - f(u) - k * k * np.cos(2.0 * u) * w
        self.assertTrue(np.allclose(taylor_remainder(u, w, k), direct, rtol=1e-12, atol=1e-13))

    def test_taylor_remainder_is_quadratic(self):
        u = np.array([0.3, 1.1])
        w = np.array([1e-6, 1e-6])
        rem = taylor_remainder(u, w, 4)
        expected = -0.5 * 16.0 * 2.0 * np.sin(2.0 * u) * w * w
        self.assertTrue(np.allclose(rem, expected, rtol=1e-5, atol=0.0))

    def test_static_residual_is_bracket_sum_over_r2(self):
        params = ModParams(mu=1.0, lam=0.05, a=0.02, b=0.03)
        residual = static_residual(params, self.ps)
        grid = self.ps.grid
        weight = grid.weights * grid.inv_r2
        norm = math.sqrt(float(np.dot(weight, (residual.values * grid.nodes ** 2) ** 2)))
        first, second, third = bracket_norms(params, self.ps)
        self.assertLessEqual(norm, first + second + third + 1e-12)

    def test_interaction_bracket_scaling(self):
        _, slope = bracket_scaling(self.ps, 1)
        self.assertAlmostEqual(slope, 8.0, delta=0.5)

    def test_linear_bracket_scaling(self):
        _, slope = bracket_scaling(self.ps, 3, a=0.05, b=0.08)
        self.assertAlmostEqual(slope, 2.0, delta=0.5)

    def test_remainder_bracket_scaling(self):
        _, slope = bracket_scaling(self.ps, 2)
        self.assertAlmostEqual(slope, 8.0, delta=0.5)
        # at fixed b the b^4 part carries no power of nu
        _, flat = bracket_scaling(self.ps, 2, b=0.04)
        self.assertAlmostEqual(flat, 0.0, delta=0.5)

    def test_remainder_bracket_is_quartic_in_the_speeds(self):
        second = lambda **kw: bracket_norms(ModParams(mu=1.0, lam=0.02, **kw), self.ps)[1]
        self.assertAlmostEqual(second(b=0.04) / second(b=0.02), 16.0, delta=0.5)
        self.assertAlmostEqual(second(a=0.04) / second(a=0.02), 16.0, delta=0.5)

    def test_bracket_forms_match_plain_evaluation(self):
        gaps = bracket_gaps(ModParams(mu=1.0, lam=0.5, a=0.05, b=0.08), self.ps)
        self.assertEqual(len(gaps), 3)
        for gap in gaps:
            self.assertLess(gap, 1e-8)
        with self.assertRaises(InvalidRegime):
            bracket_gaps(ModParams(mu=1.0, lam=1.0), self.ps)

    def test_equation_residual_matches_bracket_sum(self):
        params = ModParams(mu=1.0, lam=0.05, a=0.05, b=0.08)
        weights = self.ps.grid.weights
        static = static_residual(params, self.ps).values
        gap = equation_residual(params, self.ps).values - static
        mod = modulation_terms(params, self.ps)
        scale = math.sqrt(float(np.dot(weights, mod * mod)))
        self.assertLess(math.sqrt(float(np.dot(weights, gap * gap))) / scale, 1e-6)
        self.assertGreater(math.sqrt(float(np.dot(weights, static * static))), 0.0)
        # the residual at rest is far from the moving one
        wrong = equation_residual(ModParams(mu=1.0, lam=0.05), self.ps).values - static
        self.assertGreater(math.sqrt(float(np.dot(weights, wrong * wrong))) / scale, 1e-3)

    def test_remainder_constant_is_bounded_over_random_fields(self):
        rng = np.random.default_rng(2024)
        grid = self.ps.grid
        fields = battery_fields(grid, 4, 10.0 ** rng.uniform(-2.0, 0.5, 10), seed=7)
        base = phi(ModParams(mu=1.0, lam=0.05, a=0.05, b=0.08), self.ps).u
        constants = remainder_constants(base, fields, 4)
        self.assertEqual(len(constants), 10)
        for value in constants:
            self.assertGreater(value, 0.0)
            self.assertLessEqual(value, 2.0)
        # quadratic regime: halving ||w||_H leaves the constant in place
        halved = remainder_constants(base, fields, 4, size=5e-3)
        for big, small in zip(constants, halved):
            self.assertAlmostEqual(small / big, 1.0, delta=5e-2)

    def test_bracket_index(self):
        with self.assertRaises(InvalidArgument):
            bracket_scaling(self.ps, 4)

    def test_cross_terms_need_separation(self):
        with self.assertRaises(InvalidRegime):
            cross_term_norms(0.5, 1.0, self.ps)
        norms = cross_term_norms(0.05, 1.0, self.ps)
        self.assertEqual(len(norms), 10)
        self.assertTrue(all(value >= 0.0 for value in norms.values()))


if __name__ == "__main__":
    unittest.main()
