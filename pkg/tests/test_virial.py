import unittest

import numpy as np

from lab_errors import InvalidArgument
from radial_core import RadialField, inner, make_grid
from support import cached_virial
from virial_service import (
    BULLETS,
    apply_A,
    apply_A0,
    battery_fields,
    bullet_margins,
    lam0_pairing,
    lamq_localization_error,
    make_virial_profile,
    pohozaev_check,
)


class VirialProfileTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.vp = cached_virial()

    def test_all_bullets_hold(self):
        margins = bullet_margins(self.vp)
        self.assertEqual(set(margins), set(BULLETS))
        self.assertGreaterEqual(min(margins.values()), -1e-9)

    def test_half_r_squared_inside_R(self):
        r = self.vp.grid.nodes
        inside = r <= self.vp.R
        self.assertTrue(np.array_equal(self.vp.p.values[inside], 0.5 * r[inside] ** 2))

    def test_flat_beyond_R_tilde(self):
        r = self.vp.grid.nodes
        outside = r >= self.vp.R_tilde
        self.assertTrue(np.any(outside))
        self.assertFalse(np.any(self.vp.p1.values[outside]))
        self.assertGreater(self.vp.R_tilde, self.vp.R)

    def test_invalid_parameters(self):
        with self.assertRaises(InvalidArgument):
            make_virial_profile(0.2, 10.0)
        with self.assertRaises(InvalidArgument):
            make_virial_profile(0.05, 0.5)
        with self.assertRaises(InvalidArgument):
            make_virial_profile(0.05, 10.0, kappa=0.0)


class VirialOperatorTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.vp = cached_virial()
        cls.grid = make_grid(100.0, 4096, "geometric", r_min=1e-3)
        cls.fields = battery_fields(cls.grid, 4, (0.5, 2.0, 8.0), seed=3)

    def test_A0_is_antisymmetric(self):
        f, g = self.fields[0], self.fields[1]
        for lam in (0.5, 1.0, 4.0):
            left = inner(apply_A0(lam, self.vp, f), g)
            right = inner(f, apply_A0(lam, self.vp, g))
            self.assertLess(abs(left + right), 1e-10 * max(abs(left), 1e-12), lam)

    def test_A0_is_rescaled_lambda0_well_inside_R(self):
        lam = 2.0
        w = self.fields[1]
        a0 = apply_A0(lam, self.vp, w).values
        l0 = (self.grid.lambda0_matrix @ w.values) / lam
        inside = self.grid.nodes <= 0.5 * self.vp.R * lam
        self.assertTrue(np.allclose(a0[inside], l0[inside], rtol=1e-12, atol=1e-14))

    def test_A_is_scaled_derivative_inside_R(self):
        lam = 2.0
        w = self.fields[2]
        aw = apply_A(lam, self.vp, w).values
        expected = self.grid.nodes / lam * (self.grid.d1 @ w.values)
        inside = self.grid.nodes <= 0.9 * self.vp.R * lam
        self.assertTrue(np.allclose(aw[inside], expected[inside], rtol=1e-12, atol=0.0))

    def test_pohozaev_pairing_of_localized_field(self):
        w = self.fields[0]
        local = RadialField(self.grid, w.values * (self.grid.nodes <= 0.25 * self.vp.R))
        check = pohozaev_check(1.0, self.vp, local, 4)
        reference = lam0_pairing(1.0, local, 4)
        self.assertAlmostEqual(check.lhs, reference, delta=1e-10 * abs(reference))

    def test_pohozaev_of_zero_field(self):
        check = pohozaev_check(1.0, self.vp, RadialField(self.grid, np.zeros(self.grid.n)), 4)
        self.assertEqual(check.as_pair(), (0.0, 0.0))
        self.assertTrue(check.holds)

    def test_localization_error_shrinks_with_R(self):
        grid = make_grid(1e4, 8192, "geometric", r_min=1e-4)
        errors = [lamq_localization_error(1.0, make_virial_profile(0.05, R), grid, 4) for R in (5.0, 10.0, 20.0)]
        self.assertLess(errors[1], errors[0])
        self.assertLess(errors[2], errors[1])

    def test_battery_is_seeded(self):
        again = battery_fields(self.grid, 4, (0.5, 2.0, 8.0), seed=3)
        other = battery_fields(self.grid, 4, (0.5, 2.0, 8.0), seed=4)
        self.assertTrue(all(np.array_equal(a.values, b.values) for a, b in zip(self.fields, again)))
        self.assertFalse(all(np.array_equal(a.values, b.values) for a, b in zip(self.fields, other)))


if __name__ == "__main__":
    unittest.main()
