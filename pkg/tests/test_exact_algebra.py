import logging
import random
import sys
import unittest
from fractions import Fraction

from crgaussmap.common import DenominatorVanishesError, NumericalFailure, PolyOp
from crgaussmap.exact_algebra import (
    I_UNIT,
    ONE,
    ZERO,
    BigComplexContext,
    ExactLinearAlgebra,
    MPoly,
    RFunc,
    VarAlphabet,
    conj,
    exact,
    jet_compose,
    poly_arith,
    rf_jet,
    series_inverse,
    wt_truncate,
)
from crgaussmap.utils import SamplingUtils

LOG = logging.getLogger(__name__)


class ExactAlgebraTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._setup_logging()
        cls.alphabet = VarAlphabet.of(2)
        cls.z1 = MPoly.variable(cls.alphabet, cls.alphabet.z(1))
        cls.w = MPoly.variable(cls.alphabet, cls.alphabet.w)
        cls.one = MPoly.one(cls.alphabet)

    @classmethod
    def _setup_logging(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_conjugate_pair_product(self):
        product = poly_arith(self.one + self.w * I_UNIT, self.one - self.w * I_UNIT, PolyOp.MUL)
        self.assertEqual(self.one + self.w * self.w, product)

    def test_poly_arith_rejects_mixed_alphabets(self):
        other = MPoly.one(VarAlphabet.of(3))
        with self.assertRaises(ValueError):
            poly_arith(self.one, other, PolyOp.ADD)

    def test_wt_truncate_uses_weights(self):
        p = self.one + self.z1 + self.w + self.z1 * self.z1 + self.z1 * self.w + self.w * self.w
        self.assertEqual(self.one + self.z1 + self.w + self.z1 * self.z1, wt_truncate(p, 2))
        self.assertEqual(self.one, wt_truncate(p, 0))

    def test_wt_truncate_negative_order(self):
        with self.assertRaises(ValueError):
            wt_truncate(self.one, -1)

    def test_bar_reflect(self):
        p = self.z1 * I_UNIT
        zeta1 = MPoly.variable(self.alphabet, self.alphabet.zeta(1))
        self.assertEqual(zeta1 * (-I_UNIT), p.bar_reflect())
        q = self.z1 * self.w * exact(2, 3) + self.one * exact(Fraction(1, 2), -1)
        self.assertEqual(q, q.bar_reflect().bar_reflect())

    def test_jet_part(self):
        p = self.z1 * self.w * 3 + self.z1 * self.w * self.w + self.w
        self.assertEqual(self.z1 * 3, p.jet_part(1, 1))
        self.assertEqual(self.one, p.jet_part(0, 1))
        self.assertTrue(p.jet_part(2, 0).is_zero())

    def test_rfunc_normalizes_denominator(self):
        r = RFunc(self.z1 * 2, self.one * 2 - self.w * 2)
        self.assertEqual(ONE, r.den.constant_term)
        self.assertEqual(self.z1, r.num)

    def test_rfunc_denominator_vanishing_at_origin(self):
        with self.assertRaises(DenominatorVanishesError) as ctx:
            RFunc(self.one, self.w)
        self.assertIn("denominator vanishes at origin", str(ctx.exception))

    def test_geometric_series_jet(self):
        r = RFunc(self.one, self.one - self.w)
        self.assertEqual(self.one + self.w + self.w * self.w, rf_jet(r, 4))
        self.assertEqual(self.one + self.w, rf_jet(r, 3))

    def test_series_inverse(self):
        p = self.one * 2 + self.z1
        inverse = series_inverse(p, 3)
        self.assertEqual(self.one, (p * inverse).wt_truncate(3))
        with self.assertRaises(DenominatorVanishesError):
            series_inverse(self.z1, 3)

    def test_jet_compose(self):
        r = RFunc(self.z1, self.one - self.w)
        inner = [self.z1 * 2, self.w]
        self.assertEqual(self.z1 * 2 + self.z1 * self.w * 2, jet_compose(r, inner, 3))

    def test_evaluate_and_partials(self):
        r = RFunc(self.z1 * self.z1, self.one + self.w)
        values = [exact(1), exact(0, 1), exact(1), exact(0, -1)]
        value, partials = r.value_and_partials(values, [self.alphabet.z(1), self.alphabet.w])
        self.assertEqual(ONE / exact(1, 1), value)
        self.assertEqual(exact(2) / exact(1, 1), partials[0])
        self.assertEqual(-ONE / (exact(1, 1) * exact(1, 1)), partials[1])

    def test_evaluate_at_pole(self):
        r = RFunc(self.one, self.one + self.w)
        with self.assertRaises(DenominatorVanishesError):
            r.evaluate([ZERO, exact(-1), ZERO, exact(-1)])


class ExactLinearAlgebraTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_complex_rank(self):
        self.assertEqual(1, ExactLinearAlgebra.rank([[ONE, I_UNIT], [I_UNIT, -ONE]]))
        self.assertEqual(2, ExactLinearAlgebra.rank([[ONE, ZERO], [ZERO, I_UNIT]]))
        self.assertEqual(0, ExactLinearAlgebra.rank([]))

    def test_real_rank(self):
        self.assertEqual(2, ExactLinearAlgebra.real_rank([[ONE, I_UNIT]]))
        self.assertEqual(1, ExactLinearAlgebra.real_rank([[ONE, exact(2)]]))

    def test_solve(self):
        a = [[exact(2), ZERO], [ZERO, I_UNIT]]
        b = [[exact(4)], [exact(3)]]
        self.assertEqual([[exact(2)], [exact(0, -3)]], ExactLinearAlgebra.solve(a, b))

    def test_solve_singular(self):
        with self.assertRaises(ZeroDivisionError):
            ExactLinearAlgebra.solve([[ONE, ONE], [ONE, ONE]], [[ONE], [ONE]])


class BigComplexContextTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)
        cls.bc = BigComplexContext.of(128)

    def test_minimum_precision(self):
        with self.assertRaises(ValueError):
            BigComplexContext(32)

    def test_dyadic_values_are_exact(self):
        c = exact(Fraction(3, 8), Fraction(-5, 4))
        self.assertEqual(c, self.bc.quantize(c))

    def test_quantize_close(self):
        c = exact(Fraction(1, 3), Fraction(2, 7))
        diff = self.bc.big(self.bc.quantize(c)) - self.bc.big(c)
        self.assertLess(abs(diff), self.bc.tolerance)

    def test_rank_floor(self):
        tiny = self.bc.ctx.ldexp(self.bc.ctx.mpf(1), -100)
        self.assertEqual(1, self.bc.rank([[tiny]]))
        self.assertEqual(0, self.bc.rank([[tiny]], floor=self.bc.tolerance))
        self.assertEqual(1, self.bc.rank([[1, 1], [1, 1]]))

    def test_hermitian_eigen(self):
        values, vectors = self.bc.hermitian_eigen([[1, 0], [0, 3]])
        self.assertAlmostEqual(3.0, float(values[0]))
        self.assertAlmostEqual(1.0, float(values[1]))
        self.assertAlmostEqual(1.0, float(abs(vectors[0][1])))

    def test_orthonormal_completion(self):
        ctx = self.bc.ctx
        s = 1 / ctx.sqrt(2)
        basis = self.bc.orthonormal_completion([[s, ctx.mpc(0, 1) * s, 0]], 3)
        self.assertEqual(3, len(basis))
        self.assertLess(self.bc.unitarity_residual(basis), self.bc.tolerance)
        reversed_basis = self.bc.orthonormal_completion([[1, 0, 0]], 3, reverse=True)
        self.assertAlmostEqual(1.0, float(abs(reversed_basis[1][2])))

    def test_non_finite_value(self):
        with self.assertRaises(NumericalFailure):
            self.bc.exact(self.bc.ctx.inf)

    def test_conj(self):
        self.assertEqual(exact(1, -2), conj(exact(1, 2)))


class RandomizedAlgebraTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)
        cls.alphabet = VarAlphabet.of(3)

    def setUp(self):
        self.rng = random.Random(2024)

    def _random_poly(self, holomorphic: bool = False, terms: int = 5, max_exp: int = 2) -> MPoly:
        size = self.alphabet.n_holo if holomorphic else self.alphabet.size
        collected = {}
        for _ in range(terms):
            monom = [self.rng.randint(0, max_exp) for _ in range(size)] + [0] * (self.alphabet.size - size)
            collected[tuple(monom)] = SamplingUtils.random_exact(self.rng, 3)
        return MPoly.from_terms(self.alphabet, collected)

    def _random_denominator(self) -> MPoly:
        tail = self._random_poly(holomorphic=True, terms=3).filter_terms(lambda m: any(m))
        return tail + MPoly.one(self.alphabet)

    def test_rf_jet_times_denominator(self):
        for _ in range(10):
            r = RFunc(self._random_poly(holomorphic=True), self._random_denominator())
            for m in range(0, 6):
                self.assertEqual(r.num.wt_truncate(m), (rf_jet(r, m) * r.den).wt_truncate(m), m)

    def test_series_inverse_random(self):
        for _ in range(10):
            den = self._random_denominator()
            self.assertEqual(MPoly.one(self.alphabet), (series_inverse(den, 5) * den).wt_truncate(5))

    def test_wt_truncate_matches_weighted_degree(self):
        weights = self.alphabet.weights
        self.assertEqual((1, 1, 2, 1, 1, 2), weights)
        for _ in range(10):
            p = self._random_poly(terms=8)
            for m in range(0, 8):
                expected = p.filter_terms(lambda monom: self.alphabet.weighted_degree(monom) <= m)
                self.assertEqual(expected, p.wt_truncate(m), m)

    def test_bar_reflect_is_a_conjugate_linear_involution(self):
        for _ in range(10):
            p, q = self._random_poly(), self._random_poly()
            c = SamplingUtils.random_exact(self.rng, 3)
            self.assertEqual(p, p.bar_reflect().bar_reflect())
            self.assertEqual(p.bar_reflect() + q.bar_reflect(), (p + q).bar_reflect())
            self.assertEqual(p.bar_reflect() * q.bar_reflect(), (p * q).bar_reflect())
            self.assertEqual(p.bar_reflect().scale(conj(c)), p.scale(c).bar_reflect())


if __name__ == "__main__":
    unittest.main()
