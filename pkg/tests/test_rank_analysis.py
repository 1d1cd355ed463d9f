import logging
import random
import sys
import unittest
from fractions import Fraction

from crgaussmap.common import CatalogName, MapModel, MapValidationError
from crgaussmap.cr_models import CRMap, HPoint, catalog
from crgaussmap.exact_algebra import ExactLinearAlgebra, MPoly, RFunc, VarAlphabet, exact
from crgaussmap.rank_analysis import (
    DegeneracyDims,
    RankReport,
    degeneracy_dims,
    fiber_linearization,
    gauss_chart,
    gauss_generic_rank,
    gauss_rank_at,
    gauss_rank_samples,
    span_dims_by_operators,
    stabilization_index,
    upsilon_rank,
)

LOG = logging.getLogger(__name__)
GENERIC_POINT = HPoint((exact(Fraction(1, 2)), exact(Fraction(1, 3))), Fraction(1, 5))


class RankAnalysisTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._setup_logging()
        cls.linear = catalog(CatalogName.LINEAR, 3, 5)
        cls.whitney = catalog(CatalogName.WHITNEY, 3)
        cls.dangelo = catalog(CatalogName.DANGELO, 2, theta=(Fraction(3, 5), Fraction(4, 5)))
        cls.whitney_chart = gauss_chart(cls.whitney)

    @classmethod
    def _setup_logging(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_gauss_rank_of_linear_embedding(self):
        self.assertEqual(0, gauss_generic_rank(self.linear, 4, 0))
        self.assertEqual(0, gauss_generic_rank(self.linear, 4, 1))

    def test_gauss_rank_of_whitney(self):
        self.assertEqual(5, gauss_generic_rank(self.whitney, 4, 0))
        self.assertEqual(5, gauss_generic_rank(self.whitney, 4, 1))

    def test_gauss_rank_samples(self):
        run = gauss_rank_samples(self.whitney, 3, 5, chart=self.whitney_chart)
        self.assertEqual(3, len(run.ranks))
        self.assertEqual(3, len(run.points))
        self.assertGreaterEqual(run.attempts, 3)
        self.assertEqual(5, run.rank)

    def test_equidimensional_map_has_trivial_gauss_map(self):
        identity = catalog(CatalogName.LINEAR, 3, 3)
        self.assertEqual(0, gauss_rank_at(gauss_chart(identity), GENERIC_POINT))

    def test_non_immersion_is_rejected(self):
        a = VarAlphabet.of(3)
        z1 = MPoly.variable(a, a.z(1))
        w = MPoly.variable(a, a.w)
        components = [RFunc(z1), RFunc(z1 * z1), RFunc(MPoly.zero(a)), RFunc(w)]
        F = CRMap(3, 4, MapModel.HEISENBERG, components, name="degenerate")
        with self.assertRaises(MapValidationError):
            gauss_chart(F)

    def test_fiber_linearization_matches_gauss_rank(self):
        rng = random.Random(3)
        for F in (self.linear, self.whitney, self.dangelo):
            chart = gauss_chart(F)
            for _ in range(2):
                p = HPoint.random(F.n, rng, 4)
                rows = fiber_linearization(F, p, chart)
                self.assertEqual(gauss_rank_at(chart, p), ExactLinearAlgebra.real_rank(rows), F.name)

    def test_degeneracy_dims_of_linear_embedding(self):
        dims = degeneracy_dims(self.linear, GENERIC_POINT, 4)
        self.assertEqual([0, 0, 0], dims.sequence)
        self.assertEqual(1, dims.l0)

    def test_degeneracy_dims_of_whitney(self):
        dims = degeneracy_dims(self.whitney, GENERIC_POINT, 4)
        self.assertEqual(2, dims.d[2])
        self.assertEqual(2, dims.d[3])
        self.assertEqual(2, dims.l0)

    def test_whitney_is_flat_at_origin(self):
        dims = degeneracy_dims(self.whitney, HPoint.origin(3), 3)
        self.assertEqual(0, dims.d[2])

    def test_degeneracy_dims_match_operator_spans(self):
        by_operators = span_dims_by_operators(self.whitney, GENERIC_POINT, 3)
        dims = degeneracy_dims(self.whitney, GENERIC_POINT, 3)
        for k in (2, 3):
            self.assertEqual(dims.d[k], by_operators[k] - by_operators[1])

    def test_degeneracy_dims_argument_check(self):
        with self.assertRaises(ValueError):
            degeneracy_dims(self.whitney, GENERIC_POINT, 1)

    def test_stabilization_index(self):
        self.assertEqual(2, stabilization_index({2: 2, 3: 2, 4: 2}, 3, 5))
        self.assertEqual(1, stabilization_index({2: 0, 3: 0}, 3, 5))
        self.assertEqual(3, stabilization_index({2: 1, 3: 2, 4: 3}, 3, 5))
        self.assertEqual(3, stabilization_index({2: 1, 3: 2, 4: 2}, 3, 9))

    def test_upsilon_rank_of_whitney(self):
        self.assertEqual(3, upsilon_rank(self.whitney, GENERIC_POINT))

    def test_upsilon_agrees_with_fiber_linearization(self):
        full_upsilon = upsilon_rank(self.whitney, GENERIC_POINT) == self.whitney.n
        rows = fiber_linearization(self.whitney, GENERIC_POINT, self.whitney_chart)
        full_fiber = ExactLinearAlgebra.real_rank(rows) == 2 * self.whitney.n - 1
        self.assertEqual(full_upsilon, full_fiber)

    def test_rank_report(self):
        report = RankReport()
        self.assertEqual(0, report.kappa0)
        self.assertEqual(1, report.l0)
        report.geom_ranks = [1, 0]
        report.degeneracy = [
            DegeneracyDims(GENERIC_POINT, {2: 2, 3: 2}, 2),
            DegeneracyDims(HPoint.origin(3), {2: 0, 3: 0}, 1),
        ]
        self.assertEqual(1, report.kappa0)
        self.assertEqual(2, report.l0)
        self.assertFalse(report.totally_geodesic)
        self.assertTrue(report.gauss_degenerate(3))


if __name__ == "__main__":
    unittest.main()
