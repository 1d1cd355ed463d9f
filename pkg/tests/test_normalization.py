import logging
import random
import sys
import unittest
from fractions import Fraction

from crgaussmap.common import (
    CatalogName,
    CompletionOrder,
    DenominatorVanishesError,
    IdentityName,
    MapModel,
    NumericalFailure,
    SIndexPart,
)
from crgaussmap.cr_models import CRMap, HPoint, catalog
from crgaussmap.exact_algebra import RFunc, exact
from crgaussmap.normalization import (
    ASSERTED_IDENTITIES,
    IdentityReport,
    NormalizationPipeline,
    normalize,
    s0_indices,
    s1_nominal_width,
    s_index_set,
)

LOG = logging.getLogger(__name__)
GENERIC_POINT = HPoint((exact(Fraction(1, 2)), exact(Fraction(1, 3))), Fraction(1, 5))
OTHER_POINT = HPoint((exact(Fraction(-1, 3), Fraction(1, 4)), exact(Fraction(2, 7))), Fraction(-3, 2))


class IndexSetTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_s0_indices(self):
        self.assertEqual([(1, 1), (1, 2)], [(s.j, s.l) for s in s0_indices(1, 3)])
        self.assertEqual(5, len(s0_indices(2, 4)))
        self.assertEqual([], s0_indices(0, 3))

    def test_s_index_set(self):
        indices = s_index_set(1, 3, 6)
        self.assertEqual([SIndexPart.S0, SIndexPart.S0, SIndexPart.S1], [s.part for s in indices])
        self.assertEqual("(1,2)", indices[1].label)

    def test_s_index_set_overflow(self):
        with self.assertRaises(NumericalFailure):
            s_index_set(2, 4, 5)

    def test_s1_nominal_width(self):
        self.assertEqual(0, s1_nominal_width(1, 3, 5))
        self.assertEqual(Fraction(1), s1_nominal_width(1, 3, 6))


class NormalizationPipelineTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._setup_logging()
        cls.linear = catalog(CatalogName.LINEAR, 3, 5)
        cls.whitney = catalog(CatalogName.WHITNEY, 3)
        cls.dangelo = catalog(CatalogName.DANGELO, 2, theta=(Fraction(3, 5), Fraction(4, 5)))
        cls.pipeline = NormalizationPipeline(256, 6)
        cls.whitney_form = cls.pipeline.run(cls.whitney, GENERIC_POINT)

    @classmethod
    def _setup_logging(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_order_check(self):
        with self.assertRaises(ValueError):
            NormalizationPipeline(256, 3)

    def test_whitney_geometric_rank(self):
        form = self.whitney_form
        self.assertEqual(1, form.geom_rank)
        self.assertEqual(1, form.kappa)
        self.assertTrue(form.bridge_ok)
        self.assertGreater(form.lam, 0)
        self.assertLess(form.hermitian_residual, form.threshold)
        self.assertLess(form.unitarity_residual, form.threshold)

    def test_whitney_jets_of_every_step(self):
        form = self.whitney_form
        for key in ("F_p", "F_p*", "F_p**", "F_p***", "F_p****"):
            self.assertEqual(5, len(form.jets[key]), key)
        self.assertIs(form.jets["F_p****"], form.final_jets)

    def test_whitney_normal_form_shape(self):
        form = self.whitney_form
        self.assertLess(form.shape_residual, form.threshold)
        self.assertLess(form.cm_residual, form.threshold)
        self.assertLess(form.mu_law_residual, form.threshold)
        self.assertLess(form.recentring_law_residual, form.threshold)
        self.assertGreater(form.mu[0], 0)
        self.assertEqual(2, len(form.s_index))

    def test_whitney_identities(self):
        report = self.pipeline.hjy_identity_checks(self.whitney_form)
        for name in ASSERTED_IDENTITIES:
            self.assertTrue(report.passed(name), name.value)
        self.assertIsNotNone(report.residuals[IdentityName.EQ112])
        self.assertIsNotNone(report.residuals[IdentityName.HH])
        self.assertIsNotNone(report.residuals[IdentityName.EQ43])
        self.assertEqual(sorted(n.value for n in IdentityName), list(report.to_dict().keys()))

    def test_identities_at_another_point(self):
        pipeline = NormalizationPipeline(256, 6, CompletionOrder.REVERSED)
        form = pipeline.run(self.whitney, OTHER_POINT)
        self.assertEqual(1, form.geom_rank)
        self.assertTrue(pipeline.hjy_identity_checks(form).all_asserted_pass())

    def test_whitney_is_flat_at_origin(self):
        form = normalize(self.whitney, HPoint.origin(3))
        self.assertEqual(0, form.geom_rank)
        self.assertNotIn("F_p****", form.jets)
        self.assertIs(form.jets["F_p**"], form.final_jets)

    def test_linear_embedding(self):
        form = normalize(self.linear, GENERIC_POINT)
        self.assertEqual(0, form.geom_rank)
        phi = form.final_jets.polys[2:4]
        self.assertTrue(all(p.is_zero() for p in phi))
        report = NormalizationPipeline().hjy_identity_checks(form)
        self.assertTrue(report.all_asserted_pass())
        self.assertIsNone(report.residuals[IdentityName.MU_LAW])

    def test_dangelo_geometric_rank(self):
        p = HPoint((exact(Fraction(1, 3)),), Fraction(1, 2))
        self.assertEqual(1, normalize(self.dangelo, p).geom_rank)

    def test_whitney_in_dimension_four(self):
        p = HPoint((exact(Fraction(1, 2)), exact(Fraction(1, 3)), exact(0, Fraction(1, 4))), Fraction(1, 5))
        self.assertEqual(1, normalize(catalog(CatalogName.WHITNEY, 4), p, order=5).geom_rank)

    def test_completion_order_does_not_change_rank(self):
        reversed_form = NormalizationPipeline(256, 6, CompletionOrder.REVERSED).run(self.whitney, GENERIC_POINT)
        self.assertEqual(self.whitney_form.geom_rank, reversed_form.geom_rank)

    def test_completion_order_does_not_change_invariants(self):
        comps = list(self.whitney.components)
        padded = CRMap(
            3,
            6,
            MapModel.HEISENBERG,
            comps[:4] + [RFunc.zero(self.whitney.alphabet)] + comps[4:],
            base_normalized=self.whitney.base_normalized,
            name="whitney-padded",
        )
        index_pipeline = NormalizationPipeline(256, 6, CompletionOrder.INDEX)
        reversed_pipeline = NormalizationPipeline(256, 6, CompletionOrder.REVERSED)
        for p in (GENERIC_POINT, OTHER_POINT):
            by_index = index_pipeline.run(padded, p)
            by_reversed = reversed_pipeline.run(padded, p)
            self.assertEqual(1, by_index.geom_rank)
            self.assertEqual(by_index.geom_rank, by_reversed.geom_rank)
            self.assertEqual([SIndexPart.S0, SIndexPart.S0, SIndexPart.S1], [s.part for s in by_index.s_index])
            for mu_a, mu_b in zip(by_index.mu, by_reversed.mu):
                self.assertLess(abs(mu_a - mu_b), by_index.threshold)
            for key, value in by_index.mu_jk.items():
                self.assertLess(abs(value - by_reversed.mu_jk[key]), by_index.threshold, key)
            self.assertEqual(
                index_pipeline.phi11_vector(by_index).is_zero, reversed_pipeline.phi11_vector(by_reversed).is_zero
            )
            self.assertTrue(reversed_pipeline.hjy_identity_checks(by_reversed).all_asserted_pass())

    def test_normalization_is_idempotent(self):
        form = self.whitney_form
        again = self.pipeline.run_from_jets(form.final_jets, bridge_ok=form.bridge_ok)
        self.assertEqual(form.geom_rank, again.geom_rank)
        self.assertLess(abs(form.mu[0] - again.mu[0]), form.threshold)
        bc = self.pipeline.bc
        for idx, (before, after) in enumerate(zip(form.final_jets.polys, again.final_jets.polys)):
            self.assertLess(bc.poly_residual(before - after), form.threshold, idx)

    def test_closing_identity_is_reported_only(self):
        self.assertNotIn(IdentityName.PHI30, ASSERTED_IDENTITIES)
        linear_report = NormalizationPipeline().hjy_identity_checks(normalize(self.linear, GENERIC_POINT))
        self.assertEqual(0, linear_report.residuals[IdentityName.PHI30])
        # whitney(3) has no S1 component, so only the (sum mu_j |z_j|^2)^2 |z|^2 side survives
        report = self.pipeline.hjy_identity_checks(self.whitney_form)
        self.assertGreater(report.residuals[IdentityName.PHI30], self.whitney_form.threshold)
        self.assertTrue(report.all_asserted_pass())

    def test_phi11_stable_under_precision_doubling(self):
        result = self.pipeline.phi11_vector(self.whitney_form, recheck=True)
        self.assertEqual(2, len(result.forms))
        self.assertTrue(result.stable)

    def test_identity_report(self):
        report = IdentityReport({IdentityName.CHERN_MOSER: 1, IdentityName.EQ112: None}, 2)
        self.assertTrue(report.passed(IdentityName.CHERN_MOSER))
        self.assertTrue(report.passed(IdentityName.EQ112))
        self.assertTrue(report.all_asserted_pass())
        self.assertFalse(IdentityReport({IdentityName.HH: 3}, 2).all_asserted_pass())


class RandomPointNormalizationTest(unittest.TestCase):
    CM_POINTS = 20
    IDENTITY_POINTS = 10

    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)
        cls.maps = [
            catalog(CatalogName.LINEAR, 3, 5),
            catalog(CatalogName.WHITNEY, 3),
            catalog(CatalogName.DANGELO, 2, theta=(Fraction(3, 5), Fraction(4, 5))),
        ]

    def _points(self, F, seed: int, count: int):
        rng = random.Random(seed)
        return [HPoint.random(F.n, rng, height_bits=3) for _ in range(count)]

    def test_chern_moser_identity_at_random_points(self):
        pipeline = NormalizationPipeline(256, 4)
        for F in self.maps + [catalog(CatalogName.WHITNEY, 4)]:
            checked = 0
            for p in self._points(F, 3, self.CM_POINTS):
                try:
                    jets, _ = pipeline.step_I_translate(F, p)
                except DenominatorVanishesError:
                    LOG.warning("Skipping %s, pole of %s", p.label(), F.name)
                    continue
                step3 = pipeline.step_III_fractional(pipeline.step_II_unitary(jets))
                threshold = pipeline.bc.tolerance * pipeline.scale_of(jets)
                self.assertLess(step3.shape_residual, threshold, f"{F.name} at {p.label()}")
                self.assertLess(step3.cm_residual, threshold, f"{F.name} at {p.label()}")
                checked += 1
            self.assertGreaterEqual(checked, 15, F.name)

    def test_identities_at_random_points(self):
        pipeline = NormalizationPipeline(256, 6)
        for F in self.maps:
            checked = 0
            for p in self._points(F, 5, self.IDENTITY_POINTS):
                try:
                    form = pipeline.run(F, p)
                except DenominatorVanishesError:
                    LOG.warning("Skipping %s, pole of %s", p.label(), F.name)
                    continue
                report = pipeline.hjy_identity_checks(form)
                for name in (IdentityName.EQ112, IdentityName.HH):
                    self.assertIsNotNone(report.residuals[name])
                    self.assertTrue(report.passed(name), f"{name.value} of {F.name} at {p.label()}")
                self.assertTrue(report.all_asserted_pass(), f"{F.name} at {p.label()}")
                checked += 1
            self.assertGreaterEqual(checked, 7, F.name)


if __name__ == "__main__":
    unittest.main()
