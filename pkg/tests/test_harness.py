import logging
import os
import random
import sys
import tempfile
import unittest
from fractions import Fraction

from crgaussmap.common import CatalogName, CompletionOrder, ExitCode, MapModel, MapValidationError
from crgaussmap.cr_models import CRMap, catalog, cr_validity
from crgaussmap.harness import (
    AnalysisConfig,
    Hypotheses,
    N_bound,
    Verdict,
    analyze,
    d3_threshold,
    d3_threshold_by_sum,
    random_conjugate,
    totally_geodesic_test,
    verify_theorem,
)
from crgaussmap.rank_analysis import gauss_generic_rank

LOG = logging.getLogger(__name__)
THETA = (Fraction(3, 5), Fraction(4, 5))


class FormulaTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_d3_threshold(self):
        self.assertEqual(5, d3_threshold(1, 3))
        self.assertEqual(15, d3_threshold(2, 4))
        self.assertEqual(7, d3_threshold(1, 4))

    def test_d3_threshold_closed_form_matches_sum(self):
        self.assertEqual(5, d3_threshold_by_sum(1, 3))
        self.assertEqual(15, d3_threshold_by_sum(2, 4))
        for kappa0 in range(1, 6):
            for n in range(kappa0 + 2, kappa0 + 9):
                self.assertEqual(d3_threshold_by_sum(kappa0, n), d3_threshold(kappa0, n), (kappa0, n))

    def test_d3_threshold_domain(self):
        with self.assertRaises(ValueError):
            d3_threshold(0, 3)
        with self.assertRaises(ValueError):
            d3_threshold(2, 3)

    def test_N_bound(self):
        self.assertEqual(8, N_bound(1, 3))
        self.assertEqual(11, N_bound(1, 4))
        self.assertEqual(25, N_bound(2, 5))
        with self.assertRaises(ValueError):
            N_bound(0, 3)

    def test_N_bound_exceeds_source_dimension(self):
        for kappa0 in range(1, 5):
            for n in range(kappa0 + 2, 12):
                self.assertGreater(N_bound(kappa0, n), n)


class VerdictTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_low_stabilization_index_is_applicable(self):
        hyp = Hypotheses(n=3, N=5, kappa0=1, l0=2, d3=2)
        self.assertTrue(hyp.condition1)
        self.assertFalse(hyp.condition2)
        self.assertTrue(hyp.N_bound_ok)
        self.assertTrue(hyp.applicable)
        self.assertEqual(5, hyp.d3_threshold)

    def test_condition2_excludes_threshold(self):
        self.assertTrue(Hypotheses(n=4, N=20, kappa0=1, l0=3, d3=6).condition2)
        hyp = Hypotheses(n=4, N=20, kappa0=1, l0=3, d3=7)
        self.assertFalse(hyp.condition2)
        self.assertFalse(hyp.N_bound_ok)
        self.assertFalse(hyp.applicable)

    def test_large_kappa0_is_not_applicable(self):
        hyp = Hypotheses(n=2, N=3, kappa0=1, l0=2, d3=None)
        self.assertFalse(hyp.kappa0_small)
        self.assertIsNone(hyp.d3_threshold)
        self.assertFalse(hyp.applicable)

    def test_flat_map(self):
        hyp = Hypotheses(n=3, N=5, kappa0=0, l0=1, d3=0)
        self.assertTrue(hyp.applicable)
        self.assertIsNone(hyp.N_bound)
        self.assertFalse(hyp.N_bound_ok)

    def test_verdict(self):
        hyp = Hypotheses(n=3, N=5, kappa0=1, l0=2, d3=2)
        self.assertTrue(Verdict(hyp, False, False).biconditional_consistent)
        self.assertEqual(ExitCode.OK, Verdict(hyp, True, True).exit_code)
        broken = Verdict(hyp, True, False)
        self.assertFalse(broken.biconditional_consistent)
        self.assertEqual(ExitCode.INCONSISTENT, broken.exit_code)
        self.assertEqual("INCONSISTENT", broken.describe())

    def test_verdict_not_applicable(self):
        verdict = Verdict(Hypotheses(n=2, N=3, kappa0=1, l0=2, d3=None), True, False)
        self.assertIsNone(verdict.biconditional_consistent)
        self.assertEqual(ExitCode.OK, verdict.exit_code)
        self.assertEqual("hypotheses not applicable", verdict.describe())


class AnalysisConfigTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_defaults(self):
        cfg = AnalysisConfig.resolve(env={})
        self.assertEqual(8, cfg.samples)
        self.assertEqual(0, cfg.seed)
        self.assertEqual(4, cfg.kmax_for(3, 5))
        self.assertEqual(2, cfg.kmax_for(3, 3))

    def test_precedence(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "analysis.yaml")
            with open(path, "w") as f:
                f.write("samples: 5\nseed: 3\nprecision: 128\ncompletion: reversed\n")
            env = {"CRGAUSSMAP_SEED": "4", "CRGAUSSMAP_PRECISION": "192"}
            cfg = AnalysisConfig.resolve(path, env, precision=320, order=None)
        self.assertEqual(5, cfg.samples)
        self.assertEqual(4, cfg.seed)
        self.assertEqual(320, cfg.precision)
        self.assertEqual(CompletionOrder.REVERSED, cfg.completion)

    def test_missing_config_file(self):
        with self.assertRaises(ValueError):
            AnalysisConfig.resolve("/nonexistent/analysis.yaml", {})

    def test_unknown_field(self):
        with self.assertRaises(ValueError):
            AnalysisConfig().updated(threads=4)

    def test_validation(self):
        with self.assertRaises(ValueError):
            AnalysisConfig.resolve(env={}, precision=32)
        with self.assertRaises(ValueError):
            AnalysisConfig.resolve(env={}, samples=1)
        with self.assertRaises(ValueError):
            AnalysisConfig.resolve(env={}, order=3)
        with self.assertRaises(ValueError):
            AnalysisConfig.resolve(env={"CRGAUSSMAP_SAMPLES": "many"})


class AnalysisTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._setup_logging()
        cls.cfg = AnalysisConfig(samples=2)
        cls.linear = catalog(CatalogName.LINEAR, 3, 5)
        cls.whitney = catalog(CatalogName.WHITNEY, 3)
        cls.whitney_result = analyze(cls.whitney, cls.cfg)

    @classmethod
    def _setup_logging(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)

    def test_totally_geodesic_test(self):
        self.assertTrue(totally_geodesic_test(self.linear, self.cfg))
        self.assertFalse(totally_geodesic_test(self.whitney, self.cfg))

    def test_whitney(self):
        result = self.whitney_result
        report = result.to_report()
        self.assertTrue(report["cr_valid"])
        self.assertEqual(1, report["kappa0"])
        self.assertEqual(2, report["l0"])
        self.assertEqual(5, report["gauss_generic_rank"])
        self.assertEqual(5, report["d3_threshold"])
        self.assertEqual(8, report["N_bound"])
        self.assertFalse(report["gauss_degenerate"])
        self.assertFalse(report["totally_geodesic"])
        self.assertEqual({"applicable": True, "consistent": True}, report["biconditional"])
        self.assertTrue(report["identities_pass"])
        self.assertEqual(ExitCode.OK, result.exit_code)
        self.assertEqual(2, len(report["samples"]))
        self.assertEqual(3, report["samples"][0]["upsilon_rank"])

    def test_linear_embedding(self):
        result = analyze(self.linear, self.cfg)
        report = result.to_report()
        self.assertEqual(0, report["kappa0"])
        self.assertEqual(1, report["l0"])
        self.assertEqual(0, report["gauss_generic_rank"])
        self.assertTrue(report["gauss_degenerate"])
        self.assertTrue(report["totally_geodesic"])
        self.assertTrue(report["biconditional"]["consistent"])
        self.assertIsNone(report["N_bound"])

    def test_dangelo_is_out_of_scope(self):
        report = analyze(catalog(CatalogName.DANGELO, 2, theta=THETA), self.cfg).to_report()
        self.assertEqual(1, report["kappa0"])
        self.assertFalse(report["biconditional"]["applicable"])
        self.assertIsNone(report["biconditional"]["consistent"])

    def test_ball_model_is_conjugated(self):
        report = analyze(catalog(CatalogName.WHITNEY, 3, model=MapModel.BALL), self.cfg).to_report()
        self.assertEqual(1, report["kappa0"])
        self.assertTrue(report["biconditional"]["consistent"])

    def test_report_is_deterministic(self):
        self.assertEqual(self.whitney_result.to_report(), analyze(self.whitney, self.cfg).to_report())

    def test_invalid_map_is_rejected(self):
        components = list(self.whitney.components)
        components[-1] = components[-1] + components[0]
        broken = CRMap(3, 5, MapModel.HEISENBERG, components, name="whitney-broken")
        with self.assertRaises(MapValidationError):
            analyze(broken, self.cfg)

    def test_random_conjugate_is_valid(self):
        conjugate = random_conjugate(self.whitney, random.Random(5))
        self.assertTrue(cr_validity(conjugate))

    def test_verify_theorem(self):
        results = verify_theorem(self.whitney, self.cfg, conjugations=1)
        self.assertEqual(2, len(results))
        for result in results:
            self.assertEqual(1, result.verdict.hypotheses.kappa0, result.F.name)
            self.assertEqual(ExitCode.OK, result.exit_code)


class ConjugationInvarianceTest(unittest.TestCase):
    CONJUGATIONS = 20

    @classmethod
    def setUpClass(cls):
        logging.basicConfig(stream=sys.stdout, level=logging.DEBUG)
        cls.maps = [
            catalog(CatalogName.LINEAR, 3, 5),
            catalog(CatalogName.WHITNEY, 3),
            catalog(CatalogName.DANGELO, 2, theta=THETA),
        ]

    def test_gauss_rank_is_invariant_under_automorphisms(self):
        for F in self.maps:
            expected = gauss_generic_rank(F, 4, 0)
            self.assertEqual(expected, gauss_generic_rank(F, 4, 1), F.name)
            rng = random.Random(17)
            for idx in range(self.CONJUGATIONS):
                conjugate = random_conjugate(F, rng)
                self.assertEqual(expected, gauss_generic_rank(conjugate, 3, idx), f"{F.name} #{idx}")


if __name__ == "__main__":
    unittest.main()
