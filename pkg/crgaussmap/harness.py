import logging
import os
import random
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional

import yaml
from pythoncommons.date_utils import timeit
from pythoncommons.file_utils import FileUtils

from crgaussmap.common import (
    ENV_PREFIX,
    AutomorphismKind,
    CayleyDirection,
    CompletionOrder,
    DenominatorVanishesError,
    ExitCode,
    IdentityName,
    MapModel,
    MapValidationError,
    NumericalFailure,
    SamplingFailure,
)
from crgaussmap.cr_models import CRMap, HnAutomorphism, HPoint, cayley_conjugate, compose_auto, cr_validity
from crgaussmap.exact_algebra import DEFAULT_PRECISION, MIN_PRECISION
from crgaussmap.normalization import DEFAULT_ORDER, MIN_ORDER, IdentityReport, NormalizationPipeline, NormForm
from crgaussmap.rank_analysis import (
    DEFAULT_HEIGHT_BITS,
    DEFAULT_RESAMPLE_FACTOR,
    DegeneracyDims,
    RankReport,
    degeneracy_dims,
    gauss_chart,
    gauss_rank_samples,
    upsilon_rank,
)
from crgaussmap.utils import FractionUtils

LOG = logging.getLogger(__name__)

ENV_OVERRIDES = {
    "samples": f"{ENV_PREFIX}SAMPLES",
    "seed": f"{ENV_PREFIX}SEED",
    "precision": f"{ENV_PREFIX}PRECISION",
    "order": f"{ENV_PREFIX}ORDER",
}
REPORTED_IDENTITIES = [
    IdentityName.CHERN_MOSER,
    IdentityName.EQ112,
    IdentityName.EQ92EQ3,
    IdentityName.HH,
    IdentityName.EQ43,
    IdentityName.MU_LAW,
    IdentityName.RECENTRING,
    IdentityName.PHI30,
]


@dataclass
class AnalysisConfig:
    samples: int = 8
    seed: int = 0
    precision: int = DEFAULT_PRECISION
    order: int = DEFAULT_ORDER
    kmax: Optional[int] = None
    completion: CompletionOrder = CompletionOrder.INDEX
    height_bits: int = DEFAULT_HEIGHT_BITS
    resample_factor: int = DEFAULT_RESAMPLE_FACTOR

    @staticmethod
    def _coerce(name: str, value: Any):
        if name == "completion":
            return value if isinstance(value, CompletionOrder) else CompletionOrder(str(value))
        if value is None and name == "kmax":
            return None
        try:
            return int(value)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Config field '{name}' expects an integer, got: {value!r}") from e

    def updated(self, **overrides) -> "AnalysisConfig":
        """Copy with every non-None override applied."""
        known = {f.name for f in fields(self)}
        changes = {}
        for name, value in overrides.items():
            if name not in known:
                raise ValueError(f"Unknown config field: '{name}'. Valid fields: {sorted(known)}")
            if value is not None:
                changes[name] = self._coerce(name, value)
        return replace(self, **changes)

    def with_yaml(self, path: str) -> "AnalysisConfig":
        if not FileUtils.does_file_exist(path):
            raise ValueError(f"Config file does not exist: {path}")
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Config file must contain a flat mapping of field names, got: {type(data).__name__}")
        LOG.debug("Loaded analysis config overrides from %s: %s", path, data)
        return self.updated(**data)

    def with_env(self, env=None) -> "AnalysisConfig":
        env = os.environ if env is None else env
        return self.updated(**{name: env.get(var) for name, var in ENV_OVERRIDES.items()})

    @staticmethod
    def resolve(yaml_path: Optional[str] = None, env=None, **cli_flags) -> "AnalysisConfig":
        """Defaults, then the YAML file, then the environment, then explicit flags."""
        config = AnalysisConfig()
        if yaml_path:
            config = config.with_yaml(yaml_path)
        config = config.with_env(env).updated(**cli_flags)
        config.validate()
        return config

    def validate(self):
        if self.samples < 2:
            raise ValueError(f"samples must be at least 2, got: {self.samples}")
        if self.precision < MIN_PRECISION:
            raise ValueError(f"precision must be at least {MIN_PRECISION} bits, got: {self.precision}")
        if self.order < MIN_ORDER:
            raise ValueError(f"order must be at least {MIN_ORDER}, got: {self.order}")
        if self.kmax is not None and self.kmax < 2:
            raise ValueError(f"kmax must be at least 2, got: {self.kmax}")
        if self.height_bits < 1 or self.resample_factor < 1:
            raise ValueError("height_bits and resample_factor must be positive")

    def kmax_for(self, n: int, N: int) -> int:
        return self.kmax if self.kmax is not None else max(2, N - n + 2)

    def to_report_dict(self) -> Dict[str, int]:
        return {"seed": self.seed, "samples": self.samples, "precision": self.precision, "order": self.order}


def d3_threshold(kappa0: int, n: int) -> Fraction:
    if kappa0 < 1 or n < kappa0 + 2:
        raise ValueError(f"d3_threshold needs kappa0 >= 1 and n >= kappa0 + 2, got kappa0={kappa0}, n={n}")
    return Fraction(kappa0, 6) * (3 * (kappa0 + 3) * n - (kappa0 + 1) * (2 * kappa0 + 1))


def d3_threshold_by_sum(kappa0: int, n: int) -> Fraction:
    if kappa0 < 1 or n < kappa0 + 2:
        raise ValueError(f"d3_threshold needs kappa0 >= 1 and n >= kappa0 + 2, got kappa0={kappa0}, n={n}")
    first = sum(n - j for j in range(1, kappa0 + 1))
    mixed = Fraction(kappa0 * (kappa0 + 1) * (n - kappa0), 2)
    cubic = Fraction(kappa0 * (kappa0 + 1) * (kappa0 + 2), 6)
    return first + mixed + cubic


def N_bound(kappa0: int, n: int) -> Fraction:
    if kappa0 < 1:
        raise ValueError(f"N_bound needs kappa0 >= 1, got: {kappa0}")
    return Fraction((kappa0 + 1) * (kappa0 + 2) * n, 2) - Fraction(kappa0 * (kappa0 + 1) * (2 * kappa0 + 1), 6)


def _json_rational(value: Optional[Fraction]):
    if value is None:
        return None
    if value.denominator == 1:
        return value.numerator
    return FractionUtils.format(value)


@dataclass
class Hypotheses:
    n: int
    N: int
    kappa0: int
    l0: int
    d3: Optional[int]

    @property
    def kappa0_small(self) -> bool:
        return self.kappa0 <= self.n - 2

    @property
    def d3_threshold(self) -> Optional[Fraction]:
        if self.kappa0 < 1 or not self.kappa0_small:
            return None
        return d3_threshold(self.kappa0, self.n)

    @property
    def N_bound(self) -> Optional[Fraction]:
        return N_bound(self.kappa0, self.n) if self.kappa0 >= 1 else None

    @property
    def condition1(self) -> bool:
        return self.l0 <= 2

    @property
    def condition2(self) -> bool:
        threshold = self.d3_threshold
        return threshold is not None and self.l0 >= 3 and self.d3 is not None and self.d3 != threshold

    @property
    def N_bound_ok(self) -> bool:
        bound = self.N_bound
        return bound is not None and self.N < bound

    @property
    def applicable(self) -> bool:
        return self.kappa0_small and (self.condition1 or self.condition2 or self.N_bound_ok)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kappa0": self.kappa0,
            "kappa0_le_n_minus_2": self.kappa0_small,
            "l0": self.l0,
            "condition1": self.condition1,
            "condition2": self.condition2,
            "N_bound_ok": self.N_bound_ok,
        }


@dataclass
class Verdict:
    hypotheses: Hypotheses
    gauss_degenerate: bool
    totally_geodesic: bool

    @property
    def applicable(self) -> bool:
        return self.hypotheses.applicable

    @property
    def biconditional_consistent(self) -> Optional[bool]:
        """None when the hypotheses are unmet: the statement is then not applicable."""
        if not self.applicable:
            return None
        return self.gauss_degenerate == self.totally_geodesic

    @property
    def exit_code(self) -> ExitCode:
        return ExitCode.INCONSISTENT if self.biconditional_consistent is False else ExitCode.OK

    def describe(self) -> str:
        if not self.applicable:
            return "hypotheses not applicable"
        return "consistent" if self.biconditional_consistent else "INCONSISTENT"


class SampleStatus(Enum):
    ANALYZED = "analyzed"
    SINGULAR = "singular"
    ESCALATED = "escalated"
    NUMERICAL_FAILURE = "numerical failure"


class SampleProgress:
    def __init__(self, total: int):
        self.total = total
        self.counts: Dict[SampleStatus, int] = defaultdict(int)

    def register(self, status: SampleStatus, p: HPoint):
        self.counts[status] += 1
        if status == SampleStatus.ANALYZED:
            LOG.info("[%d/%d] Analyzed sample point %s", self.counts[status], self.total, p.label())

    def print_stats(self):
        LOG.info("=" * 50 + "    SAMPLE STATISTICS    " + "=" * 50)
        for status in SampleStatus:
            LOG.info("%s: %d", status.value, self.counts[status])
        LOG.info("=" * 50 + "    END OF SAMPLE STATISTICS    " + "=" * 50)


@dataclass
class SampleAnalysis:
    point: HPoint
    degeneracy: DegeneracyDims
    form: NormForm
    upsilon_rank: int
    identities: IdentityReport

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": {
                "z": [FractionUtils.format_exact(c) for c in self.point.z0],
                "u": FractionUtils.format(self.point.u0),
            },
            "geom_rank": self.form.geom_rank,
            "d": self.degeneracy.sequence,
            "upsilon_rank": self.upsilon_rank,
        }


@dataclass
class AnalysisResult:
    F: CRMap
    config: AnalysisConfig
    cr_valid: bool
    ranks: RankReport
    verdict: Verdict
    samples: List[SampleAnalysis] = field(default_factory=list)

    @property
    def exit_code(self) -> ExitCode:
        return self.verdict.exit_code

    def worst_residuals(self) -> Dict[str, Optional[float]]:
        worst: Dict[str, Optional[float]] = {}
        for name in REPORTED_IDENTITIES:
            values = [s.identities.residuals.get(name) for s in self.samples]
            values = [float(v) for v in values if v is not None]
            worst[name.value] = max(values) if values else None
        return worst

    def to_report(self) -> Dict[str, Any]:
        hyp = self.verdict.hypotheses
        return {
            "cr_valid": self.cr_valid,
            "n": self.F.n,
            "N": self.F.N,
            "samples": [s.to_dict() for s in self.samples],
            "kappa0": hyp.kappa0,
            "l0": hyp.l0,
            "d3": hyp.d3,
            "d3_threshold": _json_rational(hyp.d3_threshold),
            "N_bound": _json_rational(hyp.N_bound),
            "gauss_generic_rank": self.ranks.gauss_generic_rank,
            "gauss_ranks_by_seed": {str(run.seed): run.rank for run in self.ranks.gauss_runs},
            "gauss_sample_counts": {str(run.seed): len(run.ranks) for run in self.ranks.gauss_runs},
            "gauss_degenerate": self.verdict.gauss_degenerate,
            "totally_geodesic": self.verdict.totally_geodesic,
            "hypotheses": hyp.to_dict(),
            "biconditional": {
                "applicable": self.verdict.applicable,
                "consistent": self.verdict.biconditional_consistent,
            },
            "identity_residuals": self.worst_residuals(),
            "identities_pass": all(s.identities.all_asserted_pass() for s in self.samples),
            "numerical_failures": self.ranks.numerical_failures,
            "config": self.config.to_report_dict(),
        }


def prepare_map(F: CRMap) -> CRMap:
    """Heisenberg-model map fixing the origin; ball maps are conjugated first."""
    if F.model == MapModel.BALL:
        LOG.info("Conjugating ball-model map '%s' to the Heisenberg model", F.name)
        try:
            F = cayley_conjugate(F, CayleyDirection.BALL_TO_HEIS)
        except DenominatorVanishesError as e:
            raise MapValidationError(f"{F.name}: Cayley conjugate is not defined at the origin ({e})") from e
    return F


def totally_geodesic_test(F: CRMap, cfg: AnalysisConfig) -> bool:
    """d_2(p) = 0 at every sampled point, in exact arithmetic."""
    F = prepare_map(F)
    rng = random.Random(cfg.seed)
    checked, attempts = 0, 0
    while checked < cfg.samples and attempts < cfg.samples * cfg.resample_factor:
        attempts += 1
        p = HPoint.random(F.n, rng, cfg.height_bits)
        try:
            dims = degeneracy_dims(F, p, 2)
        except (DenominatorVanishesError, NumericalFailure) as e:
            LOG.warning("Skipping sample point %s: %s", p.label(), e)
            continue
        checked += 1
        if dims.d[2] != 0:
            return False
    if not checked:
        raise SamplingFailure(f"All {attempts} sampled points were singular for '{F.name}'")
    return True


def _normal_form(F: CRMap, p: HPoint, cfg: AnalysisConfig, progress: SampleProgress):
    precision = cfg.precision
    for attempt in range(2):
        pipeline = NormalizationPipeline(precision, cfg.order, cfg.completion)
        try:
            return pipeline, pipeline.run(F, p)
        except NumericalFailure as e:
            if attempt:
                raise
            progress.register(SampleStatus.ESCALATED, p)
            LOG.warning(
                "Numerical failure at %s with P=%d (%s), retrying at P=%d", p.label(), precision, e, 2 * precision
            )
            precision *= 2


def _analyze_sample(F: CRMap, p: HPoint, cfg: AnalysisConfig, progress: SampleProgress) -> SampleAnalysis:
    dims = degeneracy_dims(F, p, cfg.kmax_for(F.n, F.N))
    pipeline, form = _normal_form(F, p, cfg, progress)
    ups = upsilon_rank(F, p, form=form)
    identities = pipeline.hjy_identity_checks(form)
    LOG.debug(
        "Sample %s: geometric rank %d, d = %s, upsilon rank %d", p.label(), form.geom_rank, dims.sequence, ups
    )
    return SampleAnalysis(p, dims, form, ups, identities)


@timeit
def analyze(F: CRMap, cfg: AnalysisConfig) -> AnalysisResult:
    cfg.validate()
    F = prepare_map(F)
    cr_valid = cr_validity(F)
    if not cr_valid:
        raise MapValidationError(f"Map '{F.name}' does not send the source hypersurface into the target one")
    n, N = F.n, F.N
    LOG.info("Analyzing '%s' (n=%d, N=%d) with config %s", F.name, n, N, cfg)

    chart = gauss_chart(F)
    ranks = RankReport()
    for seed in (cfg.seed, cfg.seed + 1):
        ranks.gauss_runs.append(
            gauss_rank_samples(F, cfg.samples, seed, cfg.height_bits, cfg.resample_factor, chart=chart)
        )
    if not ranks.seeds_agree:
        LOG.warning("Gauss map ranks disagree across seeds: %s", {r.seed: r.rank for r in ranks.gauss_runs})

    progress = SampleProgress(cfg.samples)
    samples: List[SampleAnalysis] = []
    for p in ranks.gauss_runs[0].points:
        try:
            sample = _analyze_sample(F, p, cfg, progress)
        except DenominatorVanishesError as e:
            progress.register(SampleStatus.SINGULAR, p)
            LOG.warning("Skipping singular sample point %s: %s", p.label(), e)
            continue
        except NumericalFailure as e:
            progress.register(SampleStatus.NUMERICAL_FAILURE, p)
            ranks.numerical_failures += 1
            LOG.warning("Numerical failure at %s after escalation: %s", p.label(), e)
            continue
        progress.register(SampleStatus.ANALYZED, p)
        samples.append(sample)
        ranks.points.append(p)
        ranks.geom_ranks.append(sample.form.geom_rank)
        ranks.degeneracy.append(sample.degeneracy)
        ranks.upsilon_ranks.append(sample.upsilon_rank)
    progress.print_stats()
    if not samples:
        if ranks.numerical_failures:
            raise NumericalFailure(f"Precision exhausted at every sample point of '{F.name}'")
        raise SamplingFailure(f"No sample point of '{F.name}' could be analyzed")

    generic = ranks.generic_degeneracy
    hypotheses = Hypotheses(n, N, ranks.kappa0, ranks.l0, generic.d.get(3))
    verdict = Verdict(hypotheses, ranks.gauss_degenerate(n), ranks.totally_geodesic)
    log_fn = LOG.error if verdict.biconditional_consistent is False else LOG.info
    log_fn(
        "Verdict for '%s': %s (gauss degenerate: %s, totally geodesic: %s, kappa0=%d, l0=%d)",
        F.name,
        verdict.describe(),
        verdict.gauss_degenerate,
        verdict.totally_geodesic,
        hypotheses.kappa0,
        hypotheses.l0,
    )
    return AnalysisResult(F, cfg, cr_valid, ranks, verdict, samples)


SOURCE_KINDS = [
    AutomorphismKind.TRANSLATION,
    AutomorphismKind.FRACTIONAL,
    AutomorphismKind.ROTATION,
    AutomorphismKind.DILATION,
]
TARGET_KINDS = [AutomorphismKind.FRACTIONAL, AutomorphismKind.ROTATION, AutomorphismKind.DILATION]


def random_conjugate(F: CRMap, rng: random.Random, attempts: int = 5) -> CRMap:
    """post o F o pre for random automorphisms, redrawn while the result is undefined or degenerate at the origin."""
    for _ in range(attempts):
        pre = HnAutomorphism.random(F.n, rng, SOURCE_KINDS)
        post = HnAutomorphism.random(F.N, rng, TARGET_KINDS)
        LOG.debug("Conjugating '%s' by %s (source) and %s (target)", F.name, pre.kind.label, post.kind.label)
        conjugate = compose_auto(F, pre=pre, post=post)
        try:
            gauss_chart(conjugate)
        except MapValidationError as e:
            LOG.warning("Redrawing automorphisms for '%s': %s", F.name, e)
            continue
        return conjugate
    raise SamplingFailure(f"No usable automorphism conjugate of '{F.name}' after {attempts} draws")


def verify_theorem(F: CRMap, cfg: AnalysisConfig, conjugations: int = 0) -> List[AnalysisResult]:
    """Analysis of F and of ``conjugations`` random automorphism conjugates; all verdicts must be consistent."""
    F = prepare_map(F)
    results = [analyze(F, cfg)]
    rng = random.Random(cfg.seed)
    for idx in range(conjugations):
        conjugate = random_conjugate(F, rng)
        conjugate.name = f"{F.name}#conjugate{idx + 1}"
        results.append(analyze(conjugate, cfg))
    inconsistent = [r.F.name for r in results if r.exit_code == ExitCode.INCONSISTENT]
    if inconsistent:
        LOG.error("Inconsistent verdicts for: %s", inconsistent)
    return results
