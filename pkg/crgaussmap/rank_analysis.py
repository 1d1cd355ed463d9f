import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from pythoncommons.date_utils import timeit

from crgaussmap.common import CompletionOrder, DenominatorVanishesError, MapValidationError, NumericalFailure
from crgaussmap.common import SamplingFailure
from crgaussmap.cr_calculus import HypersurfaceDerivatives, apply_L, apply_T, jet_at
from crgaussmap.cr_models import CRMap, HPoint
from crgaussmap.exact_algebra import (
    DEFAULT_PRECISION,
    I_UNIT,
    ZERO,
    BigComplexContext,
    ExactComplex,
    ExactLinearAlgebra,
    RFunc,
)
from crgaussmap.normalization import DEFAULT_ORDER, NormalizationPipeline, NormForm

LOG = logging.getLogger(__name__)

DEFAULT_HEIGHT_BITS = 8
DEFAULT_RESAMPLE_FACTOR = 5

Matrix = List[List[ExactComplex]]


@dataclass
class GrassChart:
    """Affine chart of the Gauss map: G = P^-1 Q, evaluated pointwise only."""

    F: CRMap
    P: List[List[RFunc]]
    Q: List[List[RFunc]]

    @property
    def n(self) -> int:
        return self.F.n

    @property
    def N(self) -> int:
        return self.F.N

    def values_at(self, p: HPoint) -> Tuple[Matrix, Matrix]:
        values = p.values()
        return (
            [[e.evaluate(values) for e in row] for row in self.P],
            [[e.evaluate(values) for e in row] for row in self.Q],
        )

    def G_at(self, p: HPoint) -> Matrix:
        P, Q = self.values_at(p)
        if not self.Q[0]:
            return [[] for _ in range(self.n)]
        return ExactLinearAlgebra.solve(P, Q)

    def derivatives_at(self, p: HPoint):
        """Values of P, Q at p and their derivatives along the 2n-1 real directions of the hypersurface."""
        chain = HypersurfaceDerivatives(p)
        dirs = 2 * self.n - 1

        def split(matrix):
            values = [[None] * len(row) for row in matrix]
            partials = [[[None] * len(row) for row in matrix] for _ in range(dirs)]
            for i, row in enumerate(matrix):
                for k, entry in enumerate(row):
                    values[i][k], d = chain.of(entry)
                    for t in range(dirs):
                        partials[t][i][k] = d[t]
            return values, partials

        P, dP = split(self.P)
        Q, dQ = split(self.Q)
        return P, dP, Q, dQ

    def residual_derivatives(self, p: HPoint) -> Tuple[Matrix, Matrix, List[Matrix]]:
        """P(p), G(p) and dQ - dP.G(p) per real direction, i.e. the derivatives of R = Q - P.G(p)."""
        P, dP, Q, dQ = self.derivatives_at(p)
        G = ExactLinearAlgebra.solve(P, Q)
        width = self.N - self.n
        columns = []
        for t in range(len(dP)):
            dPG = ExactLinearAlgebra.mat_mul(dP[t], G)
            columns.append([[dQ[t][i][k] - dPG[i][k] for k in range(width)] for i in range(self.n)])
        return P, G, columns


def _flatten_columns(columns: Sequence[Matrix]) -> Matrix:
    """Rows indexed by matrix entries, one column per real direction."""
    if not columns:
        return []
    rows = []
    for i in range(len(columns[0])):
        for k in range(len(columns[0][i])):
            rows.append([col[i][k] for col in columns])
    return rows


def _immersion_matrix(F: CRMap, p: HPoint) -> Matrix:
    values = p.values()
    slots = F.alphabet.z_slots
    return [list(comp.value_and_partials(values, slots)[1]) for comp in F.f_tilde]


def gauss_chart(F: CRMap) -> GrassChart:
    n = F.n
    try:
        linear_part = _immersion_matrix(F, HPoint.origin(n))
    except DenominatorVanishesError as e:
        raise MapValidationError(f"Map '{F.name}' is not defined at the origin") from e
    if ExactLinearAlgebra.rank(linear_part) < n - 1:
        raise MapValidationError(f"Map '{F.name}' is not an immersion at the origin")
    tangent = list(F.f) + [F.g]
    P = [[apply_L(h, j) for h in tangent] for j in range(1, n)] + [[apply_T(h) for h in tangent]]
    Q = [[apply_L(h, j) for h in F.phi] for j in range(1, n)] + [[apply_T(h) for h in F.phi]]
    LOG.debug("Built Grassmannian chart of '%s': P is %dx%d, Q is %dx%d", F.name, n, n, n, F.N - n)
    return GrassChart(F, P, Q)


def gauss_jacobian(chart: GrassChart, p: HPoint) -> Matrix:
    """Real Jacobian of G at p: rows are entries of G (complex), columns (Re z, Im z, u)."""
    P, _, columns = chart.residual_derivatives(p)
    solved = [ExactLinearAlgebra.solve(P, col) for col in columns]
    return _flatten_columns(solved)


def gauss_rank_at(chart: GrassChart, p: HPoint) -> int:
    if chart.N == chart.n:
        return 0
    return ExactLinearAlgebra.real_rank(gauss_jacobian(chart, p))


@dataclass
class GaussRankRun:
    seed: int
    ranks: List[int] = field(default_factory=list)
    points: List[HPoint] = field(default_factory=list)
    attempts: int = 0
    skipped: int = 0

    @property
    def rank(self) -> int:
        return max(self.ranks)


def gauss_rank_samples(
    F: CRMap,
    samples: int,
    seed: int,
    height_bits: int = DEFAULT_HEIGHT_BITS,
    resample_factor: int = DEFAULT_RESAMPLE_FACTOR,
    chart: Optional[GrassChart] = None,
) -> GaussRankRun:
    chart = chart or gauss_chart(F)
    rng = random.Random(seed)
    run = GaussRankRun(seed)
    budget = samples * resample_factor
    while len(run.ranks) < samples and run.attempts < budget:
        run.attempts += 1
        p = HPoint.random(F.n, rng, height_bits)
        try:
            rank = gauss_rank_at(chart, p)
        except (ZeroDivisionError, DenominatorVanishesError) as e:
            run.skipped += 1
            LOG.warning("Skipping singular sample point %s: %s", p.label(), e)
            continue
        run.ranks.append(rank)
        run.points.append(p)
    if not run.ranks:
        raise SamplingFailure(f"All {run.attempts} sampled points were singular for '{F.name}', try another seed")
    LOG.debug("Gauss rank samples of '%s' (seed %d): %s", F.name, seed, run.ranks)
    return run


@timeit
def gauss_generic_rank(F: CRMap, samples: int, seed: int, height_bits: int = DEFAULT_HEIGHT_BITS) -> int:
    """Generic real rank of the Gauss map, as the maximum over random exact points of the hypersurface."""
    return gauss_rank_samples(F, samples, seed, height_bits).rank


def fiber_linearization(F: CRMap, p: HPoint, chart: Optional[GrassChart] = None) -> Matrix:
    """Real Jacobian at p of R = Q - P P(p)^-1 Q(p)."""
    chart = chart or gauss_chart(F)
    if chart.N == chart.n:
        return []
    try:
        _, _, columns = chart.residual_derivatives(p)
    except ZeroDivisionError as e:
        raise NumericalFailure(f"P is singular at {p.label()}") from e
    return _flatten_columns(columns)


@dataclass
class DegeneracyDims:
    point: HPoint
    d: Dict[int, int]
    l0: int

    @property
    def sequence(self) -> List[int]:
        return [self.d[k] for k in sorted(self.d)]


def _multi_indices(n_vars: int, degree: int):
    for combo in itertools.combinations_with_replacement(range(1, n_vars + 1), degree):
        yield combo


def stabilization_index(d: Dict[int, int], n: int, N: int) -> int:
    """Least l >= 1 with d_l = d_{l+1} (d_1 = 0), kept within 1 <= l0 <= N - n + 1."""
    ks = sorted(d)
    seq = {1: 0, **d}
    l0 = ks[-1] if ks else 1
    for l in range(1, ks[-1] if ks else 1):
        if seq[l] == seq[l + 1]:
            l0 = l
            break
    return max(1, min(l0, N - n + 1))


def degeneracy_dims(F: CRMap, p: HPoint, kmax: int) -> DegeneracyDims:
    """d_k(p) = dim E_k(p) / E_1(p) from the z-derivatives of the base-translated map, exactly."""
    if kmax < 2:
        raise ValueError(f"kmax must be at least 2, got: {kmax}")
    n, N = F.n, F.N
    jets = jet_at(F, p, kmax)
    alphabet = jets.alphabet
    f_tilde = jets.polys[: N - 1]
    rows: Matrix = []
    dims: Dict[int, int] = {}
    for k in range(1, kmax + 1):
        for combo in _multi_indices(n - 1, k):
            vec = [0] * alphabet.size
            for j in combo:
                vec[alphabet.z(j)] += 1
            rows.append([poly.coefficient(tuple(vec)) for poly in f_tilde])
        rank = ExactLinearAlgebra.rank(rows)
        if k == 1:
            if rank < n - 1:
                raise NumericalFailure(f"Immersion failure at {p.label()}")
            continue
        dims[k] = rank - (n - 1)
    result = DegeneracyDims(p, dims, stabilization_index(dims, n, N))
    LOG.debug("Degeneracy dimensions of '%s' at %s: %s, l0 = %d", F.name, p.label(), result.sequence, result.l0)
    return result


def span_dims_by_operators(F: CRMap, p: HPoint, kmax: int) -> List[int]:
    """dim E_k(p) for k = 0..kmax, applying the L_j directly to (-f~, i/2) and evaluating at p."""
    n = F.n
    alphabet = F.alphabet
    values = p.values()
    half_i = RFunc.constant(alphabet, I_UNIT / 2)
    base = [-c for c in F.f_tilde] + [half_i]
    layer = {(): base}
    rows = [[c.evaluate(values) for c in base]]
    dims = [ExactLinearAlgebra.rank(rows)]
    for _ in range(kmax):
        next_layer = {}
        for alpha, vector in layer.items():
            start = alpha[-1] if alpha else 1
            for j in range(start, n):
                derived = [apply_L(c, j) if not c.is_zero() else c for c in vector]
                next_layer[alpha + (j,)] = derived
                rows.append([c.evaluate(values) if not c.is_zero() else ZERO for c in derived])
        layer = next_layer
        dims.append(ExactLinearAlgebra.rank(rows))
    return dims


@dataclass
class UpsilonMatrix:
    point: HPoint
    rows: List[List[object]]
    row_labels: List[Tuple[int, str]]


def upsilon_matrix(form: NormForm) -> UpsilonMatrix:
    """First-order coefficients of d/dz_j and T applied to the quadratic part of the diagonalized phi block."""
    bc = BigComplexContext.of(form.precision)
    jets = form.jets.get("F_p***", form.jets["F_p**"])
    alphabet = jets.alphabet
    n, N = form.n, form.N
    labels = [s.label for s in form.s_index]
    labels += [f"phi{t + 1}" for t in range(len(labels), N - n)]
    linear_monomials = []
    for h in range(1, n):
        vec = [0] * alphabet.size
        vec[alphabet.z(h)] = 1
        linear_monomials.append(tuple(vec))
    w_vec = [0] * alphabet.size
    w_vec[alphabet.w] = 1
    linear_monomials.append(tuple(w_vec))
    slots = alphabet.z_slots + [alphabet.w]

    rows, row_labels = [], []
    for j, slot in enumerate(slots, start=1):
        for t in range(N - n):
            quad = jets[n - 1 + t].filter_terms(lambda m: sum(m[: alphabet.n_holo]) == 2)
            deriv = quad.diff(slot)
            rows.append([bc.big(deriv.coefficient(m)) for m in linear_monomials])
            row_labels.append((j, labels[t]))
    return UpsilonMatrix(form.point, rows, row_labels)


def upsilon_rank(
    F: CRMap,
    p: HPoint,
    precision: int = DEFAULT_PRECISION,
    order: int = DEFAULT_ORDER,
    completion: CompletionOrder = CompletionOrder.INDEX,
    form: Optional[NormForm] = None,
) -> int:
    form = form or NormalizationPipeline(precision, order, completion).run(F, p)
    if form.N == form.n:
        return 0
    bc = BigComplexContext.of(form.precision)
    return bc.rank(upsilon_matrix(form).rows, floor=form.threshold)


@dataclass
class RankReport:
    points: List[HPoint] = field(default_factory=list)
    geom_ranks: List[int] = field(default_factory=list)
    degeneracy: List[DegeneracyDims] = field(default_factory=list)
    upsilon_ranks: List[Optional[int]] = field(default_factory=list)
    gauss_runs: List[GaussRankRun] = field(default_factory=list)
    numerical_failures: int = 0

    @property
    def kappa0(self) -> int:
        return max(self.geom_ranks, default=0)

    @property
    def generic_degeneracy(self) -> Optional[DegeneracyDims]:
        """The sample with the largest dimensions, standing in for the generic point."""
        if not self.degeneracy:
            return None
        return max(self.degeneracy, key=lambda dd: dd.sequence)

    @property
    def l0(self) -> int:
        generic = self.generic_degeneracy
        return generic.l0 if generic else 1

    @property
    def gauss_generic_rank(self) -> int:
        return max((run.rank for run in self.gauss_runs), default=0)

    def gauss_degenerate(self, n: int) -> bool:
        return self.gauss_generic_rank < 2 * n - 1

    @property
    def totally_geodesic(self) -> bool:
        return all(dd.d.get(2, 0) == 0 for dd in self.degeneracy)

    @property
    def seeds_agree(self) -> bool:
        return len({run.rank for run in self.gauss_runs}) <= 1
