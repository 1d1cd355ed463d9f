"""Normalization of a CR map at a base point, in five steps, with the invariants read off along the way.

Step I is exact. Steps II-V leave the rational field (square roots, eigenvectors) and run on a
:class:`BigComplexContext`; their jets are stored as exact dyadic rationals obtained from P-bit values.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from pythoncommons.string_utils import auto_str

from crgaussmap.common import ArithmeticLayer, CompletionOrder, IdentityName, NumericalFailure, SIndexPart
from crgaussmap.cr_calculus import JetTable, apply_T, jet_at
from crgaussmap.cr_models import CRMap, HnAutomorphism, HPoint
from crgaussmap.exact_algebra import (
    DEFAULT_PRECISION,
    I_UNIT,
    ONE,
    ZERO,
    BigComplexContext,
    ExactComplex,
    ExactLinearAlgebra,
    MPoly,
    VarAlphabet,
    abs2,
    as_exact,
    conj,
    jet_compose,
    re_part,
    rf_jet,
    series_inverse,
)

LOG = logging.getLogger(__name__)

DEFAULT_ORDER = 6
MIN_ORDER = 4
ASSERTED_IDENTITIES = (
    IdentityName.CHERN_MOSER,
    IdentityName.EQ112,
    IdentityName.HH,
    IdentityName.MU_LAW,
    IdentityName.RECENTRING,
)


class PipelineLoggerAdapter(logging.LoggerAdapter):
    def process(self, msg, kwargs):
        return f"[p={self.extra['point']}] {msg}", kwargs


@dataclass(frozen=True)
class SIndex:
    j: int
    l: int
    part: SIndexPart

    @property
    def label(self) -> str:
        return f"({self.j},{self.l})"


def s0_indices(kappa0: int, n: int) -> List[SIndex]:
    return [SIndex(j, l, SIndexPart.S0) for j in range(1, kappa0 + 1) for l in range(j, n)]


def s1_nominal_width(kappa0: int, n: int, N: int) -> Fraction:
    return N - n - Fraction((2 * n - kappa0 - 1) * kappa0, 2)


def s_index_set(kappa0: int, n: int, N: int) -> List[SIndex]:
    """S0 followed by S1; S1 is sized by the actual number of phi components left over."""
    s0 = s0_indices(kappa0, n)
    if len(s0) > N - n:
        raise NumericalFailure(f"Index set S0 has {len(s0)} entries but only {N - n} phi components exist")
    s1 = [SIndex(kappa0 + 1, kappa0 + 1 + t, SIndexPart.S1) for t in range(N - n - len(s0))]
    return s0 + s1


def _mono(alphabet: VarAlphabet, z: Sequence[int] = (), w: int = 0) -> Tuple[int, ...]:
    vec = [0] * alphabet.size
    for j in z:
        vec[alphabet.z(j)] += 1
    vec[alphabet.w] = w
    return tuple(vec)


def _z_vars(alphabet: VarAlphabet) -> List[MPoly]:
    return [MPoly.variable(alphabet, s) for s in alphabet.z_slots]


def _zeta_vars(alphabet: VarAlphabet) -> List[MPoly]:
    return [MPoly.variable(alphabet, s) for s in alphabet.zeta_slots]


def _pairing(alphabet: VarAlphabet) -> MPoly:
    total = MPoly.zero(alphabet)
    for z, zeta in zip(_z_vars(alphabet), _zeta_vars(alphabet)):
        total = total + z * zeta
    return total


def _holo_degree_at_most(p: MPoly, degree: int) -> MPoly:
    n = p.alphabet.n_holo
    return p.filter_terms(lambda m: sum(m[:n]) <= degree)


@auto_str
class StepIIResult:
    def __init__(self, lam, A, a, b, d, jets: JetTable, unitarity_residual):
        self.lam = lam
        self.A = A
        self.a = a
        self.b = b
        self.d = d
        self.jets = jets
        self.unitarity_residual = unitarity_residual


@auto_str
class StepIIIResult:
    def __init__(self, c, r, jets: JetTable, shape_residual, cm_residual):
        self.c = c
        self.r = r
        self.jets = jets
        self.shape_residual = shape_residual
        self.cm_residual = cm_residual


@auto_str
class StepIVResult:
    def __init__(self, U, mu, W, s_index, mu_jk, e, d_s, jets: JetTable, mu_law_residual):
        self.U = U
        self.mu = mu
        self.W = W
        self.s_index: List[SIndex] = s_index
        self.mu_jk: Dict[Tuple[int, int], object] = mu_jk
        self.e: Dict[Tuple[int, SIndex], object] = e
        self.d_s: Dict[SIndex, object] = d_s
        self.jets = jets
        self.mu_law_residual = mu_law_residual


@auto_str
class StepVResult:
    def __init__(self, c, jets: JetTable, recentring_law_residual, recentre_residual):
        self.c = c
        self.jets = jets
        self.recentring_law_residual = recentring_law_residual
        self.recentre_residual = recentre_residual


@dataclass
class IdentityReport:
    residuals: Dict[IdentityName, Optional[object]]
    threshold: object

    def passed(self, name: IdentityName) -> bool:
        value = self.residuals.get(name)
        return value is None or value < self.threshold

    def all_asserted_pass(self) -> bool:
        return all(self.passed(name) for name in ASSERTED_IDENTITIES)

    def to_dict(self) -> Dict[str, Optional[float]]:
        ordered = sorted(self.residuals.items(), key=lambda kv: kv[0].value)
        return {name.value: (None if v is None else float(v)) for name, v in ordered}


@dataclass
class Phi11Result:
    forms: List[MPoly]
    max_coefficient: object
    is_zero: bool
    stable: Optional[bool] = None


@dataclass
class NormForm:
    point: HPoint
    n: int
    N: int
    precision: int
    completion: CompletionOrder
    scale: object
    lam: object
    A: List[List[object]]
    a: List[ExactComplex]
    b: List[ExactComplex]
    d: ExactComplex
    r: object
    c_fractional: List[ExactComplex]
    geom_matrix: List[List[object]]
    geom_rank: int
    hermitian_residual: object
    unitarity_residual: object
    shape_residual: object
    cm_residual: object
    bridge_ok: bool
    U: Optional[List[List[object]]] = None
    mu: List[object] = field(default_factory=list)
    W: Optional[List[List[object]]] = None
    s_index: List[SIndex] = field(default_factory=list)
    mu_jk: Dict[Tuple[int, int], object] = field(default_factory=dict)
    e: Dict[Tuple[int, SIndex], object] = field(default_factory=dict)
    d_s: Dict[SIndex, object] = field(default_factory=dict)
    mu_law_residual: Optional[object] = None
    c: List[object] = field(default_factory=list)
    recentring_law_residual: Optional[object] = None
    recentre_residual: Optional[object] = None
    jets: Dict[str, JetTable] = field(default_factory=dict)

    @property
    def kappa(self) -> int:
        return self.geom_rank

    @property
    def final_jets(self) -> JetTable:
        return self.jets["F_p****"] if "F_p****" in self.jets else self.jets["F_p**"]

    @property
    def threshold(self):
        return BigComplexContext.of(self.precision).tolerance * self.scale

    @property
    def s1_nominal_width(self) -> Fraction:
        return s1_nominal_width(self.kappa, self.n, self.N)


class NormalizationPipeline:
    def __init__(
        self,
        precision: int = DEFAULT_PRECISION,
        order: int = DEFAULT_ORDER,
        completion: CompletionOrder = CompletionOrder.INDEX,
    ):
        if order < MIN_ORDER:
            raise ValueError(f"Working order must be at least {MIN_ORDER}, got: {order}")
        self.bc = BigComplexContext.of(precision)
        self.precision = precision
        self.order = order
        self.completion = completion
        self.log = PipelineLoggerAdapter(LOG, {"point": "?"})

    def _bind(self, p: HPoint):
        self.log = PipelineLoggerAdapter(LOG, {"point": p.label()})

    def _quantized(self, point: HPoint, polys: Sequence[MPoly]) -> JetTable:
        return JetTable(point, self.order, [self.bc.quantize_poly(p) for p in polys], ArithmeticLayer.BIGCOMPLEX)

    def scale_of(self, jets: JetTable):
        ctx = self.bc.ctx
        largest = max((p.max_abs2() for p in jets.polys), default=0)
        return max(ctx.mpf(1), ctx.sqrt(self.bc.big_real(largest)))

    def step_I_translate(self, F: CRMap, p: HPoint) -> Tuple[JetTable, bool]:
        """Exact jets of F_p, plus whether the T-derivative bridge identities hold on them."""
        self._bind(p)
        jets = jet_at(F, p, self.order)
        if any(poly.constant_term for poly in jets.polys):
            raise NumericalFailure(f"Base translation left a nonzero value at the origin for {p.label()}")
        bridge_ok = self._bridge_identities_hold(F, p, jets)
        self.log.debug("Step I done, bridge identities hold: %s", bridge_ok)
        return jets, bridge_ok

    def _bridge_identities_hold(self, F: CRMap, p: HPoint, jets: JetTable) -> bool:
        # (T h) o sigma versus T h_p for h = f~ and h = g
        order = self.order - 2
        alphabet = jets.alphabet
        sigma = None if p.is_origin() else HnAutomorphism.translation(p).components()
        values = F.value_at(p)

        def moved(comp):
            t = apply_T(comp)
            if sigma is not None:
                t = t.compose(sigma)
            return rf_jet(t, order)

        w = alphabet.w
        t_jets = [poly.diff(w).wt_truncate(order) for poly in jets.polys]
        for idx, comp in enumerate(F.f_tilde):
            if moved(comp) != t_jets[idx]:
                return False
        rhs = t_jets[-1]
        for idx in range(F.N - 1):
            rhs = rhs + t_jets[idx] * (2 * I_UNIT * conj(values[idx]))
        return moved(F.g) == rhs

    def step_II_unitary(self, jets: JetTable) -> StepIIResult:
        bc, ctx = self.bc, self.bc.ctx
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        E = [[jets[l].coefficient(_mono(alphabet, z=[j])) for l in range(N - 1)] for j in range(1, n)]
        if ExactLinearAlgebra.rank(E) < n - 1:
            raise NumericalFailure(f"Immersion failure at {jets.point.label()}")
        lam = re_part(jets[N - 1].coefficient(_mono(alphabet, w=1)))
        lam_big = bc.big_real(lam.x)
        if lam_big <= bc.tolerance:
            raise NumericalFailure(f"lambda(p) = {lam_big} is not above tolerance at {jets.point.label()}")
        sqrt_lam = ctx.sqrt(lam_big)
        rows = [[bc.big(x) / sqrt_lam for x in row] for row in E]
        A = bc.orthonormal_completion(rows, N - 1, reverse=self.completion == CompletionOrder.REVERSED)
        residual = bc.unitarity_residual(A)
        self.log.debug("lambda(p) = %s, unitarity residual of A(p) = %s", ctx.nstr(lam_big, 12), ctx.nstr(residual, 5))

        star = []
        for k in range(N - 1):
            acc = MPoly.zero(alphabet)
            for l in range(N - 1):
                acc = acc + jets[l].scale(bc.exact(ctx.conj(A[k][l]) / sqrt_lam))
            star.append(acc)
        star.append(jets[N - 1].scale(ONE / lam))
        star_jets = self._quantized(jets.point, star)

        a = [star_jets[j].coefficient(_mono(alphabet, w=1)) for j in range(n - 1)]
        b = [star_jets[j].coefficient(_mono(alphabet, w=1)) for j in range(n - 1, N - 1)]
        d = star_jets[N - 1].coefficient(_mono(alphabet, w=2))
        return StepIIResult(lam_big, A, a, b, d, star_jets, residual)

    def step_III_fractional(self, step2: StepIIResult) -> StepIIIResult:
        jets = step2.jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        c = list(step2.a) + list(step2.b)
        r = re_part(step2.d)
        norm2 = as_exact(sum((abs2(x) for x in c), ZERO.x))
        g_star = jets[N - 1]
        q = MPoly.one(alphabet) + g_star * (r - I_UNIT * norm2)
        for l in range(N - 1):
            q = q + jets[l] * (2 * I_UNIT * conj(c[l]))
        inverse = series_inverse(q, self.order)
        out = [((jets[l] - g_star * c[l]) * inverse).wt_truncate(self.order) for l in range(N - 1)]
        out.append((g_star * inverse).wt_truncate(self.order))
        out_jets = self._quantized(jets.point, out)
        shape = self._fractional_shape_residual(out_jets)
        cm = self.chern_moser_residual(out_jets)
        self.log.debug("Step III shape residual %s, Chern-Moser residual %s", shape, cm)
        return StepIIIResult(c, self.bc.big_real(r.x), out_jets, shape, cm)

    def _fractional_shape_residual(self, jets: JetTable):
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        z = _z_vars(alphabet)
        w_slot = alphabet.w
        residuals = []
        for j in range(n - 1):
            low = jets[j].wt_truncate(3).filter_terms(lambda m: not (m[w_slot] == 1 and sum(m[: n - 1]) == 1))
            residuals.append(low - z[j])
        for idx in range(n - 1, N - 1):
            residuals.append(jets[idx].wt_truncate(2).filter_terms(lambda m: m[w_slot] != 0 or sum(m[: n - 1]) != 2))
        residuals.append(jets[N - 1].wt_truncate(4) - MPoly.variable(alphabet, w_slot))
        return max(self.bc.poly_residual(p) for p in residuals)

    def chern_moser_residual(self, jets: JetTable):
        """<zbar, a(z)>|z|^2 - |phi^(2)(z)|^2 with a(z) = -2i f^(1,1)(z)."""
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        zeta = _zeta_vars(alphabet)
        lhs = MPoly.zero(alphabet)
        for l in range(n - 1):
            lhs = lhs + zeta[l] * jets[l].jet_part(1, 1).scale(-2 * I_UNIT)
        lhs = lhs * _pairing(alphabet)
        for idx in range(n - 1, N - 1):
            phi2 = jets[idx].jet_part(2, 0)
            lhs = lhs - phi2 * phi2.bar_reflect()
        return self.bc.poly_residual(lhs)

    def geometric_rank(self, jets: JetTable, scale=1) -> Tuple[List[List[object]], int, object]:
        """The Hermitian matrix -2i (d^2 f_l / dz_j dw)(0), its numerical rank and its Hermitian residual."""
        bc = self.bc
        alphabet = jets.alphabet
        n = alphabet.n
        matrix = [
            [bc.big(-2 * I_UNIT * jets[l].coefficient(_mono(alphabet, z=[j], w=1))) for l in range(n - 1)]
            for j in range(1, n)
        ]
        rank = bc.rank(matrix, floor=bc.tolerance * scale)
        return matrix, rank, bc.hermitian_residual(matrix)

    def step_IV_diagonalize(self, jets: JetTable, geom_matrix, kappa0: int, scale) -> StepIVResult:
        bc, ctx = self.bc, self.bc.ctx
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        threshold = bc.tolerance * scale
        mu, vectors = bc.hermitian_eigen(geom_matrix)
        if any(m < -threshold for m in mu):
            raise NumericalFailure(f"Negative eigenvalue of the geometric-rank matrix: {ctx.nstr(min(mu), 8)}")
        if kappa0 < 1 or mu[kappa0 - 1] <= threshold:
            raise NumericalFailure(f"Expected {kappa0} positive eigenvalues, got: {[ctx.nstr(m, 8) for m in mu]}")
        U = [[vectors[k][j] for k in range(n - 1)] for j in range(n - 1)]

        z = _z_vars(alphabet)
        w = MPoly.variable(alphabet, alphabet.w)
        subs = []
        for j in range(n - 1):
            acc = MPoly.zero(alphabet)
            for k in range(n - 1):
                acc = acc + z[k] * bc.exact(ctx.conj(U[j][k]))
            subs.append(acc)
        subs.append(w)
        moved = [poly.compose(subs, self.order) for poly in jets.polys]

        f_out = []
        for l in range(n - 1):
            acc = MPoly.zero(alphabet)
            for j in range(n - 1):
                acc = acc + moved[j] * bc.exact(U[j][l])
            f_out.append(acc)

        phi = moved[n - 1 : N - 1]
        s_index = s_index_set(kappa0, n, N)
        rows = []
        for s in s_index:
            if s.part != SIndexPart.S0:
                continue
            v = [bc.big(p.coefficient(_mono(alphabet, z=[s.j, s.l]))) for p in phi]
            norm = bc.norm(v)
            if norm <= threshold:
                raise NumericalFailure(f"Quadratic phi block is degenerate at {s.label}")
            rows.append([x / norm for x in v])
        W = bc.orthonormal_completion(rows, N - n, reverse=self.completion == CompletionOrder.REVERSED)
        phi_out = []
        for t in range(N - n):
            acc = MPoly.zero(alphabet)
            for alpha in range(N - n):
                acc = acc + phi[alpha] * bc.exact(ctx.conj(W[t][alpha]))
            phi_out.append(acc)

        out_jets = self._quantized(jets.point, f_out + phi_out + [moved[N - 1]])
        mu_jk, e, d_s = self._phi_tables(out_jets, s_index)
        law = self._mu_law_residual(out_jets, s_index, mu[:kappa0], mu_jk)
        self.log.debug("Step IV eigenvalues %s, mu-law residual %s", [ctx.nstr(m, 10) for m in mu], law)
        return StepIVResult(U, mu, W, s_index, mu_jk, e, d_s, out_jets, law)

    def _phi_tables(self, jets: JetTable, s_index: List[SIndex]):
        bc = self.bc
        alphabet = jets.alphabet
        n = alphabet.n
        mu_jk, e, d_s = {}, {}, {}
        for t, s in enumerate(s_index):
            poly = jets[n - 1 + t]
            if s.part == SIndexPart.S0:
                mu_jk[(s.j, s.l)] = bc.ctx.re(bc.big(poly.coefficient(_mono(alphabet, z=[s.j, s.l]))))
            for h in range(1, n):
                e[(h, s)] = bc.big(poly.coefficient(_mono(alphabet, z=[h], w=1)))
            d_s[s] = bc.big(poly.coefficient(_mono(alphabet, w=2)))
        return mu_jk, e, d_s

    def _mu_law_residual(self, jets: JetTable, s_index: List[SIndex], mu, mu_jk):
        """Deviation of the quadratic phi block from mu_{jl} z_j z_l with the sqrt(mu_j + mu_l) / sqrt(mu_j) law."""
        bc, ctx = self.bc, self.bc.ctx
        alphabet = jets.alphabet
        n = alphabet.n
        kappa0 = len(mu)
        worst = ctx.mpf(0)
        for (j, l), value in mu_jk.items():
            expected = ctx.sqrt(mu[j - 1] + mu[l - 1]) if j < l <= kappa0 else ctx.sqrt(mu[j - 1])
            worst = max(worst, abs(value - expected))
        for t, s in enumerate(s_index):
            quad = jets[n - 1 + t].jet_part(2, 0)
            if s.part == SIndexPart.S0:
                quad = quad - MPoly.from_terms(alphabet, {_mono(alphabet, z=[s.j, s.l]): bc.exact(mu_jk[(s.j, s.l)])})
            worst = max(worst, bc.poly_residual(quad))
        return worst

    def step_V_recentre(self, step4: StepIVResult, kappa0: int, scale) -> StepVResult:
        bc, ctx = self.bc, self.bc.ctx
        jets = step4.jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        mu = step4.mu
        if mu[0] <= bc.tolerance * scale:
            raise NumericalFailure(f"mu_1 = {ctx.nstr(mu[0], 8)} is below tolerance")
        sqrt_mu1 = ctx.sqrt(mu[0])
        c = []
        for j in range(1, n):
            if j <= kappa0:
                d_j = bc.big(jets[j - 1].coefficient(_mono(alphabet, w=2)))
                c.append(ctx.mpc(0, -2) * d_j / mu[j - 1])
            else:
                s = next(s for s in step4.s_index if s.j == 1 and s.l == j)
                c.append(step4.e[(1, s)] / sqrt_mu1)
        c_exact = [bc.exact(x) for x in c]

        if not any(c_exact):
            out_jets = jets
        else:
            sigma = HnAutomorphism.fractional(c_exact).components()
            sigma_jets = [rf_jet(s, self.order) for s in sigma]
            inner = [poly.compose(sigma_jets, self.order) for poly in jets.polys]
            tau = HnAutomorphism.fractional([-x for x in c_exact] + [ZERO] * (N - n)).components()
            out_jets = self._quantized(jets.point, [jet_compose(t, inner, self.order) for t in tau])

        recentring_law = self._recentring_law_residual(jets, out_jets, step4, c_exact)
        recentre = ctx.mpf(0)
        for j in range(1, kappa0 + 1):
            recentre = max(recentre, abs(bc.big(out_jets[j - 1].coefficient(_mono(alphabet, w=2)))))
        for t, s in enumerate(step4.s_index):
            if s.part == SIndexPart.S0 and s.j == 1 and s.l > kappa0:
                recentre = max(recentre, abs(bc.big(out_jets[n - 1 + t].coefficient(_mono(alphabet, z=[1], w=1)))))
        self.log.debug("Step V c = %s, recentre residual %s", [ctx.nstr(x, 8) for x in c], recentre)
        return StepVResult(c, out_jets, recentring_law, recentre)

    def _recentring_law_residual(self, before: JetTable, after: JetTable, step4: StepIVResult, c: List[ExactComplex]):
        """Degree-2 expansion of the recentred map against the coefficient law in terms of (mu, e, d, c)."""
        bc = self.bc
        alphabet = before.alphabet
        n = alphabet.n
        z = _z_vars(alphabet)
        w = MPoly.variable(alphabet, alphabet.w)
        residuals = []
        for j in range(1, n):
            mu_j = bc.exact(step4.mu[j - 1]) if j <= len(step4.mu) else ZERO
            d_j = before[j - 1].coefficient(_mono(alphabet, w=2))
            half_i_mu = I_UNIT * mu_j * as_exact(Fraction(1, 2))
            expected = z[j - 1] + z[j - 1] * w * half_i_mu + w * w * (d_j - half_i_mu * c[j - 1])
            residuals.append(_holo_degree_at_most(after[j - 1], 2) - expected)
        shifted = [z[j] - w * c[j] for j in range(n - 1)] + [w]
        for t, s in enumerate(step4.s_index):
            model = _holo_degree_at_most(before[n - 1 + t], 2).filter_terms(lambda m: sum(m[: n - 1]) != 2)
            if s.part == SIndexPart.S0:
                model = model + MPoly.from_terms(
                    alphabet, {_mono(alphabet, z=[s.j, s.l]): bc.exact(step4.mu_jk[(s.j, s.l)])}
                )
            expected = model.compose(shifted)
            residuals.append(_holo_degree_at_most(after[n - 1 + t], 2) - expected)
        return max(bc.poly_residual(p) for p in residuals)

    def run(self, F: CRMap, p: HPoint) -> NormForm:
        jets, bridge_ok = self.step_I_translate(F, p)
        return self.run_from_jets(jets, bridge_ok=bridge_ok)

    def run_from_jets(self, jets: JetTable, bridge_ok: bool = True) -> NormForm:
        """Steps II-V on jets of a base-normalized map at its base point."""
        self._bind(jets.point)
        scale = self.scale_of(jets)
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        step2 = self.step_II_unitary(jets)
        step3 = self.step_III_fractional(step2)
        matrix, rank, herm = self.geometric_rank(step3.jets, scale)
        form = NormForm(
            point=jets.point,
            n=n,
            N=N,
            precision=self.precision,
            completion=self.completion,
            scale=scale,
            lam=step2.lam,
            A=step2.A,
            a=step2.a,
            b=step2.b,
            d=step2.d,
            r=step3.r,
            c_fractional=step3.c,
            geom_matrix=matrix,
            geom_rank=rank,
            hermitian_residual=herm,
            unitarity_residual=step2.unitarity_residual,
            shape_residual=step3.shape_residual,
            cm_residual=step3.cm_residual,
            bridge_ok=bridge_ok,
            jets={"F_p": jets, "F_p*": step2.jets, "F_p**": step3.jets},
        )
        if rank == 0:
            self.log.debug("Geometric rank zero, skipping diagonalization and recentring")
            return form
        step4 = self.step_IV_diagonalize(step3.jets, matrix, rank, scale)
        step5 = self.step_V_recentre(step4, rank, scale)
        form.U, form.mu, form.W = step4.U, step4.mu, step4.W
        form.s_index, form.mu_jk, form.e, form.d_s = step4.s_index, step4.mu_jk, step4.e, step4.d_s
        form.mu_law_residual = step4.mu_law_residual
        form.c = step5.c
        form.recentring_law_residual = step5.recentring_law_residual
        form.recentre_residual = step5.recentre_residual
        form.jets["F_p***"] = step4.jets
        form.jets["F_p****"] = step5.jets
        self.log.debug("Pipeline complete, geometric rank %d", rank)
        return form

    def hjy_identity_checks(self, form: NormForm) -> IdentityReport:
        """Polynomial residuals of the second- and third-order identities satisfied by the normalized jets."""
        bc = self.bc
        jets = form.final_jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        z, zeta = _z_vars(alphabet), _zeta_vars(alphabet)
        pairing = _pairing(alphabet)
        f = jets.polys[: n - 1]
        phi = jets.polys[n - 1 : N - 1]
        g = jets[N - 1]
        residuals: Dict[IdentityName, Optional[object]] = {
            IdentityName.CHERN_MOSER: form.cm_residual,
            IdentityName.MU_LAW: form.mu_law_residual,
            IdentityName.RECENTRING: form.recentring_law_residual,
        }

        if jets.order >= 6:
            eq112 = MPoly.zero(alphabet)
            for l in range(n - 1):
                f12 = f[l].jet_part(1, 2)
                f11 = f[l].jet_part(1, 1)
                eq112 = eq112 + zeta[l] * f12 + z[l] * f12.bar_reflect() + f11 * f11.bar_reflect()
            for p in phi:
                p11 = p.jet_part(1, 1)
                eq112 = eq112 + p11 * p11.bar_reflect()
            g03 = re_part(g.coefficient(_mono(alphabet, w=3)))
            eq112 = eq112 - pairing * (3 * g03)
            residuals[IdentityName.EQ112] = bc.poly_residual(eq112)
        else:
            residuals[IdentityName.EQ112] = None

        if jets.order >= 5:
            hh = MPoly.zero(alphabet)
            for l in range(n - 1):
                hh = hh + zeta[l] * f[l].jet_part(2, 1)
            for j in range(1, n):
                xi = MPoly.zero(alphabet)
                for p in phi:
                    xi = xi + p.jet_part(2, 0) * conj(p.coefficient(_mono(alphabet, z=[j], w=1)))
                hh = hh + zeta[j - 1] * xi
            f02_pairing = MPoly.zero(alphabet)
            for l in range(n - 1):
                f02_pairing = f02_pairing + z[l] * conj(f[l].coefficient(_mono(alphabet, w=2)))
            hh = hh - f02_pairing * pairing * (2 * I_UNIT) - g.jet_part(1, 2) * pairing
            residuals[IdentityName.HH] = bc.poly_residual(hh)
        else:
            residuals[IdentityName.HH] = None

        residuals[IdentityName.EQ43] = self._span_residual(form) if jets.order >= 5 else None
        residuals[IdentityName.EQ92EQ3] = self._third_order_residual(form) if jets.order >= 6 else None
        residuals[IdentityName.PHI30] = self._closing_residual(form) if jets.order >= 6 else None
        report = IdentityReport(residuals, form.threshold)
        for name in ASSERTED_IDENTITIES:
            if not report.passed(name):
                self.log.warning("Identity %s residual %s exceeds %s", name.value, residuals[name], form.threshold)
        return report

    def _span_residual(self, form: NormForm):
        """Distance of the z_h w^2 coefficient vectors of phi from span{e_1, ..., e_kappa}."""
        bc, ctx = self.bc, self.bc.ctx
        jets = form.final_jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        phi = jets.polys[n - 1 : N - 1]
        if not phi:
            return ctx.mpf(0)
        basis = []
        for j in range(1, form.kappa + 1):
            v = [bc.big(p.coefficient(_mono(alphabet, z=[j], w=1))) for p in phi]
            for q in basis:
                coeff = bc.inner(v, q)
                v = [x - coeff * y for x, y in zip(v, q)]
            norm = bc.norm(v)
            if norm > form.threshold:
                basis.append([x / norm for x in v])
        worst = ctx.mpf(0)
        for h in range(1, n):
            v = [bc.big(p.coefficient(_mono(alphabet, z=[h], w=2))) for p in phi]
            for q in basis:
                coeff = bc.inner(v, q)
                v = [x - coeff * y for x, y in zip(v, q)]
            worst = max(worst, bc.norm(v))
        return worst

    def _third_order_residual(self, form: NormForm):
        jets = form.final_jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        zeta = _zeta_vars(alphabet)
        pairing = _pairing(alphabet)
        f = jets.polys[: n - 1]
        phi = jets.polys[n - 1 : N - 1]
        inner = MPoly.zero(alphabet)
        for l in range(n - 1):
            inner = inner - zeta[l] * f[l].jet_part(1, 2) * pairing * 2
        for t, s in enumerate(form.s_index):
            if s.part == SIndexPart.S0:
                inner = inner + phi[t].jet_part(2, 0).bar_reflect() * phi[t].jet_part(2, 1) * I_UNIT
        total = inner * pairing * 2
        for p in phi:
            p30 = p.jet_part(3, 0)
            total = total + p30 * p30.bar_reflect()
        return self.bc.poly_residual(total)

    def _closing_residual(self, form: NormForm):
        """|phi_1^(3,0)|^2 against (sum_j mu_j |z_j|^2)^2 |z|^2 over the phi components outside S0; reported only."""
        bc = self.bc
        jets = form.final_jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        z, zeta = _z_vars(alphabet), _zeta_vars(alphabet)
        phi = jets.polys[n - 1 : N - 1]
        s_index = form.s_index
        lhs = MPoly.zero(alphabet)
        for t, p in enumerate(phi):
            if t < len(s_index) and s_index[t].part == SIndexPart.S0:
                continue
            p30 = p.jet_part(3, 0)
            lhs = lhs + p30 * p30.bar_reflect()
        weighted = MPoly.zero(alphabet)
        for j in range(form.kappa):
            weighted = weighted + z[j] * zeta[j] * bc.exact(form.mu[j])
        return bc.poly_residual(lhs - weighted * weighted * _pairing(alphabet))

    def phi11_vector(self, form: NormForm, recheck: bool = False) -> Phi11Result:
        """The linear forms sum_h e_{h,S} z_h of every phi component, and whether they vanish to tolerance."""
        bc, ctx = self.bc, self.bc.ctx
        jets = form.final_jets
        alphabet = jets.alphabet
        n, N = alphabet.n, len(jets)
        forms = [p.jet_part(1, 1) for p in jets.polys[n - 1 : N - 1]]
        largest = max((bc.poly_residual(p) for p in forms), default=ctx.mpf(0))
        result = Phi11Result(forms, largest, largest <= form.threshold)
        if recheck:
            finer = NormalizationPipeline(2 * self.precision, self.order, self.completion)
            rerun = finer.run_from_jets(form.jets["F_p"], bridge_ok=form.bridge_ok)
            result.stable = finer.phi11_vector(rerun).is_zero == result.is_zero
            if not result.stable:
                self.log.warning("Phi^(1,1) zero flag changed when doubling precision to %d", 2 * self.precision)
        return result


def normalize(
    F: CRMap,
    p: HPoint,
    precision: int = DEFAULT_PRECISION,
    order: int = DEFAULT_ORDER,
    completion: CompletionOrder = CompletionOrder.INDEX,
) -> NormForm:
    return NormalizationPipeline(precision, order, completion).run(F, p)
