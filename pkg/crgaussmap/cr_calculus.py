import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from pythoncommons.string_utils import auto_str

from crgaussmap.common import ArithmeticLayer
from crgaussmap.cr_models import CRMap, HPoint, base_translate
from crgaussmap.exact_algebra import I_UNIT, ExactComplex, Monomial, MPoly, RFunc, VarAlphabet, conj

LOG = logging.getLogger(__name__)


@auto_str
class JetTable:
    """Truncated jets of the components of a map at a base point, all coefficients in a single layer."""

    def __init__(self, point: HPoint, order: int, polys: Sequence[MPoly], layer: ArithmeticLayer):
        for idx, p in enumerate(polys):
            if p.wt_degree() > order:
                raise ValueError(f"Jet of component {idx} exceeds weighted order {order}")
        self.point = point
        self.order = order
        self.polys: List[MPoly] = list(polys)
        self.layer = layer

    @property
    def alphabet(self) -> VarAlphabet:
        return self.polys[0].alphabet

    @property
    def entries(self) -> Dict[Tuple[int, Monomial], ExactComplex]:
        n = self.alphabet.n_holo
        return {(idx, monom[:n]): coeff for idx, p in enumerate(self.polys) for monom, coeff in p.items()}

    def coefficient(self, component: int, **exps: int) -> ExactComplex:
        return self.polys[component].coefficient(self.alphabet.monomial(**exps))

    def truncate(self, order: int) -> "JetTable":
        if order > self.order:
            raise ValueError(f"Cannot extend a jet table of order {self.order} to {order}")
        return JetTable(self.point, order, [p.wt_truncate(order) for p in self.polys], self.layer)

    def __len__(self):
        return len(self.polys)

    def __getitem__(self, idx) -> MPoly:
        return self.polys[idx]


def _l_poly(p: MPoly, j: int) -> MPoly:
    alphabet = p.alphabet
    zeta = MPoly.variable(alphabet, alphabet.zeta(j))
    return p.diff(alphabet.z(j)) + p.diff(alphabet.w) * zeta * (2 * I_UNIT)


def apply_L(h: RFunc, j: int) -> RFunc:
    """L_j = d/dz_j + 2i zeta_j d/dw with zeta_j an independent slot."""
    alphabet = h.alphabet
    if not 1 <= j <= alphabet.n_holo - 1:
        raise ValueError(f"Index out of range: {j}, expected 1..{alphabet.n_holo - 1}")
    if h.is_polynomial():
        return RFunc(_l_poly(h.num, j))
    return RFunc(_l_poly(h.num, j) * h.den - h.num * _l_poly(h.den, j), h.den * h.den)


def apply_L_multi(h: RFunc, alpha: Sequence[int]) -> RFunc:
    result = h
    for j, times in enumerate(alpha, start=1):
        for _ in range(times):
            result = apply_L(result, j)
    return result


def apply_T(h: RFunc) -> RFunc:
    return h.diff(h.alphabet.w)


def _lbar_poly(p: MPoly, j: int) -> MPoly:
    alphabet = p.alphabet
    z = MPoly.variable(alphabet, alphabet.z(j))
    return p.diff(alphabet.zeta(j)) - p.diff(alphabet.u) * z * (2 * I_UNIT)


def apply_Lbar(h: RFunc, j: int) -> RFunc:
    """Reflected operator d/dzeta_j - 2i z_j d/deta; annihilates functions of (z, w)."""
    alphabet = h.alphabet
    if not 1 <= j <= alphabet.n_holo - 1:
        raise ValueError(f"Index out of range: {j}, expected 1..{alphabet.n_holo - 1}")
    if h.is_polynomial():
        return RFunc(_lbar_poly(h.num, j))
    return RFunc(_lbar_poly(h.num, j) * h.den - h.num * _lbar_poly(h.den, j), h.den * h.den)


def jet_at(F: CRMap, p: HPoint, order: int) -> JetTable:
    """Exact jets of the base-translated map F_p at 0."""
    F_p = base_translate(F, p)
    LOG.debug("Computing order-%d jets of '%s' at %s", order, F.name, p.label())
    return JetTable(p, order, F_p.jets(order), ArithmeticLayer.EXACT)


def hypersurface_restrict(h: RFunc) -> RFunc:
    """Substitutes w := u + i sum z_j zeta_j."""
    alphabet = h.alphabet
    if h.num.poly.degree(alphabet.u) > 0 or h.den.poly.degree(alphabet.u) > 0:
        raise ValueError("The u slot is already in use")
    param = MPoly.variable(alphabet, alphabet.u)
    for j in range(1, alphabet.n_holo):
        z = MPoly.variable(alphabet, alphabet.z(j))
        zeta = MPoly.variable(alphabet, alphabet.zeta(j))
        param = param + z * zeta * I_UNIT
    return h.substitute(alphabet.w, param)


@dataclass
class HypersurfaceDerivatives:
    """Chain-rule directions along the parametrized hypersurface at a point (z, zeta, u) with w = u + i z.zeta."""

    point: HPoint
    alphabet: VarAlphabet = field(init=False)

    def __post_init__(self):
        self.alphabet = VarAlphabet.of(self.point.n)

    @property
    def slots(self) -> List[int]:
        a = self.alphabet
        return a.z_slots + [a.w] + a.zeta_slots

    def real_directions(self, partials: Sequence[ExactComplex]) -> List[ExactComplex]:
        """Derivatives in (Re z_1..Re z_{n-1}, Im z_1..Im z_{n-1}, u) from partials ordered as ``slots``."""
        k = self.alphabet.n_holo - 1
        z0 = self.point.z0
        dz, dw, dzeta = partials[:k], partials[k], partials[k + 1 :]
        d_z = [dz[j] + I_UNIT * conj(z0[j]) * dw for j in range(k)]
        d_zeta = [dzeta[j] + I_UNIT * z0[j] * dw for j in range(k)]
        re_dirs = [d_z[j] + d_zeta[j] for j in range(k)]
        im_dirs = [I_UNIT * (d_z[j] - d_zeta[j]) for j in range(k)]
        return re_dirs + im_dirs + [dw]

    def of(self, h: RFunc) -> Tuple[ExactComplex, List[ExactComplex]]:
        value, partials = h.value_and_partials(self.point.values(), self.slots)
        return value, self.real_directions(partials)

