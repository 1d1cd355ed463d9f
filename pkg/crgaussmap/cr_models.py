import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from crgaussmap.common import (
    AutomorphismKind,
    CatalogName,
    CayleyDirection,
    ComponentRole,
    DenominatorVanishesError,
    MapModel,
    MapValidationError,
)
from crgaussmap.exact_algebra import (
    I_UNIT,
    ONE,
    ZERO,
    ExactComplex,
    MPoly,
    RFunc,
    VarAlphabet,
    abs2,
    as_exact,
    conj,
    exact,
    qq_to_fraction,
)
from crgaussmap.utils import SamplingUtils, UnitaryUtils

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class HPoint:
    z0: Tuple[ExactComplex, ...]
    u0: Fraction

    def __post_init__(self):
        object.__setattr__(self, "z0", tuple(as_exact(c) for c in self.z0))
        object.__setattr__(self, "u0", Fraction(self.u0))
        if len(self.z0) < 1:
            raise ValueError("A point of the Heisenberg hypersurface needs at least one z coordinate")

    @staticmethod
    def origin(n: int) -> "HPoint":
        return HPoint(tuple(ZERO for _ in range(n - 1)), Fraction(0))

    @staticmethod
    def random(n: int, rng: random.Random, height_bits: int = 8) -> "HPoint":
        z0, u0 = SamplingUtils.random_point_coordinates(rng, n, height_bits)
        return HPoint(tuple(z0), u0)

    @property
    def n(self) -> int:
        return len(self.z0) + 1

    @property
    def w0(self) -> ExactComplex:
        norm2 = sum((abs2(c) for c in self.z0), ZERO.x)
        return exact(self.u0, qq_to_fraction(norm2))

    def is_origin(self) -> bool:
        return not self.u0 and not any(self.z0)

    def values(self) -> List[ExactComplex]:
        """Values for every slot of the extended alphabet: z0, w0, conj(z0), conj(w0)."""
        w0 = self.w0
        return list(self.z0) + [w0] + [conj(c) for c in self.z0] + [conj(w0)]

    def holo_values(self) -> List[ExactComplex]:
        return list(self.z0) + [self.w0]

    def label(self) -> str:
        coords = ", ".join(str(c) for c in self.z0)
        return f"({coords}; {self.u0})"


@dataclass
class CRMap:
    n: int
    N: int
    model: MapModel
    components: List[RFunc]
    base_normalized: bool = False
    name: str = ""
    alphabet: VarAlphabet = field(init=False, repr=False)

    def __post_init__(self):
        if not self.N >= self.n >= 2:
            raise MapValidationError(f"Expected N >= n >= 2, got n={self.n}, N={self.N}")
        if len(self.components) != self.N:
            raise MapValidationError(f"Expected {self.N} components, got: {len(self.components)}")
        self.alphabet = VarAlphabet.of(self.n)
        for idx, comp in enumerate(self.components):
            if comp.alphabet != self.alphabet:
                raise MapValidationError(f"components[{idx}]: alphabet does not match source dimension n={self.n}")
            if comp.num.has_anti_slots() or comp.den.has_anti_slots():
                raise MapValidationError(f"components[{idx}]: only (z, w) variables are allowed")
        if self.base_normalized and any(self.value_at_origin()):
            raise MapValidationError(f"Map '{self.name}' is flagged base-normalized but F(0) != 0")

    @property
    def f(self) -> List[RFunc]:
        return self.components[: self.n - 1]

    @property
    def phi(self) -> List[RFunc]:
        return self.components[self.n - 1 : self.N - 1]

    @property
    def g(self) -> RFunc:
        return self.components[self.N - 1]

    @property
    def f_tilde(self) -> List[RFunc]:
        return self.components[: self.N - 1]

    @property
    def roles(self) -> List[ComponentRole]:
        return [ComponentRole.F] * (self.n - 1) + [ComponentRole.PHI] * (self.N - self.n) + [ComponentRole.G]

    def value_at_origin(self) -> List[ExactComplex]:
        return [c.num.constant_term for c in self.components]

    def value_at(self, p: HPoint) -> List[ExactComplex]:
        values = p.values()
        return [c.evaluate(values) for c in self.components]

    def jets(self, order: int) -> List[MPoly]:
        return [c.jet(order) for c in self.components]

    def with_components(self, components: List[RFunc], base_normalized: bool = None) -> "CRMap":
        if base_normalized is None:
            base_normalized = not any(c.num.constant_term for c in components)
        return CRMap(self.n, self.N, self.model, components, base_normalized=base_normalized, name=self.name)


@dataclass(frozen=True)
class HnAutomorphism:
    """Automorphism of the Heisenberg model of dimension ``n`` (also used on the target side with ``n = N``)."""

    kind: AutomorphismKind
    n: int
    point: Optional[HPoint] = None
    c: Optional[Tuple[ExactComplex, ...]] = None
    r: Fraction = Fraction(0)
    unitary: Optional[Tuple[Tuple[ExactComplex, ...], ...]] = None
    scale: Optional[Fraction] = None

    def __post_init__(self):
        k = self.n - 1
        if self.kind in (AutomorphismKind.TRANSLATION, AutomorphismKind.TARGET_TRANSLATION):
            if self.point is None or self.point.n != self.n:
                raise MapValidationError(f"{self.kind.label}: needs a point of dimension {self.n}")
        elif self.kind == AutomorphismKind.FRACTIONAL:
            if self.c is None or len(self.c) != k:
                raise MapValidationError(f"{self.kind.label}: needs a c-vector of length {k}")
            object.__setattr__(self, "c", tuple(as_exact(x) for x in self.c))
            object.__setattr__(self, "r", Fraction(self.r))
        elif self.kind == AutomorphismKind.ROTATION:
            if self.unitary is None or len(self.unitary) != k:
                raise MapValidationError(f"{self.kind.label}: needs a {k}x{k} unitary matrix")
            rows = tuple(tuple(as_exact(x) for x in row) for row in self.unitary)
            if not UnitaryUtils.is_unitary([list(r) for r in rows]):
                raise MapValidationError(f"{self.kind.label}: matrix is not exactly unitary")
            object.__setattr__(self, "unitary", rows)
        elif self.kind == AutomorphismKind.DILATION:
            if not self.scale:
                raise MapValidationError(f"{self.kind.label}: needs a nonzero rational scale")
            object.__setattr__(self, "scale", Fraction(self.scale))

    @staticmethod
    def translation(p: HPoint) -> "HnAutomorphism":
        return HnAutomorphism(AutomorphismKind.TRANSLATION, p.n, point=p)

    @staticmethod
    def target_translation(image: HPoint) -> "HnAutomorphism":
        return HnAutomorphism(AutomorphismKind.TARGET_TRANSLATION, image.n, point=image)

    @staticmethod
    def fractional(c: Sequence[ExactComplex], r: Fraction = Fraction(0)) -> "HnAutomorphism":
        return HnAutomorphism(AutomorphismKind.FRACTIONAL, len(c) + 1, c=tuple(c), r=r)

    @staticmethod
    def rotation(unitary: Sequence[Sequence[ExactComplex]]) -> "HnAutomorphism":
        return HnAutomorphism(AutomorphismKind.ROTATION, len(unitary) + 1, unitary=tuple(tuple(r) for r in unitary))

    @staticmethod
    def dilation(n: int, scale: Fraction) -> "HnAutomorphism":
        return HnAutomorphism(AutomorphismKind.DILATION, n, scale=scale)

    @staticmethod
    def random(n: int, rng: random.Random, kinds: Sequence[AutomorphismKind] = None) -> "HnAutomorphism":
        kinds = kinds or [
            AutomorphismKind.TRANSLATION,
            AutomorphismKind.FRACTIONAL,
            AutomorphismKind.ROTATION,
            AutomorphismKind.DILATION,
        ]
        kind = rng.choice(list(kinds))
        if kind == AutomorphismKind.TRANSLATION:
            return HnAutomorphism.translation(HPoint.random(n, rng, height_bits=3))
        if kind == AutomorphismKind.TARGET_TRANSLATION:
            return HnAutomorphism.target_translation(HPoint.random(n, rng, height_bits=3))
        if kind == AutomorphismKind.FRACTIONAL:
            c = [SamplingUtils.random_exact(rng, 2) for _ in range(n - 1)]
            return HnAutomorphism.fractional(c, SamplingUtils.random_rational(rng, 2))
        if kind == AutomorphismKind.ROTATION:
            return HnAutomorphism.rotation(UnitaryUtils.random_unitary(n - 1, rng))
        scale = Fraction(rng.randint(1, 4), rng.randint(1, 4))
        return HnAutomorphism.dilation(n, scale)

    def components(self) -> List[RFunc]:
        alphabet = VarAlphabet.of(self.n)
        k = self.n - 1
        z = [MPoly.variable(alphabet, alphabet.z(j)) for j in range(1, k + 1)]
        w = MPoly.variable(alphabet, alphabet.w)
        if self.kind == AutomorphismKind.TRANSLATION:
            p = self.point
            shift = MPoly.constant(alphabet, p.w0)
            for zj, c in zip(z, p.z0):
                shift = shift + zj * (2 * I_UNIT * conj(c))
            return [RFunc(zj + c) for zj, c in zip(z, p.z0)] + [RFunc(w + shift)]
        if self.kind == AutomorphismKind.TARGET_TRANSLATION:
            q = self.point
            shift = MPoly.constant(alphabet, -conj(q.w0))
            for zj, c in zip(z, q.z0):
                shift = shift - zj * (2 * I_UNIT * conj(c))
            return [RFunc(zj - c) for zj, c in zip(z, q.z0)] + [RFunc(w + shift)]
        if self.kind == AutomorphismKind.FRACTIONAL:
            c = self.c
            norm2 = as_exact(sum((abs2(x) for x in c), ZERO.x))
            q = MPoly.one(alphabet) + w * (as_exact(self.r) - I_UNIT * norm2)
            for zj, cj in zip(z, c):
                q = q + zj * (2 * I_UNIT * conj(cj))
            return [RFunc(zj - w * cj, q) for zj, cj in zip(z, c)] + [RFunc(w, q)]
        if self.kind == AutomorphismKind.ROTATION:
            u = self.unitary
            out = []
            for col in range(k):
                acc = MPoly.zero(alphabet)
                for row in range(k):
                    if u[row][col]:
                        acc = acc + z[row] * u[row][col]
                out.append(RFunc(acc))
            return out + [RFunc(w)]
        lam = as_exact(self.scale)
        return [RFunc(zj * lam) for zj in z] + [RFunc(w * (lam * lam))]


def _compose_components(outer: Sequence[RFunc], inner: Sequence[RFunc]) -> List[RFunc]:
    degree = max(max(c.num.total_degree(), c.den.total_degree()) for c in outer)
    return [c.compose(inner, degree) for c in outer]


def compose_auto(
    F: CRMap, pre: Optional[HnAutomorphism] = None, post: Optional[HnAutomorphism] = None
) -> CRMap:
    """``post o F o pre`` computed exactly."""
    components = list(F.components)
    if pre is not None:
        if pre.n != F.n:
            raise MapValidationError(f"Source automorphism dimension {pre.n} does not match n={F.n}")
        components = _compose_components(components, pre.components())
    if post is not None:
        if post.n != F.N:
            raise MapValidationError(f"Target automorphism dimension {post.n} does not match N={F.N}")
        components = _compose_components(post.components(), components)
    return F.with_components(components)


def image_point(F: CRMap, p: HPoint) -> HPoint:
    """F(p) as a point of the target hypersurface (requires F(p) to lie on it)."""
    values = F.value_at(p)
    return HPoint(tuple(values[:-1]), qq_to_fraction(values[-1].x))


def base_translate(F: CRMap, p: HPoint) -> CRMap:
    """F_p = tau^F_p o F o sigma^0_p, so that F_p(0) = 0."""
    pre = None if p.is_origin() else HnAutomorphism.translation(p)
    moved = compose_auto(F, pre=pre)
    if not any(moved.value_at_origin()):
        return moved.with_components(moved.components, base_normalized=True)
    post = HnAutomorphism.target_translation(image_point(moved, HPoint.origin(F.n)))
    return compose_auto(moved, post=post)


def cayley_components(n: int, inverse: bool = False) -> List[RFunc]:
    """rho_n(z, w) = (2z/(1-iw), (1+iw)/(1-iw)); the inverse is (z/(1+w), i(1-w)/(1+w))."""
    alphabet = VarAlphabet.of(n)
    z = [MPoly.variable(alphabet, alphabet.z(j)) for j in range(1, n)]
    w = MPoly.variable(alphabet, alphabet.w)
    one = MPoly.one(alphabet)
    if inverse:
        den = one + w
        return [RFunc(zj, den) for zj in z] + [RFunc((one - w) * I_UNIT, den)]
    den = one - w * I_UNIT
    return [RFunc(zj * 2, den) for zj in z] + [RFunc(one + w * I_UNIT, den)]


def cayley_conjugate(F: CRMap, direction: CayleyDirection, base_normalize: bool = True) -> CRMap:
    if F.model != direction.source_model:
        raise MapValidationError(f"Cannot apply {direction.label} to a map in the {F.model.model_name} model")
    inverse = direction == CayleyDirection.BALL_TO_HEIS
    inner = cayley_components(F.n, inverse=not inverse)
    outer = cayley_components(F.N, inverse=inverse)
    components = _compose_components(outer, _compose_components(F.components, inner))
    conjugated = CRMap(F.n, F.N, direction.target_model, components, name=F.name)
    if direction.target_model == MapModel.HEISENBERG and base_normalize and any(conjugated.value_at_origin()):
        LOG.debug("Conjugated map does not fix the origin, base-translating: %s", F.name)
        post = HnAutomorphism.target_translation(image_point(conjugated, HPoint.origin(F.n)))
        conjugated = compose_auto(conjugated, post=post)
    elif direction.target_model == MapModel.HEISENBERG:
        conjugated.base_normalized = not any(conjugated.value_at_origin())
    return conjugated


def defining_residual(F: CRMap) -> RFunc:
    """(g - bar(g))/(2i) - sum f_l bar(f_l), in the extended alphabet with the reflected-w slot as eta."""
    half_over_i = ONE / (2 * I_UNIT)
    g = F.g
    total = (g - g.bar_reflect()).scale(half_over_i)
    for comp in F.f_tilde:
        total = total - comp * comp.bar_reflect()
    return total


def cr_validity(F: CRMap) -> bool:
    alphabet = F.alphabet
    z = [MPoly.variable(alphabet, s) for s in alphabet.z_slots]
    zeta = [MPoly.variable(alphabet, s) for s in alphabet.zeta_slots]
    pairing = MPoly.zero(alphabet)
    for zj, zetaj in zip(z, zeta):
        pairing = pairing + zj * zetaj
    if F.model == MapModel.BALL:
        residual = RFunc.constant(alphabet, -1)
        for comp in F.components:
            residual = residual + comp * comp.bar_reflect()
        # on the sphere: w * u = 1 - sum z_j zeta_j
        w = MPoly.variable(alphabet, alphabet.w)
        valid = residual.num.substitute_rational(alphabet.u, MPoly.one(alphabet) - pairing, w).is_zero()
    else:
        residual = defining_residual(F)
        eta = MPoly.variable(alphabet, alphabet.w) - pairing * (2 * I_UNIT)
        valid = residual.num.substitute(alphabet.u, eta).is_zero()
    LOG.debug("CR validity of map '%s' (%s model): %s", F.name, F.model.model_name, valid)
    return valid


def _ball_linear(n: int, N: int) -> List[RFunc]:
    alphabet = VarAlphabet.of(n)
    z = [RFunc.variable(alphabet, alphabet.z(j)) for j in range(1, n)]
    zeros = [RFunc.zero(alphabet) for _ in range(N - n)]
    return z + zeros + [RFunc.variable(alphabet, alphabet.w)]


def _ball_whitney(n: int) -> List[RFunc]:
    alphabet = VarAlphabet.of(n)
    z = [MPoly.variable(alphabet, alphabet.z(j)) for j in range(1, n)]
    last = MPoly.variable(alphabet, alphabet.w)
    return [RFunc(zj) for zj in z] + [RFunc(zj * last) for zj in z] + [RFunc(last * last)]


def _ball_dangelo(n: int, cos_theta: Fraction, sin_theta: Fraction) -> List[RFunc]:
    alphabet = VarAlphabet.of(n)
    z = [MPoly.variable(alphabet, alphabet.z(j)) for j in range(1, n)]
    last = MPoly.variable(alphabet, alphabet.w)
    c, s = as_exact(cos_theta), as_exact(sin_theta)
    return (
        [RFunc(zj) for zj in z]
        + [RFunc(last * c)]
        + [RFunc(zj * last * s) for zj in z]
        + [RFunc(last * last * s)]
    )


def catalog(
    name: CatalogName,
    n: int,
    N: Optional[int] = None,
    theta: Optional[Tuple[Fraction, Fraction]] = None,
    model: MapModel = MapModel.HEISENBERG,
) -> CRMap:
    if n < 2:
        raise MapValidationError(f"Source dimension must be at least 2, got: {n}")
    if name == CatalogName.LINEAR:
        N = n if N is None else N
        if N < n:
            raise MapValidationError(f"linear: need N >= n, got n={n}, N={N}")
        ball = CRMap(n, N, MapModel.BALL, _ball_linear(n, N), name=f"linear({n},{N})")
        if model == MapModel.BALL:
            return ball
        return CRMap(n, N, MapModel.HEISENBERG, _ball_linear(n, N), base_normalized=True, name=ball.name)
    if name == CatalogName.WHITNEY:
        if N is not None and N != 2 * n - 1:
            raise MapValidationError(f"whitney: need N = 2n-1 = {2 * n - 1}, got N={N}")
        ball = CRMap(n, 2 * n - 1, MapModel.BALL, _ball_whitney(n), name=f"whitney({n})")
    elif name == CatalogName.DANGELO:
        if theta is None:
            raise MapValidationError("dangelo: theta (cos, sin) is required")
        cos_theta, sin_theta = Fraction(theta[0]), Fraction(theta[1])
        if cos_theta * cos_theta + sin_theta * sin_theta != 1:
            raise MapValidationError(f"dangelo: cos^2 + sin^2 must equal 1 exactly, got ({cos_theta}, {sin_theta})")
        if N is not None and N != 2 * n:
            raise MapValidationError(f"dangelo: need N = 2n = {2 * n}, got N={N}")
        name_label = f"dangelo({n},{cos_theta},{sin_theta})"
        ball = CRMap(n, 2 * n, MapModel.BALL, _ball_dangelo(n, cos_theta, sin_theta), name=name_label)
    else:
        raise MapValidationError(f"Unknown catalog map: {name}")
    if model == MapModel.BALL:
        return ball
    try:
        return cayley_conjugate(ball, CayleyDirection.BALL_TO_HEIS)
    except DenominatorVanishesError as e:
        raise MapValidationError(f"{ball.name}: Cayley conjugate is not defined at the origin ({e})") from e
