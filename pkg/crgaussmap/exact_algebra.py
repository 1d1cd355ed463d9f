"""Exact Gaussian-rational polynomials and rational functions, plus the BigComplex floating layer.

Coefficients live in sympy's ``QQ_I`` (complex numbers with exact rational real and imaginary parts).
Polynomials are sparse ``PolyElement`` objects over ``QQ_I`` in the alphabet
``z1..z{n-1}, w, zeta1..zeta{n-1}, u`` with weights 1 for z/zeta and 2 for w/u.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.exceptions import DMNonInvertibleMatrixError
from sympy.polys.rings import PolyRing

from crgaussmap.common import DenominatorVanishesError, NumericalFailure, PolyOp

LOG = logging.getLogger(__name__)

DEFAULT_PRECISION = 256
MIN_PRECISION = 64

ExactComplex = type(QQ_I.one)
Monomial = Tuple[int, ...]

ZERO = QQ_I.zero
ONE = QQ_I.one
I_UNIT = QQ_I(0, 1)


def to_qq(value: Any):
    if isinstance(value, str):
        value = Fraction(value.strip())
    if isinstance(value, Fraction):
        return QQ(value.numerator, value.denominator)
    if isinstance(value, int):
        return QQ(value)
    return QQ.convert(value)


def qq_to_fraction(value) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


def exact(re: Any = 0, im: Any = 0) -> ExactComplex:
    return QQ_I(to_qq(re), to_qq(im))


def as_exact(value: Any) -> ExactComplex:
    if isinstance(value, ExactComplex):
        return value
    if isinstance(value, (tuple, list)):
        return exact(value[0], value[1])
    return exact(value, 0)


def conj(c: ExactComplex) -> ExactComplex:
    return QQ_I(c.x, -c.y)


def abs2(c: ExactComplex):
    return c.x * c.x + c.y * c.y


def re_part(c: ExactComplex) -> ExactComplex:
    return QQ_I(c.x, 0)


def im_part(c: ExactComplex) -> ExactComplex:
    return QQ_I(c.y, 0)


def is_real(c: ExactComplex) -> bool:
    return not c.y


@dataclass(frozen=True)
class VarAlphabet:
    n_holo: int
    n_anti: int
    ring: PolyRing = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_holo < 2:
            raise ValueError(f"Alphabet needs at least 2 holomorphic slots, got: {self.n_holo}")
        if self.n_anti != self.n_holo:
            raise ValueError(f"Anti-holomorphic slot count must mirror the holomorphic one: {self.n_anti}")
        object.__setattr__(self, "ring", PolyRing(",".join(self.names), QQ_I))

    @staticmethod
    @lru_cache(maxsize=None)
    def of(n: int) -> "VarAlphabet":
        return VarAlphabet(n, n)

    @property
    def n(self) -> int:
        return self.n_holo

    @property
    def names(self) -> List[str]:
        k = self.n_holo - 1
        return [f"z{j}" for j in range(1, k + 1)] + ["w"] + [f"zeta{j}" for j in range(1, k + 1)] + ["u"]

    @property
    def size(self) -> int:
        return self.n_holo + self.n_anti

    @property
    def weights(self) -> Tuple[int, ...]:
        k = self.n_holo - 1
        return tuple([1] * k + [2] + [1] * k + [2])

    def z(self, j: int) -> int:
        self._check_index(j)
        return j - 1

    @property
    def w(self) -> int:
        return self.n_holo - 1

    def zeta(self, j: int) -> int:
        self._check_index(j)
        return self.n_holo - 1 + j

    @property
    def u(self) -> int:
        return self.size - 1

    @property
    def z_slots(self) -> List[int]:
        return list(range(self.n_holo - 1))

    @property
    def zeta_slots(self) -> List[int]:
        return [self.zeta(j) for j in range(1, self.n_holo)]

    @property
    def holo_slots(self) -> range:
        return range(self.n_holo)

    def zero_monomial(self) -> Monomial:
        return (0,) * self.size

    def monomial(self, **exps: int) -> Monomial:
        """Builds an exponent vector from slot names, e.g. ``monomial(z1=1, w=2)``."""
        names = self.names
        vec = [0] * self.size
        for name, e in exps.items():
            vec[names.index(name)] = e
        return tuple(vec)

    def weighted_degree(self, monom: Monomial) -> int:
        return sum(e * wt for e, wt in zip(monom, self.weights))

    def reflect_monomial(self, monom: Monomial) -> Monomial:
        return monom[self.n_holo :] + monom[: self.n_holo]

    def _check_index(self, j: int):
        if not 1 <= j <= self.n_holo - 1:
            raise ValueError(f"Index out of range: {j}, expected 1..{self.n_holo - 1}")


class MPoly:
    """Immutable wrapper around a ``PolyElement`` over ``QQ_I`` bound to a :class:`VarAlphabet`."""

    __slots__ = ("alphabet", "poly")

    def __init__(self, alphabet: VarAlphabet, poly=None):
        self.alphabet = alphabet
        self.poly = alphabet.ring.zero if poly is None else poly

    @classmethod
    def zero(cls, alphabet: VarAlphabet) -> "MPoly":
        return cls(alphabet)

    @classmethod
    def one(cls, alphabet: VarAlphabet) -> "MPoly":
        return cls(alphabet, alphabet.ring.one)

    @classmethod
    def constant(cls, alphabet: VarAlphabet, value: Any) -> "MPoly":
        c = as_exact(value)
        return cls(alphabet, alphabet.ring.ground_new(c) if c else alphabet.ring.zero)

    @classmethod
    def variable(cls, alphabet: VarAlphabet, slot: int) -> "MPoly":
        return cls(alphabet, alphabet.ring.gens[slot])

    @classmethod
    def from_terms(cls, alphabet: VarAlphabet, terms: Dict[Monomial, Any]) -> "MPoly":
        ring = alphabet.ring
        poly = ring.zero
        for monom, coeff in terms.items():
            monom = tuple(monom)
            if len(monom) != ring.ngens:
                raise ValueError(f"Exponent vector {monom} does not match alphabet size {ring.ngens}")
            c = as_exact(coeff)
            if c:
                poly[monom] = c
        return cls(alphabet, poly)

    def _wrap(self, poly) -> "MPoly":
        return MPoly(self.alphabet, poly)

    def _coerce(self, other) -> "MPoly":
        if isinstance(other, MPoly):
            if other.alphabet != self.alphabet:
                raise ValueError(f"Alphabet mismatch: {self.alphabet} vs. {other.alphabet}")
            return other
        return MPoly.constant(self.alphabet, other)

    def __add__(self, other) -> "MPoly":
        return self._wrap(self.poly + self._coerce(other).poly)

    __radd__ = __add__

    def __sub__(self, other) -> "MPoly":
        return self._wrap(self.poly - self._coerce(other).poly)

    def __rsub__(self, other) -> "MPoly":
        return self._wrap(self._coerce(other).poly - self.poly)

    def __mul__(self, other) -> "MPoly":
        if isinstance(other, MPoly):
            return self._wrap(self.poly * self._coerce(other).poly)
        return self.scale(other)

    __rmul__ = __mul__

    def __neg__(self) -> "MPoly":
        return self._wrap(-self.poly)

    def __pow__(self, exp: int) -> "MPoly":
        if exp < 0:
            raise ValueError(f"Negative exponent: {exp}")
        return self._wrap(self.poly**exp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MPoly):
            return NotImplemented
        return self.alphabet == other.alphabet and self.poly == other.poly

    def __hash__(self):
        return hash((self.alphabet, frozenset(self.poly.items())))

    def __repr__(self):
        return f"MPoly({self.poly.as_expr()})"

    def scale(self, value: Any) -> "MPoly":
        return self._wrap(self.poly.mul_ground(as_exact(value)))

    def is_zero(self) -> bool:
        return not self.poly

    def items(self) -> Iterable[Tuple[Monomial, ExactComplex]]:
        return self.poly.items()

    def terms(self) -> Dict[Monomial, ExactComplex]:
        return dict(self.poly.items())

    def coefficient(self, monom: Monomial) -> ExactComplex:
        return self.poly.get(tuple(monom), ZERO)

    @property
    def constant_term(self) -> ExactComplex:
        return self.coefficient(self.alphabet.zero_monomial())

    def wt_degree(self) -> int:
        if not self.poly:
            return -1
        return max(self.alphabet.weighted_degree(m) for m in self.poly)

    def total_degree(self) -> int:
        """Ordinary degree in the holomorphic slots (z, w)."""
        if not self.poly:
            return 0
        n = self.alphabet.n_holo
        return max(sum(m[:n]) for m in self.poly)

    def has_anti_slots(self) -> bool:
        n = self.alphabet.n_holo
        return any(any(m[n:]) for m in self.poly)

    def filter_terms(self, predicate) -> "MPoly":
        poly = self.alphabet.ring.zero
        for monom, coeff in self.poly.items():
            if predicate(monom):
                poly[monom] = coeff
        return self._wrap(poly)

    def wt_truncate(self, m: int) -> "MPoly":
        if m < 0:
            raise ValueError(f"Truncation order must be non-negative, got: {m}")
        wd = self.alphabet.weighted_degree
        return self.filter_terms(lambda monom: wd(monom) <= m)

    def weighted_part(self, k: int) -> "MPoly":
        wd = self.alphabet.weighted_degree
        return self.filter_terms(lambda monom: wd(monom) == k)

    def jet_part(self, z_degree: int, w_degree: int) -> "MPoly":
        """H^{(k,l)}: the terms with total z-degree k and w-exponent l, with the w power removed."""
        alphabet = self.alphabet
        w = alphabet.w
        z_slots = alphabet.z_slots
        poly = alphabet.ring.zero
        for monom, coeff in self.poly.items():
            if monom[w] == w_degree and sum(monom[s] for s in z_slots) == z_degree:
                stripped = list(monom)
                stripped[w] = 0
                poly[tuple(stripped)] = coeff
        return self._wrap(poly)

    def diff(self, slot: int) -> "MPoly":
        return self._wrap(self.poly.diff(slot))

    def bar_reflect(self) -> "MPoly":
        alphabet = self.alphabet
        poly = alphabet.ring.zero
        for monom, coeff in self.poly.items():
            poly[alphabet.reflect_monomial(monom)] = conj(coeff)
        return self._wrap(poly)

    def map_coefficients(self, fn) -> "MPoly":
        poly = self.alphabet.ring.zero
        for monom, coeff in self.poly.items():
            c = fn(coeff)
            if c:
                poly[monom] = c
        return self._wrap(poly)

    def substitute(self, slot: int, other: "MPoly") -> "MPoly":
        other = self._coerce(other)
        ring = self.alphabet.ring
        return self._wrap(self.poly.compose(ring.gens[slot], other.poly))

    def substitute_rational(self, slot: int, num: "MPoly", den: "MPoly") -> "MPoly":
        """Numerator of ``self`` with ``slot := num/den``, cleared by ``den**d`` where d is the slot degree."""
        num, den = self._coerce(num), self._coerce(den)
        ring = self.alphabet.ring
        degree = max((m[slot] for m in self.poly), default=0)
        num_powers = {0: ring.one}
        den_powers = {0: ring.one}
        for e in range(1, degree + 1):
            num_powers[e] = num_powers[e - 1] * num.poly
            den_powers[e] = den_powers[e - 1] * den.poly
        result = ring.zero
        for monom, coeff in self.poly.items():
            e = monom[slot]
            stripped = list(monom)
            stripped[slot] = 0
            term = ring.zero
            term[tuple(stripped)] = coeff
            result += term * num_powers[e] * den_powers[degree - e]
        return self._wrap(result)

    def evaluate(self, values: Sequence[ExactComplex]) -> ExactComplex:
        if len(values) != self.alphabet.size:
            raise ValueError(f"Expected {self.alphabet.size} values, got: {len(values)}")
        powers: List[Dict[int, ExactComplex]] = [{} for _ in values]
        total = ZERO
        for monom, coeff in self.poly.items():
            term = coeff
            for slot, e in enumerate(monom):
                if e:
                    cache = powers[slot]
                    pw = cache.get(e)
                    if pw is None:
                        pw = values[slot] ** e
                        cache[e] = pw
                    term = term * pw
            total = total + term
        return total

    def compose(self, subs: Sequence["MPoly"], order: Optional[int] = None) -> "MPoly":
        """Substitutes the holomorphic slots (z, w) by ``subs``, optionally truncating at weighted ``order``."""
        if len(subs) != self.alphabet.n_holo:
            raise ValueError(f"Expected {self.alphabet.n_holo} substitutions, got: {len(subs)}")
        if self.has_anti_slots():
            raise ValueError("Only polynomials in the holomorphic slots can be composed")
        target = subs[0].alphabet
        weights = target.weights

        def trunc(poly):
            if order is None:
                return poly
            return _truncate_poly(target.ring, poly, weights, order)

        powers: List[Dict[int, Any]] = [{1: trunc(s.poly)} for s in subs]

        def power(slot, e):
            cache = powers[slot]
            if e not in cache:
                cache[e] = trunc(power(slot, e - 1) * cache[1])
            return cache[e]

        result = target.ring.zero
        n = self.alphabet.n_holo
        for monom, coeff in self.poly.items():
            term = target.ring.ground_new(coeff)
            for slot in range(n):
                if monom[slot]:
                    term = trunc(term * power(slot, monom[slot]))
            result += term
        return MPoly(target, result)

    def compose_homogeneous(self, numerators: Sequence["MPoly"], denominator: "MPoly", degree: int) -> "MPoly":
        """Numerator of ``self(A/B)`` over ``B**degree``: sum of c * prod(A_i**e_i) * B**(degree - |e|)."""
        if len(numerators) != self.alphabet.n_holo:
            raise ValueError(f"Expected {self.alphabet.n_holo} numerators, got: {len(numerators)}")
        if self.has_anti_slots():
            raise ValueError("Only polynomials in the holomorphic slots can be composed")
        target = denominator.alphabet
        num_powers: List[Dict[int, Any]] = [{0: target.ring.one} for _ in numerators]
        den_powers: Dict[int, Any] = {0: target.ring.one}

        def power(cache, base, e):
            if e not in cache:
                cache[e] = power(cache, base, e - 1) * base
            return cache[e]

        result = target.ring.zero
        n = self.alphabet.n_holo
        for monom, coeff in self.poly.items():
            deg = sum(monom[:n])
            if deg > degree:
                raise ValueError(f"Homogenization degree {degree} is below term degree {deg}")
            term = target.ring.ground_new(coeff)
            for slot in range(n):
                if monom[slot]:
                    term = term * power(num_powers[slot], numerators[slot].poly, monom[slot])
            if degree - deg:
                term = term * power(den_powers, denominator.poly, degree - deg)
            result += term
        return MPoly(target, result)

    def max_abs2(self):
        """Largest squared modulus of a coefficient (exact rational)."""
        best = QQ(0)
        for coeff in self.poly.values():
            a = abs2(coeff)
            if a > best:
                best = a
        return best


def _truncate_poly(ring, poly, weights: Sequence[int], order: int):
    out = ring.zero
    for monom, coeff in poly.items():
        if sum(e * wt for e, wt in zip(monom, weights)) <= order:
            out[monom] = coeff
    return out


def poly_arith(a: MPoly, b: MPoly, op: PolyOp) -> MPoly:
    if a.alphabet != b.alphabet:
        raise ValueError(f"Alphabet mismatch: {a.alphabet} vs. {b.alphabet}")
    if op == PolyOp.ADD:
        return a + b
    elif op == PolyOp.SUB:
        return a - b
    elif op == PolyOp.MUL:
        return a * b
    raise ValueError(f"Unknown operation: {op}")


def wt_truncate(p: MPoly, m: int) -> MPoly:
    return p.wt_truncate(m)


def bar_reflect(p: MPoly) -> MPoly:
    return p.bar_reflect()


class RFunc:
    """Rational function ``num / den`` stored with ``den(0) = 1``."""

    __slots__ = ("num", "den")

    def __init__(self, num: MPoly, den: Optional[MPoly] = None):
        if den is None:
            den = MPoly.one(num.alphabet)
        if num.alphabet != den.alphabet:
            raise ValueError(f"Alphabet mismatch: {num.alphabet} vs. {den.alphabet}")
        c = den.constant_term
        if not c:
            raise DenominatorVanishesError("denominator vanishes at origin")
        if c != ONE:
            inv = ONE / c
            num = num.scale(inv)
            den = den.scale(inv)
        self.num = num
        self.den = den

    @classmethod
    def from_poly(cls, p: MPoly) -> "RFunc":
        return cls(p)

    @classmethod
    def constant(cls, alphabet: VarAlphabet, value: Any) -> "RFunc":
        return cls(MPoly.constant(alphabet, value))

    @classmethod
    def zero(cls, alphabet: VarAlphabet) -> "RFunc":
        return cls(MPoly.zero(alphabet))

    @classmethod
    def variable(cls, alphabet: VarAlphabet, slot: int) -> "RFunc":
        return cls(MPoly.variable(alphabet, slot))

    @property
    def alphabet(self) -> VarAlphabet:
        return self.num.alphabet

    def _coerce(self, other) -> "RFunc":
        if isinstance(other, RFunc):
            return other
        if isinstance(other, MPoly):
            return RFunc(other)
        return RFunc.constant(self.alphabet, other)

    def __add__(self, other) -> "RFunc":
        other = self._coerce(other)
        if self.den == other.den:
            return RFunc(self.num + other.num, self.den)
        return RFunc(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other) -> "RFunc":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "RFunc":
        return self._coerce(other) - self

    def __mul__(self, other) -> "RFunc":
        if not isinstance(other, (RFunc, MPoly)):
            return self.scale(other)
        other = self._coerce(other)
        return RFunc(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __neg__(self) -> "RFunc":
        return RFunc(-self.num, self.den)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RFunc):
            return NotImplemented
        return self.equals(other)

    __hash__ = None

    def __repr__(self):
        return f"RFunc(({self.num.poly.as_expr()}) / ({self.den.poly.as_expr()}))"

    def scale(self, value: Any) -> "RFunc":
        return RFunc(self.num.scale(value), self.den)

    def equals(self, other: "RFunc") -> bool:
        if self.den == other.den:
            return self.num == other.num
        return (self.num * other.den - other.num * self.den).is_zero()

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return self.den.poly == self.alphabet.ring.one

    def diff(self, slot: int) -> "RFunc":
        if self.is_polynomial():
            return RFunc(self.num.diff(slot))
        return RFunc(self.num.diff(slot) * self.den - self.num * self.den.diff(slot), self.den * self.den)

    def bar_reflect(self) -> "RFunc":
        return RFunc(self.num.bar_reflect(), self.den.bar_reflect())

    def substitute(self, slot: int, other: MPoly) -> "RFunc":
        return RFunc(self.num.substitute(slot, other), self.den.substitute(slot, other))

    def evaluate(self, values: Sequence[ExactComplex]) -> ExactComplex:
        d = self.den.evaluate(values)
        if not d:
            raise DenominatorVanishesError("denominator vanishes at point")
        return self.num.evaluate(values) / d

    def value_and_partials(self, values: Sequence[ExactComplex], slots: Sequence[int]):
        """Value and first partial derivatives at ``values`` via the quotient rule."""
        d = self.den.evaluate(values)
        if not d:
            raise DenominatorVanishesError("denominator vanishes at point")
        nv = self.num.evaluate(values)
        value = nv / d
        partials = []
        for slot in slots:
            dn = self.num.diff(slot).evaluate(values)
            dd = self.den.diff(slot).evaluate(values) if not self.is_polynomial() else ZERO
            partials.append((dn - value * dd) / d)
        return value, partials

    def jet(self, order: int) -> MPoly:
        return rf_jet(self, order)

    def compose(self, subs: Sequence["RFunc"], degree: Optional[int] = None) -> "RFunc":
        """Exact composition ``self(subs)``; a shared ``degree`` keeps denominators of sibling components equal."""
        common_den, numerators = common_denominator(subs)
        if degree is None:
            degree = max(self.num.total_degree(), self.den.total_degree())
        num = self.num.compose_homogeneous(numerators, common_den, degree)
        den = self.den.compose_homogeneous(numerators, common_den, degree)
        return RFunc(num, den)


def common_denominator(funcs: Sequence[RFunc]) -> Tuple[MPoly, List[MPoly]]:
    dens: List[MPoly] = []
    for f in funcs:
        if not any(f.den == d for d in dens):
            dens.append(f.den)
    one = MPoly.one(funcs[0].alphabet)
    common = one
    for d in dens:
        common = common * d
    numerators = []
    for f in funcs:
        factor = one
        for d in dens:
            if d != f.den:
                factor = factor * d
        numerators.append(f.num * factor)
    return common, numerators


def series_inverse(p: MPoly, order: int) -> MPoly:
    """1/p up to weighted ``order``, by the geometric series in ``1 - p/p(0)``."""
    c = p.constant_term
    if not c:
        raise DenominatorVanishesError("denominator vanishes at origin")
    inv_c = ONE / c
    tail = -(p.wt_truncate(order).scale(inv_c) - 1)
    inverse = MPoly.one(p.alphabet)
    term = MPoly.one(p.alphabet)
    for _ in range(order):
        term = (term * tail).wt_truncate(order)
        if term.is_zero():
            break
        inverse = inverse + term
    return inverse.scale(inv_c)


def rf_jet(r: RFunc, order: int) -> MPoly:
    """Weighted Taylor polynomial of ``r`` at the origin by geometric-series inversion of the denominator."""
    if order < 0:
        raise ValueError(f"Jet order must be non-negative, got: {order}")
    num = r.num.wt_truncate(order)
    if r.is_polynomial():
        return num
    return (num * series_inverse(r.den, order)).wt_truncate(order)


def jet_compose(r: RFunc, inner: Sequence[MPoly], order: int) -> MPoly:
    """Jet of ``r(inner)`` where ``inner`` are jets vanishing at the origin."""
    num = r.num.compose(inner, order)
    if r.is_polynomial():
        return num
    den = r.den.compose(inner, order)
    return (num * series_inverse(den, order)).wt_truncate(order)


class ExactLinearAlgebra:
    @staticmethod
    def matrix(rows: Sequence[Sequence[Any]], domain=QQ_I) -> DomainMatrix:
        nrows = len(rows)
        ncols = len(rows[0]) if nrows else 0
        conv = domain.convert
        return DomainMatrix([[conv(x) for x in row] for row in rows], (nrows, ncols), domain)

    @staticmethod
    def rank(rows: Sequence[Sequence[ExactComplex]]) -> int:
        if not rows or not rows[0]:
            return 0
        return ExactLinearAlgebra.matrix(rows).rank()

    @staticmethod
    def real_rank(rows: Sequence[Sequence[ExactComplex]]) -> int:
        """Rank over R of the real matrix obtained by splitting every complex row into its Re and Im rows."""
        if not rows or not rows[0]:
            return 0
        real_rows = []
        for row in rows:
            real_rows.append([c.x for c in row])
            real_rows.append([c.y for c in row])
        return ExactLinearAlgebra.matrix(real_rows, QQ).rank()

    @staticmethod
    def det(rows: Sequence[Sequence[ExactComplex]]) -> ExactComplex:
        return ExactLinearAlgebra.matrix(rows).det()

    @staticmethod
    def is_invertible(rows: Sequence[Sequence[ExactComplex]]) -> bool:
        return bool(ExactLinearAlgebra.det(rows))

    @staticmethod
    def solve(a_rows: Sequence[Sequence[ExactComplex]], b_rows: Sequence[Sequence[ExactComplex]]):
        """Solves ``A X = B`` exactly; raises ``ZeroDivisionError`` when A is singular."""
        a = ExactLinearAlgebra.matrix(a_rows)
        if not a.det():
            raise ZeroDivisionError("Singular matrix")
        try:
            x = a.lu_solve(ExactLinearAlgebra.matrix(b_rows))
        except DMNonInvertibleMatrixError as e:
            raise ZeroDivisionError(f"Singular matrix: {e}") from e
        return x.to_list()

    @staticmethod
    def mat_mul(a_rows, b_rows):
        return (ExactLinearAlgebra.matrix(a_rows) * ExactLinearAlgebra.matrix(b_rows)).to_list()


class BigComplexContext:
    """Arbitrary-precision complex arithmetic pinned to ``precision`` bits on a private mpmath context."""

    def __init__(self, precision: int = DEFAULT_PRECISION):
        if precision < MIN_PRECISION:
            raise ValueError(f"Precision must be at least {MIN_PRECISION} bits, got: {precision}")
        self.precision = precision
        self.ctx = mpmath.MPContext()
        self.ctx.prec = precision
        self.tolerance = self.ctx.ldexp(self.ctx.mpf(1), -(precision // 2))

    @staticmethod
    @lru_cache(maxsize=None)
    def of(precision: int = DEFAULT_PRECISION) -> "BigComplexContext":
        return BigComplexContext(precision)

    def __repr__(self):
        return f"BigComplexContext(precision={self.precision})"

    def big(self, c: ExactComplex):
        ctx = self.ctx
        re = ctx.fdiv(int(c.x.numerator), int(c.x.denominator))
        im = ctx.fdiv(int(c.y.numerator), int(c.y.denominator))
        return ctx.mpc(re, im)

    def big_real(self, q):
        return self.ctx.fdiv(int(q.numerator), int(q.denominator))

    def _mpf_to_qq(self, v):
        if not self.ctx.isfinite(v):
            raise NumericalFailure(f"Non-finite value at precision {self.precision}: {v}")
        man, exp = v.man_exp
        man = int(man)
        if v < 0:
            man = -man
        if exp >= 0:
            return QQ(man * 2**exp)
        return QQ(man, 2 ** (-exp))

    def exact(self, v) -> ExactComplex:
        """Exact dyadic value of a P-bit floating number."""
        v = self.ctx.mpc(v)
        return QQ_I(self._mpf_to_qq(v.real), self._mpf_to_qq(v.imag))

    def quantize(self, c: ExactComplex) -> ExactComplex:
        return self.exact(self.big(c))

    def quantize_poly(self, p: MPoly) -> MPoly:
        return p.map_coefficients(self.quantize)

    def abs(self, v):
        return abs(self.ctx.mpc(v))

    def sqrt(self, v):
        return self.ctx.sqrt(v)

    def is_negligible(self, v, scale=1) -> bool:
        return abs(v) <= self.tolerance * scale

    def poly_residual(self, p: MPoly):
        """Largest coefficient modulus of ``p`` as a P-bit float."""
        return self.ctx.sqrt(self.big_real(p.max_abs2()))

    def matrix(self, rows):
        return self.ctx.matrix([[self.ctx.mpc(x) for x in row] for row in rows])

    def singular_values(self, rows) -> List:
        if not rows or not rows[0]:
            return []
        s = self.ctx.svd(self.matrix(rows), compute_uv=False)
        return [s[k] for k in range(s.rows)]

    def rank(self, rows, floor=0) -> int:
        """Numerical rank with threshold ``sigma_max * 2**(-P/2)``, never below the absolute ``floor``."""
        values = self.singular_values(rows)
        if not values:
            return 0
        smax = max(values)
        if smax <= floor:
            return 0
        threshold = max(smax * self.tolerance, floor)
        return sum(1 for s in values if s > threshold)

    def inner(self, a, b):
        return self.ctx.fsum(x * self.ctx.conj(y) for x, y in zip(a, b))

    def norm(self, a):
        return self.ctx.sqrt(self.ctx.re(self.inner(a, a)))

    def orthonormal_completion(self, rows, dim: int, reverse: bool = False):
        """Completes orthonormal ``rows`` to a unitary basis of C^dim with Gram–Schmidt over the standard basis."""
        ctx = self.ctx
        basis = [[ctx.mpc(x) for x in row] for row in rows]
        candidates = range(dim - 1, -1, -1) if reverse else range(dim)
        for k in candidates:
            if len(basis) == dim:
                break
            v = [ctx.mpc(1) if i == k else ctx.mpc(0) for i in range(dim)]
            # two passes of modified Gram-Schmidt
            for _ in range(2):
                for q in basis:
                    coeff = self.inner(v, q)
                    v = [x - coeff * y for x, y in zip(v, q)]
            norm = self.norm(v)
            if norm > ctx.mpf(1) / 4:
                basis.append([x / norm for x in v])
        if len(basis) != dim:
            raise NumericalFailure(f"Unitary completion failed: got {len(basis)} of {dim} vectors")
        return basis

    def mat_mul(self, a, b):
        ctx = self.ctx
        return [[ctx.fsum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]

    def conj_transpose(self, a):
        ctx = self.ctx
        return [[ctx.conj(a[i][j]) for i in range(len(a))] for j in range(len(a[0]))]

    def unitarity_residual(self, a):
        prod = self.mat_mul(a, self.conj_transpose(a))
        n = len(prod)
        return max(abs(prod[i][j] - (1 if i == j else 0)) for i in range(n) for j in range(n))

    def hermitian_residual(self, a):
        n = len(a)
        if n == 0:
            return self.ctx.mpf(0)
        return max(abs(a[i][j] - self.ctx.conj(a[j][i])) for i in range(n) for j in range(n))

    def hermitian_eigen(self, rows):
        """Eigenpairs of a Hermitian matrix, eigenvalues descending (index tie-break), phases normalized.

        Each eigenvector's largest-modulus entry is made real positive.
        """
        ctx = self.ctx
        n = len(rows)
        if n == 1:
            return [ctx.re(ctx.mpc(rows[0][0]))], [[ctx.mpc(1)]]
        values, vectors = ctx.eighe(self.matrix(rows))
        order = sorted(range(n), key=lambda k: (-values[k], k))
        eigvals = [ctx.re(values[k]) for k in order]
        eigvecs = []
        for k in order:
            col = [vectors[i, k] for i in range(n)]
            pivot = max(range(n), key=lambda i: (abs(col[i]), -i))
            phase = abs(col[pivot]) / col[pivot]
            eigvecs.append([x * phase for x in col])
        return eigvals, eigvecs
