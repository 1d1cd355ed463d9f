import logging
import random
from fractions import Fraction
from typing import Any, List, Sequence, Tuple

from pythoncommons.logging_setup import SimpleLoggingSetup

from crgaussmap.exact_algebra import ONE, ZERO, ExactComplex, as_exact, conj, exact, qq_to_fraction, to_qq

LOG = logging.getLogger(__name__)

GAUSSIAN_UNITS = [(1, 0), (0, 1), (-1, 0), (0, -1)]


class FractionUtils:
    @staticmethod
    def parse(value: Any) -> Fraction:
        """Accepts 'p/q', 'p', ints and Fractions; non-reduced fractions are normalized."""
        if isinstance(value, Fraction):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return Fraction(value)
        if isinstance(value, str):
            try:
                return Fraction(value.strip())
            except (ValueError, ZeroDivisionError) as e:
                raise ValueError(f"Invalid rational literal: '{value}'") from e
        raise ValueError(f"Invalid rational literal: {value!r}")

    @staticmethod
    def format(value: Any) -> str:
        if not isinstance(value, Fraction):
            value = qq_to_fraction(to_qq(value))
        return f"{value.numerator}/{value.denominator}"

    @staticmethod
    def parse_exact_pair(pair: Sequence[Any]) -> ExactComplex:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ValueError(f"Expected a [re, im] pair, got: {pair!r}")
        return exact(FractionUtils.parse(pair[0]), FractionUtils.parse(pair[1]))

    @staticmethod
    def format_exact(c: ExactComplex) -> List[str]:
        return [FractionUtils.format(c.x), FractionUtils.format(c.y)]

    @staticmethod
    def parse_theta(value: str) -> Tuple[Fraction, Fraction]:
        """Parses 'p/q,r/s' into an exact (cos, sin) pair."""
        parts = value.split(",")
        if len(parts) != 2:
            raise ValueError(f"Expected theta as 'p/q,r/s', got: '{value}'")
        return FractionUtils.parse(parts[0]), FractionUtils.parse(parts[1])


class SamplingUtils:
    @staticmethod
    def random_rational(rng: random.Random, height_bits: int) -> Fraction:
        bound = 2**height_bits
        return Fraction(rng.randint(-bound, bound), rng.randint(1, bound))

    @staticmethod
    def random_exact(rng: random.Random, height_bits: int) -> ExactComplex:
        return exact(SamplingUtils.random_rational(rng, height_bits), SamplingUtils.random_rational(rng, height_bits))

    @staticmethod
    def random_point_coordinates(rng: random.Random, n: int, height_bits: int) -> Tuple[List[ExactComplex], Fraction]:
        z0 = [SamplingUtils.random_exact(rng, height_bits) for _ in range(n - 1)]
        u0 = SamplingUtils.random_rational(rng, height_bits)
        return z0, u0


class UnitaryUtils:
    @staticmethod
    def pythagorean_pair(rng: random.Random, max_param: int = 6) -> Tuple[Fraction, Fraction]:
        """Exact rational point (c, s) on the unit circle from Euclid's parametrization."""
        m = rng.randint(2, max_param)
        k = rng.randint(1, m - 1)
        hyp = m * m + k * k
        c, s = Fraction(m * m - k * k, hyp), Fraction(2 * m * k, hyp)
        if rng.random() < 0.5:
            c, s = s, c
        if rng.random() < 0.5:
            s = -s
        return c, s

    @staticmethod
    def identity(n: int) -> List[List[ExactComplex]]:
        return [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]

    @staticmethod
    def mat_mul(a, b):
        rows, inner, cols = len(a), len(b), len(b[0])
        out = []
        for i in range(rows):
            row = []
            for j in range(cols):
                acc = ZERO
                for k in range(inner):
                    acc = acc + a[i][k] * b[k][j]
                row.append(acc)
            out.append(row)
        return out

    @staticmethod
    def conj_transpose(a):
        return [[conj(a[i][j]) for i in range(len(a))] for j in range(len(a[0]))]

    @staticmethod
    def givens(n: int, i: int, j: int, c: Fraction, s: Fraction) -> List[List[ExactComplex]]:
        g = UnitaryUtils.identity(n)
        g[i][i], g[i][j] = as_exact(c), as_exact(-s)
        g[j][i], g[j][j] = as_exact(s), as_exact(c)
        return g

    @staticmethod
    def random_unitary(n: int, rng: random.Random) -> List[List[ExactComplex]]:
        """Exact Gaussian-rational unitary: unit phases, a permutation and Pythagorean Givens rotations."""
        perm = list(range(n))
        rng.shuffle(perm)
        u = [[ZERO] * n for _ in range(n)]
        for row, col in enumerate(perm):
            u[row][col] = exact(*rng.choice(GAUSSIAN_UNITS))
        for i in range(n):
            for j in range(i + 1, n):
                c, s = UnitaryUtils.pythagorean_pair(rng)
                u = UnitaryUtils.mat_mul(u, UnitaryUtils.givens(n, i, j, c, s))
        return u

    @staticmethod
    def is_unitary(a) -> bool:
        prod = UnitaryUtils.mat_mul(a, UnitaryUtils.conj_transpose(a))
        n = len(prod)
        return all((prod[i][j] == ONE) if i == j else not prod[i][j] for i in range(n) for j in range(n))


class LoggingUtils:
    TRACE_LEVEL = 5

    @staticmethod
    def ensure_trace_level():
        """pythoncommons file helpers log through ``LOG.trace``; the level must exist before they are called."""
        if not hasattr(logging, "TRACE"):
            SimpleLoggingSetup.add_logging_level("TRACE", LoggingUtils.TRACE_LEVEL, strict=False)
