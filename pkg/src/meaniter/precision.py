"""Arbitrary-precision reals backed by MPFR (through gmpy2).

Every :class:`Real` carries its own binary precision. Binary operations run
at the larger of the operand precisions with round-to-nearest, so results
are deterministic for a fixed precision and operand order. Python ints,
floats, fractions and decimal strings mixed into an expression are rounded
to the precision of the Real operand.

The gmpy2 contexts used here are cached per thread and never mutated after
creation, which keeps every operation pure and thread safe.
"""

from __future__ import annotations

import math
import os
import re
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

import gmpy2

from .errors import DivisionByZero, DomainError

__all__ = [
    "Real",
    "PrecisionConfig",
    "default_bits",
    "elementary",
    "effectively_zero",
    "exp",
    "log",
    "sqrt",
    "root",
    "pow_real",
    "fsum",
    "roundtrip_digits",
]

DEFAULT_BITS_ENV = "MEANITER_DEFAULT_BITS"
RESIDUUM_BITS = 1024
CONVERGENCE_BITS = 8192

_MPFR = type(gmpy2.mpfr(0))
_MPQ = type(gmpy2.mpq(0))
_DECIMAL_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_INF_RE = re.compile(r"^[+-]?inf(inity)?$", re.IGNORECASE)

_local = threading.local()

Number = Union["Real", int, float, Fraction, str]


def default_bits() -> int:
    """Working precision used when none is given (env ``MEANITER_DEFAULT_BITS``)."""
    raw = os.environ.get(DEFAULT_BITS_ENV)
    if raw is None or not raw.strip():
        return RESIDUUM_BITS
    try:
        bits = int(raw)
    except ValueError:
        raise ValueError(f"{DEFAULT_BITS_ENV} must be an integer, got {raw!r}") from None
    if bits < 64:
        raise ValueError(f"{DEFAULT_BITS_ENV} must be >= 64, got {bits}")
    return bits


def _ctx(bits: int):
    cache = getattr(_local, "contexts", None)
    if cache is None:
        cache = _local.contexts = {}
    ctx = cache.get(bits)
    if ctx is None:
        ctx = gmpy2.context(precision=bits, round=gmpy2.RoundToNearest)
        cache[bits] = ctx
    return ctx


def _parse_decimal(text: str, bits: int):
    s = text.strip()
    if _INF_RE.match(s):
        return gmpy2.mpfr("-inf" if s.startswith("-") else "inf", bits)
    if not _DECIMAL_RE.match(s):
        raise ValueError(f"malformed decimal string: {text!r}")
    return gmpy2.mpfr(s, bits)


def _to_mpfr(value, bits: int):
    if isinstance(value, Real):
        v = value._v
        return v if v.precision == bits else _ctx(bits).plus(v)
    if isinstance(value, _MPFR):
        return value if value.precision == bits else _ctx(bits).plus(value)
    if isinstance(value, bool):
        raise TypeError("bool is not a real number")
    if isinstance(value, int):
        return gmpy2.mpfr(value, bits)
    if isinstance(value, Fraction):
        return gmpy2.mpfr(gmpy2.mpq(value.numerator, value.denominator), bits)
    if isinstance(value, _MPQ):
        return gmpy2.mpfr(value, bits)
    if isinstance(value, float):
        if math.isnan(value):
            raise DomainError("NaN is not a real number")
        return gmpy2.mpfr(value, bits)
    if isinstance(value, str):
        return _parse_decimal(value, bits)
    raise TypeError(f"cannot convert {type(value).__name__} to Real")


def _exact(other):
    """Exact comparison operand, or None when the type is foreign."""
    if isinstance(other, Real):
        return other._v
    if isinstance(other, bool):
        return None
    if isinstance(other, (int, float, _MPFR, _MPQ)):
        return other
    if isinstance(other, Fraction):
        return gmpy2.mpq(other.numerator, other.denominator)
    return None


def _wrap(v) -> "Real":
    if gmpy2.is_nan(v):
        raise DomainError("operation produced NaN (argument outside domain)")
    r = object.__new__(Real)
    object.__setattr__(r, "_v", v)
    return r


class Real:
    """Immutable binary floating-point number with an explicit precision.

    >>> Real("0.1", 128).precision_bits
    128
    """

    __slots__ = ("_v",)

    def __init__(self, value: Number, precision_bits: int | None = None):
        if precision_bits is None:
            if isinstance(value, Real):
                precision_bits = value.precision_bits
            elif isinstance(value, _MPFR):
                precision_bits = value.precision
            else:
                precision_bits = default_bits()
        if precision_bits < 2:
            raise ValueError("precision_bits must be >= 2")
        v = _to_mpfr(value, int(precision_bits))
        if gmpy2.is_nan(v):
            raise DomainError("NaN is not a real number")
        object.__setattr__(self, "_v", v)

    def __setattr__(self, name, value):
        raise AttributeError("Real is immutable")

    def __reduce__(self):
        return (Real, (self.to_decimal(), self.precision_bits))

    # -- introspection -------------------------------------------------

    @property
    def precision_bits(self) -> int:
        return self._v.precision

    @property
    def mpfr(self):
        """The underlying gmpy2 ``mpfr`` value."""
        return self._v

    def with_precision(self, bits: int) -> "Real":
        """Round (or widen) to ``bits`` of precision."""
        return Real(self, bits)

    def as_integer_ratio(self) -> tuple[int, int]:
        """Exact value as a reduced ``(numerator, denominator)`` pair."""
        if not self.is_finite():
            raise DomainError("infinite value has no integer ratio")
        n, d = self._v.as_integer_ratio()
        return int(n), int(d)

    def is_zero(self) -> bool:
        return gmpy2.is_zero(self._v)

    def is_finite(self) -> bool:
        return gmpy2.is_finite(self._v)

    def sign(self) -> int:
        return gmpy2.sign(self._v)

    def ldexp(self, k: int) -> "Real":
        """Exact multiplication by ``2**k``."""
        return _wrap(_ctx(self.precision_bits).mul_2exp(self._v, k))

    # -- arithmetic ----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Real):
            return other._v
        try:
            return _to_mpfr(other, self.precision_bits)
        except TypeError:
            return None

    def _binop(self, other, name, reflected=False):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        a, b = (o, self._v) if reflected else (self._v, o)
        ctx = _ctx(max(a.precision, b.precision))
        if name == "div" and gmpy2.is_zero(b):
            raise DivisionByZero("division by exact zero")
        return _wrap(getattr(ctx, name)(a, b))

    def __add__(self, other):
        return self._binop(other, "add")

    def __radd__(self, other):
        return self._binop(other, "add", True)

    def __sub__(self, other):
        return self._binop(other, "sub")

    def __rsub__(self, other):
        return self._binop(other, "sub", True)

    def __mul__(self, other):
        return self._binop(other, "mul")

    def __rmul__(self, other):
        return self._binop(other, "mul", True)

    def __truediv__(self, other):
        return self._binop(other, "div")

    def __rtruediv__(self, other):
        return self._binop(other, "div", True)

    def __pow__(self, other):
        if isinstance(other, int) and not isinstance(other, bool):
            if other < 0 and self.is_zero():
                raise DivisionByZero("zero raised to a negative power")
            return _wrap(_ctx(self.precision_bits).pow(self._v, other))
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return pow_real(self, _wrap(o))

    def __rpow__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return pow_real(_wrap(o), self)

    def __neg__(self):
        return _wrap(_ctx(self.precision_bits).minus(self._v))

    def __pos__(self):
        return self

    def __abs__(self):
        return _wrap(_ctx(self.precision_bits).abs(self._v))

    # -- comparison ----------------------------------------------------

    def _cmp(self, other, op):
        o = _exact(other)
        if o is None:
            if isinstance(other, str):
                o = _to_mpfr(other, self.precision_bits)
            else:
                return NotImplemented
        return op(self._v, o)

    def __eq__(self, other):
        return self._cmp(other, lambda a, b: a == b)

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __lt__(self, other):
        return self._cmp(other, lambda a, b: a < b)

    def __le__(self, other):
        return self._cmp(other, lambda a, b: a <= b)

    def __gt__(self, other):
        return self._cmp(other, lambda a, b: a > b)

    def __ge__(self, other):
        return self._cmp(other, lambda a, b: a >= b)

    def __hash__(self):
        return hash(self._v)

    def __bool__(self):
        return not self.is_zero()

    # -- conversion ----------------------------------------------------

    def __float__(self):
        return float(self._v)

    def __int__(self):
        return int(self._v)

    def to_decimal(self, digits: int | None = None) -> str:
        """Decimal string with ``digits`` significant digits.

        The default digit count is large enough that parsing the string at
        the same precision returns exactly this value. Trailing zeros are
        dropped, so exact integers print as integers.
        """
        v = self._v
        if gmpy2.is_infinite(v):
            return "inf" if v > 0 else "-inf"
        if gmpy2.is_zero(v):
            return "0"
        n = roundtrip_digits(self.precision_bits) if digits is None else int(digits)
        if n < 1:
            raise ValueError("digits must be positive")
        mant, exp10, _ = v.digits(10, n)
        neg = mant.startswith("-")
        mant = mant.lstrip("-").rstrip("0") or "0"
        point = exp10  # value = 0.mant * 10**exp10
        if -6 < point <= 21:
            if point <= 0:
                body = "0." + "0" * (-point) + mant
            elif point >= len(mant):
                body = mant + "0" * (point - len(mant))
            else:
                body = mant[:point] + "." + mant[point:]
        else:
            frac = mant[1:]
            body = mant[0] + ("." + frac if frac else "") + f"e{point - 1:+d}"
        return ("-" if neg else "") + body

    def __str__(self):
        return self.to_decimal()

    def __repr__(self):
        return f"Real('{self.to_decimal(20)}', {self.precision_bits})"

    def __format__(self, spec):
        if not spec:
            return str(self)
        return format(float(self), spec)


def roundtrip_digits(bits: int) -> int:
    """Significant decimal digits that round-trip a ``bits``-bit binary value."""
    return math.ceil(bits * math.log10(2)) + 1


def _as_real(x, bits: int | None = None) -> Real:
    if isinstance(x, Real):
        return x
    return Real(x, bits)


def exp(x: Real) -> Real:
    x = _as_real(x)
    return _wrap(_ctx(x.precision_bits).exp(x._v))


def log(x: Real) -> Real:
    x = _as_real(x)
    if x <= 0:
        raise DomainError(f"log of non-positive number {x!r}")
    return _wrap(_ctx(x.precision_bits).log(x._v))


def sqrt(x: Real) -> Real:
    x = _as_real(x)
    if x < 0:
        raise DomainError(f"sqrt of negative number {x!r}")
    return _wrap(_ctx(x.precision_bits).sqrt(x._v))


def pow_real(base: Real, exponent) -> Real:
    """``base ** exponent`` for a real exponent; negative bases need an integer exponent."""
    base = _as_real(base)
    e = exponent if isinstance(exponent, Real) else Real(exponent, base.precision_bits)
    bits = max(base.precision_bits, e.precision_bits)
    if base < 0 and not gmpy2.is_integer(e._v):
        raise DomainError("negative base with non-integer exponent")
    if base.is_zero() and e < 0:
        raise DivisionByZero("zero raised to a negative power")
    return _wrap(_ctx(bits).pow(base._v, e._v))


def root(x: Real, n: int) -> Real:
    """Correctly rounded ``n``-th root of a nonnegative Real."""
    x = _as_real(x)
    if x < 0:
        raise DomainError(f"root of negative number {x!r}")
    return _wrap(_ctx(x.precision_bits).rootn(x._v, n))


def fsum(values: Iterable[Real], bits: int | None = None) -> Real:
    """Correctly rounded sum of Reals (at the largest operand precision)."""
    vals = [_as_real(v, bits)._v for v in values]
    if not vals:
        return Real(0, bits or default_bits())
    prec = max(v.precision for v in vals) if bits is None else bits
    return _wrap(_ctx(prec).fsum(vals))


def _compare(a: Real, b: Real) -> int:
    a, b = _as_real(a), _as_real(b)
    return (a > b) - (a < b)


_ELEMENTARY = {
    "add": (2, lambda a, b: a + b),
    "sub": (2, lambda a, b: a - b),
    "mul": (2, lambda a, b: a * b),
    "div": (2, lambda a, b: a / b),
    "pow_real": (2, pow_real),
    "exp": (1, exp),
    "log": (1, log),
    "sqrt": (1, sqrt),
    "abs": (1, abs),
    "compare": (2, _compare),
}


def elementary(op_name: str, *args: Real):
    """Dispatch an elementary operation by name.

    ``compare`` returns an int in {-1, 0, 1}; every other operation returns
    a :class:`Real` at the largest argument precision.
    """
    try:
        arity, fn = _ELEMENTARY[op_name]
    except KeyError:
        raise ValueError(f"unknown elementary operation {op_name!r}") from None
    if len(args) != arity:
        raise TypeError(f"{op_name} takes {arity} argument(s), got {len(args)}")
    return fn(*(_as_real(a) for a in args))


@dataclass(frozen=True)
class PrecisionConfig:
    """Working precision plus the number of bits budgeted for roundoff."""

    working_bits: int
    guard_bits: int

    def __post_init__(self):
        if self.working_bits < 64:
            raise ValueError("working_bits must be >= 64")
        if not 0 < self.guard_bits < self.working_bits / 2:
            raise ValueError("guard_bits must satisfy 0 < guard_bits < working_bits / 2")

    @classmethod
    def for_bits(cls, bits: int | None = None) -> "PrecisionConfig":
        bits = default_bits() if bits is None else int(bits)
        return cls(bits, min(64, max(8, bits // 16)))

    def real(self, value: Number) -> Real:
        return Real(value, self.working_bits)

    def tolerance(self, scale) -> Real:
        """``scale * 2**(guard_bits - working_bits)``: the zero threshold."""
        return (abs(self.real(scale))).ldexp(self.guard_bits - self.working_bits)


def effectively_zero(v: Real, scale: Real, cfg: PrecisionConfig) -> bool:
    """True iff ``|v| <= scale * 2**(guard_bits - working_bits)``."""
    scale = _as_real(scale, cfg.working_bits)
    if not scale > 0:
        raise ValueError("scale must be positive")
    return abs(_as_real(v, cfg.working_bits)) <= cfg.tolerance(scale)
