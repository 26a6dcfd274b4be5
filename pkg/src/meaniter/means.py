"""Mean families on vectors of any arity, evaluated at arbitrary precision.

Closed-form families (arithmetic, geometric, power, Gini) are computed
directly; quasiarithmetic and Bajraktarevic means invert a monotone
function by safeguarded Newton, and quasideviation means solve
``sum_i E(x_i, u) = 0`` by bisection followed by Illinois regula falsi.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence, Union

from .errors import AxiomError, BracketError, DomainError
from .precision import PrecisionConfig, Real, exp, fsum, log, pow_real, root

__all__ = [
    "Interval",
    "REALS",
    "POSITIVE",
    "GeneratorFunction",
    "DeviationFunction",
    "Arithmetic",
    "Geometric",
    "Power",
    "Gini",
    "QuasiArithmetic",
    "Bajraktarevic",
    "Quasideviation",
    "Custom",
    "MeanSpec",
    "arithmetic",
    "geometric",
    "power",
    "gini",
    "quasiarithmetic",
    "bajraktarevic",
    "quasideviation",
    "custom",
    "eval_mean",
    "qa_invert",
    "qd_solve",
    "AxiomReport",
    "probe_mean_axioms",
]

INF = float("inf")
GRID_POINTS = 64
_VALIDATION_BITS = 64
# below this bracket width (relative) the deviation solver leaves bisection
_BISECTION_SWITCH = 64


def _param(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        raise TypeError("bool is not a numeric parameter")
    if isinstance(v, (int, float, str)):
        return Fraction(v)
    if isinstance(v, Real):
        return Fraction(v.mpfr.as_integer_ratio()[0], v.mpfr.as_integer_ratio()[1])
    raise TypeError(f"cannot use {type(v).__name__} as a mean parameter")


def _bound(v):
    if isinstance(v, float) and v in (INF, -INF):
        return v
    if isinstance(v, str) and v.strip().lower().lstrip("+-") in ("inf", "infinity"):
        return -INF if v.strip().startswith("-") else INF
    if v is None:
        raise TypeError("interval bounds must not be None")
    return _param(v)


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lo, hi)``; either end may be infinite."""

    lo: Union[Fraction, float] = -INF
    hi: Union[Fraction, float] = INF

    def __post_init__(self):
        object.__setattr__(self, "lo", _bound(self.lo))
        object.__setattr__(self, "hi", _bound(self.hi))
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def __contains__(self, x) -> bool:
        return self.lo < x < self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def sample_grid(self, n: int = GRID_POINTS, bits: int = _VALIDATION_BITS) -> list[Real]:
        """Deterministic increasing grid of ``n`` interior points."""
        lo, hi = self.lo, self.hi
        if lo != -INF and hi != INF:
            width = hi - lo
            return [Real(lo + width * Fraction(2 * k + 1, 2 * n), bits) for k in range(n)]
        offsets = [pow_real(Real(2, bits), Fraction(k - n // 2, 4)) for k in range(n)]
        if lo != -INF:
            return [Real(lo, bits) + o for o in offsets]
        if hi != INF:
            return [Real(hi, bits) - o for o in reversed(offsets)]
        half = n // 2
        pos = [pow_real(Real(2, bits), Fraction(k - half // 2, 4)) for k in range(half)]
        return [-o for o in reversed(pos)] + pos

    def to_json(self) -> list[str]:
        def fmt(b):
            if b in (INF, -INF):
                return "inf" if b > 0 else "-inf"
            return str(b)

        return [fmt(self.lo), fmt(self.hi)]


REALS = Interval(-INF, INF)
POSITIVE = Interval(0, INF)

RealFn = Callable[[Real], Real]
RealFn2 = Callable[[Real, Real], Real]


@dataclass(frozen=True)
class GeneratorFunction:
    """A function ``f`` together with ``f'`` and ``f''``.

    When ``strictly_monotone`` is set, monotonicity and a nonvanishing first
    derivative are spot-checked on a grid at construction. Callbacks must be
    pure; they receive Reals and should compute at the argument precision.
    """

    eval: RealFn
    d1: RealFn
    d2: RealFn
    domain: Interval = REALS
    strictly_monotone: bool = True
    name: str = "f"

    def __post_init__(self):
        if self.strictly_monotone:
            check_monotone(self, self.domain)

    def __call__(self, x: Real) -> Real:
        return self.eval(x)


def check_monotone(gen: GeneratorFunction, domain: Interval) -> int:
    """Spot-check strict monotonicity of ``gen`` on ``domain``; return its direction."""
    grid = domain.sample_grid()
    values = [gen.eval(t) for t in grid]
    signs = {(b > a) - (b < a) for a, b in zip(values, values[1:])}
    if len(signs) != 1 or 0 in signs:
        raise AxiomError(f"generator {gen.name!r} is not strictly monotone on {domain.to_json()}")
    for t in grid:
        if gen.d1(t).is_zero():
            raise AxiomError(f"generator {gen.name!r} has a vanishing first derivative at {t!r}")
    return signs.pop()


@dataclass(frozen=True)
class DeviationFunction:
    """A quasideviation ``E(x, u)`` with its first two ``x``-partials.

    Only ``d1 = dE/dx`` and ``d11 = d2E/dx2`` are stored; the residuum on
    the diagonal needs nothing else.
    """

    eval: RealFn2
    d1: RealFn2
    d11: RealFn2
    domain: Interval = REALS
    name: str = "E"

    def __post_init__(self):
        grid = self.domain.sample_grid()
        for x in grid:
            if not self.eval(x, x).is_zero():
                raise AxiomError(f"deviation {self.name!r}: E(x,x) != 0 at x={x!r}")
        coarse = grid[::4] + [grid[-1]]
        for x in coarse:
            for u in coarse:
                want = (x > u) - (x < u)
                if self.eval(x, u).sign() != want:
                    raise AxiomError(
                        f"deviation {self.name!r} violates the sign condition (D1) at x={x!r}, u={u!r}"
                    )

    def __call__(self, x: Real, u: Real) -> Real:
        return self.eval(x, u)


# -- families -----------------------------------------------------------


@dataclass(frozen=True)
class Arithmetic:
    pass


@dataclass(frozen=True)
class Geometric:
    pass


@dataclass(frozen=True)
class Power:
    alpha: Fraction

    def __post_init__(self):
        object.__setattr__(self, "alpha", _param(self.alpha))


@dataclass(frozen=True)
class Gini:
    """Gini mean; ``Gini(a, 0)`` is the power mean of order ``a``.

    For ``a != b`` the ratio-of-power-sums form is used even when ``a - b``
    is tiny, where it is badly conditioned; pass ``a == b`` exactly to get
    the logarithmic branch.
    """

    alpha: Fraction
    beta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "alpha", _param(self.alpha))
        object.__setattr__(self, "beta", _param(self.beta))


@dataclass(frozen=True)
class QuasiArithmetic:
    f: GeneratorFunction


@dataclass(frozen=True)
class Bajraktarevic:
    f: GeneratorFunction
    g: GeneratorFunction


@dataclass(frozen=True)
class Quasideviation:
    E: DeviationFunction


@dataclass(frozen=True)
class Custom:
    """User-supplied mean; ``residuum`` (optional) gives its analytic residuum."""

    fn: Callable[[Sequence[Real]], Real]
    name: str = "custom"
    residuum: Callable[[Real], Real] | None = None


Family = Union[Arithmetic, Geometric, Power, Gini, QuasiArithmetic, Bajraktarevic, Quasideviation, Custom]


def _natural_domain(family) -> Interval:
    if isinstance(family, (Geometric, Power, Gini)):
        return POSITIVE
    if isinstance(family, QuasiArithmetic):
        return family.f.domain
    if isinstance(family, Bajraktarevic):
        return family.f.domain.intersect(family.g.domain)
    if isinstance(family, Quasideviation):
        return family.E.domain
    return REALS


@dataclass(frozen=True)
class MeanSpec:
    """A mean family together with the open interval it acts on."""

    family: Family
    domain: Interval | None = None

    def __post_init__(self):
        fam = self.family
        natural = _natural_domain(fam)
        dom = natural if self.domain is None else self.domain
        object.__setattr__(self, "domain", dom)
        if not natural.contains_interval(dom):
            raise DomainError(f"domain {dom.to_json()} exceeds the natural domain {natural.to_json()}")
        if isinstance(fam, QuasiArithmetic):
            check_monotone(fam.f, dom)
        elif isinstance(fam, Bajraktarevic):
            _check_bajraktarevic(fam.f, fam.g, dom)

    @property
    def name(self) -> str:
        fam = self.family
        if isinstance(fam, Power):
            return f"power({fam.alpha})"
        if isinstance(fam, Gini):
            return f"gini({fam.alpha},{fam.beta})"
        if isinstance(fam, QuasiArithmetic):
            return f"quasiarithmetic({fam.f.name})"
        if isinstance(fam, Bajraktarevic):
            return f"bajraktarevic({fam.f.name},{fam.g.name})"
        if isinstance(fam, Quasideviation):
            return f"quasideviation({fam.E.name})"
        if isinstance(fam, Custom):
            return fam.name
        return type(fam).__name__.lower()

    def __call__(self, x: Sequence, cfg: PrecisionConfig | None = None) -> Real:
        return eval_mean(self, x, cfg)


def _check_bajraktarevic(f: GeneratorFunction, g: GeneratorFunction, domain: Interval) -> None:
    grid = domain.sample_grid()
    ratios = []
    for t in grid:
        gt = g.eval(t)
        if not gt > 0:
            raise AxiomError(f"Bajraktarevic weight {g.name!r} is not positive at {t!r}")
        ratios.append(f.eval(t) / gt)
    if any(not b > a for a, b in zip(ratios, ratios[1:])):
        raise AxiomError(f"ratio {f.name}/{g.name} is not strictly increasing on {domain.to_json()}")


def arithmetic(domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Arithmetic(), domain)


def geometric(domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Geometric(), domain)


def power(alpha, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Power(alpha), domain)


def gini(alpha, beta, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Gini(alpha, beta), domain)


def quasiarithmetic(f: GeneratorFunction, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(QuasiArithmetic(f), domain)


def bajraktarevic(f: GeneratorFunction, g: GeneratorFunction, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Bajraktarevic(f, g), domain)


def quasideviation(E: DeviationFunction, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Quasideviation(E), domain)


def custom(fn, name: str = "custom", residuum=None, domain: Interval | None = None) -> MeanSpec:
    return MeanSpec(Custom(fn, name, residuum), domain)


# -- evaluation ---------------------------------------------------------


def _prepare(x: Sequence, cfg: PrecisionConfig | None) -> tuple[list[Real], PrecisionConfig]:
    if len(x) == 0:
        raise ValueError("a mean needs at least one argument")
    if cfg is None:
        bits = max((v.precision_bits for v in x if isinstance(v, Real)), default=None)
        cfg = PrecisionConfig.for_bits(bits)
    return [Real(v, cfg.working_bits) for v in x], cfg


def _xpow(x: Real, a: Fraction, cache: dict) -> Real:
    if a.denominator == 1:
        return x ** int(a)
    e = cache.get(a)
    if e is None:
        e = cache[a] = Real(a, x.precision_bits)
    return pow_real(x, e)


def _geometric(xs: list[Real]) -> Real:
    prod = xs[0]
    for v in xs[1:]:
        prod = prod * v
    return root(prod, len(xs))


def _power_mean(xs: list[Real], a: Fraction) -> Real:
    if a == 0:
        return _geometric(xs)
    cache: dict = {}
    s = fsum(_xpow(v, a, cache) for v in xs) / len(xs)
    if a == 1:
        return s
    return _xpow(s, 1 / a, cache)


def _gini(xs: list[Real], a: Fraction, b: Fraction) -> Real:
    if b == 0:
        return _power_mean(xs, a)
    if a == 0:
        return _power_mean(xs, b)
    cache: dict = {}
    if a == b:
        pa = [_xpow(v, a, cache) for v in xs]
        num = fsum(p * log(v) for p, v in zip(pa, xs))
        return exp(num / fsum(pa))
    num = fsum(_xpow(v, a, cache) for v in xs)
    den = fsum(_xpow(v, b, cache) for v in xs)
    return _xpow(num / den, 1 / (a - b), cache)


def eval_mean(spec: MeanSpec, x: Sequence, cfg: PrecisionConfig | None = None) -> Real:
    """Evaluate ``spec`` on the vector ``x``.

    Args:
        spec: mean to evaluate.
        x: nonempty sequence of Reals (or decimal strings / ints) inside
            ``spec.domain``.
        cfg: working precision; defaults to the largest input precision.

    Returns:
        The mean as a Real at ``cfg.working_bits``.

    Raises:
        DomainError: an entry lies outside the domain.
        BracketError: an implicit mean could not be bracketed, which means
            the generator is not monotone or the deviation breaks (D1).
    """
    xs, cfg = _prepare(x, cfg)
    for v in xs:
        if v not in spec.domain:
            raise DomainError(f"{v!r} is outside the domain {spec.domain.to_json()} of {spec.name}")
    fam = spec.family
    if isinstance(fam, Custom):
        return Real(fam.fn(xs), cfg.working_bits)
    lo, hi = min(xs), max(xs)
    if lo == hi:
        return xs[0]
    if isinstance(fam, Arithmetic):
        value = fsum(xs) / len(xs)
    elif isinstance(fam, Geometric):
        value = _geometric(xs)
    elif isinstance(fam, Power):
        value = _power_mean(xs, fam.alpha)
    elif isinstance(fam, Gini):
        value = _gini(xs, fam.alpha, fam.beta)
    elif isinstance(fam, QuasiArithmetic):
        target = fsum(fam.f.eval(v) for v in xs) / len(xs)
        value = qa_invert(fam.f, target, (lo, hi), cfg)
    elif isinstance(fam, Bajraktarevic):
        f, g = fam.f, fam.g
        target = fsum(f.eval(v) for v in xs) / fsum(g.eval(v) for v in xs)

        def h(u):
            return f.eval(u) / g.eval(u) - target

        def dh(u):
            gu = g.eval(u)
            return (f.d1(u) * gu - f.eval(u) * g.d1(u)) / (gu * gu)

        value = _newton_bisect(h, dh, lo, hi, cfg, f"ratio {f.name}/{g.name}")
    elif isinstance(fam, Quasideviation):
        value = qd_solve(fam.E, xs, cfg)
    else:
        raise TypeError(f"unknown mean family {fam!r}")
    # roundoff may leave a closed form one ulp outside [min, max]
    return min(max(value, lo), hi)


def _newton_bisect(fn, dfn, a: Real, b: Real, cfg: PrecisionConfig, what: str) -> Real:
    """Root of ``fn`` in ``[a, b]`` by Newton steps safeguarded with bisection."""
    fa, fb = fn(a), fn(b)
    if fa.is_zero():
        return a
    if fb.is_zero():
        return b
    if fa.sign() == fb.sign():
        raise BracketError(f"no sign change of {what} on [{a!r}, {b!r}]; generator not monotone?")
    xl, xh = (a, b) if fa < 0 else (b, a)
    scale = max(abs(a), abs(b))
    tol = scale.ldexp(2 - cfg.working_bits) if not scale.is_zero() else Real(0, cfg.working_bits)
    u = (a + b).ldexp(-1)
    dxold = dx = abs(b - a)
    f, df = fn(u), dfn(u)
    for _ in range(4 * cfg.working_bits + 64):
        if f.is_zero():
            return u
        if ((u - xh) * df - f) * ((u - xl) * df - f) > 0 or abs(f.ldexp(1)) > abs(dxold * df):
            dxold, dx = dx, (xh - xl).ldexp(-1)
            new = xl + dx
            if new == xl or new == xh:
                return new
        else:
            dxold, dx = dx, f / df
            new = u - dx
            if new == u:
                return u
        u = new
        if abs(dx) <= tol:
            return u
        f, df = fn(u), dfn(u)
        if f < 0:
            xl = u
        else:
            xh = u
    return u


def qa_invert(gen: GeneratorFunction, y, bracket, cfg: PrecisionConfig | None = None) -> Real:
    """Solve ``gen(u) = y`` for ``u`` inside ``bracket``.

    >>> from meaniter.catalog import generator
    >>> qa_invert(generator("x^2"), 4, (1, 3)).to_decimal(10)
    '2'
    """
    lo, hi = bracket
    if cfg is None:
        bits = max((v.precision_bits for v in (y, lo, hi) if isinstance(v, Real)), default=None)
        cfg = PrecisionConfig.for_bits(bits)
    lo, hi, y = cfg.real(lo), cfg.real(hi), cfg.real(y)
    if not lo <= hi:
        raise ValueError("bracket must satisfy lo <= hi")
    return _newton_bisect(lambda u: gen.eval(u) - y, gen.d1, lo, hi, cfg, f"generator {gen.name}")


def qd_solve(E: DeviationFunction, x: Sequence, cfg: PrecisionConfig | None = None) -> Real:
    """The unique ``u`` with ``sum_i E(x_i, u) = 0``.

    Bisection on ``[min x, max x]`` until the bracket is 2**-64 of the scale,
    then Illinois regula falsi to full precision. The endpoint signs are
    forced by the sign condition, so a wrong sign pattern raises
    :class:`BracketError`.
    """
    xs, cfg = _prepare(x, cfg)
    lo, hi = min(xs), max(xs)
    if lo == hi:
        return lo

    def phi(u):
        return fsum(E.eval(v, u) for v in xs)

    flo, fhi = phi(lo), phi(hi)
    if not (flo > 0 and fhi < 0):
        raise BracketError(
            f"deviation {E.name!r}: sum E(x_i, u) has signs ({flo.sign()}, {fhi.sign()}) at "
            "(min x, max x); expected (+, -) by the sign condition (D1)"
        )
    scale = max(abs(lo), abs(hi))
    switch = scale.ldexp(-_BISECTION_SWITCH)
    tol = scale.ldexp(3 - cfg.working_bits)

    while hi - lo > switch:
        mid = (lo + hi).ldexp(-1)
        fm = phi(mid)
        if fm.is_zero():
            return mid
        if fm > 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm

    side = 0
    stalls = 0
    while hi - lo > tol:
        width = hi - lo
        c = hi - fhi * width / (fhi - flo)
        if not lo < c < hi or stalls >= 3:
            c = (lo + hi).ldexp(-1)
            stalls = 0
        fc = phi(c)
        if fc.is_zero():
            return c
        if fc > 0:
            lo, flo = c, fc
            if side == 1:
                fhi = fhi.ldexp(-1)
            side = 1
        else:
            hi, fhi = c, fc
            if side == -1:
                flo = flo.ldexp(-1)
            side = -1
        stalls = stalls + 1 if (hi - lo) > width.ldexp(-1) else 0
    return (lo + hi).ldexp(-1)


# -- axiom probing ------------------------------------------------------


@dataclass
class AxiomReport:
    """Outcome of :func:`probe_mean_axioms`; ``violations`` holds messages."""

    checked: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _permutations(n: int, rng: random.Random) -> list[tuple[int, ...]]:
    if n <= 4:
        return list(itertools.permutations(range(n)))[1:]
    perms = [tuple(reversed(range(n))), tuple(range(1, n)) + (0,)]
    for _ in range(4):
        p = list(range(n))
        rng.shuffle(p)
        perms.append(tuple(p))
    return perms


def probe_mean_axioms(mean, samples: Sequence[Sequence], cfg: PrecisionConfig | None = None, seed: int = 0) -> AxiomReport:
    """Fuzz the mean property, symmetry and repetition invariance.

    ``mean`` may be a :class:`MeanSpec` or any callable taking a list of
    Reals. Violations are collected into the report, never raised.
    """
    cfg = cfg or PrecisionConfig.for_bits()
    rng = random.Random(seed)
    if isinstance(mean, MeanSpec):
        def call(v):
            return eval_mean(mean, v, cfg)
    else:
        def call(v):
            return cfg.real(mean(v))
    report = AxiomReport()
    for x in samples:
        xs = [cfg.real(v) for v in x]
        report.checked += 1
        scale = max(abs(v) for v in xs) or cfg.real(1)
        tol = cfg.tolerance(scale if not scale.is_zero() else 1)
        m = call(xs)
        if not min(xs) <= m <= max(xs):
            report.violations.append(f"mean property: M{_fmt(xs)} = {m!r} outside [min, max]")
        for perm in _permutations(len(xs), rng):
            mp = call([xs[i] for i in perm])
            if abs(mp - m) > tol:
                report.violations.append(f"symmetry: M{_fmt(xs)} != M under permutation {perm}")
                break
        for q in (2, 3):
            mq = call([v for v in xs for _ in range(q)])
            if abs(mq - m) > tol:
                report.violations.append(f"repetition invariance (q={q}) fails at {_fmt(xs)}")
    return report


def _fmt(xs) -> str:
    return "(" + ", ".join(v.to_decimal(8) for v in xs) + ")"
