"""Named generators and deviations, and the JSON form of mean specifications.

Generator names::

    x            identity
    1            constant one (weights only)
    log, exp
    xlogx        x*log(x)
    x^a          power, ``power:a`` is a synonym; ``x^0`` is the constant one
    x^a*log      x^a * log(x)

A linear combination is written as ``{"combination": [[c, gen], ...],
"constant": c0}``.

Deviation names::

    difference                 x - u
    log_ratio                  log x - log u
    quasiarithmetic:F          f(x) - f(u), sign-adjusted for decreasing f
    bajraktarevic:F,G          g(u) f(x) - f(u) g(x)

Mean documents look like ``{"family": "gini", "alpha": 2, "beta": 1}``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Any, Mapping

from .errors import AxiomError, ConfigError
from .means import (
    POSITIVE,
    REALS,
    DeviationFunction,
    GeneratorFunction,
    Interval,
    MeanSpec,
    Arithmetic,
    Bajraktarevic,
    Geometric,
    Gini,
    Power,
    QuasiArithmetic,
    Quasideviation,
    check_monotone,
)
from .precision import Real, exp, log, pow_real

__all__ = [
    "generator",
    "deviation",
    "mean_from_json",
    "mean_to_json",
    "CATALOG_DEVIATIONS",
]

# one representative per deviation entry, used to enumerate "all catalog deviations"
CATALOG_DEVIATIONS = (
    "difference",
    "log_ratio",
    "quasiarithmetic:exp",
    "quasiarithmetic:x^-1",
    "bajraktarevic:x^2,x",
    "bajraktarevic:x^3,x^0.5",
)

_POWER_RE = re.compile(r"^(?:x\^|power:)\s*([+-]?\d+(?:\.\d*)?(?:/\d+)?)\s*$")
_POWER_LOG_RE = re.compile(r"^x\^\s*([+-]?\d+(?:\.\d*)?(?:/\d+)?)\s*\*\s*log$")


def _c(v: Real, a: Fraction) -> Real:
    return Real(a, v.precision_bits)


def _xpow(x: Real, a: Fraction) -> Real:
    if a.denominator == 1:
        return x ** int(a)
    return pow_real(x, _c(x, a))


def _power(a: Fraction, name: str) -> GeneratorFunction:
    if a == 0:
        return _one()
    return GeneratorFunction(
        eval=lambda x: _xpow(x, a),
        d1=lambda x: _c(x, a) * _xpow(x, a - 1),
        d2=lambda x: _c(x, a * (a - 1)) * _xpow(x, a - 2),
        domain=POSITIVE,
        name=name,
    )


def _power_log(a: Fraction, name: str) -> GeneratorFunction:
    def f(x):
        return _xpow(x, a) * log(x)

    def d1(x):
        return _xpow(x, a - 1) * (_c(x, a) * log(x) + 1)

    def d2(x):
        return _xpow(x, a - 2) * (_c(x, a * (a - 1)) * log(x) + _c(x, 2 * a - 1))

    # x^a log x is monotone on (0, inf) only for a == 0
    return GeneratorFunction(f, d1, d2, POSITIVE, strictly_monotone=(a == 0), name=name)


def _one() -> GeneratorFunction:
    return GeneratorFunction(
        eval=lambda x: Real(1, x.precision_bits),
        d1=lambda x: Real(0, x.precision_bits),
        d2=lambda x: Real(0, x.precision_bits),
        domain=REALS,
        strictly_monotone=False,
        name="1",
    )


def _identity() -> GeneratorFunction:
    return GeneratorFunction(
        eval=lambda x: x,
        d1=lambda x: Real(1, x.precision_bits),
        d2=lambda x: Real(0, x.precision_bits),
        name="x",
    )


def _named_generator(name: str) -> GeneratorFunction:
    key = name.strip().replace(" ", "")
    if key in ("x", "id", "identity"):
        return _identity()
    if key in ("1", "one"):
        return _one()
    if key == "log":
        return GeneratorFunction(log, lambda x: 1 / x, lambda x: -1 / (x * x), POSITIVE, name="log")
    if key == "exp":
        return GeneratorFunction(exp, exp, exp, REALS, name="exp")
    if key == "xlogx":
        return _power_log(Fraction(1), "xlogx")
    m = _POWER_RE.match(key)
    if m:
        return _power(Fraction(m.group(1)), f"x^{m.group(1)}")
    m = _POWER_LOG_RE.match(key)
    if m:
        return _power_log(Fraction(m.group(1)), f"x^{m.group(1)}*log")
    raise ConfigError(f"unknown generator {name!r}")


def _combination(doc: Mapping[str, Any]) -> GeneratorFunction:
    terms = doc.get("combination")
    if not isinstance(terms, list) or not terms:
        raise ConfigError("'combination' must be a nonempty list of [coefficient, generator] pairs")
    parts = []
    for term in terms:
        if not (isinstance(term, (list, tuple)) and len(term) == 2):
            raise ConfigError(f"bad combination term {term!r}")
        parts.append((_fraction(term[0], "coefficient"), generator(term[1], validate=False)))
    const = _fraction(doc.get("constant", 0), "constant")
    domain = parts[0][1].domain
    for _, g in parts[1:]:
        domain = domain.intersect(g.domain)

    def lin(attr, with_const):
        def fn(x):
            acc = Real(const if with_const else 0, x.precision_bits)
            for c, g in parts:
                acc = acc + _c(x, c) * getattr(g, attr)(x)
            return acc

        return fn

    name = " + ".join(f"{c}*{g.name}" for c, g in parts) + (f" + {const}" if const else "")
    return GeneratorFunction(
        lin("eval", True),
        lin("d1", False),
        lin("d2", False),
        domain,
        strictly_monotone=bool(doc.get("monotone", False)),
        name=name,
    )


def _relax(gen: GeneratorFunction) -> GeneratorFunction:
    if not gen.strictly_monotone:
        return gen
    return GeneratorFunction(gen.eval, gen.d1, gen.d2, gen.domain, strictly_monotone=False, name=gen.name)


def generator(doc, validate: bool = True) -> GeneratorFunction:
    """Build a generator from a catalog name or a combination document.

    With ``validate=False`` the monotonicity check is skipped; the mean that
    uses the generator still checks it on its own domain.
    """
    if isinstance(doc, GeneratorFunction):
        return doc
    if isinstance(doc, str):
        gen = _named_generator(doc)
    elif isinstance(doc, Mapping):
        gen = _combination(doc)
    else:
        raise ConfigError(f"generator must be a name or an object, got {doc!r}")
    return gen if validate else _relax(gen)


def _fraction(v, what: str) -> Fraction:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"{what} must be a number or decimal string, got {v!r}")
    try:
        return Fraction(v)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{what}: cannot parse {v!r}") from None


def deviation(name: str) -> DeviationFunction:
    """Deviation function from the catalog, e.g. ``"bajraktarevic:x^2,x"``."""
    if not isinstance(name, str):
        raise ConfigError(f"deviation must be a catalog name, got {name!r}")
    key = name.strip().replace(" ", "")
    if key == "difference":
        one = lambda x, u: Real(1, x.precision_bits)  # noqa: E731
        return DeviationFunction(
            lambda x, u: x - u, one, lambda x, u: Real(0, x.precision_bits), REALS, name=key
        )
    if key == "log_ratio":
        return DeviationFunction(
            lambda x, u: log(x) - log(u), lambda x, u: 1 / x, lambda x, u: -1 / (x * x), POSITIVE, name=key
        )
    kind, _, args = key.partition(":")
    if kind == "quasiarithmetic" and args:
        f = generator(args, validate=False)
        s = check_monotone(f, f.domain)
        return DeviationFunction(
            lambda x, u: s * (f.eval(x) - f.eval(u)),
            lambda x, u: s * f.d1(x),
            lambda x, u: s * f.d2(x),
            f.domain,
            name=key,
        )
    if kind == "bajraktarevic" and args.count(",") == 1:
        fname, gname = args.split(",")
        f, g = generator(fname, validate=False), generator(gname, validate=False)
        return DeviationFunction(
            lambda x, u: g.eval(u) * f.eval(x) - f.eval(u) * g.eval(x),
            lambda x, u: g.eval(u) * f.d1(x) - f.eval(u) * g.d1(x),
            lambda x, u: g.eval(u) * f.d2(x) - f.eval(u) * g.d2(x),
            f.domain.intersect(g.domain),
            name=key,
        )
    raise ConfigError(f"unknown deviation {name!r}")


def _interval(doc) -> Interval | None:
    if doc is None:
        return None
    if not (isinstance(doc, list) and len(doc) == 2):
        raise ConfigError(f"domain must be a [lo, hi] pair, got {doc!r}")
    try:
        return Interval(*doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad domain {doc!r}: {exc}") from None


def mean_from_json(doc: Mapping[str, Any]) -> MeanSpec:
    """Parse a mean document such as ``{"family": "power", "alpha": 0}``."""
    if not isinstance(doc, Mapping):
        raise ConfigError(f"mean specification must be an object, got {doc!r}")
    family = str(doc.get("family", "")).lower()
    domain = _interval(doc.get("domain"))

    def need(key):
        if key not in doc:
            raise ConfigError(f"family {family!r} needs {key!r}")
        return doc[key]

    try:
        if family == "arithmetic":
            return MeanSpec(Arithmetic(), domain)
        if family == "geometric":
            return MeanSpec(Geometric(), domain)
        if family == "power":
            return MeanSpec(Power(_fraction(need("alpha"), "alpha")), domain)
        if family == "gini":
            return MeanSpec(Gini(_fraction(need("alpha"), "alpha"), _fraction(need("beta"), "beta")), domain)
        if family in ("quasiarithmetic", "qa"):
            return MeanSpec(QuasiArithmetic(generator(need("generator"), validate=False)), domain)
        if family == "bajraktarevic":
            f = generator(need("f"), validate=False)
            g = generator(need("g"), validate=False)
            return MeanSpec(Bajraktarevic(f, g), domain)
        if family == "quasideviation":
            return MeanSpec(Quasideviation(deviation(need("deviation"))), domain)
    except AxiomError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown mean family {doc.get('family')!r}")


def mean_to_json(spec: MeanSpec) -> dict:
    """Inverse of :func:`mean_from_json` for the closed-form families."""
    fam = spec.family
    if isinstance(fam, Arithmetic):
        out = {"family": "arithmetic"}
    elif isinstance(fam, Geometric):
        out = {"family": "geometric"}
    elif isinstance(fam, Power):
        out = {"family": "power", "alpha": str(fam.alpha)}
    elif isinstance(fam, Gini):
        out = {"family": "gini", "alpha": str(fam.alpha), "beta": str(fam.beta)}
    else:
        out = {"family": spec.name}
    out["domain"] = spec.domain.to_json()
    return out
