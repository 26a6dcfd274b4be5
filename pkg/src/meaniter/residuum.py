"""Residuum of a symmetric mean: analytic formulas and numerical estimators.

The residuum ``xi`` is the coefficient in

    M(x*1 + t*s) = x + t*E[s] + t**2/2 * xi(x) * Var(s) + o(t**2).

Three routes are provided: closed forms per family, a one-sided limit along
``s = (1, 0, ..., 0)`` accelerated by Richardson extrapolation, and central
finite differences of the second partials on the diagonal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import DomainError, ExtrapolationError, ResiduumError
from .means import (
    Arithmetic,
    Bajraktarevic,
    Custom,
    DeviationFunction,
    GeneratorFunction,
    Geometric,
    Gini,
    MeanSpec,
    Power,
    QuasiArithmetic,
    Quasideviation,
    eval_mean,
)
from .precision import PrecisionConfig, Real, effectively_zero, exp, fsum, log

__all__ = [
    "ResiduumEstimate",
    "ResidualityReport",
    "PIndependenceReport",
    "DiagonalIdentityReport",
    "residuum_analytic",
    "residuum_limit",
    "directional_residuum",
    "residuum_hessian",
    "residuality_probe",
    "p_independence_check",
    "bajraktarevic_invariants",
    "diagonal_identities",
    "probe_directions",
    "default_radii",
]

METHODS = ("analytic", "limit_extrapolation", "hessian_fd")
LIMIT_LEVELS = 13
AGREEMENT_FACTOR = 10


@dataclass(frozen=True)
class ResiduumEstimate:
    value: Real
    uncertainty: Real
    method: str
    p_used: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.uncertainty < 0:
            raise ValueError("uncertainty must be nonnegative")

    def agrees_with(self, other: "ResiduumEstimate", factor: int = AGREEMENT_FACTOR) -> bool:
        return abs(self.value - other.value) <= factor * (self.uncertainty + other.uncertainty)

    def to_json(self, digits: int | None = None) -> dict:
        return {
            "value": self.value.to_decimal(digits),
            "uncertainty": self.uncertainty.to_decimal(digits),
            "method": self.method,
            "p": self.p_used,
        }


def _cfg(cfg: PrecisionConfig | None) -> PrecisionConfig:
    return cfg if cfg is not None else PrecisionConfig.for_bits()


def _check_p(p: int) -> int:
    if not isinstance(p, int) or p < 2:
        raise ValueError(f"the residuum needs arity p >= 2, got {p!r}")
    return p


def _roundoff(value: Real, cfg: PrecisionConfig) -> Real:
    return abs(value).ldexp(4 - cfg.working_bits)


# -- analytic -------------------------------------------------------------


def bajraktarevic_invariants(f: GeneratorFunction, g: GeneratorFunction, x, cfg: PrecisionConfig | None = None) -> tuple[Real, Real]:
    """The pair ``(Phi, Psi)`` attached to a Bajraktarevic mean at ``x``.

    ``Phi = (g f'' - f g'') / (g f' - f g')`` is the residuum of the mean;
    ``Psi = (g' f'' - f' g'') / (g f' - f g')``.
    """
    cfg = _cfg(cfg)
    x = cfg.real(x)
    fv, f1, f2 = f.eval(x), f.d1(x), f.d2(x)
    gv, g1, g2 = g.eval(x), g.d1(x), g.d2(x)
    a, b = gv * f1, fv * g1
    den = a - b
    scale = abs(a) + abs(b)
    if den.is_zero() or effectively_zero(den, scale, cfg):
        raise ResiduumError(f"g f' - f g' vanishes at x={x!r} for f={f.name}, g={g.name}")
    return (gv * f2 - fv * g2) / den, (g1 * f2 - f1 * g2) / den


def residuum_analytic(spec: MeanSpec, x, cfg: PrecisionConfig | None = None, p: int = 2) -> ResiduumEstimate:
    """Closed-form residuum of ``spec`` at ``x``.

    Quasiarithmetic ``f''/f'``, Bajraktarevic ``Phi``, Gini ``(a+b-1)/x``,
    quasideviation ``d11 E / d1 E`` on the diagonal. The value does not
    depend on ``p``; it is only recorded.
    """
    cfg = _cfg(cfg)
    x = cfg.real(x)
    if x not in spec.domain:
        raise DomainError(f"{x!r} is outside the domain of {spec.name}")
    fam = spec.family
    if isinstance(fam, Arithmetic):
        value = cfg.real(0)
    elif isinstance(fam, Geometric):
        value = -1 / x
    elif isinstance(fam, Power):
        value = cfg.real(fam.alpha - 1) / x
    elif isinstance(fam, Gini):
        value = cfg.real(fam.alpha + fam.beta - 1) / x
    elif isinstance(fam, QuasiArithmetic):
        d1 = fam.f.d1(x)
        if d1.is_zero():
            raise ResiduumError(f"f' vanishes at x={x!r} for generator {fam.f.name}")
        value = fam.f.d2(x) / d1
    elif isinstance(fam, Bajraktarevic):
        value, _ = bajraktarevic_invariants(fam.f, fam.g, x, cfg)
    elif isinstance(fam, Quasideviation):
        d1 = fam.E.d1(x, x)
        if d1.is_zero():
            raise ResiduumError(f"dE/dx vanishes on the diagonal at x={x!r}; {fam.E.name} is not normalizable")
        value = fam.E.d11(x, x) / d1
    elif isinstance(fam, Custom):
        if fam.residuum is None:
            raise ResiduumError(f"no analytic residuum for {fam.name}")
        value = cfg.real(fam.residuum(x))
    else:
        raise TypeError(f"unknown family {fam!r}")
    return ResiduumEstimate(value, _roundoff(value, cfg), "analytic", p)


# -- limit extrapolation --------------------------------------------------


def _variance(s: Sequence[Real]) -> Real:
    n = len(s)
    mean = fsum(s) / n
    return fsum((v - mean) * (v - mean) for v in s) / n


def _fit_in_domain(spec: MeanSpec, x: Real, t: Real, spread: int = 1) -> Real:
    for _ in range(256):
        if (x - spread * t) in spec.domain and (x + spread * t) in spec.domain:
            return t
        t = t.ldexp(-1)
    raise DomainError(f"{x!r} has no room for perturbation inside {spec.domain.to_json()}")


def _richardson(values: list[Real]) -> tuple[Real, Real]:
    """Extrapolate a sequence with even-power error terms at halving steps.

    Returns the diagonal entry with the smallest correction and that
    correction.
    """
    prev_row: list[Real] = []
    best = None
    prev_diag = None
    for k, v in enumerate(values):
        row = [v]
        for j in range(1, k + 1):
            factor = 4**j
            row.append((factor * row[j - 1] - prev_row[j - 1]) / (factor - 1))
        diag = row[-1]
        if prev_diag is not None:
            corr = abs(diag - prev_diag)
            if best is None or corr <= best[1]:
                best = (diag, corr)
        prev_diag, prev_row = diag, row
    if best is None:
        raise ValueError("need at least two values to extrapolate")
    return best


def directional_residuum(
    spec: MeanSpec,
    x,
    s: Sequence,
    cfg: PrecisionConfig | None = None,
    t0=None,
    levels: int = LIMIT_LEVELS,
) -> ResiduumEstimate:
    """Estimate ``xi(x)`` from ``2 (M(x1 + t s) - x - t E[s]) / (t**2 Var s)`` as ``t -> 0``.

    The quotient is averaged over ``+t`` and ``-t`` so that only even powers
    of ``t`` remain, then Richardson-extrapolated over ``t_k = t0 / 2**k``.
    """
    cfg = _cfg(cfg)
    x = cfg.real(x)
    s = [cfg.real(v) for v in s]
    p = _check_p(len(s))
    var_s = _variance(s)
    if var_s.is_zero():
        raise ValueError("direction s must be nonconstant")
    es = fsum(s) / p
    smax = max(abs(v) for v in s)
    if t0 is None:
        t0 = cfg.real(Fraction(1, 100)) * max(cfg.real(1), abs(x)) / smax
    t0 = _fit_in_domain(spec, x, cfg.real(t0) * smax) / smax

    def raw(t: Real) -> Real:
        m = eval_mean(spec, [x + t * v for v in s], cfg)
        return (m - x - t * es).ldexp(1) / (t * t * var_s)

    steps = [t0.ldexp(-k) for k in range(levels)]
    table = [(raw(t) + raw(-t)).ldexp(-1) for t in steps]
    value, correction = _richardson(table)
    # each mean evaluation is good to the guard tolerance; the quotient divides by t**2 Var s
    t_min = steps[-1]
    noise = cfg.tolerance(abs(x) + t0 * smax).ldexp(3) / (t_min * t_min * var_s)
    # a non-C2 mean makes the corrections grow like 1/t, far beyond this
    threshold = max(noise, max(cfg.real(1), abs(value)).ldexp(-cfg.working_bits // 8))
    if correction > threshold:
        raise ExtrapolationError(
            f"extrapolation for {spec.name} at x={x!r} did not converge (last correction "
            f"{correction.to_decimal(6)}); the mean is probably not C^2 near the diagonal"
        )
    return ResiduumEstimate(value, max(correction, noise), "limit_extrapolation", p)


def residuum_limit(spec: MeanSpec, p: int, x, cfg: PrecisionConfig | None = None, t0=None, levels: int = LIMIT_LEVELS) -> ResiduumEstimate:
    """Residuum from perturbing one coordinate: ``M(x+t, x, ..., x)``.

    ``t0`` defaults to ``0.01 * max(1, |x|)`` and is halved until
    ``x +- t0`` lies in the domain.
    """
    _check_p(p)
    return directional_residuum(spec, x, [1] + [0] * (p - 1), cfg, t0, levels)


# -- finite-difference Hessian ----------------------------------------------


def residuum_hessian(spec: MeanSpec, p: int, x, cfg: PrecisionConfig | None = None, h=None) -> tuple[ResiduumEstimate, ResiduumEstimate]:
    """Residuum from the diagonal Hessian, in both forms.

    Returns ``(-p**2 * d1d2 M, p**2/(p-1) * d1d1 M)``, each from central
    differences with step ``h`` (default ``2**(-bits/4) * max(1, |x|)``);
    the uncertainty combines a step-doubling truncation estimate with a
    roundoff bound.

    Raises:
        ResiduumError: the two forms disagree beyond ten times their
            combined uncertainty.
    """
    cfg = _cfg(cfg)
    p = _check_p(p)
    x = cfg.real(x)
    if h is None:
        h = max(cfg.real(1), abs(x)).ldexp(-(cfg.working_bits // 4))
    h = _fit_in_domain(spec, x, cfg.real(h), spread=2)
    rest = [x] * (p - 2)

    def M(*head):
        return eval_mean(spec, list(head) + rest, cfg)

    def mixed(step):
        a, b = x + step, x - step
        return (M(a, a) - M(a, b) - M(b, a) + M(b, b)) / (4 * step * step)

    def pure(step):
        return (M(x + step, x) - x.ldexp(1) + M(x - step, x)) / (step * step)

    tol = cfg.tolerance(abs(x) + 2 * h)
    p2 = cfg.real(p * p)
    out = []
    for second, factor, n_evals in ((mixed, -p2, 4), (pure, p2 / (p - 1), 2)):
        fine, coarse = second(h), second(2 * h)
        value = factor * fine
        trunc = abs(factor * (fine - coarse)) / 3
        noise = abs(factor) * n_evals * tol.ldexp(2) / (h * h)
        # a C2 mean changes by O(h**2) under step doubling
        if trunc > max(noise, max(cfg.real(1), abs(value)).ldexp(-cfg.working_bits // 8)):
            raise ResiduumError(
                f"finite-difference Hessian of {spec.name} at x={x!r} does not settle under step "
                "doubling; the mean is probably not C^2 near the diagonal"
            )
        out.append(ResiduumEstimate(value, trunc + noise, "hessian_fd", p))
    a, b = out
    if not a.agrees_with(b):
        raise ResiduumError(
            f"mean not symmetric-C2 at x={x!r}: Hessian forms {a.value.to_decimal(12)} and "
            f"{b.value.to_decimal(12)} disagree"
        )
    return a, b


# -- residuality probe ------------------------------------------------------


@dataclass
class ResidualityReport:
    """Least-squares fit of ``log defect = log scale + exponent * log r``.

    For a mean whose second-order expansion is exact the defect vanishes,
    ``exact`` is set and the exponent is ``+inf``.
    """

    fitted_exponent: Real
    fitted_scale: Real
    radii_used: list[Real]
    directions_used: int
    defects: list[Real] = field(default_factory=list)
    exact: bool = False

    def to_json(self, digits: int | None = 17) -> dict:
        return {
            "fitted_exponent": self.fitted_exponent.to_decimal(digits),
            "fitted_scale": self.fitted_scale.to_decimal(digits),
            "radii": [r.to_decimal(digits) for r in self.radii_used],
            "defects": [d.to_decimal(digits) for d in self.defects],
            "directions_used": self.directions_used,
            "exact": self.exact,
        }


def probe_directions(p: int) -> list[tuple[int, ...]]:
    """Signed unit vectors and signed two-hot vectors (sup norm 1)."""
    dirs = []
    for i in range(p):
        for sign in (1, -1):
            e = [0] * p
            e[i] = sign
            dirs.append(tuple(e))
    for i, j in itertools.combinations(range(p), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            e = [0] * p
            e[i], e[j] = si, sj
            dirs.append(tuple(e))
    return dirs


def default_radii(cfg: PrecisionConfig) -> list[Real]:
    """Seven radii from 1e-1 down to 1e-4, half a decade apart."""
    ten = cfg.real(10)
    return [exp(log(ten) * cfg.real(Fraction(-2 - k, 2))) for k in range(7)]


def residuality_probe(spec: MeanSpec, p: int, x, radii: Sequence | None = None, cfg: PrecisionConfig | None = None) -> ResidualityReport:
    """Measure how fast the second-order expansion defect vanishes.

    For each radius ``r`` the defect ``|M(x1+s) - x - E s - xi(x) Var(s)/2|``
    is maximised over the sup-norm directions of :func:`probe_directions`,
    scaled to length ``r``. A residual mean gives an exponent above 2; a
    ``C^3`` mean generically gives 3.
    """
    cfg = _cfg(cfg)
    p = _check_p(p)
    x = cfg.real(x)
    radii = default_radii(cfg) if radii is None else [cfg.real(r) for r in radii]
    if len(radii) < 6:
        raise ValueError("the fit needs at least 6 radii")
    if any(not b < a for a, b in zip(radii, radii[1:])) or not radii[-1] > 0:
        raise ValueError("radii must be positive and strictly decreasing")
    if radii[0] / radii[-1] < 1000:
        raise ValueError("radii must span at least 3 decades")
    if not ((x - radii[0]) in spec.domain and (x + radii[0]) in spec.domain):
        raise DomainError(f"largest radius leaves the domain of {spec.name} around {x!r}")
    try:
        xi = residuum_analytic(spec, x, cfg, p).value
    except ResiduumError:
        xi = residuum_limit(spec, p, x, cfg).value
    dirs = probe_directions(p)
    defects = []
    exact = True
    for r in radii:
        worst = cfg.real(0)
        for eta in dirs:
            s = [r * e for e in eta]
            m = eval_mean(spec, [x + v for v in s], cfg)
            d = abs(m - x - fsum(s) / p - (xi * _variance(s)).ldexp(-1))
            worst = max(worst, d)
        defects.append(worst)
        exact = exact and effectively_zero(worst, abs(x) + r, cfg)
    if exact:
        return ResidualityReport(cfg.real("inf"), cfg.real(0), radii, len(dirs), defects, True)
    lx = [log(r) for r in radii]
    ly = [log(d) for d in defects]
    n = len(lx)
    mx, my = fsum(lx) / n, fsum(ly) / n
    sxy = fsum((a - mx) * (b - my) for a, b in zip(lx, ly))
    sxx = fsum((a - mx) * (a - mx) for a in lx)
    slope = sxy / sxx
    return ResidualityReport(slope, exp(my - slope * mx), radii, len(dirs), defects, False)


# -- p-independence ---------------------------------------------------------


@dataclass
class PIndependenceReport:
    x: Real
    estimates: dict[int, ResiduumEstimate]
    pairs: list[tuple[int, int, Real, Real]]  # (p, q, |xi_p - xi_q|, allowed)

    @property
    def consistent(self) -> bool:
        return all(diff <= allowed for _, _, diff, allowed in self.pairs)

    @property
    def max_difference(self) -> Real:
        return max((d for _, _, d, _ in self.pairs), default=self.x * 0)

    def to_json(self, digits: int | None = 17) -> dict:
        return {
            "x": self.x.to_decimal(digits),
            "estimates": {str(p): e.to_json(digits) for p, e in self.estimates.items()},
            "pairs": [
                {"p": p, "q": q, "difference": d.to_decimal(digits), "allowed": a.to_decimal(digits), "ok": bool(d <= a)}
                for p, q, d, a in self.pairs
            ],
            "consistent": self.consistent,
        }


def p_independence_check(spec: MeanSpec, x, arities: Sequence[int], cfg: PrecisionConfig | None = None) -> PIndependenceReport:
    """Compare limit estimates of the residuum across arities."""
    cfg = _cfg(cfg)
    x = cfg.real(x)
    estimates = {p: residuum_limit(spec, p, x, cfg) for p in sorted(set(arities))}
    pairs = []
    for p, q in itertools.combinations(estimates, 2):
        a, b = estimates[p], estimates[q]
        pairs.append((p, q, abs(a.value - b.value), AGREEMENT_FACTOR * (a.uncertainty + b.uncertainty)))
    return PIndependenceReport(x, estimates, pairs)


# -- diagonal identities of a deviation -------------------------------------


@dataclass
class DiagonalIdentityReport:
    """Residuals of the identities a quasideviation satisfies on the diagonal.

    ``first``  = (d1 E + d2 E)(x, x)
    ``second`` = (d11 E + 2 d12 E + d22 E)(x, x)
    ``d1_mismatch`` / ``d11_mismatch`` compare the supplied x-partials with
    finite differences of ``E`` itself.
    """

    x: Real
    first: Real
    second: Real
    d1_mismatch: Real
    d11_mismatch: Real
    tolerance: Real

    @property
    def ok(self) -> bool:
        return all(abs(v) <= self.tolerance for v in (self.first, self.second, self.d1_mismatch, self.d11_mismatch))


def diagonal_identities(E: DeviationFunction, x, cfg: PrecisionConfig | None = None, h=None) -> DiagonalIdentityReport:
    cfg = _cfg(cfg)
    x = cfg.real(x)
    if h is None:
        h = max(cfg.real(1), abs(x)).ldexp(-(cfg.working_bits // 4))
    h = cfg.real(h)
    while not ((x - h) in E.domain and (x + h) in E.domain):
        h = h.ldexp(-1)
    up, dn = x + h, x - h
    e0 = E.eval(x, x)
    e_up, e_dn = E.eval(x, up), E.eval(x, dn)
    d2 = (e_up - e_dn) / (2 * h)
    d12 = (E.d1(x, up) - E.d1(x, dn)) / (2 * h)
    d22 = (e_up - 2 * e0 + e_dn) / (h * h)
    d1, d11 = E.d1(x, x), E.d11(x, x)
    d1_fd = (E.eval(up, x) - E.eval(dn, x)) / (2 * h)
    d11_fd = (E.eval(up, x) - 2 * e0 + E.eval(dn, x)) / (h * h)
    scale = cfg.real(1) + abs(d1) + abs(d11)
    tol = scale.ldexp(cfg.guard_bits + 8 - cfg.working_bits // 2)
    return DiagonalIdentityReport(x, d1 + d2, d11 + 2 * d12 + d22, d1 - d1_fd, d11 - d11_fd, tol)
