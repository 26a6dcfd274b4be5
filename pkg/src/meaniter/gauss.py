"""Gauss iteration of mean-type mappings and the variance-ratio limit.

For a mapping ``M = (M_1, ..., M_p)`` of symmetric residual means the
ratios ``Var M^{n+1}(x) / (Var M^n(x))**2`` tend to a quarter of the
variance of the residua ``xi_{M_i}`` at the invariant mean ``K(x)``.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConvergenceError, DomainError, InsufficientRatiosError
from .means import Interval, MeanSpec, eval_mean
from .precision import CONVERGENCE_BITS, PrecisionConfig, Real, fsum, log
from .residuum import residuum_analytic

__all__ = [
    "MeanTypeMapping",
    "IterationTrace",
    "LimitVerdict",
    "SuperlinearityReport",
    "InvariantMean",
    "iterate",
    "invariant_mean",
    "predicted_limit",
    "verify_limit",
    "superlinearity_check",
    "population_variance",
    "trace_to_csv",
    "verdict_to_json",
]

DEFAULT_MAX_ITER = 64
MEDIAN_WINDOW = 3
CONTRACTION_THRESHOLD = 1e-3

BECAME_CONSTANT = "became_constant"
VARIANCE_UNDERFLOW = "variance_underflow"
MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class MeanTypeMapping:
    """``p`` means of ``p`` variables on the common part of their domains."""

    means: tuple[MeanSpec, ...]
    domain: Interval = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(self.means))
        if len(self.means) < 2:
            raise ValueError("a mean-type mapping needs p >= 2 means")
        dom = self.means[0].domain
        for m in self.means[1:]:
            dom = dom.intersect(m.domain)
        object.__setattr__(self, "domain", dom)

    @property
    def p(self) -> int:
        return len(self.means)

    def __call__(self, y: Sequence[Real], cfg: PrecisionConfig) -> list[Real]:
        return [eval_mean(m, y, cfg) for m in self.means]


def population_variance(y: Sequence[Real]) -> Real:
    """``E[y**2] - E[y]**2``, computed as the mean squared deviation."""
    n = len(y)
    m = fsum(y) / n
    return fsum((v - m) * (v - m) for v in y) / n


@dataclass
class IterationTrace:
    states: list[list[Real]]
    variances: list[Real]
    diameters: list[Real]
    ratios: list[Real | None]
    invariant_estimate: Real
    terminated_reason: str
    precision_bits: int
    guard_bits: int

    @property
    def usable_ratios(self) -> list[Real]:
        return [r for r in self.ratios if r is not None]

    def to_csv(self) -> str:
        return trace_to_csv(self)


def _usable(var: Real, scale: Real, cfg: PrecisionConfig) -> bool:
    return var > (scale * scale).ldexp(2 * cfg.guard_bits - cfg.working_bits)


def iterate(
    mapping: MeanTypeMapping,
    x0: Sequence,
    cfg: PrecisionConfig | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IterationTrace:
    """Apply ``mapping`` repeatedly, starting from ``x0``.

    Stops when the vector becomes exactly constant, when its variance drops
    below ``2**(guard - working) * scale**2`` (``scale = max |y_i|``), or
    after ``max_iter`` applications. Ratios are recorded only while the
    denominator variance exceeds ``2**(2 guard - working) * scale**2``.

    Raises:
        DomainError: a mean left ``[min y, max y]``; only a broken
            user-supplied mean can do that.
    """
    cfg = cfg or PrecisionConfig.for_bits(CONVERGENCE_BITS)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    y = [cfg.real(v) for v in x0]
    if len(y) != mapping.p:
        raise ValueError(f"x0 has {len(y)} entries but the mapping has p={mapping.p}")
    for v in y:
        if v not in mapping.domain:
            raise DomainError(f"{v!r} is outside the mapping domain {mapping.domain.to_json()}")

    states, variances, diameters, ratios = [], [], [], []
    reason = MAX_ITERATIONS
    prev_usable = False
    for n in range(max_iter + 1):
        lo, hi = min(y), max(y)
        var = population_variance(y)
        scale = max(abs(lo), abs(hi))
        states.append(y)
        variances.append(var)
        diameters.append(hi - lo)
        if n > 0:
            ratios.append(var / (variances[-2] * variances[-2]) if prev_usable else None)
        if lo == hi:
            reason = BECAME_CONSTANT
            break
        if var < (scale * scale).ldexp(cfg.guard_bits - cfg.working_bits):
            reason = VARIANCE_UNDERFLOW
            break
        if n == max_iter:
            break
        prev_usable = _usable(var, scale, cfg)
        nxt = mapping(y, cfg)
        for i, v in enumerate(nxt):
            if not lo <= v <= hi:
                raise DomainError(
                    f"mean {mapping.means[i].name} returned {v!r} outside [min, max] of its argument"
                )
        y = nxt
    k = fsum(states[-1]) / len(states[-1])
    return IterationTrace(states, variances, diameters, ratios, k, reason, cfg.working_bits, cfg.guard_bits)


@dataclass(frozen=True)
class InvariantMean:
    value: Real
    uncertainty: Real
    terminated_reason: str


def invariant_mean(
    mapping: MeanTypeMapping,
    x0: Sequence,
    cfg: PrecisionConfig | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> InvariantMean:
    """Value of the invariant mean at ``x0``; uncertainty is the final diameter."""
    trace = iterate(mapping, x0, cfg, max_iter)
    if trace.terminated_reason == MAX_ITERATIONS:
        raise ConvergenceError(
            f"no convergence after {max_iter} steps; last diameter {trace.diameters[-1].to_decimal(6)}"
        )
    return InvariantMean(trace.invariant_estimate, trace.diameters[-1], trace.terminated_reason)


def predicted_limit(mapping: MeanTypeMapping, K, cfg: PrecisionConfig | None = None) -> Real:
    """A quarter of the population variance of the residua at ``K``."""
    cfg = cfg or PrecisionConfig.for_bits(CONVERGENCE_BITS)
    xis = [residuum_analytic(m, K, cfg, mapping.p).value for m in mapping.means]
    return population_variance(xis).ldexp(-2)


@dataclass
class LimitVerdict:
    empirical_limit: Real
    predicted_limit: Real
    relative_gap: Real
    n_ratios_used: int
    n_usable_ratios: int
    K: Real
    precision_bits: int
    trace: IterationTrace = field(repr=False)

    def to_json(self, digits: int | None = None) -> dict:
        return verdict_to_json(self, digits)


def verify_limit(
    mapping: MeanTypeMapping,
    x0: Sequence,
    cfg: PrecisionConfig | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    trace: IterationTrace | None = None,
) -> LimitVerdict | None:
    """Compare the tail of the variance ratios with the predicted limit.

    The empirical limit is the median of the last three usable ratios.
    Returns ``None`` when the iteration becomes constant in finitely many
    steps, where no limit exists.

    Raises:
        InsufficientRatiosError: fewer than three usable ratios; raise the
            working precision.
    """
    cfg = cfg or PrecisionConfig.for_bits(CONVERGENCE_BITS)
    if trace is None:
        trace = iterate(mapping, x0, cfg, max_iter)
    if trace.terminated_reason == BECAME_CONSTANT:
        return None
    usable = trace.usable_ratios
    if len(usable) < MEDIAN_WINDOW:
        hint = "max_iter" if trace.terminated_reason == MAX_ITERATIONS else "working_bits"
        raise InsufficientRatiosError(
            f"only {len(usable)} usable variance ratios at {cfg.working_bits} bits; increase {hint}"
        )
    empirical = statistics.median_low(usable[-MEDIAN_WINDOW:])
    K = trace.invariant_estimate
    predicted = predicted_limit(mapping, K, cfg)
    floor = cfg.real(1).ldexp(2 * cfg.guard_bits - cfg.working_bits)
    gap = abs(empirical - predicted) / max(abs(predicted), floor)
    return LimitVerdict(empirical, predicted, gap, MEDIAN_WINDOW, len(usable), K, cfg.working_bits, trace)


@dataclass
class SuperlinearityReport:
    """Diameter contraction and growth of ``log(1/Var)`` along a trace.

    ``status`` is ``"exact collapse"``, ``"non-contracting"`` or
    ``"superlinear"``.
    """

    status: str
    final_quotient: Real | None
    log_variance_growth: Real | None
    quotients: list[Real]

    @property
    def contracting(self) -> bool:
        return self.status == "superlinear"


def superlinearity_check(trace: IterationTrace, threshold: float = CONTRACTION_THRESHOLD) -> SuperlinearityReport:
    if trace.terminated_reason == BECAME_CONSTANT and len(trace.states) <= 2:
        return SuperlinearityReport("exact collapse", None, None, [])
    quotients = [b / a for a, b in zip(trace.diameters, trace.diameters[1:]) if not a.is_zero()]
    final_q = quotients[-1] if quotients else None
    # log(1/Var) over the usable part of the trace (ratios[n] is not None <=> Var_n usable)
    usable_idx = [n for n, r in enumerate(trace.ratios) if r is not None]
    growth = None
    if len(usable_idx) >= 2:
        a, b = usable_idx[-2], usable_idx[-1]
        la, lb = -log(trace.variances[a]), -log(trace.variances[b])
        if la > 0:
            growth = lb / la
    if trace.terminated_reason == BECAME_CONSTANT:
        status = "exact collapse"
    elif final_q is None or not final_q < threshold:
        status = "non-contracting"
    else:
        status = "superlinear"
    return SuperlinearityReport(status, final_q, growth, quotients)


def trace_to_csv(trace: IterationTrace, digits: int | None = None) -> str:
    """CSV with columns ``n, y_1..y_p, variance, diameter, ratio``.

    Row ``n`` carries ``Var y^(n) / Var(y^(n-1))**2``; it is empty in row 0
    and wherever the denominator fell below the precision floor.
    """
    p = len(trace.states[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n"] + [f"y_{i + 1}" for i in range(p)] + ["variance", "diameter", "ratio"])
    for n, (y, var, diam) in enumerate(zip(trace.states, trace.variances, trace.diameters)):
        ratio = trace.ratios[n - 1] if n > 0 else None
        w.writerow(
            [n]
            + [v.to_decimal(digits) for v in y]
            + [var.to_decimal(digits), diam.to_decimal(digits), "" if ratio is None else ratio.to_decimal(digits)]
        )
    return buf.getvalue()


def verdict_to_json(verdict: LimitVerdict, digits: int | None = None) -> dict:
    return {
        "empirical_limit": verdict.empirical_limit.to_decimal(digits),
        "predicted_limit": verdict.predicted_limit.to_decimal(digits),
        "relative_gap": verdict.relative_gap.to_decimal(digits),
        "K": verdict.K.to_decimal(digits),
        "precision_bits": verdict.precision_bits,
    }


def dumps_verdict(verdict: LimitVerdict, digits: int | None = None) -> str:
    return json.dumps(verdict_to_json(verdict, digits), indent=2, sort_keys=True) + "\n"
