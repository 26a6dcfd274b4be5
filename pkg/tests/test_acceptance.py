"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line in ``RESULTS``; ``conftest.py`` prints
them in the terminal summary. Run only this suite with
``pytest tests/test_acceptance.py``.
"""

import random
import time
from fractions import Fraction

import pytest

from meaniter.catalog import CATALOG_DEVIATIONS, deviation, generator
from meaniter.gauss import MeanTypeMapping, invariant_mean, iterate, superlinearity_check, verify_limit
from meaniter.means import (
    arithmetic,
    bajraktarevic,
    eval_mean,
    geometric,
    gini,
    power,
    quasiarithmetic,
    quasideviation,
)
from meaniter.precision import PrecisionConfig, Real
from meaniter.residuum import (
    bajraktarevic_invariants,
    diagonal_identities,
    p_independence_check,
    residuality_probe,
    residuum_analytic,
    residuum_hessian,
    residuum_limit,
)

RESULTS: dict[str, str] = {}

GINI_MAPPING = MeanTypeMapping((gini(2, 1), gini(0, 0), gini(1, -1)))
X0 = ["1", "2", "3"]


def record(key: str, ok: bool, detail: str) -> None:
    RESULTS[key] = f"{key} {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def rel_err(got: Real, want: Real, floor: Real) -> Real:
    # a target of exactly zero has no relative scale; fall back to an absolute floor
    return abs(got - want) / max(abs(want), floor)


@pytest.fixture(scope="module")
def reference_run():
    cfg = PrecisionConfig.for_bits(8192)
    start = time.perf_counter()
    trace = iterate(GINI_MAPPING, X0, cfg)
    verdict = verify_limit(GINI_MAPPING, X0, cfg, trace=trace)
    return trace, verdict, time.perf_counter() - start


def test_c1_reference_mapping(reference_run):
    trace, v, elapsed = reference_run
    ok = (
        v is not None
        and v.relative_gap < Real("1e-6")
        and v.n_usable_ratios >= 5
        and abs(v.predicted_limit - 1 / (2 * v.K * v.K)) <= v.predicted_limit.ldexp(-8000)
        and elapsed < 60
    )
    record(
        "C1",
        ok,
        f"gap={v.relative_gap.to_decimal(3)} usable={v.n_usable_ratios} median_of={v.n_ratios_used} K={v.K.to_decimal(20)} time={elapsed:.2f}s",
    )


def test_c2_gini_residuum_law():
    cfg = PrecisionConfig.for_bits(1024)
    floor = Real(1, 1024)
    worst = Real(0, 1024)
    where = ""
    for a in (-1, 0, 1, 2):
        for b in (-1, 0, 1, 2):
            spec = gini(a, b)
            for x in ("0.5", "1", "3"):
                want = Real(a + b - 1, 1024) / Real(x, 1024)
                mixed, pure = residuum_hessian(spec, 2, x, cfg)
                for est in (residuum_limit(spec, 2, x, cfg), mixed, pure):
                    err = rel_err(est.value, want, floor)
                    if err > worst:
                        worst, where = err, f"G({a},{b}) x={x} {est.method}"
    record("C2", worst < Real("1e-8"), f"max rel err={worst.to_decimal(3)} ({where})")


BUILTIN = [
    arithmetic(),
    geometric(),
    power(3),
    power(Fraction(1, 2)),
    gini(2, 1),
    gini(0, 0),
    gini(1, -1),
    quasiarithmetic(generator("exp")),
    quasiarithmetic(generator("log")),
    quasiarithmetic(generator("x^-1")),
    bajraktarevic(generator("x^2"), generator("x")),
    bajraktarevic(generator("x^3"), generator("x^0.5")),
    quasideviation(deviation("bajraktarevic:x^2,x")),
    quasideviation(deviation("quasiarithmetic:exp")),
    quasideviation(deviation("log_ratio")),
]


def test_c3_hessian_forms_agree():
    cfg = PrecisionConfig.for_bits(1024)
    floor = Real(1, 1024)
    worst = Real(0, 1024)
    where = ""
    for spec in BUILTIN:
        for x in ("0.5", "1", "3"):
            for p in (2, 3, 4):
                mixed, pure = residuum_hessian(spec, p, x, cfg)
                err = rel_err(mixed.value, pure.value, floor)
                if err > worst:
                    worst, where = err, f"{spec.name} x={x} p={p}"
    record("C3", worst < Real("1e-6"), f"{len(BUILTIN)} families, max rel diff={worst.to_decimal(3)} ({where or 'all exact'})")


def test_c4_p_independence():
    cfg = PrecisionConfig.for_bits(1024)
    worst = Real(0, 1024)
    for spec in (gini(2, 1), quasiarithmetic(generator("log"))):
        for x in (1, 2):
            rep = p_independence_check(spec, x, (2, 3, 5), cfg)
            worst = max(worst, rep.max_difference)
    record("C4", worst < Real("1e-8"), f"max |xi_p - xi_q|={worst.to_decimal(3)}")


def test_c5_residuality_exponent():
    cfg = PrecisionConfig.for_bits(1024)
    # 10^-1 ... 10^-4 in half-decade steps
    radii = [Real(10, 1024) ** Fraction(-k, 2) for k in range(2, 9)]
    exps = {}
    for spec, x in ((gini(2, 1), 1), (quasiarithmetic(generator("exp")), 1)):
        exps[spec.name] = residuality_probe(spec, 3, x, radii, cfg).fitted_exponent
    arith = residuality_probe(arithmetic(), 3, 1, radii, cfg)
    ok = all(Real("2.5") <= e <= Real("3.5") for e in exps.values()) and arith.exact
    detail = ", ".join(f"{k}: {v.to_decimal(4)}" for k, v in exps.items())
    record("C5", ok, f"{detail}; arithmetic exact={arith.exact}")


def test_c6_agm():
    mapping = MeanTypeMapping((arithmetic(), geometric()))
    k1 = invariant_mean(mapping, [1, 2], PrecisionConfig.for_bits(1024)).value
    k2 = invariant_mean(mapping, [1, 2], PrecisionConfig.for_bits(2048)).value
    drift = abs(k1 - k2)
    v = verify_limit(mapping, [1, 2], PrecisionConfig.for_bits(2048))
    target = 1 / (16 * v.K * v.K)
    gap = abs(v.empirical_limit - target) / target
    ok = drift < Real("1e-20") and gap < Real("1e-6") and abs(v.predicted_limit - target) <= target.ldexp(-2000)
    record("C6", ok, f"K={k2.to_decimal(25)} drift={drift.to_decimal(3)} gap={gap.to_decimal(3)}")


def test_c7_quasideviation_equivalence():
    cfg = PrecisionConfig.for_bits(256)
    qd = quasideviation(deviation("bajraktarevic:x^2,x"))
    g21 = gini(2, 1)
    rng = random.Random(20240601)
    worst_eval = Real(0, 256)
    for _ in range(50):
        n = rng.randint(2, 6)
        x = [Fraction(rng.randint(1, 10**6), 10**5) for _ in range(n)]
        worst_eval = max(worst_eval, abs(eval_mean(qd, x, cfg) - eval_mean(g21, x, cfg)))
    worst_res = Real(0, 256)
    for x in ("0.5", "1", "3", "7.25"):
        phi, _ = bajraktarevic_invariants(generator("x^2"), generator("x"), x, cfg)
        worst_res = max(worst_res, abs(residuum_analytic(qd, x, cfg).value - phi))
    ok = worst_eval < Real("1e-25") and worst_res < Real("1e-25")
    record("C7", ok, f"max eval diff={worst_eval.to_decimal(3)} max residuum diff={worst_res.to_decimal(3)}")


def test_c8_superlinearity(reference_run):
    trace, _, _ = reference_run
    rep = superlinearity_check(trace)
    ok = rep.status == "superlinear" and rep.final_quotient < Real("1e-3") and rep.log_variance_growth >= 2
    record(
        "C8",
        ok,
        f"status={rep.status} quotient={rep.final_quotient.to_decimal(3)} growth={rep.log_variance_growth.to_decimal(5)}",
    )


def test_c9_diagonal_identities():
    cfg = PrecisionConfig.for_bits(1024)
    failures = []
    worst = Real(0, 1024)
    for name in CATALOG_DEVIATIONS:
        E = deviation(name)
        for x in ("0.5", "1", "3"):
            rep = diagonal_identities(E, x, cfg)
            worst = max(worst, abs(rep.first), abs(rep.second))
            if not rep.ok:
                failures.append(f"{name}@{x}")
    record("C9", not failures, f"{len(CATALOG_DEVIATIONS)} deviations, max residual={worst.to_decimal(3)} failures={failures}")
