import csv
import io
from fractions import Fraction

import mpmath
import pytest
from hypothesis import assume, given, strategies as st

from meaniter.catalog import generator
from meaniter.errors import ConvergenceError, DomainError, InsufficientRatiosError
from meaniter.gauss import (
    MeanTypeMapping,
    invariant_mean,
    iterate,
    population_variance,
    predicted_limit,
    superlinearity_check,
    trace_to_csv,
    verdict_to_json,
    verify_limit,
)
from meaniter.means import arithmetic, custom, geometric, gini, quasiarithmetic
from meaniter.precision import PrecisionConfig, Real

CFG = PrecisionConfig.for_bits(1024)
HIGH = PrecisionConfig.for_bits(8192)

AG = MeanTypeMapping((arithmetic(), geometric()))
GINI3 = MeanTypeMapping((gini(2, 1), gini(0, 0), gini(1, -1)))


def to_mp(x: Real):
    n, d = x.as_integer_ratio()
    return mpmath.mpf(n) / d


@pytest.fixture(autouse=True)
def _mp_precision():
    with mpmath.workprec(1300):
        yield


def agm_oracle(a, b):
    return mpmath.agm(a, b)


class TestMapping:
    def test_needs_two_means(self):
        with pytest.raises(ValueError):
            MeanTypeMapping((arithmetic(),))

    def test_domain_is_common_part(self):
        assert AG.domain == geometric().domain

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            iterate(AG, [1, 2, 3], CFG)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            iterate(AG, [-1, 2], CFG)

    def test_max_iter_positive(self):
        with pytest.raises(ValueError):
            iterate(AG, [1, 2], CFG, max_iter=0)


class TestIterate:
    def test_constant_start(self):
        t = iterate(GINI3, ["1.5"] * 3, CFG)
        assert t.terminated_reason == "became_constant"
        assert len(t.states) == 1 and t.invariant_estimate == Real("1.5")

    def test_agm(self):
        t = iterate(AG, [1, 2], CFG)
        assert t.terminated_reason == "variance_underflow"
        assert abs(to_mp(t.invariant_estimate) - agm_oracle(1, 2)) < mpmath.mpf(10) ** -140
        assert t.invariant_estimate.to_decimal(21) == "1.45679103104690686919"

    def test_agm_other_points(self):
        for a, b in ((1, 10), ("0.001", 5)):
            t = iterate(AG, [a, b], CFG)
            assert abs(to_mp(t.invariant_estimate) - agm_oracle(mpmath.mpf(a), mpmath.mpf(b))) < mpmath.mpf(10) ** -100

    def test_arithmetic_pair_collapses(self):
        t = iterate(MeanTypeMapping((arithmetic(), arithmetic())), ["0.3", "7"], CFG)
        assert t.terminated_reason == "became_constant" and len(t.states) == 2
        assert t.states[1][0] == t.states[1][1]

    def test_max_iterations(self):
        t = iterate(AG, [1, 2], CFG, max_iter=2)
        assert t.terminated_reason == "max_iterations" and len(t.states) == 3

    def test_broken_mean_escapes(self):
        mapping = MeanTypeMapping((arithmetic(), custom(lambda v: max(v) + 1, "broken")))
        with pytest.raises(DomainError, match="broken"):
            iterate(mapping, [1, 2], CFG)

    def test_ratios_none_below_floor(self):
        t = iterate(AG, [1, 2], CFG)
        assert len(t.ratios) == len(t.states) - 1
        floor = Real(1, 1024).ldexp(2 * CFG.guard_bits - CFG.working_bits)
        for n, r in enumerate(t.ratios):
            scale = max(abs(v) for v in t.states[n])
            assert (r is None) == (not t.variances[n] > floor * scale * scale)


class TestInvariantMean:
    def test_agm(self):
        im = invariant_mean(AG, [1, 2], CFG)
        assert abs(to_mp(im.value) - agm_oracle(1, 2)) <= to_mp(im.uncertainty) + mpmath.mpf(2) ** -1000

    def test_constant(self):
        assert invariant_mean(GINI3, [2, 2, 2], CFG).value == 2

    def test_gini3_in_range_and_stable(self):
        k1 = invariant_mean(GINI3, [1, 2, 3], CFG).value
        k2 = invariant_mean(GINI3, [1, 2, 3], PrecisionConfig.for_bits(2048)).value
        assert 1 < k1 < 3 and abs(k1 - k2) < Real("1e-100")

    def test_no_convergence(self):
        mapping = MeanTypeMapping((custom(min, "min"), custom(max, "max")))
        with pytest.raises(ConvergenceError, match="diameter"):
            invariant_mean(mapping, [1, 2], CFG, max_iter=5)


class TestPredicted:
    def test_gini3(self):
        K = Real("1.7", 1024)
        assert abs(predicted_limit(GINI3, K, CFG) - 1 / (2 * K * K)) <= CFG.tolerance(1)

    def test_agm(self):
        K = Real("1.4", 1024)
        assert abs(predicted_limit(AG, K, CFG) - 1 / (16 * K * K)) <= CFG.tolerance(1)

    def test_identical_means(self):
        m = MeanTypeMapping((gini(2, 1),) * 3)
        assert predicted_limit(m, 2, CFG).is_zero()


class TestVerify:
    def test_gini3_high_precision(self):
        v = verify_limit(GINI3, [1, 2, 3], HIGH)
        assert v.relative_gap < Real("1e-6") and v.n_usable_ratios >= 5
        assert abs(v.predicted_limit - 1 / (2 * v.K * v.K)) <= HIGH.tolerance(1)

    def test_agm(self):
        v = verify_limit(AG, [1, 2], HIGH)
        k = agm_oracle(1, 2)
        assert abs(to_mp(v.empirical_limit) - 1 / (16 * k * k)) < mpmath.mpf(10) ** -6 / (16 * k * k)

    def test_qa_pair_id_exp(self):
        m = MeanTypeMapping((quasiarithmetic(generator("x")), quasiarithmetic(generator("exp"))))
        v = verify_limit(m, [0, 1], HIGH)
        assert v.predicted_limit == Real(1, 64) / 16
        assert v.relative_gap < Real("1e-6")

    def test_constant_has_no_verdict(self):
        assert verify_limit(AG, [3, 3], CFG) is None

    def test_too_few_ratios(self):
        with pytest.raises(InsufficientRatiosError, match="max_iter"):
            verify_limit(AG, [1, 2], CFG, max_iter=2)
        with pytest.raises(InsufficientRatiosError, match="working_bits"):
            verify_limit(GINI3, [1, 2, 3], PrecisionConfig(64, 30))

    def test_equal_residua_contract_faster(self):
        # gini(2,0) and gini(1,1) share the residuum 1/x: the ratio tail tends to 0, and the
        # coordinates eventually round to the same value
        m = MeanTypeMapping((gini(2, 0), gini(1, 1)))
        t = iterate(m, [1, 2], HIGH)
        assert predicted_limit(m, t.invariant_estimate, HIGH).is_zero()
        tail = t.usable_ratios[-3:]
        assert len(tail) == 3 and all(r < Real("1e-6") for r in tail)

    def test_json(self):
        v = verify_limit(AG, [1, 2], CFG)
        doc = verdict_to_json(v, 12)
        assert set(doc) == {"empirical_limit", "predicted_limit", "relative_gap", "K", "precision_bits"}
        assert doc["precision_bits"] == 1024 and doc["K"] == "1.45679103105"


class TestSuperlinearity:
    def test_gini3(self):
        rep = superlinearity_check(iterate(GINI3, [1, 2, 3], HIGH))
        assert rep.status == "superlinear"
        assert rep.final_quotient < Real("1e-3") and rep.log_variance_growth >= 2

    def test_exact_collapse(self):
        rep = superlinearity_check(iterate(MeanTypeMapping((arithmetic(), arithmetic())), [1, 2], CFG))
        assert rep.status == "exact collapse"

    def test_min_max_non_contracting(self):
        mapping = MeanTypeMapping((custom(min, "min"), custom(max, "max")))
        rep = superlinearity_check(iterate(mapping, [1, 2], CFG, max_iter=6))
        assert rep.status == "non-contracting" and rep.final_quotient == 1


class TestCsv:
    def test_layout(self):
        t = iterate(AG, [1, 2], CFG)
        rows = list(csv.reader(io.StringIO(trace_to_csv(t))))
        assert rows[0] == ["n", "y_1", "y_2", "variance", "diameter", "ratio"]
        assert len(rows) == len(t.states) + 1
        assert rows[1][-1] == "" and rows[2][-1] != ""
        # full precision round trip
        for row, state in zip(rows[1:], t.states):
            assert [Real(v, 1024) for v in row[1:3]] == state

    def test_digits(self):
        t = iterate(AG, [1, 2], CFG)
        rows = list(csv.reader(io.StringIO(trace_to_csv(t, 5))))
        assert rows[2][1] == "1.5" and rows[2][2] == "1.4142"


pos = st.fractions(min_value=Fraction(1, 10), max_value=10, max_denominator=100)
params = st.sampled_from([(2, 1), (0, 0), (1, -1), (3, 0), (1, 1), (-1, 0)])


@given(st.lists(pos, min_size=3, max_size=3), st.lists(params, min_size=3, max_size=3))
def test_sandwich_each_step(x0, ps):
    mapping = MeanTypeMapping(tuple(gini(a, b) for a, b in ps))
    t = iterate(mapping, x0, PrecisionConfig.for_bits(256))
    for prev, nxt in zip(t.states, t.states[1:]):
        assert all(min(prev) <= v <= max(prev) for v in nxt)
    assert all(v >= 0 for v in t.variances)


@given(st.lists(pos, min_size=3, max_size=3))
def test_invariance_consistency(x0):
    cfg = PrecisionConfig.for_bits(512)
    t = iterate(GINI3, x0, cfg)
    k = t.invariant_estimate
    tol = t.diameters[-1] + cfg.tolerance(k).ldexp(4)
    for n in range(0, len(t.states), 2):
        k_n = iterate(GINI3, t.states[n], cfg).invariant_estimate
        assert abs(k_n - k) <= tol


@given(st.lists(pos, min_size=3, max_size=3), st.permutations([0, 1, 2]))
def test_permutation_invariance(x0, perm):
    assume(len(set(x0)) > 1)
    cfg = PrecisionConfig.for_bits(256)
    a = iterate(GINI3, x0, cfg)
    b = iterate(GINI3, [x0[i] for i in perm], cfg)
    assert len(a.variances) == len(b.variances)
    for u, v in zip(a.variances + a.diameters, b.variances + b.diameters):
        assert abs(u - v) <= cfg.tolerance(max(abs(u), Real(1, 256))).ldexp(8) or abs(u - v) <= abs(u).ldexp(-200)


@given(st.lists(pos, min_size=2, max_size=2))
def test_ratio_stability_under_precision_doubling(x0):
    assume(x0[0] != x0[1])
    a = iterate(AG, x0, PrecisionConfig.for_bits(1024))
    b = iterate(AG, x0, PrecisionConfig.for_bits(2048))
    for ra, rb in zip(a.ratios, b.ratios):
        if ra is not None and rb is not None:
            assert abs(ra - rb) / abs(rb) < Real("1e-10")


def test_population_variance():
    assert population_variance([Real(1), Real(2), Real(3)]) == Real(2) / 3
