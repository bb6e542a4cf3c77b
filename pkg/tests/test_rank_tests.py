import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from survkit.errors import DataError, UsageError
from survkit.rank_tests import (GEHAN, LOGRANK, PETOPETO, WeightSpec, bh_adjust, chi2_pvalue,
                                pairwise_tests, weighted_logrank)

from .conftest import grouped_cohort


def hypergeometric_oracle(times, events, groups, weight_of=None):
    """Two-group weighted log-rank by explicit enumeration of event times."""
    u = v = 0.0
    pooled_surv = 1.0
    for t in sorted({t for t, e in zip(times, events) if e}):
        n = sum(1 for s in times if s >= t)
        n1 = sum(1 for s, g in zip(times, groups) if s >= t and g == 0)
        d = sum(1 for s, e in zip(times, events) if s == t and e)
        d1 = sum(1 for s, e, g in zip(times, events, groups) if s == t and e and g == 0)
        if weight_of == "peto":
            pooled_surv *= 1 - d / (n + 1)
            w = pooled_surv
        elif weight_of == "gehan":
            w = n
        else:
            w = 1.0
        u += w * (d1 - n1 * d / n)
        if n > 1:
            v += w * w * (n1 / n) * (1 - n1 / n) * d * (n - d) / (n - 1)
    return u * u / v if v > 0 else None


def test_hand_enumerated_two_groups():
    c = grouped_cohort([1, 3, 2, 4], [1, 1, 1, 1], ["A", "A", "B", "B"])
    r = weighted_logrank(c, "g", LOGRANK)
    # t=1: O-E=1/2, V=1/4; t=2: -1/3, 2/9; t=3: 1/2, 1/4; t=4: n=1 contributes 0
    assert r.chi_square == pytest.approx((2 / 3) ** 2 / (13 / 18), rel=1e-12)
    assert r.chi_square == pytest.approx(
        hypergeometric_oracle([1, 3, 2, 4], [1, 1, 1, 1], [0, 0, 1, 1]), rel=1e-12)
    assert r.df == 1


@pytest.mark.parametrize("weight, key", [(LOGRANK, None), (PETOPETO, "peto"), (GEHAN, "gehan")])
def test_matches_oracle_on_random_data(weight, key):
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = rng.integers(4, 25)
        t = rng.integers(1, 8, n).astype(float)
        e = (rng.random(n) < 0.7).astype(int)
        g = rng.integers(0, 2, n)
        if len(set(g)) < 2 or e.sum() == 0:
            continue
        c = grouped_cohort(t, e, g)
        expected = hypergeometric_oracle(list(t), list(e), list(g), key)
        if expected is None:
            continue
        assert weighted_logrank(c, "g", weight).chi_square == pytest.approx(expected, rel=1e-10)


def test_identical_groups_give_zero():
    t = [1.0, 2.0, 2.0, 4.0, 5.5, 7.0]
    e = [1, 1, 0, 1, 0, 1]
    c = grouped_cohort(t + t, e + e, ["a"] * 6 + ["b"] * 6)
    for w in (LOGRANK, PETOPETO, GEHAN, WeightSpec("fleming-harrington", 1, 1)):
        r = weighted_logrank(c, "g", w)
        assert r.chi_square == 0.0
        assert r.p_value == 1.0


def test_observed_minus_expected_sums_to_zero():
    rng = np.random.default_rng(2)
    t = rng.exponential(size=90)
    e = (rng.random(90) < 0.8).astype(int)
    g = rng.integers(0, 3, 90)
    r = weighted_logrank(grouped_cohort(t, e, g), "g")
    assert sum(x.observed - x.expected for x in r.groups) == pytest.approx(0, abs=1e-9)
    assert r.df == 2 and 0 <= r.p_value <= 1


def test_two_group_scalar_form():
    rng = np.random.default_rng(4)
    t = rng.weibull(1.5, 70)
    e = (rng.random(70) < 0.75).astype(int)
    g = rng.integers(0, 2, 70)
    for w in (LOGRANK, PETOPETO, GEHAN):
        r = weighted_logrank(grouped_cohort(t, e, g), "g", w)
        assert r.chi_square == pytest.approx(r.score[0] ** 2 / r.covariance[0, 0], rel=1e-10)


def test_label_permutation_invariance():
    rng = np.random.default_rng(5)
    t = rng.exponential(size=80)
    e = (rng.random(80) < 0.8).astype(int)
    g = rng.integers(0, 4, 80)
    a = weighted_logrank(grouped_cohort(t, e, g, levels=["0", "1", "2", "3"]), "g", PETOPETO)
    relabel = {0: "2", 1: "0", 2: "3", 3: "1"}
    b = weighted_logrank(grouped_cohort(t, e, [relabel[x] for x in g],
                                        levels=["0", "1", "2", "3"]), "g", PETOPETO)
    assert a.chi_square == pytest.approx(b.chi_square, rel=1e-10)


def test_fh_zero_zero_equals_logrank_exactly():
    rng = np.random.default_rng(6)
    t = rng.exponential(size=50)
    e = (rng.random(50) < 0.6).astype(int)
    g = rng.integers(0, 3, 50)
    c = grouped_cohort(t, e, g)
    assert (weighted_logrank(c, "g", WeightSpec("fleming-harrington", 0, 0)).chi_square
            == weighted_logrank(c, "g", LOGRANK).chi_square)


def test_empty_level_does_not_count_in_df():
    c = grouped_cohort([1, 2, 3, 4], [1, 1, 1, 0], ["a", "a", "c", "c"], levels=["a", "b", "c"])
    r = weighted_logrank(c, "g")
    assert r.df == 1
    assert [g.level for g in r.groups] == ["a", "c"]


def test_errors():
    with pytest.raises(UsageError):
        weighted_logrank(grouped_cohort([1, 2], [1, 1], ["a", "a"]), "g")
    with pytest.raises(DataError):
        weighted_logrank(grouped_cohort([1, 2], [0, 0], ["a", "b"]), "g")
    with pytest.raises(UsageError):
        WeightSpec("fleming-harrington", -1, 0)
    with pytest.raises(UsageError):
        WeightSpec.parse("fh:1")


def test_weight_parsing():
    assert WeightSpec.parse("peto") == PETOPETO
    assert WeightSpec.parse("Log-Rank") == LOGRANK
    assert WeightSpec.parse("fh:1,0.5") == WeightSpec("fleming-harrington", 1.0, 0.5)


def test_chi_square_tail():
    assert chi2_pvalue(110, 2) < 2e-16
    assert chi2_pvalue(8.8, 7) == pytest.approx(0.267, abs=0.005)
    # independent route: survival of chi2(2) is exp(-x/2)
    assert chi2_pvalue(3.0, 2) == pytest.approx(np.exp(-1.5), rel=1e-14)


def test_bh_examples():
    assert bh_adjust([0.01, 0.02, 0.04]) == pytest.approx([0.03, 0.03, 0.04])
    assert bh_adjust([0.37]).tolist() == [0.37]
    assert bh_adjust([1.0, 1.0]).tolist() == [1.0, 1.0]
    assert bh_adjust([0.04, 0.01, 0.02]) == pytest.approx([0.04, 0.03, 0.03])
    with pytest.raises(UsageError):
        bh_adjust([0.5, 1.2])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_bh_properties(p):
    p = np.array(p)
    adj = bh_adjust(p)
    assert np.all(adj >= p - 1e-15)
    assert np.all((0 <= adj) & (adj <= 1))
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)


def test_bh_agrees_with_scipy():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p = rng.random(rng.integers(1, 30)) ** 3
        assert bh_adjust(p) == pytest.approx(stats.false_discovery_control(p, method="bh"))


def test_pairwise_counts_and_m1_identity():
    rng = np.random.default_rng(9)
    levels = list("ABCDEFGH")
    g = rng.choice(levels, 400)
    t = rng.exponential(size=400)
    e = (rng.random(400) < 0.8).astype(int)
    pm = pairwise_tests(grouped_cohort(t, e, g, levels=levels), "g", PETOPETO)
    assert pm.n_comparisons == 28
    assert len(list(pm.pairs())) == 28
    off = ~np.eye(8, dtype=bool)
    assert np.all(pm.adjusted[off] >= pm.raw[off] - 1e-15)
    assert np.all(np.isnan(np.diag(pm.raw)))
    assert np.allclose(pm.raw, pm.raw.T, equal_nan=True)

    two = pairwise_tests(grouped_cohort(t[:50], e[:50], g[:50] == "A"), "g")
    assert two.adjusted[0, 1] == two.raw[0, 1]


def test_pairwise_raw_matches_two_level_test():
    rng = np.random.default_rng(10)
    g = rng.choice(list("abc"), 150)
    t = rng.exponential(size=150)
    e = np.ones(150, dtype=int)
    c = grouped_cohort(t, e, g)
    pm = pairwise_tests(c, "g", LOGRANK)
    sub = c.subset(np.isin(g, ["a", "c"]))
    assert pm.raw[0, 2] == pytest.approx(weighted_logrank(sub, "g", LOGRANK).p_value, rel=1e-12)


def test_pairwise_identical_pair_has_largest_p():
    rng = np.random.default_rng(12)
    base = rng.exponential(1.0, 80)
    shifted = rng.exponential(3.0, 80)
    e = np.ones(80, dtype=int)
    c = grouped_cohort(np.concatenate([base, base, shifted]), np.concatenate([e, e, e]),
                       ["a"] * 80 + ["b"] * 80 + ["c"] * 80)
    pm = pairwise_tests(c, "g")
    assert pm.adjusted[0, 1] > pm.adjusted[0, 2]
    assert pm.adjusted[0, 1] > pm.adjusted[1, 2]
