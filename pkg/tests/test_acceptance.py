"""Acceptance gate.  Each test carries a ``criterion`` marker; the terminal
summary prints PASS/FAIL per criterion (see conftest.py)."""

import io
import json
import math
import time

import numpy as np
import pytest

from survkit import simulator as sim
from survkit.aft import (AftDistribution, AftFit, acceleration_factors, aft_fit, aft_loglik,
                         compare_aic, fit_all)
from survkit.cli import run
from survkit.cohort import Cohort, CovariateSchema
from survkit.cox_ph import cox_fit, ph_test
from survkit.curve_grouping import group_curves
from survkit.kaplan_meier import km_fit, survival_at
from survkit.rank_tests import LOGRANK, PETOPETO, WeightSpec, bh_adjust, chi2_pvalue, logrank_arrays

from .conftest import continuous_cohort

BINARY = CovariateSchema.build({"g": ["0", "1"]})


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.1f}s (limit {self.limit}s)"


# -- 1 ----------------------------------------------------------------------

def _product_formula(times, events):
    s, out = 1.0, {}
    for t in sorted({t for t, e in zip(times, events) if e}):
        n = sum(u >= t for u in times)
        d = sum(u == t and e for u, e in zip(times, events))
        s *= 1 - d / n
        out[t] = s
    return out


@pytest.mark.criterion(1, "KM oracle equivalence")
def test_km_oracle_equivalence():
    rng = np.random.default_rng(101)
    plain = CovariateSchema()
    with Clock(5):
        for _ in range(200):
            n = int(rng.integers(1, 13))
            t = rng.integers(0, 6, n).astype(float)
            e = (rng.random(n) < 0.6).astype(int)
            curve = km_fit(Cohort(plain, t, e))
            oracle = _product_formula(list(t), list(e))
            assert curve.time.tolist() == list(oracle)
            assert np.max(np.abs(curve.survival - list(oracle.values())), initial=0) <= 1e-12

            full = km_fit(Cohort(plain, t, np.ones(n, dtype=int)))
            for u in np.arange(0, 7, 0.5):
                assert survival_at(full, u) == np.mean(t > u)


# -- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2, "chi-square tail reproduction")
def test_chi_square_tail():
    assert chi2_pvalue(110, 2) < 2e-16
    assert abs(chi2_pvalue(8.8, 7) - 0.267) <= 0.005


# -- 3 ----------------------------------------------------------------------

@pytest.mark.criterion(3, "weighted log-rank calibration")
def test_logrank_calibration():
    rng = np.random.default_rng(303)
    horizon = -math.log(0.2)  # unit exponential: 20% censored at the horizon
    g = np.repeat([0, 1], 100)
    rejections = {"logrank": 0, "peto": 0}
    fh00 = WeightSpec("fleming-harrington", 0, 0)
    with Clock(60):
        for _ in range(1000):
            latent = rng.exponential(size=200)
            e = (latent <= horizon).astype(int)
            t = np.minimum(latent, horizon)
            lr = logrank_arrays(t, e, g, 2, LOGRANK)
            rejections["logrank"] += lr[2] < 0.05
            rejections["peto"] += logrank_arrays(t, e, g, 2, PETOPETO)[2] < 0.05
            assert logrank_arrays(t, e, g, 2, fh00) == lr
    for name, r in rejections.items():
        assert 0.03 <= r / 1000 <= 0.07, (name, r)


# -- 4 ----------------------------------------------------------------------

@pytest.mark.criterion(4, "BH arithmetic")
def test_bh_arithmetic():
    assert np.allclose(bh_adjust([0.01, 0.02, 0.04]), [0.03, 0.03, 0.04], rtol=0, atol=1e-15)
    rng = np.random.default_rng(404)
    for _ in range(1000):
        p = rng.random(int(rng.integers(1, 40))) ** rng.uniform(0.2, 4)
        adj = bh_adjust(p)
        assert np.all(adj >= p)
        order = np.argsort(p, kind="stable")
        assert np.all(np.diff(adj[order]) >= 0)


# -- 5 ----------------------------------------------------------------------

def _grid_pl(times, events, x, grid):
    out = np.zeros_like(grid)
    for t, d, xi in zip(times, events, x):
        if d:
            risk = x[times >= t]
            out += grid * xi - np.log(np.exp(np.outer(grid, risk)).sum(axis=1))
    return out


@pytest.mark.criterion(5, "Cox oracle")
def test_cox_oracle():
    rng = np.random.default_rng(505)
    grid = np.arange(-10, 10, 1e-4)
    with Clock(30):
        checked = 0
        while checked < 100:
            n = int(rng.integers(3, 9))
            t = rng.permutation(n).astype(float) + 1
            e = (rng.random(n) < 0.8).astype(int)
            x = rng.normal(size=n)
            if e.sum() == 0:
                continue
            k = int(np.argmax(_grid_pl(t, e, x, grid)))
            if k in (0, grid.size - 1):  # unbounded maximum: not a grid case
                continue
            fit = cox_fit(continuous_cohort(t, e, x), ["x"])
            assert abs(fit.beta[0] - grid[k]) <= 1e-4
            checked += 1
        fit = cox_fit(continuous_cohort([1, 2, 3], [1, 1, 1], [0, 1, 0]), ["x"])
        assert abs(fit.beta[0] - math.log(math.sqrt(2))) <= 1e-4


# -- 6 ----------------------------------------------------------------------

def _ph_true(rng, n=300):
    g = rng.integers(0, 2, n)
    latent = np.exp(0.5 * g + 0.7 * np.log(-np.log(rng.random(n))))  # Weibull PH model
    cens = rng.exponential(3.0, n)
    return Cohort(BINARY, np.minimum(latent, cens), (latent <= cens).astype(int), {"g": g})


def _sign_reversing(rng, n=300, ratio=3.0):
    # hazard ratio `ratio` before log 2, 1/ratio after
    g = rng.integers(0, 2, n)
    e0 = rng.exponential(size=n)
    cut = math.log(2)
    latent = np.where(g == 0, e0, np.where(e0 < ratio * cut, e0 / ratio,
                                          cut + (e0 - ratio * cut) * ratio))
    cens = rng.exponential(10.0, n)
    return Cohort(BINARY, np.minimum(latent, cens), (latent <= cens).astype(int), {"g": g})


@pytest.mark.criterion(6, "Grambsch-Therneau calibration and power")
def test_ph_diagnostic_calibration():
    rng = np.random.default_rng(606)
    with Clock(300):
        size = 0
        for _ in range(500):
            c = _ph_true(rng)
            size += ph_test(cox_fit(c, ["g"]), c).global_p < 0.05
        power = 0
        for _ in range(200):
            c = _sign_reversing(rng)
            power += ph_test(cox_fit(c, ["g"]), c).global_p < 0.01
    assert 0.03 <= size / 500 <= 0.08, size
    assert power / 200 >= 0.90, power


# -- 7 ----------------------------------------------------------------------

def _binary_config(seed, n, dist, sigma, beta=0.5):
    return sim.SimConfig(n=n, seed=seed, distribution=dist, mu=1.0, sigma=sigma,
                         categorical=(sim.CategoricalSpec("x", ("0", "1"), (0.5, 0.5),
                                                          (0.0, beta)),),
                         censor_fraction=0.2)


@pytest.mark.criterion(7, "AFT exactness and recovery")
def test_aft_exactness_and_recovery():
    with Clock(300):
        c = Cohort(CovariateSchema(), [1.0, 2.0, 3.0], [1, 1, 1])
        fit = aft_fit(c, [], AftDistribution.EXPONENTIAL)
        assert abs(fit.intercept - math.log(2)) <= 1e-6
        assert abs(fit.loglik - (-3 * math.log(2) - 3)) <= 1e-6
        assert abs(fit.loglik + 5.0794) <= 1e-4 and abs(fit.aic - 12.159) <= 1e-3
        assert abs(fit.aic - (6 * math.log(2) + 8)) <= 1e-6

        # analytic gradient against central differences
        rng = np.random.default_rng(707)
        for law in ("extreme", "logistic", "normal"):
            for _ in range(20):
                n = int(rng.integers(5, 30))
                X = rng.normal(size=(n, 2))
                lt = rng.normal(size=n)
                ev = (rng.random(n) < 0.6).astype(int)
                theta = rng.normal(scale=0.5, size=4)
                _, grad, _ = aft_loglik(theta, lt, ev, X, law)
                fd = np.array([(aft_loglik(theta + h, lt, ev, X, law)[0]
                                - aft_loglik(theta - h, lt, ev, X, law)[0]) / 2e-6
                               for h in np.eye(4) * 1e-6])
                assert np.linalg.norm(grad - fd) / np.linalg.norm(grad) < 1e-5

        base = sim.simulate_cohort(_binary_config(1, 300, "weibull", 0.6))
        for dist in AftDistribution:
            a = aft_fit(base, ["x"], dist)
            b = aft_fit(base.with_durations(base.durations * 4.0), ["x"], dist)
            assert abs(b.intercept - a.intercept - math.log(4.0)) <= 1e-6
            assert np.max(np.abs(a.coef - b.coef)) <= 1e-6 and abs(a.scale - b.scale) <= 1e-6

        for dist, sigma in ((AftDistribution.EXPONENTIAL, 1.0), (AftDistribution.RAYLEIGH, 0.5)):
            ref = aft_fit(base, ["x"], dist)
            con = aft_fit(base, ["x"], AftDistribution.WEIBULL, scale=sigma)
            assert abs(ref.loglik - con.loglik) <= 1e-8
            assert np.max(np.abs(ref.coef - con.coef)) <= 1e-8

        hits = 0
        for seed in range(200):
            c = sim.simulate_cohort(_binary_config(seed, 2000, "loglogistic", 0.4))
            f = aft_fit(c, ["x"], AftDistribution.LOGLOGISTIC)
            hits += abs(f.coef[0] - 0.5) <= 3 * f.se[1]
    assert hits >= 190, hits


# -- 8 ----------------------------------------------------------------------

@pytest.mark.criterion(8, "AIC selection")
def test_aic_selects_generating_law():
    wins = 0
    with Clock(300):
        for seed in range(100):
            c = sim.simulate_cohort(_binary_config(1000 + seed, 1000, "lognormal", 0.8))
            wins += compare_aic(fit_all(c, ["x"]))[0].distribution is AftDistribution.LOGNORMAL
    assert wins >= 90, wins


# -- 9 ----------------------------------------------------------------------

@pytest.mark.criterion(9, "acceleration-factor arithmetic")
def test_acceleration_factor_arithmetic():
    fit = AftFit(AftDistribution.LOGLOGISTIC, 0.0, np.array([1.090, 0.0]), ["a", "b"], 1.0,
                 False, np.eye(4), -1.0, 10, 5)
    af = acceleration_factors(fit)
    assert abs(af["a"] - 2.97) <= 0.01
    assert af["b"] == 1.0


# -- 10 ---------------------------------------------------------------------

@pytest.mark.criterion(10, "grouping recovery")
def test_grouping_recovery():
    truth = [["a", "b"], ["c", "d"], ["e", "f"]]
    recovered = single = 0
    with Clock(120):
        for seed in range(100):
            cfg = sim.SimConfig(
                n=900, seed=seed, distribution="exponential",
                categorical=(sim.CategoricalSpec(
                    "lv", tuple("abcdef"), (1 / 6,) * 6,
                    (0, 0, math.log(3), math.log(3), math.log(9), math.log(9))),))
            res = group_curves(sim.simulate_cohort(cfg), "lv")
            recovered += sorted(sorted(g.levels) for g in res.groups) == truth
            cfg = sim.SimConfig(n=900, seed=10 ** 6 + seed, distribution="exponential",
                                censor_fraction=0.2,
                                categorical=(sim.CategoricalSpec("lv", tuple("abc"),
                                                                 (1 / 3,) * 3),))
            single += group_curves(sim.simulate_cohort(cfg), "lv").n_groups == 1
    assert recovered >= 80, recovered
    assert single >= 90, single


# -- 11 ---------------------------------------------------------------------

MODEL_VARS = "form,strategy,profit,netbirths,stock1,stock2"
SCREEN_VARS = "form,strategy,profit,mcost,netbirths,netdeaths,nodebirths,nodedeaths,stock1,stock2,stock3"
CONTINUOUS = ["profit", "mcost", "netbirths", "netdeaths", "nodebirths", "nodedeaths",
              "stock1", "stock2", "stock3"]


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    assert code == 0, err.getvalue()
    return out.getvalue()


def _body(table):
    """Data rows of the last rule-delimited block of a rendered table."""
    lines = table.rstrip("\n").splitlines()
    rules = [i for i, line in enumerate(lines) if set(line.replace(" ", "")) == {"-"}]
    return lines[rules[-2] + 1:rules[-1]]


@pytest.mark.criterion(11, "end-to-end paper-shaped run")
def test_end_to_end_paper_shaped(tmp_path):
    path = str(tmp_path / "cohort.csv")
    with Clock(30):
        _cli("simulate", "--preset", "paper", "--seed", "2024", "--n", "500", "--out", path)
        summary = json.loads(_cli("summarize", "-i", path, "-f", "json"))
        table1 = _cli("summarize", "-i", path)
        km = json.loads(_cli("km", "-i", path, "--by", "form", "-f", "json"))
        table3 = _cli("km", "-i", path, "--by", "strategy")
        tests = json.loads(_cli("test", "-i", path, "--by", "form", "--by", "strategy",
                                "--weight", "logrank", "--weight", "peto", "-f", "json"))
        table4 = _cli("test", "-i", path, "--by", "form", "--by", "strategy")
        table5 = _cli("pairwise", "-i", path, "--by", "strategy")
        ph = json.loads(_cli("phtest", "-i", path, "--vars", MODEL_VARS, "-f", "json"))
        table7 = _cli("aft", "-i", path, "--vars", MODEL_VARS, "--screen", SCREEN_VARS)
        table6 = _cli("compare", "-i", path, "--vars", MODEL_VARS)
        group = json.loads(_cli("group", "-i", path, "--by", "strategy", "-f", "json"))

    assert summary["n"] == 500
    assert abs(summary["censored_percent"] - 24.4) <= 5

    # level table: status, form and strategy blocks with counts, percents and censoring
    for label in ("0 - alive", "1 - dead", "form", "strategy"):
        assert label in table1
    rows = {line.split()[0] for line in table1.splitlines() if line.startswith("  ")}
    assert set("ABCDEFGH") | {"1", "2", "3"} <= rows
    for name in ["age"] + CONTINUOUS:
        assert any(line.startswith(name + " ") for line in table1.splitlines())

    # survival-at-times table: a row per level, one column per reporting time plus the median
    assert [c["level"] for c in km["curves"]] == ["1", "2", "3"]
    assert all([s["time"] for s in c["survival_at"]] == [1, 3, 5, 10, 15] for c in km["curves"])
    body = _body(table3)
    assert [r.split()[0] for r in body] == list("ABCDEFGH")
    assert all(len(r.split()) == 7 for r in body)

    # curve-comparison tests: form and strategy under two weights with df 2 and 7
    assert [(d["df"], d["weight"]) for d in tests] == [
        (2, "logrank"), (2, "petopeto"), (7, "logrank"), (7, "petopeto")]
    assert [r.split()[0] for r in _body(table4)] == ["form", "strategy"]

    # pairwise matrix: lower triangle of the 8 strategies
    body = _body(table5)
    assert [r.split()[0] for r in body] == list("BCDEFGH")
    assert all(len(r.split()) == 8 for r in body)

    # AIC table: one row per distribution
    labels = [r.split("  ")[0] for r in _body(table6)]
    assert sorted(labels) == sorted(d.label for d in AftDistribution)

    # regression table: intercept, level rows for both factors, every scale variable
    body = _body(table7.rsplit("\n", 2)[0] + "\n")
    first = [r.split()[0] for r in body]
    assert first == (["Intercept", "form", "1", "2", "3", "strategy"] + list("ABCDEFGH")
                     + CONTINUOUS)
    assert "Simple regression" in table7 and "Multiple regression" in table7

    assert ph["global"]["df"] == 13
    assert 1 <= group["G"] <= 8
