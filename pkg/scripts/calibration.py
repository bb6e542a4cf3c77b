"""Monte Carlo operating characteristics of the tests and estimators.

Prints rejection / recovery rates for the rank tests, the proportional-hazards
diagnostic, AFT coefficient coverage, AIC selection and curve grouping.

    python3 scripts/calibration.py --reps 1000
"""

import argparse
import math
import time

import numpy as np

from survkit import simulator as sim
from survkit.aft import AftDistribution, aft_fit, compare_aic, fit_all
from survkit.cohort import Cohort, CovariateSchema
from survkit.cox_ph import cox_fit, ph_test
from survkit.curve_grouping import group_curves
from survkit.rank_tests import LOGRANK, PETOPETO, logrank_arrays

BINARY = CovariateSchema.build({"g": ["0", "1"]})


def rank_test_size(reps, rng):
    horizon = -math.log(0.2)
    g = np.repeat([0, 1], 100)
    hits = np.zeros(2)
    for _ in range(reps):
        latent = rng.exponential(size=200)
        t, e = np.minimum(latent, horizon), (latent <= horizon).astype(int)
        hits += [logrank_arrays(t, e, g, 2, w)[2] < 0.05 for w in (LOGRANK, PETOPETO)]
    return {"logrank": hits[0] / reps, "petopeto": hits[1] / reps}


def ph_size_and_power(reps, rng, ratio=3.0, censor_mean=10.0):
    size = power = 0
    for _ in range(reps):
        g = rng.integers(0, 2, 300)
        latent = np.exp(0.5 * g + 0.7 * np.log(-np.log(rng.random(300))))
        cens = rng.exponential(3.0, 300)
        c = Cohort(BINARY, np.minimum(latent, cens), (latent <= cens).astype(int), {"g": g})
        size += ph_test(cox_fit(c, ["g"]), c).global_p < 0.05

        g = rng.integers(0, 2, 300)
        e0 = rng.exponential(size=300)
        cut = math.log(2)
        latent = np.where(g == 0, e0, np.where(e0 < ratio * cut, e0 / ratio,
                                              cut + (e0 - ratio * cut) * ratio))
        cens = rng.exponential(censor_mean, 300)
        c = Cohort(BINARY, np.minimum(latent, cens), (latent <= cens).astype(int), {"g": g})
        power += ph_test(cox_fit(c, ["g"]), c).global_p < 0.01
    return {"size@0.05": size / reps, "power@0.01": power / reps}


def binary_config(seed, n, dist, sigma, beta=0.5):
    return sim.SimConfig(n=n, seed=seed, distribution=dist, mu=1.0, sigma=sigma,
                         categorical=(sim.CategoricalSpec("x", ("0", "1"), (0.5, 0.5),
                                                          (0.0, beta)),),
                         censor_fraction=0.2)


def aft_coverage(reps):
    hits = 0
    for seed in range(reps):
        c = sim.simulate_cohort(binary_config(seed, 2000, "loglogistic", 0.4))
        f = aft_fit(c, ["x"], AftDistribution.LOGLOGISTIC)
        hits += abs(f.coef[0] - 0.5) <= 3 * f.se[1]
    return {"coverage(3se)": hits / reps}


def aic_selection(reps):
    wins = {d.label: 0 for d in AftDistribution}
    for seed in range(reps):
        c = sim.simulate_cohort(binary_config(1000 + seed, 1000, "lognormal", 0.8))
        wins[compare_aic(fit_all(c, ["x"]))[0].distribution.label] += 1
    return wins


def grouping(reps):
    truth = [["a", "b"], ["c", "d"], ["e", "f"]]
    log3, log9 = math.log(3), math.log(9)
    rec = single = 0
    for seed in range(reps):
        cfg = sim.SimConfig(n=900, seed=seed, distribution="exponential",
                            categorical=(sim.CategoricalSpec(
                                "lv", tuple("abcdef"), (1 / 6,) * 6,
                                (0, 0, log3, log3, log9, log9)),))
        res = group_curves(sim.simulate_cohort(cfg), "lv")
        rec += sorted(sorted(g.levels) for g in res.groups) == truth
        cfg = sim.SimConfig(n=900, seed=10 ** 6 + seed, distribution="exponential",
                            censor_fraction=0.2,
                            categorical=(sim.CategoricalSpec("lv", tuple("abc"), (1 / 3,) * 3),))
        single += group_curves(sim.simulate_cohort(cfg), "lv").n_groups == 1
    return {"recovered": rec / reps, "G=1 under null": single / reps}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    experiments = [("rank-test size", lambda: rank_test_size(args.reps, rng)),
                   ("PH diagnostic", lambda: ph_size_and_power(args.reps, rng)),
                   ("AFT coverage", lambda: aft_coverage(args.reps)),
                   ("AIC selection", lambda: aic_selection(args.reps)),
                   ("curve grouping", lambda: grouping(args.reps))]
    for name, fn in experiments:
        t0 = time.perf_counter()
        res = fn()
        body = ", ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in res.items())
        print(f"{name:<16} {body}  ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
