"""Command-line entry point: ``survkit <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model/convergence error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import aft as aft_mod
from . import cohort as cohort_mod
from . import kaplan_meier as km_mod
from . import simulator
from .cox_ph import cox_fit, ph_test
from .curve_grouping import group_curves
from .errors import DataError, SurvkitError, UsageError
from .rank_tests import WeightSpec, pairwise_tests, weighted_logrank
from .report import dumps, fmt_num, fmt_p, render

DEFAULT_TIMES = (1.0, 3.0, 5.0, 10.0, 15.0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_usage().strip()}")


def _csv_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _float_list(text):
    try:
        return [float(v) for v in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _weight(text):
    try:
        return WeightSpec.parse(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _dist(text):
    try:
        return aft_mod.AftDistribution.parse(text)
    except UsageError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _probability(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survkit", description="Censored time-to-event analysis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_cmd(name, help_, formats=("table", "json")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--input", "-i", required=True, help="cohort CSV ('-' for stdin)")
        p.add_argument("--duration-col", default=cohort_mod.PAPER_DURATION)
        p.add_argument("--event-col", default=cohort_mod.PAPER_EVENT)
        p.add_argument("--categorical", type=_csv_list, default=None,
                       help="comma-separated categorical columns (default: form,strategy)")
        p.add_argument("--format", "-f", choices=formats, default="table")
        p.add_argument("--output", "-o", default=None, help="output file (default stdout)")
        return p

    data_cmd("summarize", "level counts, censoring and mean/SD per variable")

    p = data_cmd("km", "Kaplan-Meier curves, survival at fixed times, medians",
                 ("table", "json", "csv"))
    p.add_argument("--by", default=None, help="categorical variable to stratify on")
    p.add_argument("--times", type=_float_list, default=list(DEFAULT_TIMES))
    p.add_argument("--conf-type", choices=("log-log", "linear"), default="log-log")
    p.add_argument("--plot-data", default=None, help="write the step-function CSV here")

    p = data_cmd("test", "k-sample weighted log-rank tests")
    p.add_argument("--by", action="append", required=True)
    p.add_argument("--weight", type=_weight, action="append", default=None,
                   help="logrank, gehan, peto or fh:RHO,GAMMA (repeatable)")

    p = data_cmd("pairwise", "BH-adjusted pairwise tests", ("table", "json", "csv"))
    p.add_argument("--by", required=True)
    p.add_argument("--weight", type=_weight, default=WeightSpec("petopeto"))

    p = data_cmd("phtest", "Cox fit and Grambsch-Therneau proportional-hazards test")
    p.add_argument("--vars", type=_csv_list, default=None)
    p.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    p.add_argument("--transform", choices=("km", "identity", "rank", "log"), default="km")

    p = data_cmd("aft", "accelerated failure time regression")
    p.add_argument("--vars", type=_csv_list, default=None)
    p.add_argument("--dist", type=_dist, default=aft_mod.AftDistribution.LOGLOGISTIC)
    p.add_argument("--screen", type=_csv_list, default=None,
                   help="variables for univariable (simple regression) columns")

    p = data_cmd("compare", "AIC comparison of AFT distributions", ("table", "json", "csv"))
    p.add_argument("--vars", type=_csv_list, default=None)
    p.add_argument("--dists", type=lambda s: [_dist(v) for v in _csv_list(s)],
                   default=list(aft_mod.ALL_DISTRIBUTIONS))

    p = data_cmd("group", "group the survival curves of a categorical variable",
                 ("table", "json", "csv"))
    p.add_argument("--by", required=True)
    p.add_argument("--weight", type=_weight, default=WeightSpec("petopeto"))
    p.add_argument("--alpha", type=_probability, default=0.05)
    p.add_argument("--max-groups", type=int, default=None)

    p = sub.add_parser("simulate", help="generate a synthetic cohort CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=("paper",))
    src.add_argument("--config", help="key-value simulation config file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--out", "--output", "-o", dest="output", default=None)
    p.add_argument("--dump-config", default=None, help="also write the effective config")
    return parser


# ---------------------------------------------------------------------------


def _load(args):
    source = sys.stdin.buffer if args.input == "-" else args.input
    try:
        return cohort_mod.load_csv(source, args.duration_col, args.event_col,
                                   categorical=args.categorical)
    except FileNotFoundError:
        raise DataError(f"{args.input}: no such file") from None
    except DataError as exc:
        raise DataError(f"{args.input}: {exc}") from None


def _variables(args, cohort):
    names = args.vars if args.vars is not None else cohort.schema.names
    for name in names:
        cohort.schema[name]
    return names


def cmd_summarize(args, cohort):
    rep = cohort_mod.summarize(cohort, args.duration_col)
    if args.format == "json":
        return dumps({
            "n": rep.n, "events": rep.n_events, "censored": rep.n_censored,
            "censored_percent": rep.censored_percent,
            "categorical": [{"name": name, "levels": [
                {"level": r.level, "count": r.count, "percent": r.percent,
                 "censored": r.censored, "censored_percent": r.censored_percent}
                for r in rows]} for name, rows in rep.categorical.items()],
            "continuous": [{"name": c.name, "mean": c.mean, "sd": c.sd}
                           for c in rep.continuous]})
    rows = [[f"Final status ({args.event_col})", "", ""],
            ["  0 - alive", f"{rep.n_censored} ({rep.censored_percent:.1f})", ""],
            ["  1 - dead", f"{rep.n_events} ({100 - rep.censored_percent:.1f})", ""]]
    for name, levels in rep.categorical.items():
        rows.append([f"{name}", "", ""])
        for r in levels:
            rows.append([f"  {r.level}", f"{r.count} ({r.percent:.1f})",
                         f"{r.censored} ({r.censored_percent:.1f})" if r.count else "-"])
    out = render([["Categorical variables", "N (%)", "Censored (%)"]], rows,
                 "Distribution of the categorical variables")
    crow = [[c.name, f"{fmt_num(c.mean)} ({fmt_num(c.sd)})"] for c in rep.continuous]
    out += "\n" + render([["Variable", "Mean (SD)"]], crow,
                         "Mean and standard deviation for the scale variables")
    return out


def cmd_km(args, cohort):
    times = args.times
    if any(t < 0 for t in times):
        raise UsageError("--times must be >= 0")
    if args.by:
        curves = km_mod.km_stratified(cohort, args.by, conf_type=args.conf_type)
    else:
        curves = {"all": km_mod.km_fit(cohort, conf_type=args.conf_type)}
    if args.plot_data:
        with open(args.plot_data, "w", newline="", encoding="utf-8") as fh:
            km_mod.write_curves_csv(curves if args.by else curves["all"], fh)
    if args.format == "csv":
        buf = io.StringIO()
        km_mod.write_curves_csv(curves if args.by else curves["all"], buf)
        return buf.getvalue()
    if args.format == "json":
        out = []
        for level, c in curves.items():
            s = km_mod.survival_table(c, times)
            out.append({"level": level, "n": c.n_total, "events": c.n_events,
                        "median": km_mod.median(c),
                        "survival_at": [{"time": t, "survival": v} for t, v in zip(times, s)],
                        "steps": [dict(zip(km_mod.CURVE_COLUMNS, r))
                                  for r in km_mod.curve_rows(c)]})
        return dumps({"variable": args.by, "curves": out})
    header = [[args.by or ""] + [fmt_num(t) for t in times] + ["median"]]
    rows = []
    for level, c in curves.items():
        s = km_mod.survival_table(c, times)
        rows.append([level] + ["-" if np.isnan(v) else f"{v:.3f}" for v in s]
                    + [fmt_num(km_mod.median(c))])
    return render(header, rows, "Survival estimates at selected times")


def cmd_test(args, cohort):
    weights = args.weight or [WeightSpec("logrank"), WeightSpec("petopeto")]
    results = [[weighted_logrank(cohort, var, w) for w in weights] for var in args.by]
    if args.format == "json":
        flat = [r.to_dict() for row in results for r in row]
        return dumps(flat[0] if len(flat) == 1 else flat)
    header = [["Variable"] + [x for w in weights for x in (str(w), "")],
              [""] + ["X2(df)", "p-value"] * len(weights)]
    rows = []
    for var, row in zip(args.by, results):
        cells = [var]
        for r in row:
            cells += [f"{fmt_num(r.chi_square)} ({r.df})", fmt_p(r.p_value)]
        rows.append(cells)
    return render(header, rows, "Tests for comparison of survival curves")


def cmd_pairwise(args, cohort):
    pm = pairwise_tests(cohort, args.by, args.weight)
    levels = list(pm.levels)
    if args.format == "json":
        return dumps({"variable": args.by, "weight": str(pm.weight), "levels": levels,
                      "n_comparisons": pm.n_comparisons, "raw": pm.raw,
                      "adjusted": pm.adjusted})
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + levels)
        for i, lv in enumerate(levels):
            w.writerow([lv] + ["" if i == j else repr(float(pm.adjusted[i, j]))
                               for j in range(len(levels))])
        return buf.getvalue()
    rows = []
    for i in range(1, len(levels)):
        rows.append([levels[i]] + [f"{pm.adjusted[i, j]:.3f}" if j < i else "-"
                                   for j in range(len(levels) - 1)])
    return render([[""] + levels[:-1]], rows,
                  f"BH-adjusted pairwise p-values ({pm.weight}, "
                  f"{pm.n_comparisons} comparisons)")


def cmd_phtest(args, cohort):
    names = _variables(args, cohort)
    fit = cox_fit(cohort, names, args.ties)
    res = ph_test(fit, cohort, args.transform)
    if args.format == "json":
        d = res.to_dict()
        d["cox"] = fit.to_dict()
        return dumps(d)
    rows = [[c.name, fmt_num(c.chi_square), str(c.df), fmt_p(c.p_value)] for c in res.columns]
    rows.append(["GLOBAL", fmt_num(res.global_chi_square), str(res.global_df),
                 fmt_p(res.global_p)])
    out = render([["Column", "chisq", "df", "p"]], rows,
                 f"Proportional-hazards test (transform={res.transform})")
    crow = [[n, fmt_num(b), fmt_num(s), fmt_num(z), fmt_p(p)] for n, b, s, z, p in
            zip(fit.names, fit.beta, fit.se, fit.z, fit.p_values)]
    out += "\n" + render([["Covariate", "beta", "se", "z", "p"]], crow,
                         f"Cox model (ties={fit.ties}, loglik={fmt_num(fit.loglik)})")
    return out


def _coef_lookup(names, betas, ps):
    return {n: (b, p) for n, b, p in zip(names, betas, ps)}


def cmd_aft(args, cohort):
    names = _variables(args, cohort)
    for name in args.screen or []:
        cohort.schema[name]
    fit = aft_mod.aft_fit(cohort, names, args.dist)
    screen = aft_mod.univariable_screen(cohort, args.screen, args.dist) if args.screen else []
    if args.format == "json":
        d = fit.to_dict()
        if screen:
            d["univariable"] = [
                {"variable": r.variable, "error": r.error, "lr_statistic": r.lr_statistic,
                 "lr_df": r.lr_df, "lr_p": r.lr_p,
                 "terms": [{"name": t.name, "beta": t.beta, "se": t.se, "p": t.p_value}
                           for t in r.terms]} for r in screen]
        return dumps(d)

    multiple = _coef_lookup(fit.names, fit.coef, fit.p_values[1:])
    simple = {}
    for r in screen:
        for t in r.terms:
            simple[t.name] = (t.beta, t.p_value)
    order = [c.name for c in cohort.schema if c.name in set(names) | set(args.screen or [])]
    header = [["Covariable", "Simple regression", "", "Multiple regression", ""],
              ["", "beta", "P-value", "beta", "P-value"]]
    rows = [["Intercept", "-", "-", fmt_num(fit.intercept), fmt_p(fit.p_values[0])]]

    def cells(key, table):
        if key in table:
            return [fmt_num(table[key][0]), fmt_p(table[key][1])]
        return ["", ""]

    for var in order:
        cov = cohort.schema[var]
        if cov.is_categorical:
            rows.append([var, "", "", "", ""])
            # reference level shown as "-" in whichever half includes the variable
            in_simple = any(k.startswith(var + "[") for k in simple)
            rows.append([f"  {cov.kind.levels[0]}"] + (["-", "-"] if in_simple else ["", ""])
                        + (["-", "-"] if var in names else ["", ""]))
            for lv in cov.kind.levels[1:]:
                key = f"{var}[{lv}]"
                rows.append([f"  {lv}"] + cells(key, simple) + cells(key, multiple))
        else:
            rows.append([var] + cells(var, simple) + cells(var, multiple))
    for r in screen:
        if r.error:
            rows.append([r.variable, "fit failed", "", "", ""])
    out = render(header, rows, f"{fit.distribution.label} survival regression")
    out += (f"scale = {fmt_num(fit.scale)}{' (fixed)' if fit.scale_fixed else ''}  "
            f"loglik = {fmt_num(fit.loglik)}  AIC = {fmt_num(fit.aic)}  "
            f"n = {fit.n}  events = {fit.n_events}\n")
    return out


def cmd_compare(args, cohort):
    names = _variables(args, cohort)
    fits = [aft_mod.aft_fit(cohort, names, d) for d in args.dists]
    table = aft_mod.compare_aic(fits)
    if args.format == "json":
        return dumps({"variables": names, "rows": [
            {"distribution": r.distribution.value, "loglik": r.loglik, "k": r.k,
             "aic": r.aic, "delta_aic": r.delta_aic} for r in table]})
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["distribution", "loglik", "k", "aic", "delta_aic"])
        for r in table:
            w.writerow([r.distribution.value, repr(r.loglik), r.k, repr(r.aic), repr(r.delta_aic)])
        return buf.getvalue()
    rows = [[r.distribution.label, f"{r.aic:.3f}", fmt_num(r.loglik), str(r.k),
             f"{r.delta_aic:.3f}"] for r in table]
    return render([["Parametric Survival Model", "AIC", "loglik", "k", "delta AIC"]], rows,
                  "Akaike's Information Criterion by survival distribution")


def cmd_group(args, cohort):
    ga = group_curves(cohort, args.by, args.weight, args.alpha, args.max_groups)
    if args.format == "json":
        return dumps(ga.to_dict())
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "group"])
        levels, _ = cohort.categorical(args.by)
        assign = ga.assignment
        for lv in levels:
            if lv in assign:
                w.writerow([lv, assign[lv]])
        return buf.getvalue()
    rows = [[f"Group {g.index}", ", ".join(g.levels), fmt_p(g.within_p), fmt_p(g.adjusted_p),
             fmt_num(g.mean_rmst)] for g in ga.groups]
    out = render([["Group", "Levels", "within p", "BH p", "mean RMST"]], rows,
                 f"Curve groups for {args.by} ({ga.weight}, alpha={fmt_num(ga.alpha)})")
    out += f"G = {ga.n_groups}  homogeneous = {'yes' if ga.homogeneous else 'no'}  " \
           f"RMST horizon = {fmt_num(ga.tau)}\n"
    return out


def cmd_simulate(args):
    if args.preset == "paper":
        config = simulator.paper_preset(seed=args.seed, n=args.n or 500)
    else:
        config = simulator.load_config(args.config, seed=args.seed, n=args.n)
    if args.dump_config:
        simulator.save_config(config, args.dump_config)
    cohort = simulator.simulate_cohort(config)
    buf = io.StringIO()
    cohort_mod.write_csv(cohort, buf)
    return buf.getvalue()


COMMANDS = {"summarize": cmd_summarize, "km": cmd_km, "test": cmd_test,
            "pairwise": cmd_pairwise, "phtest": cmd_phtest, "aft": cmd_aft,
            "compare": cmd_compare, "group": cmd_group}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "simulate":
            text = cmd_simulate(args)
        else:
            cohort = _load(args)
            text = COMMANDS[args.command](args, cohort)
        if args.output:
            with open(args.output, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except SurvkitError as exc:
        stderr.write(f"survkit: {type(exc).__name__}: {exc}\n")
        diag = getattr(exc, "diagnostics", None)
        if diag:
            stderr.write(f"diagnostics: {diag}\n")
        return exc.exit_code
    except OSError as exc:
        stderr.write(f"survkit: {exc}\n")
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
