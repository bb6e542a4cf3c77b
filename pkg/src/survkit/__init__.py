"""Censored time-to-event analysis: Kaplan-Meier, weighted log-rank tests,
Cox/Grambsch-Therneau diagnostics, curve grouping and AFT regression."""

from .aft import (AftDistribution, AftFit, acceleration_factors, aft_fit, compare_aic,
                  predict_survival, univariable_screen)
from .cohort import (Categorical, Cohort, Continuous, Covariate, CovariateSchema,
                     SurvivalRecord, load_csv, split_by_level, summarize, write_csv)
from .cox_ph import CoxFit, PhTestResult, cox_fit, ph_test, schoenfeld_residuals
from .curve_grouping import GroupAssignment, group_curves
from .errors import ConvergenceError, DataError, ModelError, SurvkitError, UsageError
from .kaplan_meier import SurvivalCurve, km_fit, km_stratified, median, quantile, survival_at
from .rank_tests import (PairwiseMatrix, RankTestResult, WeightSpec, bh_adjust,
                         pairwise_tests, weighted_logrank)
from .simulator import SimConfig, paper_preset, simulate_cohort

__version__ = "0.1.0"
