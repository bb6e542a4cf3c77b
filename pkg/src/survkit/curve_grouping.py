"""Grouping the level-wise survival curves of a categorical covariate.

Levels are ordered by restricted mean survival time and partitioned into
contiguous blocks.  For each number of groups the partition minimizing the
summed within-group k-sample statistics is found by dynamic programming; the
smallest number of groups whose within-group tests are all non-significant
after Benjamini-Hochberg adjustment is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .errors import DataError, UsageError
from .kaplan_meier import _km_arrays, rmst
from .rank_tests import PETOPETO, WeightSpec, bh_adjust, logrank_arrays


@dataclass(frozen=True)
class Group:
    index: int
    levels: tuple[str, ...]
    within_p: float  # raw k-sample p-value (1 for a single level)
    adjusted_p: float
    mean_rmst: float


@dataclass(frozen=True)
class GroupAssignment:
    groups: tuple[Group, ...]
    homogeneous: bool
    weight: WeightSpec
    alpha: float
    tau: float
    rmst: dict[str, float]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def assignment(self) -> dict[str, int]:
        return {lv: g.index for g in self.groups for lv in g.levels}

    def to_dict(self) -> dict:
        return {"G": self.n_groups,
                "groups": [{"index": g.index, "levels": list(g.levels), "within_p": g.within_p,
                            "adjusted_p": g.adjusted_p} for g in self.groups],
                "homogeneous": self.homogeneous, "weight": str(self.weight),
                "alpha": self.alpha}


def group_curves(cohort: Cohort, variable: str, weight: WeightSpec = PETOPETO,
                 alpha: float = 0.05, max_groups: int | None = None) -> GroupAssignment:
    """Partition the levels of `variable` into groups of similar survival.

    Parameters
    ----------
    weight : WeightSpec
        Test used for within-group homogeneity (Peto-Peto by default).
    alpha : float
        Level for the BH-adjusted within-group tests.
    max_groups : int, optional
        Upper bound on the number of groups (defaults to the number of levels).
        When no partition with at most `max_groups` groups is homogeneous the
        best `max_groups` partition is returned with ``homogeneous=False``.
    """
    levels, codes = cohort.categorical(variable)
    present = [j for j in range(len(levels)) if np.any(codes == j)]
    K = len(present)
    if K < 2:
        raise UsageError(f"{variable!r} needs at least two non-empty levels to group")
    if not 0 < alpha < 1:
        raise UsageError("alpha must lie in (0, 1)")
    if max_groups is None:
        max_groups = K
    if not 1 <= max_groups <= K:
        raise UsageError(f"max_groups must lie in [1, {K}]")
    if cohort.n_events == 0:
        raise DataError("no events in cohort: curves cannot be compared")

    t, e = cohort.durations, cohort.events
    curves = {j: _km_arrays(t[codes == j], e[codes == j]) for j in present}
    # horizon: last event time reached by every level
    tau = float(min(c.time[-1] for c in curves.values() if len(c)))
    area = {j: rmst(curves[j], tau) for j in present}
    order = sorted(present, key=lambda j: (area[j], j))

    # within-block statistics for all contiguous blocks of the ordered levels
    stat = np.zeros((K, K))
    pval = np.ones((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            block = order[i:j + 1]
            mask = np.isin(codes, block)
            sub_e = e[mask]
            if not np.any(sub_e == 1):
                continue
            remap = np.searchsorted(np.array(sorted(block)), codes[mask])
            s, _, p = logrank_arrays(t[mask], sub_e, remap, len(block), weight)
            stat[i, j], pval[i, j] = s, p

    chosen = None
    partition = None
    for G in range(1, max_groups + 1):
        partition = _best_partition(stat, K, G)
        ps = [pval[a, b] for a, b in partition]
        adj = bh_adjust(ps)
        if np.all(adj >= alpha):
            chosen = (partition, ps, adj, True)
            break
    if chosen is None:
        ps = [pval[a, b] for a, b in partition]
        chosen = (partition, ps, bh_adjust(ps), False)

    partition, ps, adj, ok = chosen
    groups = []
    for idx, ((a, b), p, q) in enumerate(zip(partition, ps, adj), start=1):
        block = order[a:b + 1]
        groups.append(Group(idx, tuple(levels[j] for j in block), float(p), float(q),
                            float(np.mean([area[j] for j in block]))))
    return GroupAssignment(tuple(groups), ok, weight, alpha, tau,
                           {levels[j]: area[j] for j in present})


def _best_partition(stat, K, G):
    """Contiguous partition of 0..K-1 into G blocks minimizing the summed block statistic."""
    inf = np.inf
    cost = np.full((G + 1, K + 1), inf)
    back = np.zeros((G + 1, K + 1), dtype=int)
    cost[0, 0] = 0.0
    for g in range(1, G + 1):
        for end in range(g, K + 1):
            # last block is start..end-1
            for start in range(g - 1, end):
                c = cost[g - 1, start] + stat[start, end - 1]
                if c < cost[g, end] - 1e-12:
                    cost[g, end] = c
                    back[g, end] = start
    blocks = []
    end = K
    for g in range(G, 0, -1):
        start = back[g, end]
        blocks.append((start, end - 1))
        end = start
    return blocks[::-1]
