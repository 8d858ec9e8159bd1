"""Top-down structure learning over the one-hot representation.

The recursion mirrors LearnSPN: a single remaining variable group becomes a
leaf (smoothed multinomial for discrete groups, a polynomial-density leaf
for continuous ones); otherwise the groups are partitioned into
approximately independent subsets with a pairwise G-test (product node), and
when no partition exists the instances are clustered with online hard EM
(sum node weighted by cluster proportions).

Variable groups are atomic: a continuous feature's bin indicators always
travel together, so each feature resolves to exactly one leaf per branch and
its piecewise polynomial stays attached. A continuous leaf reuses the
feature's globally fitted piece shapes but re-estimates the per-bin masses
from its own instance slice; without that re-estimation continuous features
would be independent of everything else in the learned distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .binning import BinaryDataset
from .spn import IndicatorLeaf, PolyLeaf, ProductNode, Spn, SumNode


@dataclass(frozen=True)
class LearnParams:
    alpha: float = 0.05            # G-test significance for the independence split
    cluster_penalty: float = 0.8   # prior factor per added cluster, in (0, 1]
    min_slice: int = 10            # below this many rows, force a product of leaves
    pseudo_count: float = 1.0      # Laplace smoothing for leaf estimates
    seed: int = 0
    em_max_passes: int = 20

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.cluster_penalty <= 1.0:
            raise ValueError("cluster_penalty must lie in (0, 1]")
        if self.min_slice < 1:
            raise ValueError("min_slice must be at least 1")
        if self.pseudo_count <= 0.0:
            raise ValueError("pseudo_count must be positive")


@dataclass(frozen=True)
class VariableGroup:
    feature: int            # column index in the FeatureSchema
    kind: str               # "discrete" | "categorical" | "continuous"
    cardinality: int        # bin count or value count
    density: object = None  # PiecewisePoly for continuous groups

    @property
    def is_continuous(self):
        return self.kind == "continuous"


def variable_groups(binary: BinaryDataset, densities):
    """One VariableGroup per schema column; densities keyed by column index."""
    groups = []
    for j, col in enumerate(binary.spec.schema):
        size = binary.spec.group_size(j)
        if col.kind == "continuous":
            groups.append(VariableGroup(feature=j, kind=col.kind, cardinality=size,
                                        density=densities[j]))
        else:
            groups.append(VariableGroup(feature=j, kind=col.kind, cardinality=size))
    return groups


def g_statistic(codes_a, codes_b, card_a, card_b):
    """G = 2 * sum O * ln(O / E) over the joint contingency table."""
    table = np.zeros((card_a, card_b))
    np.add.at(table, (codes_a, codes_b), 1.0)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    rows, cols = table.shape
    if rows < 2 or cols < 2:
        return 0.0, 0
    expected = table.sum(axis=1, keepdims=True) * table.sum(axis=0, keepdims=True) / table.sum()
    nonzero = table > 0
    g = 2.0 * float(np.sum(table[nonzero] * np.log(table[nonzero] / expected[nonzero])))
    return g, (rows - 1) * (cols - 1)


def g_test_partition(codes, groups, alpha):
    """Connected components of the dependence graph, or None when everything
    lands in one component.

    An edge joins two groups when their G statistic exceeds the chi-square
    critical value at `alpha` with (r-1)(c-1) degrees of freedom; zero-margin
    rows and columns are dropped first.
    """
    k = len(groups)
    adjacency = [set() for _ in range(k)]
    for a in range(k):
        for b in range(a + 1, k):
            g, dof = g_statistic(codes[:, a], codes[:, b],
                                 groups[a].cardinality, groups[b].cardinality)
            if dof > 0 and g > chi2.isf(alpha, dof):
                adjacency[a].add(b)
                adjacency[b].add(a)
    seen = [False] * k
    components = []
    for start in range(k):
        if seen[start]:
            continue
        component = []
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            component.append(i)
            for j in adjacency[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        components.append(sorted(component))
    if len(components) < 2:
        return None
    return components


class _OnlineClusters:
    """Hard-EM state: per-cluster counts over every group's categories."""

    def __init__(self, cards, pseudo_count, penalty):
        self.cards = np.asarray(cards)
        self.offsets = np.concatenate([[0], np.cumsum(self.cards)])
        self.alpha = pseudo_count
        # creating a cluster multiplies the prior by penalty once per group
        self.new_cluster_cost = -float(len(cards)) * np.log(penalty)
        self.counts = np.zeros((0, int(self.offsets[-1])))
        self.sizes = np.zeros(0)

    def scores(self, flat_codes):
        """Log-score of a row under each existing cluster and under a fresh one."""
        if len(self.sizes) == 0:
            existing = np.empty(0)
        else:
            hit = self.counts[:, flat_codes]
            existing = np.sum(
                np.log((hit + self.alpha) / (self.sizes[:, None] + self.alpha * self.cards[None, :])),
                axis=1)
        fresh = float(np.sum(np.log(1.0 / self.cards))) - self.new_cluster_cost
        return existing, fresh

    def add(self, flat_codes, cluster):
        if cluster == len(self.sizes):
            self.counts = np.vstack([self.counts, np.zeros((1, self.counts.shape[1]))])
            self.sizes = np.append(self.sizes, 0.0)
        self.counts[cluster, flat_codes] += 1.0
        self.sizes[cluster] += 1.0

    def remove(self, flat_codes, cluster):
        self.counts[cluster, flat_codes] -= 1.0
        self.sizes[cluster] -= 1.0


def cluster_instances(codes, groups, params: LearnParams, rng):
    """Online hard EM over product-of-multinomial clusters.

    Rows are visited in a shuffled order fixed by `rng`; each row joins the
    cluster with the highest posterior score, where opening a new cluster
    pays an exponential penalty per variable group. Reassignment passes run
    until stable. Returns row-index lists for non-empty clusters, largest
    first (may be a single cluster; the caller handles that fallback).
    """
    n = codes.shape[0]
    cards = [g.cardinality for g in groups]
    state = _OnlineClusters(cards, params.pseudo_count, params.cluster_penalty)
    flat = codes + state.offsets[:-1][None, :]
    order = rng.permutation(n)
    assignment = np.full(n, -1)
    for i in order:
        existing, fresh = state.scores(flat[i])
        best = int(np.argmax(existing)) if existing.size else -1
        if best >= 0 and existing[best] >= fresh:
            assignment[i] = best
        else:
            assignment[i] = len(state.sizes)
        state.add(flat[i], assignment[i])

    for _ in range(params.em_max_passes):
        changed = 0
        for i in order:
            state.remove(flat[i], assignment[i])
            existing, fresh = state.scores(flat[i])
            live = state.sizes > 0
            masked = np.where(live, existing, -np.inf)
            best = int(np.argmax(masked)) if np.any(live) else -1
            if best >= 0 and masked[best] >= fresh:
                choice = best
            else:
                empty = np.flatnonzero(~live)
                choice = int(empty[0]) if empty.size else len(state.sizes)
            if choice != assignment[i]:
                changed += 1
                assignment[i] = choice
            state.add(flat[i], assignment[i])
        if changed == 0:
            break

    clusters = {}
    for i in range(n):
        clusters.setdefault(int(assignment[i]), []).append(i)
    ordered = sorted(clusters.values(), key=lambda idx: (-len(idx), idx[0]))
    return [np.asarray(c) for c in ordered]


class _Builder:
    def __init__(self):
        self.nodes = [None]  # reserve index 0 for the root

    def add(self, node):
        self.nodes.append(node)
        return len(self.nodes) - 1

    def set_root(self, node):
        self.nodes[0] = node
        return 0


def _leaf_for(group: VariableGroup, codes_column, params):
    counts = np.bincount(codes_column, minlength=group.cardinality).astype(float)
    smoothed = counts + params.pseudo_count
    probs = smoothed / smoothed.sum()
    if group.is_continuous:
        return PolyLeaf(group=group.feature, density=group.density.reweighted(probs))
    return IndicatorLeaf(group=group.feature, probs=tuple(float(p) for p in probs))


def learn_wmispn(binary: BinaryDataset, densities, params: LearnParams = LearnParams()) -> Spn:
    """Learn a network over all variable groups of a one-hot dataset.

    `densities` maps continuous column index -> fitted PiecewisePoly. The
    returned network is validated structurally before it is handed back.
    """
    groups = variable_groups(binary, densities)
    rng = np.random.default_rng(params.seed)
    builder = _Builder()
    codes = binary.codes.astype(np.int64)

    def recurse(row_idx, group_idx, at_root):
        place = builder.set_root if at_root else builder.add
        if len(group_idx) == 1:
            g = groups[group_idx[0]]
            return place(_leaf_for(g, codes[row_idx, group_idx[0]], params))
        local = [groups[j] for j in group_idx]
        if len(row_idx) >= params.min_slice:
            partition = g_test_partition(codes[np.ix_(row_idx, group_idx)], local, params.alpha)
            if partition is not None:
                children = [recurse(row_idx, [group_idx[k] for k in part], False)
                            for part in partition]
                return place(ProductNode(children=tuple(children)))
            clusters = cluster_instances(codes[np.ix_(row_idx, group_idx)], local, params, rng)
            if len(clusters) >= 2:
                children = []
                weights = []
                for cluster in clusters:
                    children.append(recurse(row_idx[cluster], group_idx, False))
                    weights.append(len(cluster) / len(row_idx))
                return place(SumNode(children=tuple(children), weights=tuple(weights)))
        # thin slice, or both the split and the clustering failed:
        # fall back to a product of per-group leaves
        children = [recurse(row_idx, [j], False) for j in group_idx]
        return place(ProductNode(children=tuple(children)))

    recurse(np.arange(binary.n_rows), list(range(len(groups))), True)
    spn = Spn(builder.nodes)
    spn.validate(tol=1e-12)
    return spn
