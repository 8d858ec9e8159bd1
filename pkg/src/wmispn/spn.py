"""Sum-product network representation and inference.

Nodes live in an indexed table with the root at index 0. Evaluation is one
bottom-up pass in log space; an all-unset pass yields the partition
function, which is 1 for networks built by the learner (normalized leaves
and weights). Conditionals are the ratio of two passes.

Evidence per variable group is one of: unset (marginalized), a set of
allowed discrete values, an interval on a continuous feature, or a direct
leaf-mass override used by tests and the benchmark harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedConditionalError, UsageError
from .polyfit import PiecewisePoly, leaf_mass

LOG_FLOOR = 1e-12  # probability floor when a row falls in an unseen combination


@dataclass(frozen=True)
class SumNode:
    children: tuple
    weights: tuple


@dataclass(frozen=True)
class ProductNode:
    children: tuple


@dataclass(frozen=True)
class IndicatorLeaf:
    group: int
    probs: tuple


@dataclass(frozen=True)
class PolyLeaf:
    group: int
    density: PiecewisePoly


@dataclass(frozen=True)
class Evidence:
    """Per-group constraints; groups absent from all maps are marginalized."""

    discrete: dict = field(default_factory=dict)   # group -> frozenset of value indices
    intervals: dict = field(default_factory=dict)  # group -> (a, b)
    overrides: dict = field(default_factory=dict)  # group -> leaf mass in [0, 1]

    @classmethod
    def of(cls, discrete=None, intervals=None, overrides=None):
        disc = {g: frozenset(v if isinstance(v, (set, frozenset, list, tuple)) else (v,))
                for g, v in (discrete or {}).items()}
        return cls(discrete=disc, intervals=dict(intervals or {}),
                   overrides=dict(overrides or {}))

    def groups(self):
        return set(self.discrete) | set(self.intervals) | set(self.overrides)

    def merged_with(self, other):
        ours, theirs = self.groups(), other.groups()
        if ours & theirs:
            raise UsageError(f"evidence collides on groups {sorted(ours & theirs)}")
        return Evidence(discrete={**self.discrete, **other.discrete},
                        intervals={**self.intervals, **other.intervals},
                        overrides={**self.overrides, **other.overrides})


class Spn:
    """Immutable network over an indexed node table; root at index 0."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        if not self.nodes:
            raise UsageError("network needs at least one node")
        self._order = self._topological_order()
        self.scopes = self._compute_scopes()

    def _topological_order(self):
        n = len(self.nodes)
        state = [0] * n  # 0 unseen, 1 on stack, 2 done
        order = []
        stack = [(0, 0)]
        referenced = set()
        while stack:
            node_idx, child_pos = stack.pop()
            node = self.nodes[node_idx]
            children = getattr(node, "children", ())
            if child_pos == 0:
                if state[node_idx] == 1:
                    raise UsageError("network contains a cycle")
                if state[node_idx] == 2:
                    continue
                state[node_idx] = 1
            if child_pos < len(children):
                stack.append((node_idx, child_pos + 1))
                child = children[child_pos]
                if not 0 <= child < n:
                    raise UsageError(f"node {node_idx} references invalid child {child}")
                referenced.add(child)
                if state[child] == 1:
                    raise UsageError("network contains a cycle")
                if state[child] == 0:
                    stack.append((child, 0))
            else:
                state[node_idx] = 2
                order.append(node_idx)
        unreachable = [i for i in range(n) if state[i] != 2]
        if unreachable:
            raise UsageError(f"nodes unreachable from the root: {unreachable}")
        if 0 in referenced:
            raise UsageError("root must not appear as a child")
        return order  # children precede parents

    def _compute_scopes(self):
        scopes = [None] * len(self.nodes)
        for idx in self._order:
            node = self.nodes[idx]
            if isinstance(node, (IndicatorLeaf, PolyLeaf)):
                scopes[idx] = frozenset((node.group,))
            else:
                scopes[idx] = frozenset().union(*(scopes[c] for c in node.children))
        return tuple(scopes)

    @property
    def root_scope(self):
        return self.scopes[0]

    def leaf_groups(self):
        groups = {}
        for node in self.nodes:
            if isinstance(node, IndicatorLeaf):
                groups.setdefault(node.group, ("discrete", len(node.probs)))
            elif isinstance(node, PolyLeaf):
                groups.setdefault(node.group, ("continuous", len(node.density.pieces)))
        return groups

    # -- inference ---------------------------------------------------------

    def _leaf_log_value(self, node, evidence):
        g = node.group
        if g in evidence.overrides:
            value = evidence.overrides[g]
            if not 0.0 <= value <= 1.0 + 1e-12:
                raise UsageError(f"override for group {g} outside [0, 1]")
            return math.log(value) if value > 0.0 else -math.inf
        if isinstance(node, IndicatorLeaf):
            if g in evidence.intervals:
                raise UsageError(f"interval evidence on discrete group {g}")
            if g not in evidence.discrete:
                return 0.0
            allowed = evidence.discrete[g]
            if any(not 0 <= v < len(node.probs) for v in allowed):
                raise UsageError(f"value out of range for group {g}")
            value = sum(node.probs[v] for v in allowed)
        else:
            if g in evidence.discrete:
                raise UsageError(f"discrete evidence on continuous group {g}")
            if g not in evidence.intervals:
                return 0.0
            a, b = evidence.intervals[g]
            if a > b:
                raise UsageError(f"interval evidence [{a}, {b}] is inverted")
            value = leaf_mass(node.density, a, b)
        return math.log(value) if value > 0.0 else -math.inf

    def log_evaluate(self, evidence: Evidence) -> float:
        unknown = evidence.groups() - self.root_scope
        if unknown:
            raise UsageError(f"evidence on unknown groups {sorted(unknown)}")
        values = np.empty(len(self.nodes))
        for idx in self._order:
            node = self.nodes[idx]
            if isinstance(node, SumNode):
                parts = [math.log(w) + values[c] if w > 0.0 else -math.inf
                         for w, c in zip(node.weights, node.children)]
                hi = max(parts)
                values[idx] = hi if hi == -math.inf else (
                    hi + math.log(sum(math.exp(p - hi) for p in parts)))
            elif isinstance(node, ProductNode):
                values[idx] = sum(values[c] for c in node.children)
            else:
                values[idx] = self._leaf_log_value(node, evidence)
        return float(values[0])

    def evaluate(self, evidence: Evidence) -> float:
        return math.exp(self.log_evaluate(evidence))

    def evaluate_with_stats(self, evidence: Evidence):
        """(value, nodes visited); visits equal the node count, one per pass."""
        value = self.evaluate(evidence)
        return value, len(self._order)

    def partition_function(self) -> float:
        return self.evaluate(Evidence())

    def conditional(self, query: Evidence, evidence: Evidence) -> float:
        log_den = self.log_evaluate(evidence)
        if log_den == -math.inf:
            raise UndefinedConditionalError("evidence has probability zero")
        log_num = self.log_evaluate(query.merged_with(evidence))
        return math.exp(log_num - log_den)

    # -- validation ---------------------------------------------------------

    def validate(self, tol=1e-12):
        """Completeness, decomposability, normalized weights and leaves."""
        for idx, node in enumerate(self.nodes):
            if isinstance(node, SumNode):
                if len(node.children) != len(node.weights) or not node.children:
                    raise UsageError(f"sum node {idx}: children/weights mismatch")
                if any(w <= 0 for w in node.weights):
                    raise UsageError(f"sum node {idx}: weights must be positive")
                if abs(sum(node.weights) - 1.0) > tol:
                    raise UsageError(f"sum node {idx}: weights sum to {sum(node.weights)}")
                child_scopes = {self.scopes[c] for c in node.children}
                if len(child_scopes) != 1:
                    raise UsageError(f"sum node {idx} is not complete")
            elif isinstance(node, ProductNode):
                if not node.children:
                    raise UsageError(f"product node {idx}: no children")
                seen = set()
                for c in node.children:
                    if seen & self.scopes[c]:
                        raise UsageError(f"product node {idx} is not decomposable")
                    seen |= self.scopes[c]
            elif isinstance(node, IndicatorLeaf):
                if any(p <= 0 for p in node.probs):
                    raise UsageError(f"leaf {idx}: probabilities must be positive")
                if abs(sum(node.probs) - 1.0) > tol:
                    raise UsageError(f"leaf {idx}: probabilities sum to {sum(node.probs)}")
        return True


def log_likelihood(spn: Spn, binary, densities=None):
    """Average bin-mass log-likelihood of a BinaryDataset under the network.

    Each discrete group contributes its observed value's probability; each
    continuous group contributes the mass of the observed bin through
    interval evidence on the bin's edges, so every branch's leaf answers
    with its own bin mass. Rows that evaluate to zero are floored at
    LOG_FLOOR and counted as warnings.

    Returns (average log-likelihood, warning count).
    """
    spec = binary.spec
    schema = spec.schema
    total = 0.0
    warnings_count = 0
    for i in range(binary.n_rows):
        discrete = {}
        intervals = {}
        for j, col in enumerate(schema):
            code = int(binary.codes[i, j])
            if col.kind == "continuous":
                e = spec.edges[j]
                intervals[j] = (float(e[code]), float(e[code + 1]))
            else:
                discrete[j] = code
        ll = spn.log_evaluate(Evidence.of(discrete=discrete, intervals=intervals))
        if ll == -math.inf or ll < math.log(LOG_FLOOR):
            ll = math.log(LOG_FLOOR)
            warnings_count += 1
        total += ll
    return total / binary.n_rows, warnings_count


def density_log_likelihood(spn: Spn, binary, dataset, impute=None):
    """Average log-likelihood using point densities p(x) for continuous
    features instead of bin masses (the --density evaluation mode).

    Realized by narrow-interval overrides: each continuous group's leaf
    emits its density at the observed value. Discrete groups behave as in
    the bin-mass mode.
    """
    from .data import numeric_column  # local import avoids a cycle

    spec = binary.spec
    schema = spec.schema
    columns = {}
    for j, col in enumerate(schema):
        if col.kind == "continuous":
            columns[j] = numeric_column(dataset, j, col, impute)
    total = 0.0
    warnings_count = 0
    for i in range(binary.n_rows):
        discrete = {}
        for j, col in enumerate(schema):
            if col.kind != "continuous":
                discrete[j] = int(binary.codes[i, j])
        evidence = Evidence.of(discrete=discrete)
        ll = _log_density_row(spn, evidence, {j: columns[j][i] for j in columns})
        if ll == -math.inf or ll < math.log(LOG_FLOOR):
            ll = math.log(LOG_FLOOR)
            warnings_count += 1
        total += ll
    return total / binary.n_rows, warnings_count


def _log_density_row(spn, evidence, point_values):
    """One pass where continuous groups emit pdf(x) instead of a mass."""
    values = np.empty(len(spn.nodes))
    for idx in spn._order:
        node = spn.nodes[idx]
        if isinstance(node, SumNode):
            parts = [math.log(w) + values[c] if w > 0.0 else -math.inf
                     for w, c in zip(node.weights, node.children)]
            hi = max(parts)
            values[idx] = hi if hi == -math.inf else (
                hi + math.log(sum(math.exp(p - hi) for p in parts)))
        elif isinstance(node, ProductNode):
            values[idx] = sum(values[c] for c in node.children)
        elif isinstance(node, PolyLeaf) and node.group in point_values:
            density = node.density.pdf(point_values[node.group])
            values[idx] = math.log(density) if density > 0.0 else -math.inf
        else:
            values[idx] = spn._leaf_log_value(node, evidence)
    return float(values[0])
