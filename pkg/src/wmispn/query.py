"""Interval-query language: parsing, normalization, planning, answering.

Grammar (whitespace-insensitive)::

    query  := conj ('|' conj)?          -- the '|' side is the evidence
    conj   := atom ('&' atom)*
    atom   := ident cmp number
            | number cmp ident cmp number
            | '!'? ident '=' value
    cmp    := '<' | '<=' | '>' | '>='

Intervals are treated as closed at both ends: point probabilities of
continuous features are zero-width integrals, so the distinction between
'<' and '<=' cannot change any answer. Normalization intersects repeated
constraints per feature, clips unbounded sides to the feature's support,
and turns contradictions into an explicit empty atom with probability 0.

A continuous atom spanning several leaf pieces contributes the sum of the
per-piece fragment integrals. Because a leaf enters the network linearly,
summing fragment masses inside the leaf and running one pass equals the
per-subrange multi-pass sum; the multi-pass route is kept for differential
testing.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

from .data import FeatureSchema, KIND_CONTINUOUS
from .errors import QuerySyntaxError, UndefinedConditionalError, UsageError
from .polyfit import integrate_piece
from .spn import Evidence, Spn


@dataclass(frozen=True)
class IntervalAtom:
    feature: str
    lower: float
    upper: float
    # closure flags are carried for faithful pretty-printing only
    lower_closed: bool = True
    upper_closed: bool = True

    def render(self):
        lo = "<=" if self.lower_closed else "<"
        hi = "<=" if self.upper_closed else "<"
        return f"{self.lower:g} {lo} {self.feature} {hi} {self.upper:g}"


@dataclass(frozen=True)
class DiscreteAtom:
    feature: str
    value: str
    negated: bool = False

    def render(self):
        return f"{'!' if self.negated else ''}{self.feature} = {self.value}"


@dataclass(frozen=True)
class EmptyAtom:
    """A contradiction discovered during normalization."""

    feature: str

    def render(self):
        return f"{self.feature} in {{}}"


@dataclass(frozen=True)
class QueryAst:
    query_atoms: tuple
    evidence_atoms: tuple = ()

    def render(self):
        q = " & ".join(a.render() for a in self.query_atoms)
        if self.evidence_atoms:
            return q + " | " + " & ".join(a.render() for a in self.evidence_atoms)
        return q


_TOKEN = re.compile(r"\s*(<=|>=|<|>|=|&|\||!|[A-Za-z_][A-Za-z0-9_.\-]*|[-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.group(1) is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise QuerySyntaxError(f"unexpected character {stripped[0]!r}", position=pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


_NUMBER = re.compile(r"[-+]?([0-9]*\.[0-9]+|[0-9]+)([eE][-+]?[0-9]+)?$")
_CMPS = {"<", "<=", ">", ">="}


def parse_query(text) -> QueryAst:
    """Parse a query string; raises QuerySyntaxError with the bad position."""
    tokens = _tokenize(text)
    if not tokens:
        raise QuerySyntaxError("empty query", position=0)
    sides = [[]]
    current = []
    pos = 0

    def peek(k=0):
        return tokens[pos + k][0] if pos + k < len(tokens) else None

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise QuerySyntaxError("unexpected end of query", position=len(text))
        tok, at = tokens[pos]
        if expected is not None and tok not in expected:
            raise QuerySyntaxError(f"expected one of {sorted(expected)}, found {tok!r}", position=at)
        pos += 1
        return tok, at

    def number(tok, at):
        if not _NUMBER.match(tok):
            raise QuerySyntaxError(f"expected a number, found {tok!r}", position=at)
        return float(tok)

    def atom():
        tok, at = take()
        if tok == "!":
            name, _ = take()
            take({"="})
            value, _ = take()
            return DiscreteAtom(feature=name, value=value, negated=True)
        if _NUMBER.match(tok):
            lo = number(tok, at)
            cmp1, cat = take(_CMPS)
            if cmp1 in (">", ">="):
                raise QuerySyntaxError("write two-sided constraints as low <= x <= high", position=cat)
            name, _ = take()
            cmp2, _ = take({"<", "<="})
            hi_tok, hat = take()
            hi = number(hi_tok, hat)
            return IntervalAtom(feature=name, lower=lo, upper=hi,
                                lower_closed=cmp1 == "<=", upper_closed=cmp2 == "<=")
        name = tok
        op, oat = take(_CMPS | {"="})
        if op == "=":
            value, _ = take()
            return DiscreteAtom(feature=name, value=value)
        bound_tok, bat = take()
        bound = number(bound_tok, bat)
        if op in ("<", "<="):
            return IntervalAtom(feature=name, lower=float("-inf"), upper=bound,
                                upper_closed=op == "<=")
        return IntervalAtom(feature=name, lower=bound, upper=float("inf"),
                            lower_closed=op == ">=")

    while True:
        current.append(atom())
        nxt = peek()
        if nxt == "&":
            take()
            continue
        if nxt == "|":
            if len(sides) == 2:
                _, at = tokens[pos]
                raise QuerySyntaxError("only one '|' (evidence separator) is allowed", position=at)
            take()
            sides[0] = current
            sides.append([])
            current = []
            continue
        if nxt is None:
            break
        _, at = tokens[pos]
        raise QuerySyntaxError(f"unexpected token {nxt!r}", position=at)
    if len(sides) == 2:
        sides[1] = current
        if not sides[1]:
            raise QuerySyntaxError("evidence side is empty", position=len(text))
    else:
        sides[0] = current
    return QueryAst(query_atoms=tuple(sides[0]),
                    evidence_atoms=tuple(sides[1]) if len(sides) == 2 else ())


def _column(schema: FeatureSchema, name):
    for j, col in enumerate(schema):
        if col.name == name:
            return j, col
    raise UsageError(f"unknown feature {name!r}")


def _normalize_side(atoms, schema):
    intervals = {}
    discrete = {}
    order = []
    for atom in atoms:
        if isinstance(atom, EmptyAtom):
            return (atom,)
        j, col = _column(schema, atom.feature)
        if isinstance(atom, IntervalAtom):
            if col.kind != KIND_CONTINUOUS:
                raise UsageError(f"feature {atom.feature!r} is {col.kind}; interval atoms "
                                 "apply to continuous features only")
            lo = max(atom.lower, col.minimum)
            hi = min(atom.upper, col.maximum)
            if atom.feature in intervals:
                plo, phi = intervals[atom.feature]
                lo, hi = max(lo, plo), min(hi, phi)
            else:
                order.append(atom.feature)
            intervals[atom.feature] = (lo, hi)
        else:
            if col.kind == KIND_CONTINUOUS:
                raise UsageError(f"feature {atom.feature!r} is continuous; use an interval atom")
            if atom.value not in col.values:
                raise UsageError(f"feature {atom.feature!r} has no value {atom.value!r}")
            allowed = set(col.values) - {atom.value} if atom.negated else {atom.value}
            if atom.feature in discrete:
                allowed &= discrete[atom.feature]
            else:
                order.append(atom.feature)
            discrete[atom.feature] = allowed
    out = []
    for feature in order:
        if feature in intervals:
            lo, hi = intervals[feature]
            if lo > hi:
                return (EmptyAtom(feature=feature),)
            out.append(IntervalAtom(feature=feature, lower=lo, upper=hi))
        else:
            allowed = discrete[feature]
            if not allowed:
                return (EmptyAtom(feature=feature),)
            _, col = _column(schema, feature)
            if len(allowed) == 1:
                out.append(DiscreteAtom(feature=feature, value=next(iter(allowed))))
            elif len(allowed) == len(col.values) - 1:
                missing = next(iter(set(col.values) - allowed))
                out.append(DiscreteAtom(feature=feature, value=missing, negated=True))
            else:
                # several surviving values: keep one negated atom per excluded value
                for v in sorted(set(col.values) - allowed):
                    out.append(DiscreteAtom(feature=feature, value=v, negated=True))
    return tuple(out)


def normalize(ast: QueryAst, schema: FeatureSchema) -> QueryAst:
    """Intersect repeated constraints, clip to support, surface contradictions."""
    q = _normalize_side(ast.query_atoms, schema)
    e = _normalize_side(ast.evidence_atoms, schema)
    q_feats = {a.feature for a in q}
    e_feats = {a.feature for a in e}
    if q_feats & e_feats:
        raise UsageError(f"features on both query and evidence sides: {sorted(q_feats & e_feats)}")
    return QueryAst(query_atoms=q, evidence_atoms=e)


@dataclass(frozen=True)
class PlanFragment:
    piece_index: int
    lower: float
    upper: float
    mass: float  # under the model's marginal density, for explanation only


@dataclass(frozen=True)
class QueryPlan:
    """Per-feature fragments (additive) across features (multiplicative)."""

    interval_fragments: dict   # feature name -> list of PlanFragment
    discrete_atoms: tuple
    empty: bool = False

    def describe(self):
        lines = []
        if self.empty:
            return ["contradictory query: probability 0"]
        for feature, fragments in self.interval_fragments.items():
            lines.append(f"{feature}: {len(fragments)} fragment(s)")
            for f in fragments:
                lines.append(f"  piece {f.piece_index}: [{f.lower:.6g}, {f.upper:.6g}] "
                             f"mass {f.mass:.6g}")
        for atom in self.discrete_atoms:
            lines.append(atom.render())
        return lines


def build_plan(atoms, schema, densities) -> QueryPlan:
    """Split each interval atom at its feature's piece boundaries.

    Fragment masses are reported under the feature's marginal density; the
    network's branch-specific leaves recompute their own masses during
    evaluation.
    """
    fragments = {}
    discrete = []
    for atom in atoms:
        if isinstance(atom, EmptyAtom):
            return QueryPlan(interval_fragments={}, discrete_atoms=(), empty=True)
        if isinstance(atom, DiscreteAtom):
            discrete.append(atom)
            continue
        j, _ = _column(schema, atom.feature)
        density = densities[j]
        parts = []
        for k, piece in enumerate(density.pieces):
            lo = max(atom.lower, piece.lower)
            hi = min(atom.upper, piece.upper)
            if lo < hi:
                parts.append(PlanFragment(piece_index=k, lower=lo, upper=hi,
                                          mass=integrate_piece(piece.coeffs, lo, hi)))
        fragments[atom.feature] = parts
    return QueryPlan(interval_fragments=fragments, discrete_atoms=tuple(discrete), empty=False)


def _atoms_to_evidence(atoms, schema) -> Evidence:
    discrete = {}
    intervals = {}
    for atom in atoms:
        j, col = _column(schema, atom.feature)
        if isinstance(atom, IntervalAtom):
            intervals[j] = (atom.lower, atom.upper)
        else:
            allowed = (frozenset(range(len(col.values))) - {col.values.index(atom.value)}
                       if atom.negated else {col.values.index(atom.value)})
            if j in discrete:
                allowed = set(allowed) & set(discrete[j])
            discrete[j] = frozenset(allowed)
    return Evidence.of(discrete=discrete, intervals=intervals)


def answer(spn: Spn, ast: QueryAst, schema: FeatureSchema, multi_pass=False) -> float:
    """Probability of a normalized query, conditioned on its evidence side."""
    if any(isinstance(a, EmptyAtom) for a in ast.query_atoms):
        if ast.evidence_atoms:
            # still validate that the evidence is satisfiable
            _require_positive_evidence(spn, ast, schema)
        return 0.0
    if any(isinstance(a, EmptyAtom) for a in ast.evidence_atoms):
        raise UndefinedConditionalError("evidence is contradictory")
    if multi_pass:
        return _answer_multi_pass(spn, ast, schema)
    query_ev = _atoms_to_evidence(ast.query_atoms, schema)
    if ast.evidence_atoms:
        evidence_ev = _atoms_to_evidence(ast.evidence_atoms, schema)
        return spn.conditional(query_ev, evidence_ev)
    return spn.evaluate(query_ev)


def _require_positive_evidence(spn, ast, schema):
    evidence_ev = _atoms_to_evidence(ast.evidence_atoms, schema)
    if spn.evaluate(evidence_ev) <= 0.0:
        raise UndefinedConditionalError("evidence has probability zero")


def _answer_multi_pass(spn, ast, schema):
    """Differential-testing mode: one pass per combination of per-feature
    piece fragments, summed; equal to the single pass by linearity."""
    densities = {}
    for node in spn.nodes:
        if hasattr(node, "density"):
            densities.setdefault(node.group, node.density)
    per_feature = []
    fixed_discrete = []
    for atom in ast.query_atoms:
        if isinstance(atom, DiscreteAtom):
            fixed_discrete.append(atom)
            continue
        j, _ = _column(schema, atom.feature)
        pieces = densities[j].pieces
        options = []
        for piece in pieces:
            lo, hi = max(atom.lower, piece.lower), min(atom.upper, piece.upper)
            if lo < hi:
                options.append(IntervalAtom(feature=atom.feature, lower=lo, upper=hi))
        per_feature.append(options)
    total = 0.0
    for combo in itertools.product(*per_feature):
        sub = QueryAst(query_atoms=tuple(fixed_discrete) + combo,
                       evidence_atoms=ast.evidence_atoms)
        total += answer(spn, sub, schema, multi_pass=False)
    return total


def answer_disjunction(spn: Spn, first: QueryAst, second: QueryAst, schema) -> float:
    """Pr(A or B) = Pr(A) + Pr(B) - Pr(A and B) for two top-level disjuncts.

    Both disjuncts must share the same evidence side; the conjunction A and B
    is built by normalizing the concatenated atom lists.
    """
    if first.evidence_atoms != second.evidence_atoms:
        raise UsageError("disjuncts must share the same evidence")
    both = normalize(QueryAst(query_atoms=first.query_atoms + second.query_atoms,
                              evidence_atoms=first.evidence_atoms), schema)
    return (answer(spn, first, schema) + answer(spn, second, schema)
            - answer(spn, both, schema))
