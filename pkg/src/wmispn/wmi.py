"""Exact weighted model counting and integration over small propositional
theories.

Atoms are either pure propositions or abstractions of interval constraints
(variable, lower, upper). A weight maps each literal to a constant or to a
univariate polynomial in the atom's variable. Counting enumerates all
assignments of the propositional abstraction; integration refines each
model's interval literals into disjoint fragments (split at every endpoint
mentioned for that variable) and integrates the product of the literal
weights over each consistent fragment in closed form.

This engine is deliberately an enumerator: it is the testing oracle and the
leaf-level integration substrate, not a scalable solver. The sum-product
network is the scalable inference path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UndefinedConditionalError, UsageError
from .polyfit import integrate_piece

MAX_ENUMERATION_ATOMS = 24


# --------------------------------------------------------------------------
# Atoms, formulas, weights

@dataclass(frozen=True)
class PropAtom:
    name: str


@dataclass(frozen=True)
class IntervalAtom:
    name: str
    var: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise UsageError(f"atom {self.name}: interval [{self.lower}, {self.upper}] is inverted")


# Formula nodes: plain tuples keep construction and structural hashing cheap.
TRUE = ("const", True)
FALSE = ("const", False)


def lit(name):
    return ("atom", name)


def not_(f):
    return ("not", f)


def and_(*fs):
    return ("and", tuple(fs))


def or_(*fs):
    return ("or", tuple(fs))


def formula_atoms(formula):
    kind = formula[0]
    if kind == "const":
        return set()
    if kind == "atom":
        return {formula[1]}
    if kind == "not":
        return formula_atoms(formula[1])
    return set().union(*(formula_atoms(f) for f in formula[1]))


def eval_formula(formula, assignment):
    kind = formula[0]
    if kind == "const":
        return formula[1]
    if kind == "atom":
        return assignment[formula[1]]
    if kind == "not":
        return not eval_formula(formula[1], assignment)
    if kind == "and":
        return all(eval_formula(f, assignment) for f in formula[1])
    if kind == "or":
        return any(eval_formula(f, assignment) for f in formula[1])
    raise UsageError(f"unknown formula node {kind!r}")


@dataclass(frozen=True)
class Weight:
    """Constant or polynomial literal weight; coeffs are power-basis c0..ck."""

    coeffs: tuple

    @classmethod
    def constant(cls, value):
        return cls(coeffs=(float(value),))

    @property
    def is_constant(self):
        return len(self.coeffs) == 1

    @property
    def constant_value(self):
        if not self.is_constant:
            raise UsageError("polynomial weight used where a constant is required")
        return self.coeffs[0]


@dataclass(frozen=True)
class PropTheory:
    """Formula over named atoms plus a literal weight map.

    `weights` maps (atom name, polarity) to Weight; missing entries default
    to weight 1 for the positive literal and, for the negative literal,
    1 - w on constant-weight propositions and 0 on interval atoms.
    """

    atoms: tuple
    formula: tuple
    weights: dict

    def atom_by_name(self):
        return {a.name: a for a in self.atoms}

    def literal_weight(self, name, polarity):
        key = (name, polarity)
        if key in self.weights:
            return self.weights[key]
        atom = self.atom_by_name()[name]
        if polarity:
            return Weight.constant(1.0)
        if isinstance(atom, IntervalAtom):
            return Weight.constant(0.0)
        pos = self.literal_weight(name, True)
        if pos.is_constant:
            return Weight.constant(1.0 - pos.constant_value)
        raise UsageError(f"atom {name}: no negation weight and positive weight is not constant")


def propositional_abstraction(theory: PropTheory):
    """Map interval atoms to fresh propositions; structurally identical
    constraints share one proposition. Returns (formula over propositions,
    fresh-name -> IntervalAtom map). Pure propositions pass through."""
    taken = {a.name for a in theory.atoms}
    by_constraint = {}
    mapping = {}
    rename = {}
    counter = itertools.count()
    for atom in theory.atoms:
        if isinstance(atom, PropAtom):
            rename[atom.name] = atom.name
            continue
        key = (atom.var, atom.lower, atom.upper)
        if key in by_constraint:
            rename[atom.name] = by_constraint[key]
            continue
        fresh = atom.name
        while fresh in mapping or (fresh in taken and fresh != atom.name):
            fresh = f"_iv{next(counter)}"
        by_constraint[key] = fresh
        mapping[fresh] = atom
        rename[atom.name] = fresh

    def rewrite(f):
        kind = f[0]
        if kind == "const":
            return f
        if kind == "atom":
            return ("atom", rename[f[1]])
        if kind == "not":
            return ("not", rewrite(f[1]))
        return (kind, tuple(rewrite(g) for g in f[1]))

    return rewrite(theory.formula), mapping


def _models(names, formula):
    if len(names) > MAX_ENUMERATION_ATOMS:
        raise UsageError(
            f"{len(names)} atoms exceeds the {MAX_ENUMERATION_ATOMS}-atom enumeration "
            "limit; use the learned sum-product network for large problems")
    for bits in itertools.product((True, False), repeat=len(names)):
        assignment = dict(zip(names, bits))
        if eval_formula(formula, assignment):
            yield assignment


def wmc(formula, weights, atoms=None) -> float:
    """Sum over satisfying assignments of the product of literal weights.

    `weights` maps (name, polarity) to a float; missing keys default to 1
    for positive and 1 - w(positive) for negative literals.
    """
    names = sorted(formula_atoms(formula))
    if atoms is not None:
        names = sorted(set(names) | {a.name for a in atoms})

    def w(name, polarity):
        key = (name, polarity)
        if key in weights:
            return weights[key]
        if polarity:
            return 1.0
        return 1.0 - weights.get((name, True), 1.0)

    total = 0.0
    for model in _models(names, formula):
        product = 1.0
        for name, value in model.items():
            product *= w(name, value)
        total += product
    return total


def _poly_product(polys):
    """Product of power-basis coefficient tuples via convolution."""
    out = np.array([1.0])
    for p in polys:
        out = np.convolve(out, np.asarray(p, dtype=float))
    return out


def _variable_fragments(atoms_for_var):
    """Disjoint fragments splitting the real line at every endpoint.

    Returns (fragments, membership) where fragments are (lo, hi) with
    lo/hi possibly infinite, and membership[i][atom name] is True when the
    fragment lies inside that atom's interval. Endpoints have measure zero,
    so open/closed choices cannot change any integral.
    """
    points = sorted({p for a in atoms_for_var for p in (a.lower, a.upper)})
    bounds = [-math.inf] + points + [math.inf]
    fragments = []
    membership = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        mid = (lo + hi) / 2 if math.isfinite(lo) and math.isfinite(hi) else (
            hi - 1.0 if math.isfinite(hi) else lo + 1.0)
        fragments.append((lo, hi))
        membership.append({a.name: a.lower <= mid <= a.upper for a in atoms_for_var})
    return fragments, membership


def wmi(theory: PropTheory) -> float:
    """Weighted model integration of the theory.

    For each propositional model of the abstraction, per-variable interval
    literals are refined into fragments; each consistent fragment
    contributes the closed-form integral of the product of that variable's
    literal weights, scaled by the constant literals' product. A model
    whose weight is nonzero on an unbounded fragment is rejected, since a
    polynomial cannot be integrated over an infinite domain.
    """
    abstract_formula, interval_map = propositional_abstraction(theory)
    names = sorted(formula_atoms(abstract_formula) | {a.name for a in theory.atoms
                                                      if isinstance(a, PropAtom)}
                   | set(interval_map))
    by_var = {}
    for name, atom in interval_map.items():
        by_var.setdefault(atom.var, []).append(atom)

    total = 0.0
    for model in _models(names, abstract_formula):
        constant = 1.0
        for name, value in model.items():
            if name in interval_map:
                continue
            w = theory.literal_weight(name, value)
            constant *= w.constant_value
        if constant == 0.0:
            continue
        model_value = constant
        for var, var_atoms in by_var.items():
            fragments, memberships = _variable_fragments(var_atoms)
            var_total = 0.0
            for (lo, hi), member in zip(fragments, memberships):
                if any(member[a.name] != model[a.name] for a in var_atoms):
                    continue
                polys = []
                zero = False
                for a in var_atoms:
                    w = theory.literal_weight(a.name, model[a.name])
                    if w.is_constant and w.constant_value == 0.0:
                        zero = True
                        break
                    polys.append(w.coeffs)
                if zero:
                    continue
                integrand = _poly_product(polys)
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    if np.any(integrand != 0.0):
                        raise UsageError(
                            f"variable {var}: nonzero weight over an unbounded region")
                    continue
                var_total += integrate_piece(integrand, lo, hi)
            model_value *= var_total
            if model_value == 0.0:
                break
        total += model_value
    return total


def conditional_wmi(theory: PropTheory, query, evidence=TRUE) -> float:
    """WMI(theory & query & evidence) / WMI(theory & evidence).

    Atoms referenced only by the query or evidence get unit weights for
    both polarities, so conditioning marginalizes them correctly.
    """
    base_names = {a.name for a in theory.atoms}
    extra = (formula_atoms(query) | formula_atoms(evidence)) - base_names
    if extra:
        raise UsageError(f"query/evidence reference unknown atoms: {sorted(extra)}")

    def extended(formula):
        weights = dict(theory.weights)
        for name in formula_atoms(query) | formula_atoms(evidence):
            for polarity in (True, False):
                weights.setdefault((name, polarity), Weight.constant(1.0))
        return PropTheory(atoms=theory.atoms, formula=and_(theory.formula, formula),
                          weights=weights)

    denominator = wmi(extended(evidence))
    if denominator <= 0.0:
        raise UndefinedConditionalError("evidence has zero weighted volume")
    numerator = wmi(extended(and_(query, evidence)))
    return numerator / denominator


# --------------------------------------------------------------------------
# Theory text format
#
#   atom p prop
#   atom iv interval x 0 10
#   formula iv | p
#   weight iv poly 0 0 0.3
#   weight !iv 0
#
# Unlisted weights take the documented defaults.

def parse_formula_text(text, known_names):
    """Boolean expression parser: ! binds tightest, then &, then |."""
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "()!&|":
            tokens.append((ch, i))
            i += 1
            continue
        j = i
        while j < len(text) and (text[j].isalnum() or text[j] in "_."):
            j += 1
        if j == i:
            raise UsageError(f"formula: unexpected character {ch!r} at {i}")
        tokens.append((text[i:j], i))
        i = j
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def primary():
        tok, at = take() if pos < len(tokens) else (None, len(text))
        if tok == "(":
            f = disjunction()
            if peek() != ")":
                raise UsageError(f"formula: missing ')' near position {at}")
            take()
            return f
        if tok == "!":
            return not_(primary())
        if tok in ("true", "false"):
            return TRUE if tok == "true" else FALSE
        if tok is None:
            raise UsageError("formula: unexpected end of input")
        if tok in "()!&|":
            raise UsageError(f"formula: unexpected {tok!r} at position {at}")
        if tok not in known_names:
            raise UsageError(f"formula: unknown atom {tok!r}")
        return lit(tok)

    def conjunction():
        f = primary()
        while peek() == "&":
            take()
            f = and_(f, primary())
        return f

    def disjunction():
        f = conjunction()
        while peek() == "|":
            take()
            f = or_(f, conjunction())
        return f

    result = disjunction()
    if pos != len(tokens):
        raise UsageError(f"formula: trailing input at position {tokens[pos][1]}")
    return result


def load_theory(path) -> PropTheory:
    atoms = []
    weights = {}
    formula = None
    names = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                if fields[0] == "atom":
                    name, kind = fields[1], fields[2]
                    if name in names:
                        raise UsageError(f"duplicate atom {name!r}")
                    if kind == "prop":
                        atoms.append(PropAtom(name))
                    elif kind == "interval":
                        atoms.append(IntervalAtom(name, fields[3],
                                                  float(fields[4]), float(fields[5])))
                    else:
                        raise UsageError(f"unknown atom kind {kind!r}")
                    names.add(name)
                elif fields[0] == "formula":
                    formula = parse_formula_text(line.split(None, 1)[1], names)
                elif fields[0] == "weight":
                    literal = fields[1]
                    polarity = not literal.startswith("!")
                    name = literal.lstrip("!")
                    if name not in names:
                        raise UsageError(f"weight for unknown atom {name!r}")
                    if fields[2] == "poly":
                        weights[(name, polarity)] = Weight(tuple(float(c) for c in fields[3:]))
                    else:
                        weights[(name, polarity)] = Weight.constant(float(fields[2]))
                else:
                    raise UsageError(f"unknown directive {fields[0]!r}")
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            except UsageError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    if formula is None:
        raise DataError(f"{path}: no formula line")
    return PropTheory(atoms=tuple(atoms), formula=formula, weights=weights)
