"""Piecewise-polynomial density estimation.

Each continuous feature gets a density built from a linear combination of
B-splines on the bin edges: the spline is least-squares fitted to the
equal-width histogram density, converted piecewise to power-basis
coefficients (p(x) = sum c_j x^j in the raw coordinate), clipped if it dips
negative, and rescaled so the total mass is one. Bin count and polynomial
order are chosen by BIC, which penalizes coefficient count and therefore
favours small bin counts and low orders.

Power-basis pieces integrate in closed form, which is what makes interval
queries exact; `integrate_piece` is the single integration primitive shared
with the weighted-model-integration oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

MAX_ORDER = 6
DEFAULT_BINS_GRID = range(2, 11)
DEFAULT_ORDER_GRID = range(0, MAX_ORDER + 1)

# density floor used when scoring log-likelihoods during model selection
_DENSITY_FLOOR = 1e-12


class OutOfSupportWarning(UserWarning):
    """An interval query reached outside a density's support."""


def integrate_piece(coeffs, a, b) -> float:
    """Exact integral of sum_j coeffs[j] * x**j over [a, b]."""
    total = 0.0
    pa, pb = a, b
    for j, c in enumerate(coeffs):
        total += c * (pb - pa) / (j + 1)
        pa *= a
        pb *= b
    return total


def evaluate_poly(coeffs, x):
    """Horner evaluation; x may be a scalar or ndarray."""
    result = np.zeros_like(np.asarray(x, dtype=float))
    for c in reversed(coeffs):
        result = result * x + c
    return result if result.shape else float(result)


@dataclass(frozen=True)
class Piece:
    lower: float
    upper: float
    coeffs: tuple

    @property
    def width(self):
        return self.upper - self.lower

    def mass(self):
        return integrate_piece(self.coeffs, self.lower, self.upper)


@dataclass(frozen=True)
class PiecewisePoly:
    """Contiguous polynomial pieces forming a (normally normalized) density."""

    pieces: tuple
    order: int
    bin_masses: tuple

    @property
    def support(self):
        return self.pieces[0].lower, self.pieces[-1].upper

    @property
    def edges(self):
        return [p.lower for p in self.pieces] + [self.pieces[-1].upper]

    def pdf(self, x):
        """Density at x; 0 outside the support, upper-bin closure at the top."""
        lo, hi = self.support
        if x < lo or x > hi:
            return 0.0
        for p in self.pieces:
            if x < p.upper or p is self.pieces[-1]:
                return float(evaluate_poly(p.coeffs, x))
        return 0.0

    def mass(self, a, b):
        return leaf_mass(self, a, b)

    def total_mass(self):
        return float(sum(p.mass() for p in self.pieces))

    def validate(self, tol=1e-9):
        """Check contiguity, normalization, non-negativity, and stored masses."""
        for p, q in zip(self.pieces, self.pieces[1:]):
            if p.upper != q.lower:
                raise ValueError(f"pieces not contiguous at {p.upper} vs {q.lower}")
        if abs(self.total_mass() - 1.0) > tol:
            raise ValueError(f"total mass {self.total_mass()} not 1")
        for p, m in zip(self.pieces, self.bin_masses):
            if abs(p.mass() - m) > tol:
                raise ValueError("stored bin mass disagrees with integral")
            if piece_minimum(p.coeffs, p.lower, p.upper) < -tol:
                raise ValueError(f"negative density on [{p.lower}, {p.upper}]")
        return True

    def reweighted(self, masses):
        """Same piece shapes, rescaled so piece j integrates to masses[j].

        A piece whose current mass is ~0 cannot be rescaled meaningfully and
        falls back to a constant. Used to specialize a globally fitted
        density to one network branch's bin counts.
        """
        masses = np.asarray(masses, dtype=float)
        total = float(masses.sum())
        if total <= 0:
            raise ValueError("reweighting needs positive total mass")
        if abs(total - 1.0) > 1e-12:
            masses = masses / total
        # masses already normalized pass through untouched, so a load/save
        # cycle reproduces the stored decimals bit for bit
        new_pieces = []
        for p, m in zip(self.pieces, masses):
            old = p.mass()
            if old > 1e-12:
                scale = m / old
                new_pieces.append(Piece(p.lower, p.upper, tuple(c * scale for c in p.coeffs)))
            else:
                new_pieces.append(Piece(p.lower, p.upper, (m / p.width,)))
        return PiecewisePoly(pieces=tuple(new_pieces), order=self.order,
                             bin_masses=tuple(float(m) for m in masses))


@dataclass(frozen=True)
class FitReport:
    chosen_bins: int
    chosen_order: int
    bic: float
    log_likelihood: float
    candidates: tuple = ()       # rows of (bins, order, bic)
    clipped: bool = False
    fallback_constant: bool = False


def piece_minimum(coeffs, a, b):
    """Minimum of the polynomial on [a, b]: endpoints plus interior critical points."""
    candidates = [evaluate_poly(coeffs, a), evaluate_poly(coeffs, b)]
    deriv = [j * c for j, c in enumerate(coeffs)][1:]
    if any(c != 0 for c in deriv):
        roots = np.roots(list(reversed(deriv)))
        for r in roots:
            if abs(r.imag) < 1e-9 and a < r.real < b:
                candidates.append(evaluate_poly(coeffs, float(r.real)))
    return float(min(candidates))


def bic_score(log_likelihood, n_params, n_samples) -> float:
    """n_params * ln(n_samples) - 2 * logL; lower is better."""
    return n_params * math.log(n_samples) - 2.0 * log_likelihood


def _histogram_density(values, edges):
    counts, _ = np.histogram(values, bins=edges)
    n = len(values)
    widths = np.diff(edges)
    return counts / (n * widths)


def _spline_knots(edges, order):
    return np.concatenate([
        np.full(order + 1, edges[0]),
        edges[1:-1],
        np.full(order + 1, edges[-1]),
    ])


def _power_coeffs_from_samples(xs, ys, order):
    """Exact degree-`order` polynomial through len(xs) >= order+1 samples,
    solved in shifted coordinates for conditioning and expanded back."""
    x0 = xs[0]
    t = np.asarray(xs) - x0
    local = np.polynomial.polynomial.polyfit(t, ys, order)
    # expand p(t) = p(x - x0) into powers of x via binomial shift
    out = np.zeros(order + 1)
    for m, cm in enumerate(local):
        for j in range(m + 1):
            out[j] += cm * math.comb(m, j) * (-x0) ** (m - j)
    return out


def _mass_constrained_lstsq(design, targets, knots, order, edges, bin_masses):
    """Least squares against the histogram with hard per-bin mass constraints.

    The constraints keep each piece's integral equal to the histogram mass,
    so smoothing never shifts probability between bins. Solved via the KKT
    system of the equality-constrained normal equations.
    """
    n_basis = design.shape[1]
    n_bins = len(edges) - 1
    constraint = np.zeros((n_bins, n_basis))
    unit = np.zeros(n_basis)
    for j in range(n_basis):
        unit[j] = 1.0
        basis = BSpline(knots, unit.copy(), order, extrapolate=False)
        for i in range(n_bins):
            constraint[i, j] = basis.integrate(edges[i], edges[i + 1])
        unit[j] = 0.0
    ata = design.T @ design
    kkt = np.block([
        [2.0 * ata, constraint.T],
        [constraint, np.zeros((n_bins, n_bins))],
    ])
    rhs = np.concatenate([2.0 * design.T @ targets, bin_masses])
    solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return solution[:n_basis]


def _spline_to_pieces(spline, edges, order):
    """Power-basis coefficients of the spline on each bin."""
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        # Chebyshev-flavored nodes avoid the endpoints' knot discontinuities
        ts = np.cos(np.pi * (2 * np.arange(order + 1) + 1) / (2 * (order + 1)))
        xs = a + (b - a) * (ts + 1) / 2 if order > 0 else np.array([(a + b) / 2])
        ys = spline(xs)
        coeffs = _power_coeffs_from_samples(xs, ys, order)
        pieces.append(Piece(float(a), float(b), tuple(float(c) for c in coeffs)))
    return pieces


def _clip_negative_piece(piece, order):
    """Refit a dipping piece against its own values floored at zero; if the
    refit still dips, fall back to a mass-preserving constant."""
    a, b = piece.lower, piece.upper
    coeffs = piece.coeffs
    for _ in range(3):
        if piece_minimum(coeffs, a, b) >= -1e-9:
            return Piece(a, b, coeffs)
        xs = np.linspace(a, b, max(32, 4 * (order + 1)))
        ys = np.maximum(evaluate_poly(coeffs, xs), 0.0)
        fitted = np.polynomial.polynomial.polyfit(xs - a, ys, order)
        out = np.zeros(order + 1)
        for m, cm in enumerate(fitted):
            for j in range(m + 1):
                out[j] += cm * math.comb(m, j) * (-a) ** (m - j)
        coeffs = tuple(float(c) for c in out)
    if piece_minimum(coeffs, a, b) >= -1e-9:
        return Piece(a, b, coeffs)
    mass = max(integrate_piece(coeffs, a, b), 0.0)
    return Piece(a, b, (mass / (b - a),))


def fit_piecewise_density(values, edges, order):
    """Fit a normalized piecewise polynomial of degree `order` on the given
    equal-width edges via a B-spline least-squares fit to the histogram
    density.

    Returns (PiecewisePoly, FitReport-ish flags dict). With fewer samples
    than free spline coefficients the fit falls back to the
    piecewise-constant histogram.
    """
    values = np.asarray(values, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if values.size == 0:
        raise ValueError("cannot fit a density to zero values")
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order {order} outside [0, {MAX_ORDER}]")
    n_bins = len(edges) - 1
    flags = {"clipped": False, "fallback_constant": False, "order": order}
    if len(values) < n_bins + order and order > 0:
        flags["fallback_constant"] = True
        flags["order"] = 0
        order = 0

    hist = _histogram_density(values, edges)
    if order == 0:
        pieces = [Piece(float(a), float(b), (float(h),))
                  for a, b, h in zip(edges[:-1], edges[1:], hist)]
    else:
        knots = _spline_knots(edges, order)
        n_basis = n_bins + order
        # several histogram-valued samples per bin make the LS system overdetermined
        per_bin = max(order + 2, 4)
        offsets = (np.arange(per_bin) + 0.5) / per_bin
        xs = (edges[:-1, None] + np.diff(edges)[:, None] * offsets[None, :]).ravel()
        ys = np.repeat(hist, per_bin)
        design = BSpline.design_matrix(xs, knots, order).toarray()
        coef = _mass_constrained_lstsq(design, ys, knots, order, edges,
                                       hist * np.diff(edges))
        spline = BSpline(knots, coef, order, extrapolate=False)
        pieces = _spline_to_pieces(spline, edges, order)

    clipped_pieces = []
    for p in pieces:
        fixed = _clip_negative_piece(p, order)
        if fixed.coeffs != p.coeffs:
            flags["clipped"] = True
        clipped_pieces.append(fixed)
    pieces = clipped_pieces

    total = sum(p.mass() for p in pieces)
    if total <= 0:
        # degenerate fit: uniform over the support
        width = edges[-1] - edges[0]
        pieces = [Piece(p.lower, p.upper, (1.0 / width,)) for p in pieces]
        total = sum(p.mass() for p in pieces)
    pieces = [Piece(p.lower, p.upper, tuple(c / total for c in p.coeffs)) for p in pieces]
    masses = tuple(p.mass() for p in pieces)
    poly = PiecewisePoly(pieces=tuple(pieces), order=int(flags["order"]), bin_masses=masses)
    return poly, flags


def degenerate_spike(value, eps_scale=1e-6):
    """Single-value column: a constant sliver of width 2*eps around the value."""
    eps = max(abs(value), 1.0) * eps_scale
    lo, hi = value - eps, value + eps
    piece = Piece(lo, hi, (1.0 / (2 * eps),))
    return PiecewisePoly(pieces=(piece,), order=0, bin_masses=(piece.mass(),))


def _train_log_likelihood(poly, values):
    return float(sum(math.log(max(poly.pdf(v), _DENSITY_FLOOR)) for v in values))


def select_model(values, bins_grid=DEFAULT_BINS_GRID, order_grid=DEFAULT_ORDER_GRID,
                 support=None):
    """Grid-search (bins, order) by BIC with n_params = bins * (order + 1).

    Ties break toward fewer bins, then lower order, so repeated runs pick
    the same model. `support` fixes the fitting range (values are clamped
    into it); by default the observed range is used. Returns
    (PiecewisePoly, FitReport).
    """
    values = np.asarray(values, dtype=float)
    bins_grid = sorted(set(int(b) for b in bins_grid))
    order_grid = sorted(set(int(k) for k in order_grid))
    if not bins_grid or not order_grid:
        raise ValueError("selection grids must be non-empty")
    if min(bins_grid) < 2:
        raise ValueError("bin counts below 2 are not valid")
    if max(order_grid) > MAX_ORDER or min(order_grid) < 0:
        raise ValueError(f"orders must lie in [0, {MAX_ORDER}]")

    if support is not None:
        values = np.clip(values, support[0], support[1])
        lo, hi = float(support[0]), float(support[1])
    else:
        lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        poly = degenerate_spike(lo)
        report = FitReport(chosen_bins=1, chosen_order=0, bic=float("nan"),
                           log_likelihood=_train_log_likelihood(poly, values))
        return poly, report

    n = len(values)
    best = None
    candidates = []
    for b in bins_grid:
        edges = np.linspace(lo, hi, b + 1)
        for k in order_grid:
            poly, flags = fit_piecewise_density(values, edges, k)
            ll = _train_log_likelihood(poly, values)
            n_params = b * (int(flags["order"]) + 1)
            score = bic_score(ll, n_params, n)
            candidates.append((b, k, score))
            key = (score, b, k)
            if best is None or key < best[0]:
                best = (key, poly, flags, ll)
    key, poly, flags, ll = best
    report = FitReport(
        chosen_bins=key[1],
        chosen_order=int(flags["order"]),
        bic=key[0],
        log_likelihood=ll,
        candidates=tuple(candidates),
        clipped=flags["clipped"],
        fallback_constant=flags["fallback_constant"],
    )
    return poly, report


def leaf_mass(poly: PiecewisePoly, a, b) -> float:
    """Probability mass of [a, b]: split at piece boundaries and integrate
    each fragment in closed form. The out-of-support part contributes zero.
    """
    if a > b:
        raise ValueError(f"interval [{a}, {b}] is inverted")
    lo, hi = poly.support
    if a < lo - 1e-12 or b > hi + 1e-12:
        warnings.warn(f"interval [{a}, {b}] reaches outside support [{lo}, {hi}]",
                      OutOfSupportWarning, stacklevel=2)
    a_eff, b_eff = max(a, lo), min(b, hi)
    if a_eff >= b_eff:
        return 0.0
    total = 0.0
    for p in poly.pieces:
        left = max(a_eff, p.lower)
        right = min(b_eff, p.upper)
        if left < right:
            total += integrate_piece(p.coeffs, left, right)
    return total
