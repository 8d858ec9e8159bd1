"""Report rendering: density curve samples as delimited text plus matplotlib
figures written alongside the data files.

Curves sample each polynomial piece at 512 points including both endpoints,
so an interior boundary appears twice with its two one-sided values; a
discontinuity between pieces is a feature of the representation, not a bug.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .polyfit import PiecewisePoly, evaluate_poly

POINTS_PER_PIECE = 512


def density_curve(poly: PiecewisePoly, points_per_piece=POINTS_PER_PIECE):
    """(x, p(x)) samples, piece by piece; boundaries carry one-sided values."""
    rows = []
    for piece in poly.pieces:
        xs = np.linspace(piece.lower, piece.upper, points_per_piece)
        ys = evaluate_poly(piece.coeffs, xs)
        rows.extend(zip(xs.tolist(), np.atleast_1d(ys).tolist()))
    return rows


def write_curve(rows, path, delimiter="\t", feature_name="x"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{feature_name}{delimiter}density\n")
        for x, y in rows:
            fh.write(f"{x:.17g}{delimiter}{y:.17g}\n")


def render_curve_png(poly: PiecewisePoly, path, feature_name="x",
                     points_per_piece=POINTS_PER_PIECE):
    fig, ax = plt.subplots(figsize=(7, 4))
    for k, piece in enumerate(poly.pieces):
        xs = np.linspace(piece.lower, piece.upper, points_per_piece)
        ys = np.atleast_1d(evaluate_poly(piece.coeffs, xs))
        ax.plot(xs, ys, color="C0" if k % 2 == 0 else "C1", linewidth=1.5)
        ax.axvline(piece.lower, color="0.85", linewidth=0.6, zorder=0)
    ax.axvline(poly.pieces[-1].upper, color="0.85", linewidth=0.6, zorder=0)
    ax.set_xlabel(feature_name)
    ax.set_ylabel("density")
    ax.set_title(f"piecewise polynomial density (order {poly.order}, "
                 f"{len(poly.pieces)} pieces)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench_png(report, path):
    lengths = [c.length for c in report.cells]
    means = [c.mean_ns for c in report.cells]
    medians = [c.median_ns for c in report.cells]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(lengths, means, "o-", label="mean")
    ax.plot(lengths, medians, "s--", label="median")
    ax.set_xlabel("query length (atoms)")
    ax.set_ylabel("latency (ns/query)")
    ax.set_xticks(lengths)
    ax.set_title("query latency vs length")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
