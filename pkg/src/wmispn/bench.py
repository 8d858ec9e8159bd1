"""Query-latency benchmark: random conjunctive queries of growing length.

Each cell draws random queries against the model's feature supports (one
discrete atom substituted when the model has discrete features), runs a
warmup that is excluded from statistics, then times repeated plan+evaluate
calls on a monotonic clock. Parse time is excluded unless requested, and
the report carries the measured no-op (plan only) overhead so the share of
actual evaluation in the numbers is visible.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import KIND_CONTINUOUS
from .errors import UsageError
from .query import answer, build_plan, normalize, parse_query

MIN_REPS = 1000


@dataclass(frozen=True)
class BenchCell:
    length: int
    kind: str            # e.g. "c3" or "c2,d1"
    n_continuous: int
    n_discrete: int
    mean_ns: float
    median_ns: float
    reps: int
    warmup: int


@dataclass(frozen=True)
class BenchReport:
    cells: tuple
    plan_only_ns: float      # no-op path latency at length 1
    overhead_fraction: float  # plan_only / q1 latency
    threads: int = 1

    def rows(self):
        header = ["length", "kind", "mean_ns", "median_ns", "reps", "warmup"]
        body = [[c.length, c.kind, f"{c.mean_ns:.1f}", f"{c.median_ns:.1f}",
                 c.reps, c.warmup] for c in self.cells]
        return header, body


def random_query_text(schema, rng, length, force_discrete):
    """One random conjunctive query of the given length as query text."""
    continuous = [c for c in schema if c.kind == KIND_CONTINUOUS]
    discrete = [c for c in schema if c.kind != KIND_CONTINUOUS]
    n_discrete = 1 if force_discrete and discrete else 0
    n_continuous = length - n_discrete
    if n_continuous > len(continuous):
        raise UsageError(
            f"query length {length} needs {n_continuous} continuous features, "
            f"model has {len(continuous)} (max feasible length "
            f"{len(continuous) + (1 if discrete else 0)})")
    atoms = []
    chosen = rng.choice(len(continuous), size=n_continuous, replace=False)
    for idx in chosen:
        col = continuous[int(idx)]
        lo, hi = sorted(rng.uniform(col.minimum, col.maximum, size=2))
        atoms.append(f"{float(lo):.17g} <= {col.name} <= {float(hi):.17g}")
    if n_discrete:
        col = discrete[int(rng.integers(len(discrete)))]
        value = col.values[int(rng.integers(len(col.values)))]
        negate = "!" if rng.random() < 0.5 else ""
        atoms.append(f"{negate}{col.name} = {value}")
    return " & ".join(atoms), n_continuous, n_discrete


def _time_calls(calls, reps, warmup, threads=1):
    """Mean/median ns per call over `reps` timed repetitions cycling `calls`."""
    for i in range(warmup):
        calls[i % len(calls)]()
    samples = np.empty(reps)
    if threads == 1:
        for i in range(reps):
            fn = calls[i % len(calls)]
            t0 = time.perf_counter_ns()
            fn()
            samples[i] = time.perf_counter_ns() - t0
    else:
        def timed(i):
            fn = calls[i % len(calls)]
            t0 = time.perf_counter_ns()
            fn()
            return time.perf_counter_ns() - t0
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples[:] = list(pool.map(timed, range(reps)))
    return float(samples.mean()), float(np.median(samples))


def run_bench(model, lengths=(1, 2, 3, 4, 5), reps=MIN_REPS, seed=0,
              queries_per_cell=10, include_parse=False, threads=1) -> BenchReport:
    """Benchmark the model across query lengths; reps is clamped up to the
    1000-repetition floor that makes the statistics meaningful."""
    reps = max(int(reps), MIN_REPS)
    schema = model.schema
    spn = model.spn
    has_discrete = any(c.kind != KIND_CONTINUOUS for c in schema)
    rng = np.random.default_rng(seed)
    warmup = max(1, min(reps // 10, 100))

    cells = []
    q1_mean = None
    plan_only_ns = None
    for length in lengths:
        texts = []
        n_c = n_d = 0
        for _ in range(queries_per_cell):
            text, n_c, n_d = random_query_text(schema, rng, length, has_discrete)
            texts.append(text)
        if include_parse:
            calls = [
                (lambda t=t: answer(spn, normalize(parse_query(t), schema), schema))
                for t in texts
            ]
        else:
            asts = [normalize(parse_query(t), schema) for t in texts]
            calls = [
                (lambda a=a: answer(spn, a, schema))
                for a in asts
            ]
        mean_ns, median_ns = _time_calls(calls, reps, warmup, threads)
        kind = f"c{n_c},d{n_d}" if n_d else f"c{n_c}"
        cells.append(BenchCell(length=length, kind=kind, n_continuous=n_c, n_discrete=n_d,
                               mean_ns=mean_ns, median_ns=median_ns, reps=reps, warmup=warmup))
        if length == min(lengths):
            q1_mean = mean_ns
            asts = [normalize(parse_query(t), schema) for t in texts]
            noop = [
                (lambda a=a: build_plan(a.query_atoms, schema, model.densities))
                for a in asts
            ]
            plan_only_ns, _ = _time_calls(noop, max(MIN_REPS, reps // 2), warmup, 1)
    overhead = plan_only_ns / q1_mean if q1_mean else float("nan")
    return BenchReport(cells=tuple(cells), plan_only_ns=plan_only_ns,
                       overhead_fraction=overhead, threads=threads)


def write_report(report: BenchReport, path, delimiter="\t"):
    header, body = report.rows()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(header) + "\n")
        for row in body:
            fh.write(delimiter.join(str(v) for v in row) + "\n")
        fh.write(f"# plan_only_ns {report.plan_only_ns:.1f} "
                 f"overhead_fraction {report.overhead_fraction:.4f} "
                 f"threads {report.threads}\n")
