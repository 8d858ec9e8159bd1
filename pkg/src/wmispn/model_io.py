"""Versioned line-oriented text persistence for learned models.

The file is self-contained: schema, imputation values, bin edges, fitted
marginal densities, and the network node table, plus provenance (seed,
dataset digest, deterministic creation stamp). Floats print with 17
significant digits so a load/save cycle is byte-identical.

Layout (one record per line, space-separated)::

    wmispn-model 1
    meta seed 42
    meta dataset_sha256 <hex>
    ...
    params alpha 0.05 cluster_penalty 0.8 min_slice 10 pseudo_count 1 seed 42
    schema 5
    col sepal_length continuous <min> <max> impute <v>
    col species categorical 3 setosa versicolor virginica impute setosa
    edges 0 4 <e0> <e1> <e2> <e3>
    density 0 order 3 pieces 3
    piece <a> <b> <c0> <c1> <c2> <c3>
    spn 7
    node 0 sum 2 1 0.6 2 0.4
    node 1 product 2 3 4
    node 5 indicator 4 3 <p0> <p1> <p2>
    node 6 poly 0 3 <m0> <m1> <m2>

Poly leaves store their per-bin masses; the leaf density is rebuilt by
reweighting the feature's stored marginal density, which is exactly how the
learner created it.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .binning import BinningSpec
from .data import ColumnSchema, FeatureSchema, ImputeStats, KIND_CONTINUOUS
from .errors import ModelError
from .polyfit import Piece, PiecewisePoly
from .spn import IndicatorLeaf, PolyLeaf, ProductNode, Spn, SumNode
from .structure import LearnParams

FORMAT_NAME = "wmispn-model"
FORMAT_VERSION = 1


def fmt(x) -> str:
    """17 significant digits: exact round-trip for doubles, short when short."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ModelFile:
    schema: FeatureSchema
    impute: ImputeStats
    binning: BinningSpec
    densities: dict          # continuous column index -> PiecewisePoly
    spn: Spn
    params: LearnParams
    seed: int
    dataset_sha256: str
    dataset_rows: int
    created_unix: int


def dataset_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def creation_stamp() -> int:
    """Deterministic by default so identical runs write identical bytes;
    honors SOURCE_DATE_EPOCH when reproducible builds want a real date."""
    return int(os.environ.get("SOURCE_DATE_EPOCH", "0"))


def _encode_cell(text) -> str:
    # cells ride in a space-separated format; escape the separators
    return text.replace("%", "%25").replace(" ", "%20") or "%00"


def _decode_cell(token) -> str:
    if token == "%00":
        return ""
    return token.replace("%20", " ").replace("%25", "%")


def save_model(model: ModelFile, path):
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}"]
    lines.append(f"meta seed {model.seed}")
    lines.append(f"meta dataset_sha256 {model.dataset_sha256}")
    lines.append(f"meta dataset_rows {model.dataset_rows}")
    lines.append(f"meta created_unix {model.created_unix}")
    p = model.params
    lines.append("params "
                 f"alpha {fmt(p.alpha)} cluster_penalty {fmt(p.cluster_penalty)} "
                 f"min_slice {p.min_slice} pseudo_count {fmt(p.pseudo_count)} "
                 f"seed {p.seed} em_max_passes {p.em_max_passes}")
    lines.append(f"schema {len(model.schema)}")
    for j, col in enumerate(model.schema):
        imp = _encode_cell(model.impute.values[j])
        if col.kind == KIND_CONTINUOUS:
            lines.append(f"col {_encode_cell(col.name)} continuous "
                         f"{fmt(col.minimum)} {fmt(col.maximum)} impute {imp}")
        else:
            values = " ".join(_encode_cell(v) for v in col.values)
            lines.append(f"col {_encode_cell(col.name)} {col.kind} "
                         f"{len(col.values)} {values} impute {imp}")
    for j, col in enumerate(model.schema):
        if col.kind == KIND_CONTINUOUS:
            edges = model.binning.edges[j]
            lines.append(f"edges {j} {len(edges)} " + " ".join(fmt(e) for e in edges))
    for j in sorted(model.densities):
        poly = model.densities[j]
        lines.append(f"density {j} order {poly.order} pieces {len(poly.pieces)}")
        for piece in poly.pieces:
            coeffs = " ".join(fmt(c) for c in piece.coeffs)
            lines.append(f"piece {fmt(piece.lower)} {fmt(piece.upper)} {coeffs}")
    lines.append(f"spn {len(model.spn.nodes)}")
    for idx, node in enumerate(model.spn.nodes):
        if isinstance(node, SumNode):
            parts = " ".join(f"{c} {fmt(w)}" for c, w in zip(node.children, node.weights))
            lines.append(f"node {idx} sum {len(node.children)} {parts}")
        elif isinstance(node, ProductNode):
            parts = " ".join(str(c) for c in node.children)
            lines.append(f"node {idx} product {len(node.children)} {parts}")
        elif isinstance(node, IndicatorLeaf):
            parts = " ".join(fmt(q) for q in node.probs)
            lines.append(f"node {idx} indicator {node.group} {len(node.probs)} {parts}")
        elif isinstance(node, PolyLeaf):
            parts = " ".join(fmt(m) for m in node.density.bin_masses)
            lines.append(f"node {idx} poly {node.group} {len(node.density.bin_masses)} {parts}")
        else:
            raise ModelError(f"cannot serialize node {type(node).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        self.path = path
        with open(path, "r", encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self, expect=None):
        if self.pos >= len(self.lines):
            raise ModelError(f"{self.path}: truncated file (expected {expect or 'more'})")
        fields = self.lines[self.pos].split()
        self.pos += 1
        if expect is not None and (not fields or fields[0] != expect):
            found = fields[0] if fields else "<blank>"
            raise ModelError(f"{self.path}: line {self.pos}: expected {expect!r}, found {found!r}")
        return fields

    def done(self):
        return self.pos >= len(self.lines) or all(not l.strip() for l in self.lines[self.pos:])


def load_model(path) -> ModelFile:
    r = _Reader(path)
    try:
        header = r.next(FORMAT_NAME)
        version = int(header[1])
        if version != FORMAT_VERSION:
            raise ModelError(f"{path}: format version {version} unsupported "
                             f"(this build reads version {FORMAT_VERSION})")
        meta = {}
        while r.pos < len(r.lines) and r.lines[r.pos].startswith("meta "):
            fields = r.next("meta")
            meta[fields[1]] = fields[2]
        pf = r.next("params")
        kv = dict(zip(pf[1::2], pf[2::2]))
        params = LearnParams(alpha=float(kv["alpha"]),
                             cluster_penalty=float(kv["cluster_penalty"]),
                             min_slice=int(kv["min_slice"]),
                             pseudo_count=float(kv["pseudo_count"]),
                             seed=int(kv["seed"]),
                             em_max_passes=int(kv["em_max_passes"]))
        n_cols = int(r.next("schema")[1])
        columns = []
        impute_values = []
        for _ in range(n_cols):
            fields = r.next("col")
            name, kind = _decode_cell(fields[1]), fields[2]
            if kind == KIND_CONTINUOUS:
                columns.append(ColumnSchema(name=name, kind=kind,
                                            minimum=float(fields[3]), maximum=float(fields[4])))
                impute_values.append(_decode_cell(fields[6]))
            else:
                k = int(fields[3])
                values = tuple(_decode_cell(v) for v in fields[4:4 + k])
                columns.append(ColumnSchema(name=name, kind=kind, values=values))
                impute_values.append(_decode_cell(fields[4 + k + 1]))
        schema = FeatureSchema(columns=tuple(columns))
        impute = ImputeStats(values=tuple(impute_values))

        edges = [None] * n_cols
        while not r.done() and r.lines[r.pos].startswith("edges "):
            fields = r.next("edges")
            j, count = int(fields[1]), int(fields[2])
            edges[j] = np.array([float(v) for v in fields[3:3 + count]])
        binning = BinningSpec(schema=schema, edges=tuple(edges))

        densities = {}
        while not r.done() and r.lines[r.pos].startswith("density "):
            fields = r.next("density")
            j, order, n_pieces = int(fields[1]), int(fields[3]), int(fields[5])
            pieces = []
            for _ in range(n_pieces):
                pf = r.next("piece")
                pieces.append(Piece(lower=float(pf[1]), upper=float(pf[2]),
                                    coeffs=tuple(float(c) for c in pf[3:])))
            masses = tuple(p.mass() for p in pieces)
            densities[j] = PiecewisePoly(pieces=tuple(pieces), order=order, bin_masses=masses)

        n_nodes = int(r.next("spn")[1])
        nodes = [None] * n_nodes
        for _ in range(n_nodes):
            fields = r.next("node")
            idx, kind = int(fields[1]), fields[2]
            if kind == "sum":
                k = int(fields[3])
                children = tuple(int(fields[4 + 2 * i]) for i in range(k))
                weights = tuple(float(fields[5 + 2 * i]) for i in range(k))
                nodes[idx] = SumNode(children=children, weights=weights)
            elif kind == "product":
                k = int(fields[3])
                nodes[idx] = ProductNode(children=tuple(int(c) for c in fields[4:4 + k]))
            elif kind == "indicator":
                group, k = int(fields[3]), int(fields[4])
                nodes[idx] = IndicatorLeaf(group=group,
                                           probs=tuple(float(q) for q in fields[5:5 + k]))
            elif kind == "poly":
                group, k = int(fields[3]), int(fields[4])
                masses = [float(m) for m in fields[5:5 + k]]
                nodes[idx] = PolyLeaf(group=group, density=densities[group].reweighted(masses))
            else:
                raise ModelError(f"{path}: unknown node kind {kind!r}")
        if any(n is None for n in nodes):
            raise ModelError(f"{path}: node table has gaps")
        if not r.done():
            raise ModelError(f"{path}: trailing content at line {r.pos + 1}")
        spn = Spn(nodes)
    except (IndexError, ValueError, KeyError) as exc:
        raise ModelError(f"{path}: malformed model file ({exc})") from exc
    return ModelFile(schema=schema, impute=impute, binning=binning, densities=densities,
                     spn=spn, params=params, seed=int(meta.get("seed", params.seed)),
                     dataset_sha256=meta.get("dataset_sha256", ""),
                     dataset_rows=int(meta.get("dataset_rows", 0)),
                     created_unix=int(meta.get("created_unix", 0)))
