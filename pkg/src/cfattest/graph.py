"""Execution graphs built from a single trace.

Nodes are unique addresses in first-occurrence order; edges are the distinct
consecutive step pairs, stored in COO form (row 0 sources, row 1 targets).
Each node carries the 15 per-node features below, normalized by trace length.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyTraceError, ParseError, WriteError
from .trace_io import MAGIC, VERSION, Trace

FEATURE_NAMES = (
    "degree",
    "visits",
    "first_visit",
    "last_visit",
    "in_edges",
    "out_edges",
    "visit_frequency",
    "time_of_use",
    "visit_std",
    "mean_visit_gap",
    "mean_visit_step",
    "in_neighbor_mean_visits",
    "out_neighbor_mean_visits",
    "in_neighbor_mean_last_visit",
    "out_neighbor_mean_last_visit",
)
N_FEATURES = len(FEATURE_NAMES)
BIAS_FEATURE = "constant"

GRAPH_RECORD = 2
_GRAPH_HEADER = struct.Struct("<4sHHQQHQ")


@dataclass(frozen=True, eq=False)
class ExecutionGraph:
    node_ids: np.ndarray
    edges: np.ndarray
    features: np.ndarray
    trace_len: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ExecutionGraph):
            return NotImplemented
        return (self.trace_len == other.trace_len
                and np.array_equal(self.node_ids, other.node_ids)
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.features, other.features))

    def edge_set(self) -> set:
        ids = self.node_ids.tolist()
        return {(ids[u], ids[v]) for u, v in self.edges.T.tolist()}

    def permuted(self, perm) -> "ExecutionGraph":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return ExecutionGraph(self.node_ids[perm], inv[self.edges], self.features[perm],
                              self.trace_len)


def index_steps(steps: np.ndarray):
    # node ids follow first occurrence
    uniq, first, inverse = np.unique(steps, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return uniq[order], rank[inverse.reshape(-1)]


def _dedup_edges(idx: np.ndarray, n: int) -> np.ndarray:
    if len(idx) < 2:
        return np.zeros((2, 0), dtype=np.int64)
    keys = np.unique(idx[:-1] * n + idx[1:])
    return np.vstack([keys // n, keys % n])


def extract_features(idx: np.ndarray, n: int, edges: np.ndarray,
                     constant_feature: bool = False) -> np.ndarray:
    """Per-node feature matrix from the node-index sequence of a trace and its edges."""
    T = len(idx)
    t = np.arange(T, dtype=np.float64)
    visits = np.bincount(idx, minlength=n).astype(np.float64)
    first = np.full(n, T, dtype=np.int64)
    np.minimum.at(first, idx, np.arange(T))
    last = np.zeros(n, dtype=np.int64)
    np.maximum.at(last, idx, np.arange(T))
    first = first.astype(np.float64)
    last = last.astype(np.float64)

    src, dst = edges
    indeg = np.bincount(dst, minlength=n).astype(np.float64)
    outdeg = np.bincount(src, minlength=n).astype(np.float64)

    mean_step = np.bincount(idx, weights=t, minlength=n) / visits
    dev = t - mean_step[idx]
    std = np.sqrt(np.bincount(idx, weights=dev * dev, minlength=n) / visits)
    gaps = np.where(visits > 1, (last - first) / np.maximum(visits - 1, 1), 0.0)

    def neighbor_mean(group, values, counts):
        sums = np.bincount(group, weights=values, minlength=n)
        return np.divide(sums, counts, out=np.zeros(n), where=counts > 0)

    cols = [
        indeg + outdeg,
        visits,
        first,
        last,
        indeg,
        outdeg,
        None,  # frequency is already a ratio
        last - first,
        std,
        gaps,
        mean_step,
        neighbor_mean(dst, visits[src], indeg),
        neighbor_mean(src, visits[dst], outdeg),
        neighbor_mean(dst, last[src], indeg),
        neighbor_mean(src, last[dst], outdeg),
    ]
    X = np.empty((n, N_FEATURES + int(constant_feature)))
    for j, col in enumerate(cols):
        X[:, j] = visits / T if col is None else col / T
    if constant_feature:
        X[:, -1] = 1.0
    return X


def build_graph(trace: Trace, constant_feature: bool = False) -> ExecutionGraph:
    """Turn a trace into its execution graph in one vectorized pass."""
    steps = trace.steps if isinstance(trace, Trace) else np.asarray(trace, dtype=np.uint64)
    if len(steps) == 0:
        raise EmptyTraceError("cannot build a graph from an empty trace")
    node_ids, idx = index_steps(steps)
    n = len(node_ids)
    edges = _dedup_edges(idx, n)
    X = extract_features(idx, n, edges, constant_feature)
    return ExecutionGraph(node_ids, edges, X, len(steps))


def edge_pairs(steps) -> set:
    """Distinct (address, next address) pairs of a step sequence."""
    steps = np.asarray(steps, dtype=np.uint64)
    if len(steps) < 2:
        return set()
    pairs = np.unique(np.stack([steps[:-1], steps[1:]], axis=1), axis=0)
    return set(map(tuple, pairs.tolist()))


# -- serialization -----------------------------------------------------------

def graph_to_json(g: ExecutionGraph) -> str:
    return json.dumps({
        "node_ids": g.node_ids.tolist(),
        "edges": g.edges.tolist(),
        "features": g.features.tolist(),
        "trace_len": int(g.trace_len),
    }, separators=(",", ":"))


def graph_from_json(text: str) -> ExecutionGraph:
    try:
        raw = json.loads(text)
        node_ids = np.array(raw["node_ids"], dtype=np.uint64)
        edges = np.array(raw["edges"], dtype=np.int64).reshape(2, -1)
        features = np.array(raw["features"], dtype=np.float64).reshape(len(node_ids), -1)
        trace_len = int(raw["trace_len"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed graph JSON: {exc}") from exc
    _check(node_ids, edges)
    return ExecutionGraph(node_ids, edges, features, trace_len)


def graph_to_bytes(g: ExecutionGraph) -> bytes:
    header = _GRAPH_HEADER.pack(MAGIC, VERSION, GRAPH_RECORD, g.n_nodes, g.n_edges,
                                g.feature_dim, g.trace_len)
    return b"".join([
        header,
        g.node_ids.astype("<u8").tobytes(),
        g.edges.astype("<u4").tobytes(),
        g.features.astype("<f8").tobytes(),
    ])


def graph_from_bytes(data: bytes) -> ExecutionGraph:
    if len(data) < _GRAPH_HEADER.size:
        raise ParseError("truncated graph header", len(data))
    magic, version, record, n, m, f, trace_len = _GRAPH_HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError("bad magic", 0)
    if version != VERSION or record != GRAPH_RECORD:
        raise ParseError(f"not a graph container (version {version}, record {record})", 4)
    off = _GRAPH_HEADER.size
    need = off + 8 * n + 8 * m + 8 * n * f
    if len(data) != need:
        raise ParseError(f"graph container size {len(data)} != {need}", min(len(data), need))
    node_ids = np.frombuffer(data, "<u8", n, off).astype(np.uint64)
    off += 8 * n
    edges = np.frombuffer(data, "<u4", 2 * m, off).astype(np.int64).reshape(2, m)
    off += 8 * m
    features = np.frombuffer(data, "<f8", n * f, off).astype(np.float64).reshape(n, f)
    _check(node_ids, edges)
    return ExecutionGraph(node_ids, edges, features, trace_len)


def _check(node_ids, edges):
    if edges.size and (edges.min() < 0 or edges.max() >= len(node_ids)):
        raise ParseError("edge index out of range")


def save_graph(path, g: ExecutionGraph) -> None:
    path = Path(path)
    data = graph_to_bytes(g) if path.suffix == ".bin" else graph_to_json(g).encode()
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def load_graph(path) -> ExecutionGraph:
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return graph_from_bytes(data)
    return graph_from_json(data.decode())
