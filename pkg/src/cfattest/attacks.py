"""Synthetic code-reuse attack traces derived from benign ones.

ROP inserts uniformly sampled addresses, which usually creates jumps the
benign run never took. DOP splices in a walk over jumps that the benign
prefix already took, so the edge set of the output equals that of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoDopSpliceError, SpecError
from .graph import index_steps
from .trace_io import Trace

KINDS = ("rop", "dop")


@dataclass(frozen=True)
class AttackSpec:
    """Parameters of one synthetic attack. ``pos=None`` picks a position at random."""

    kind: str
    inserts: int
    pos: int | None = None
    repeats: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown attack kind {self.kind!r}")
        if self.inserts < 1:
            raise SpecError("inserts must be >= 1")
        if self.repeats < 0:
            raise SpecError("repeats must be >= 0")
        if self.pos is not None and self.pos < 0:
            raise SpecError("pos must be >= 0")


def gen_rop(trace: Trace, spec: AttackSpec) -> Trace:
    if spec.kind != "rop":
        raise SpecError(f"gen_rop got a {spec.kind} spec")
    steps = trace.steps
    if len(steps) == 0:
        raise SpecError("cannot inject into an empty trace")
    rng = np.random.default_rng(spec.seed)
    pos = int(rng.integers(0, len(steps) + 1)) if spec.pos is None else spec.pos
    if pos > len(steps):
        raise SpecError(f"pos {pos} beyond trace length {len(steps)}")
    inserted = steps[rng.integers(0, len(steps), spec.inserts)]
    out = np.concatenate([steps[:pos], inserted, steps[pos:]])
    return Trace(out, f"{trace.source_id}+rop{spec.inserts}@{pos}")


def _edge_index(idx: np.ndarray, n: int, upto: int | None = None):
    """Sorted unique edge keys ``src * n + dst`` from transitions ending before ``upto``."""
    seq = idx if upto is None else idx[:upto]
    if len(seq) < 2:
        return np.zeros(0, dtype=np.int64)
    return np.unique(seq[:-1] * n + seq[1:])


def _walk_targets(src, dst, target, steps):
    """``out[j][v]``: some prefix-edge walk of exactly ``j`` steps from ``v`` lands in ``target``."""
    out = [target]
    for _ in range(steps):
        nxt = np.zeros_like(target)
        nxt[src[out[-1][dst]]] = True
        out.append(nxt)
    return out


def _try_splice(idx, n, full_keys, pos, inserts, cyclic, rng):
    k = int(idx[:pos].max()) + 1  # prefix nodes are exactly ids < k (first-occurrence order)
    keys = _edge_index(idx, n, upto=pos)
    src, dst = keys // n, keys % n

    def mask(ids):
        m = np.zeros(k, dtype=bool)
        m[ids[ids < k]] = True
        return m

    entry = mask(full_keys[(full_keys // n) == idx[pos - 1]] % n)
    rejoin = mask(full_keys[(full_keys % n) == idx[pos]] // n)
    reach = None
    for s in rng.permutation(np.flatnonzero(entry)):
        if cyclic:
            # repeated copies also jump from the block's end back to its start
            reach = _walk_targets(src, dst, rejoin & mask(full_keys[(full_keys % n) == s] // n),
                                  inserts - 1)
        elif reach is None:
            reach = _walk_targets(src, dst, rejoin, inserts - 1)
        if not reach[inserts - 1][s]:
            continue
        atk = [int(s)]
        for j in range(inserts - 2, -1, -1):
            lo, hi = np.searchsorted(src, [atk[-1], atk[-1] + 1])
            cand = dst[lo:hi]
            atk.append(int(rng.choice(cand[reach[j][cand]])))
        return np.array(atk, dtype=np.int64)
    return None


def find_dop_splice(trace: Trace, spec: AttackSpec, retry_budget: int = 1000):
    """Return ``(pos, atk)`` where ``atk`` is the address block to splice in at ``pos``."""
    steps = trace.steps
    if spec.pos is not None and (spec.pos < 1 or spec.pos > len(steps)):
        raise SpecError(f"DOP pos must lie in [1, {len(steps)}], got {spec.pos}")
    if len(steps) < 2:
        raise NoDopSpliceError("trace too short for a DOP splice")
    rng = np.random.default_rng(spec.seed)
    node_ids, idx = index_steps(steps)
    n = len(node_ids)
    full_keys = _edge_index(idx, n)

    pos = spec.pos
    for _ in range(retry_budget):
        if pos is None or pos >= len(steps):
            pos = int(rng.integers(1, len(steps)))
        atk = _try_splice(idx, n, full_keys, pos, spec.inserts, spec.repeats > 0, rng)
        if atk is not None:
            return pos, node_ids[atk]
        pos = None
    raise NoDopSpliceError(f"no valid DOP splice found in {retry_budget} attempts")


def gen_dop(trace: Trace, spec: AttackSpec, retry_budget: int = 1000) -> Trace:
    if spec.kind != "dop":
        raise SpecError(f"gen_dop got a {spec.kind} spec")
    pos, atk = find_dop_splice(trace, spec, retry_budget)
    steps = trace.steps
    out = np.concatenate([steps[:pos], np.tile(atk, 1 + spec.repeats), steps[pos:]])
    return Trace(out, f"{trace.source_id}+dop{spec.inserts}x{1 + spec.repeats}@{pos}")


def gen_attack(trace: Trace, spec: AttackSpec, retry_budget: int = 1000) -> Trace:
    if spec.kind == "rop":
        return gen_rop(trace, spec)
    return gen_dop(trace, spec, retry_budget)
