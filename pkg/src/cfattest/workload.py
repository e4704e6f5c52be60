"""Synthetic benign workloads standing in for traced programs.

The generated program is a chain of loop regions laid out in address order,
like straight-line code calling a series of loops. Inside a region, blocks
fall through to their successor and may branch back to the loop head
(continue) or forward to the loop latch (break); optionally, rare jumps lead
into another region. The last block of each region either loops back to the
region head or exits to the next region; the last region may start another
pass at the program entry.

A trace is one run of ``trace_len`` steps: ``n_passes`` trips through all
regions, after which the program idles in its last loop. Branch choices are
random with per-trace (input-dependent) odds and each region iterates an
input-dependent number of times. Iteration budgets are sized so the real work
takes about 80% of the trace.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CfaError, SpecError
from .trace_io import Trace

BASE_ADDRESS = 0x400000
FAR_JUMP_ODDS = 0.01
MIN_ITERS = 25
# share of the trace spent on real work; the rest is the idle loop
RUN_FRACTION = 0.8


@dataclass(frozen=True)
class WorkloadSpec:
    n_blocks: int = 100
    branching: float = 2.0
    trace_len: int = 10_000
    n_traces: int = 111
    input_entropy: float = 0.02
    seed: int = 0
    region_size: tuple = (5, 12)
    far_jump_prob: float = 0.0
    n_passes: int = 1
    retry_budget: int = 100

    def __post_init__(self):
        if self.n_blocks < 2:
            raise SpecError("n_blocks must be >= 2")
        if self.trace_len < self.n_blocks:
            raise SpecError("trace_len must be >= n_blocks")
        if self.branching < 1:
            raise SpecError("branching is a mean out-degree and must be >= 1")
        if self.n_traces < 1 or self.input_entropy < 0:
            raise SpecError("n_traces must be >= 1 and input_entropy >= 0")
        if self.n_passes < 1 or not 0 <= self.far_jump_prob <= 1:
            raise SpecError("n_passes must be >= 1 and far_jump_prob in [0, 1]")
        lo, hi = self.region_size
        if not 2 <= lo <= hi:
            raise SpecError("region_size must be (lo, hi) with 2 <= lo <= hi")


@dataclass
class Program:
    """Ground-truth CFG over block indices ``0..n-1``.

    ``succ[i]``/``weights[i]`` are the ordinary branch targets of block ``i``
    and their base odds. ``regions`` holds ``(head, tail, base_iters)``; the
    tail's loop-back to ``head`` is governed by the iteration budget instead
    of the odds.
    """

    addresses: np.ndarray
    succ: list
    weights: list
    regions: list

    @property
    def n_blocks(self) -> int:
        return len(self.addresses)

    def edges(self) -> set:
        out = {(u, v) for u, targets in enumerate(self.succ) for v in targets}
        for k, (head, tail, _) in enumerate(self.regions):
            out.add((tail, head))
            out.add((tail, self.regions[k + 1][0] if k + 1 < len(self.regions) else 0))
        return out

    def edge_set(self) -> set:
        a = self.addresses.tolist()
        return {(a[u], a[v]) for u, v in self.edges()}


def _partition(n, lo, hi, rng):
    bounds = [0]
    while bounds[-1] < n:
        bounds.append(min(n, bounds[-1] + int(rng.integers(lo, hi + 1))))
    if len(bounds) > 2 and bounds[-1] - bounds[-2] < 2:
        bounds.pop(-2)  # no single-block tail region
    return list(zip(bounds[:-1], bounds[1:]))


def _random_program(spec: WorkloadSpec, rng: np.random.Generator) -> Program:
    n = spec.n_blocks
    sizes = rng.integers(1, 16, n) * 4
    addresses = (BASE_ADDRESS + np.concatenate([[0], np.cumsum(sizes)[:-1]])).astype(np.uint64)
    spans = _partition(n, *spec.region_size, rng)
    heads = [s for s, _ in spans]
    succ = [[] for _ in range(n)]
    for s, e in spans:
        for i in range(s, e - 1):
            targets = {i + 1}
            # tail edges (loop-back and exit) already give the tail two successors
            for _ in range(rng.poisson(max(spec.branching - 1.0, 0.0))):
                r = rng.random()
                if r < spec.far_jump_prob:
                    targets.add(heads[int(rng.integers(0, len(heads)))])
                elif r < 0.5:
                    # continue: back to the loop head
                    targets.add(s)
                else:
                    # break out of the body to the loop latch
                    targets.add(e - 1)
            succ[i] = sorted(targets)
    weights = []
    region_of = np.repeat(np.arange(len(spans)), [e - s for s, e in spans])
    for i, t in enumerate(succ):
        # floor the odds so every branch is exercised in every run
        w = 0.2 + rng.dirichlet(np.ones(len(t))) if t else np.zeros(0)
        w = w / w.sum() if t else w
        if len(t) > 1:
            # keep fall-through likely so short inner loops terminate quickly
            w = 0.5 * w + 0.5 * (np.array(t) == i + 1)
            # jumps out of the region are rare paths (error handling, early exit)
            w = w * np.where(region_of[t] == region_of[i], 1.0, FAR_JUMP_ODDS)
            w = w / w.sum()
        weights.append(w)

    body = _expected_body_steps(succ, weights, spans)
    share = rng.dirichlet(np.full(len(spans), 2.0))
    budget = RUN_FRACTION * spec.trace_len / spec.n_passes
    regions = [(s, e - 1, max(MIN_ITERS, int(round(share[k] * budget / body[k]))))
               for k, (s, e) in enumerate(spans)]
    return Program(addresses, succ, weights, regions)


def _expected_body_steps(succ, weights, spans):
    """Expected blocks executed per region iteration, ignoring far jumps."""
    out = []
    for s, e in spans:
        m = e - s
        q = np.zeros((m, m))
        for i in range(s, e - 1):
            for v, w in zip(succ[i], weights[i]):
                if s <= v < e:
                    q[i - s, v - s] += w
        # tail is absorbing for this computation
        visits = np.linalg.solve((np.eye(m) - q).T, np.eye(m)[0])
        out.append(float(visits.sum()))
    return out


def _strongly_connected(prog: Program) -> bool:
    pairs = np.array(sorted(prog.edges())).T
    n = prog.n_blocks
    adj = coo_matrix((np.ones(pairs.shape[1]), (pairs[0], pairs[1])), shape=(n, n))
    return connected_components(adj, directed=True, connection="strong")[0] == 1


def make_program(spec: WorkloadSpec, rng: np.random.Generator) -> Program:
    for _ in range(spec.retry_budget):
        prog = _random_program(spec, rng)
        # a walk must never get trapped before reaching trace_len
        if _strongly_connected(prog):
            return prog
    raise CfaError(f"no strongly connected program in {spec.retry_budget} attempts")


def walk(prog: Program, length: int, n_passes: int, entropy: float,
         rng: np.random.Generator) -> np.ndarray:
    """One ``length``-step execution starting at block 0.

    The program makes ``n_passes`` trips through all regions and then idles in
    its last region, like firmware that finishes its work and waits in a main
    loop. Runs longer than ``length`` are cut. Branch odds and loop counts are
    jittered per call by a lognormal factor of scale ``entropy``, standing in
    for input-dependent behavior.
    """
    cums = []
    for w in prog.weights:
        if len(w) > 1:
            jit = w * np.exp(entropy * rng.standard_normal(len(w)))
            c = np.cumsum(jit / jit.sum())
            c[-1] = 1.0
            cums.append(c.tolist())
        else:
            cums.append(None)
    iters = [max(1, int(round(it * np.exp(entropy * rng.standard_normal()))))
             for _, _, it in prog.regions]
    tail_of = {tail: k for k, (_, tail, _) in enumerate(prog.regions)}
    heads = [h for h, _, _ in prog.regions]
    last = len(heads) - 1
    left = iters[:]
    passes = 0
    succ = prog.succ
    draws = rng.random(length).tolist()
    node = 0
    path = [0]
    append = path.append
    for r in draws[: length - 1]:
        k = tail_of.get(node)
        if k is not None:
            left[k] -= 1
            if left[k] > 0 or passes == n_passes:
                node = heads[k]
            else:
                left[k] = iters[k]
                if k == last:
                    passes += 1
                    node = heads[0] if passes < n_passes else heads[k]
                else:
                    node = heads[k + 1]
        else:
            targets = succ[node]
            node = targets[bisect_right(cums[node], r)] if len(targets) > 1 else targets[0]
        append(node)
    return prog.addresses[np.array(path)]


def gen_workload_with_program(spec: WorkloadSpec):
    rng = np.random.default_rng(spec.seed)
    prog = make_program(spec, rng)
    traces = [Trace(walk(prog, spec.trace_len, spec.n_passes, spec.input_entropy, rng),
                    f"w{spec.seed}-t{i}")
              for i in range(spec.n_traces)]
    return prog, traces


def gen_workload(spec: WorkloadSpec) -> list:
    """``spec.n_traces`` benign traces over one shared program."""
    return gen_workload_with_program(spec)[1]
