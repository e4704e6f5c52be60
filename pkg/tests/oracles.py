"""Slow reference implementations the library is checked against.

Each oracle is written from the definitions alone, in plain Python loops,
and shares no code with the package.
"""

import math

import numpy as np


def naive_graph(steps):
    """Nodes in first-occurrence order and the sorted distinct transitions."""
    order, index = [], {}
    for a in steps:
        if a not in index:
            index[a] = len(order)
            order.append(a)
    edges = sorted({(index[steps[i]], index[steps[i + 1]]) for i in range(len(steps) - 1)})
    return order, edges


def naive_features(steps):
    """Per-node features by re-scanning the whole trace once per node."""
    nodes, edges = naive_graph(steps)
    T = len(steps)
    n = len(nodes)
    visits, first, last, mean, std, gap = ([0.0] * n for _ in range(6))
    for i, a in enumerate(nodes):
        times = [t for t in range(T) if steps[t] == a]
        visits[i] = float(len(times))
        first[i] = float(times[0])
        last[i] = float(times[-1])
        mean[i] = sum(times) / len(times)
        std[i] = math.sqrt(sum((t - mean[i]) ** 2 for t in times) / len(times))
        gap[i] = (times[-1] - times[0]) / (len(times) - 1) if len(times) > 1 else 0.0
    preds = [[u for u, v in edges if v == i] for i in range(n)]
    succs = [[v for u, v in edges if u == i] for i in range(n)]

    def avg(xs, vals):
        return sum(vals[j] for j in xs) / len(xs) if xs else 0.0

    rows = []
    for i in range(n):
        indeg, outdeg = len(preds[i]), len(succs[i])
        rows.append([
            (indeg + outdeg) / T,
            visits[i] / T,
            first[i] / T,
            last[i] / T,
            indeg / T,
            outdeg / T,
            visits[i] / T,
            (last[i] - first[i]) / T,
            std[i] / T,
            gap[i] / T,
            mean[i] / T,
            avg(preds[i], visits) / T,
            avg(succs[i], visits) / T,
            avg(preds[i], last) / T,
            avg(succs[i], last) / T,
        ])
    return nodes, edges, np.array(rows)


def naive_directed_hausdorff(a, b):
    """max over rows of ``a`` of the min Euclidean distance to a row of ``b``.

    Squares are summed left to right over coordinates, then one square root.
    """
    worst = 0.0
    for x in a:
        best = math.inf
        for y in b:
            s = 0.0
            for k in range(len(x)):
                d = float(x[k]) - float(y[k])
                s += d * d
            best = min(best, s)
        worst = max(worst, best)
    return math.sqrt(worst)


def naive_normalized_adjacency(edges, n):
    a = np.eye(n)
    for u, v in edges:
        a[u, v] = a[v, u] = 1.0
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


def central_differences(f, params, h=1e-6):
    """Numerical gradient of scalar ``f()`` w.r.t. every entry of every array in ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def step_decay(epoch, lr0=0.01, factor=3.0, every=150, cap=750):
    """Learning rate written as a lookup over the decay boundaries."""
    lr = lr0
    for boundary in range(every, cap + 1, every):
        if epoch >= boundary:
            lr = lr0 / factor ** (boundary // every)
    return lr


def vgae_loss_batch(weights, biases, a, x, pos, neg, masks, eps, kl_weight):
    """VGAE objective for a batch of parameter sets (leading axis ``B`` on every array).

    Written directly from the model definition: three ReLU graph convolutions
    with dropout masks after the first two, mean and log-variance heads, the
    reparameterized sample, per-pair binary cross-entropy and per-node KL.
    """
    def conv(h, w, b):
        return np.matmul(a, h) @ w + b[:, None, :]

    h = np.broadcast_to(x, (weights[0].shape[0],) + x.shape)
    h = np.maximum(conv(h, weights[0], biases[0]), 0) * masks[0]
    h = np.maximum(conv(h, weights[1], biases[1]), 0) * masks[1]
    h = np.maximum(conv(h, weights[2], biases[2]), 0)
    mu = conv(h, weights[3], biases[3])
    lv = conv(h, weights[4], biases[4])
    z = mu + np.exp(0.5 * lv) * eps
    n = x.shape[0]
    terms = []
    for pairs, sign in ((pos, 1.0), (neg, -1.0)):
        s = np.einsum("bij,bij->bi", z[:, pairs[0]], z[:, pairs[1]])
        terms.append(-np.log(1.0 / (1.0 + np.exp(-sign * s)) + 1e-15))
    recon = np.concatenate(terms, axis=1).mean(axis=1)
    kl = -0.5 / n * np.sum(1 + lv - mu**2 - np.exp(lv), axis=(1, 2))
    return recon + kl_weight * kl


def batched_central_differences(weights, biases, loss_fn, h=1e-6, chunk=512):
    """Central-difference gradient of every parameter, many perturbations per call."""
    params = list(weights) + list(biases)
    grads = []
    for k, p in enumerate(params):
        g = np.zeros(p.size)
        for start in range(0, p.size, chunk):
            idx = np.arange(start, min(p.size, start + chunk))
            batch = [np.repeat(q[None], 2 * len(idx), axis=0) for q in params]
            flat = batch[k].reshape(2 * len(idx), -1)
            flat[np.arange(len(idx)), idx] += h
            flat[len(idx) + np.arange(len(idx)), idx] -= h
            out = loss_fn(batch[:5], batch[5:])
            g[idx] = (out[: len(idx)] - out[len(idx):]) / (2 * h)
        grads.append(g.reshape(p.shape))
    return grads
