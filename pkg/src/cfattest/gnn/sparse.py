"""Normalized adjacency used by the graph convolutions."""

import numpy as np
import scipy.sparse as sp

# below this many nodes a dense operator is faster than CSR for our layer widths
DENSE_LIMIT = 1024


def normalize_adjacency(edges, n: int) -> sp.csr_matrix:
    """``D^-1/2 (A_sym + I) D^-1/2`` over the symmetrized, deduplicated edge set.

    Existing self-loops are absorbed into the identity, so every diagonal entry
    of ``A_sym + I`` is exactly one.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(2, -1)
    src, dst = edges
    off = src != dst
    rows = np.concatenate([src[off], dst[off], np.arange(n)])
    cols = np.concatenate([dst[off], src[off], np.arange(n)])
    a = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    a.data[:] = 1.0  # duplicates were summed
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    out = (d @ a @ d).tocsr()
    out.sort_indices()
    return out


def as_operator(a_hat):
    """Dense ndarray for small graphs, CSR otherwise; both support ``@``."""
    if sp.issparse(a_hat) and a_hat.shape[0] <= DENSE_LIMIT:
        return a_hat.toarray()
    return a_hat
