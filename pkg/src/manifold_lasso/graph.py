"""Radius neighborhood graph, Gaussian kernel matrix and renormalized Laplacian."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import IsolatedPointError, ValidationError

# Above this many points the default neighbor search switches to a k-d tree.
TREE_THRESHOLD = 10_000
# k-d trees degrade in high dimension; beyond this the chunked Gram search wins.
TREE_MAX_DIM = 8
# Candidate slack for the fast search; exact distances decide membership.
_SLACK = 1e-7


@dataclass(frozen=True)
class PointCloud:
    """``n x D`` matrix of samples, one point per row."""

    data: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValidationError(f"point cloud must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"point cloud must be non-empty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            row = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise ValidationError(f"non-finite coordinate in point {row}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def D(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric radius neighborhoods plus the sparse kernel matrix.

    ``indptr``/``indices`` hold the sorted neighbor lists in CSR layout; the
    point itself is excluded. ``kernel`` has the same pattern plus a unit
    diagonal.
    """

    indptr: np.ndarray
    indices: np.ndarray
    kernel: sp.csr_matrix
    radius: float
    bandwidth: float
    kernel_exponent: int = 2
    include_self: bool = False

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def sizes(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        _check_index(i, self.n)
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def kernel_row(self, i):
        """Kernel weights ``K[i, N_i]`` in neighbor order."""
        return _row_without_diag(self.kernel, i)


@dataclass(frozen=True)
class LaplacianMatrix:
    L: sp.csr_matrix
    bandwidth: float
    renorm_weights: np.ndarray | None = None

    @property
    def n(self):
        return self.L.shape[0]

    def row(self, i):
        """Off-diagonal entries ``L[i, N_i]`` in neighbor order."""
        return _row_without_diag(self.L, i)

    def diagonal(self):
        return self.L.diagonal()


def _check_index(i, n):
    if not 0 <= int(i) < n:
        raise IndexError(f"point index {i} out of range for {n} points")


def _row_without_diag(matrix, i):
    _check_index(i, matrix.shape[0])
    lo, hi = matrix.indptr[i], matrix.indptr[i + 1]
    cols = matrix.indices[lo:hi]
    keep = cols != i
    return matrix.data[lo:hi][keep]


def _candidates_brute(X, sq, start, stop, cutoff):
    """Candidate ``(row, col)`` pairs for rows ``start:stop`` by the Gram form."""
    d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
    # slack for cancellation error in the Gram form, relative to the norms
    d2 -= 4e-15 * (sq[start:stop, None] + sq[None, :])
    ii, jj = np.nonzero(d2 <= cutoff)
    return ii + start, jj


def _candidates_tree(tree, X, start, stop, radius):
    lists = tree.query_ball_point(X[start:stop], radius, return_sorted=True)
    counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    ii = np.repeat(np.arange(start, stop), counts)
    jj = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(counts.sum()))
    return ii, jj


def build_neighbor_graph(cloud, radius=None, bandwidth=1.0, kernel_exponent=2,
                         method="auto", chunk_elems=20_000_000):
    """Radius graph with Gaussian kernel ``exp(-dist**e / bandwidth**2)``.

    ``radius`` defaults to ``3 * bandwidth``. Pairs at distance exactly
    ``radius`` are neighbors. Both search methods enumerate a superset of
    candidate pairs and then decide membership on the same exact distance
    expression ``||x_i - x_j||``, so they produce identical graphs. Rows
    are processed in chunks so memory stays proportional to the number of
    edges.
    """
    if radius is None:
        radius = 3.0 * bandwidth
    if not radius > 0 or not bandwidth > 0:
        raise ValidationError("radius and bandwidth must be positive")
    if kernel_exponent not in (1, 2):
        raise ValidationError("kernel exponent must be 1 or 2")
    X = np.ascontiguousarray(cloud.data)
    n, D = X.shape
    if method == "auto":
        method = "tree" if n > TREE_THRESHOLD and D <= TREE_MAX_DIM else "brute"
    if method == "brute":
        sq = np.einsum("ij,ij->i", X, X)
        cutoff = radius * radius * (1 + 2 * _SLACK)
        rows = max(1, chunk_elems // n)
    elif method == "tree":
        tree = cKDTree(X)
        rows = max(1, chunk_elems // 1000)
    else:
        raise ValidationError(f"unknown neighbor search method {method!r}")

    index_type = np.int32 if n < 2 ** 31 - 1 else np.int64
    counts = np.zeros(n, dtype=np.int64)
    col_chunks, val_chunks = [], []
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        if method == "brute":
            ii, jj = _candidates_brute(X, sq, start, stop, cutoff)
        else:
            ii, jj = _candidates_tree(tree, X, start, stop, radius * (1 + _SLACK))
        diff = X[ii] - X[jj]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = dist <= radius
        ii, jj, dist = ii[keep], jj[keep], dist[keep]
        if kernel_exponent == 2:
            vals = np.exp(-(dist * dist) / (bandwidth * bandwidth))
        else:
            vals = np.exp(-dist / (bandwidth * bandwidth))
        counts[start:stop] = np.bincount(ii - start, minlength=stop - start)
        col_chunks.append(jj.astype(index_type))
        val_chunks.append(vals)

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    cols = np.concatenate(col_chunks)
    del col_chunks
    vals = np.concatenate(val_chunks)
    del val_chunks
    # candidates come sorted by column within each row; self is always present
    K = sp.csr_matrix((vals, cols, indptr), shape=(n, n))
    K.has_sorted_indices = True

    row_of = np.repeat(np.arange(n, dtype=index_type), counts)
    off = cols != row_of
    del row_of
    sizes = counts - 1
    isolated = np.flatnonzero(sizes == 0)
    if isolated.size:
        raise IsolatedPointError(isolated[0])
    nb_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=nb_indptr[1:])
    return NeighborGraph(
        indptr=nb_indptr,
        indices=cols[off],
        kernel=K,
        radius=float(radius),
        bandwidth=float(bandwidth),
        kernel_exponent=int(kernel_exponent),
    )


def _scaled_copy(matrix, data):
    return sp.csr_matrix((data, matrix.indices, matrix.indptr), shape=matrix.shape, copy=False)


def _row_index(matrix):
    return np.repeat(np.arange(matrix.shape[0]), np.diff(matrix.indptr))


def build_laplacian(graph):
    """Renormalized (diffusion maps) Laplacian of a kernel graph.

    1. ``w = K 1``; 2. ``Lt = W^-1 K W^-1``; 3. ``wt = Lt 1``;
    4. ``L = (4 / eps^2) (Wt^-1 Lt - I)``.
    """
    K = graph.kernel
    if np.any(graph.sizes < 1):
        raise IsolatedPointError(int(np.flatnonzero(graph.sizes < 1)[0]))
    rows = _row_index(K)
    cols = K.indices
    w = np.asarray(K.sum(axis=1)).ravel()
    winv = 1.0 / w
    lt_data = K.data * winv[rows] * winv[cols]
    Lt = _scaled_copy(K, lt_data)
    wt = np.asarray(Lt.sum(axis=1)).ravel()
    scale = 4.0 / (graph.bandwidth ** 2)
    l_data = scale * (lt_data / wt[rows])
    on_diag = rows == cols
    l_data[on_diag] -= scale
    L = _scaled_copy(K, l_data)
    return LaplacianMatrix(L=L, bandwidth=graph.bandwidth, renorm_weights=wt)


def local_positions(cloud, graph, i):
    """Rows of the neighbors of point ``i`` in neighbor order (``k_i x D``)."""
    return np.asarray(cloud.data[graph.neighbors(i)])


def graph_from_kernel(K, radius, bandwidth, kernel_exponent=2):
    """Rebuild a :class:`NeighborGraph` from a stored kernel matrix (unit diagonal)."""
    K = sp.csr_matrix(K)
    K.sort_indices()
    n = K.shape[0]
    if K.shape != (n, n):
        raise ValidationError(f"kernel matrix must be square, got {K.shape}")
    rows = _row_index(K)
    off = K.indices != rows
    if np.count_nonzero(~off) != n:
        raise ValidationError("kernel matrix must store every diagonal entry")
    sizes = np.bincount(rows[off], minlength=n)
    if np.any(sizes == 0):
        raise IsolatedPointError(int(np.flatnonzero(sizes == 0)[0]))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    return NeighborGraph(indptr=indptr, indices=K.indices[off], kernel=K,
                         radius=float(radius), bandwidth=float(bandwidth),
                         kernel_exponent=int(kernel_exponent))
