"""Tangent spaces by weighted local PCA, pushforward metric by RMetric."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNeighborhoodError, RankDeficiencyError, ValidationError
from .graph import local_positions

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent bases ``basis[r]`` (``D x d``) at points ``indices[r]``."""

    basis: np.ndarray
    spectrum: np.ndarray
    indices: np.ndarray

    @property
    def d(self):
        return self.basis.shape[2]

    @property
    def D(self):
        return self.basis.shape[1]


@dataclass(frozen=True)
class PushforwardMetric:
    """Per-point metric ``G`` (``m x m``), its eigenvectors and eigenvalues of ``H``."""

    G: np.ndarray
    V: np.ndarray
    eigenvalues: np.ndarray
    indices: np.ndarray


def _sign_fix_columns(M):
    for k in range(M.shape[1]):
        col = M[:, k]
        scale = np.abs(col).max()
        if scale == 0:
            continue
        first = np.flatnonzero(np.abs(col) > 1e-12 * scale)[0]
        if col[first] < 0:
            M[:, k] = -col
    return M


def local_pca(local_data, weights, d, index=None):
    """Weighted local PCA of one neighborhood.

    Parameters
    ----------
    local_data : (k, D) array
        Neighbor coordinates.
    weights : (k,) array
        Positive kernel weights of the neighbors.
    d : int
        Intrinsic dimension.

    Returns
    -------
    T : (D, d) array with orthonormal columns, by decreasing singular value.
    spectrum : (d,) array of the retained singular values of the weighted
        difference matrix.
    """
    Xi = np.asarray(local_data, dtype=float)
    w = np.asarray(weights, dtype=float)
    k, D = Xi.shape
    if k < d:
        raise DegenerateNeighborhoodError(index, f"only {k} neighbors for d={d}")
    if d > D:
        raise ValidationError(f"intrinsic dimension {d} exceeds ambient dimension {D}")
    if np.any(w <= 0):
        raise ValidationError("kernel weights must be positive")
    total = w.sum()
    mean = w @ Xi / total
    Z = (w / total)[:, None] * (Xi - mean)
    # thin SVD of Z; its right singular vectors diagonalize Z^T Z
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    if s.size < d or s[d - 1] <= RANK_TOL * max(s[0], 1e-300) or s[0] == 0:
        raise DegenerateNeighborhoodError(index, "weighted neighborhood has rank < d")
    T = _sign_fix_columns(Vt[:d].T.copy())
    return T, s[:d].copy()


def estimate_tangent_frames(cloud, graph, d, indices=None, skip_degenerate=False):
    """Run :func:`local_pca` at every point of ``indices`` (all points by default).

    With ``skip_degenerate`` degenerate points are dropped with a warning
    instead of raising.
    """
    if indices is None:
        indices = np.arange(cloud.n)
    bases, spectra, kept = [], [], []
    for i in np.asarray(indices, dtype=int):
        try:
            T, s = local_pca(local_positions(cloud, graph, i), graph.kernel_row(i), d, index=i)
        except DegenerateNeighborhoodError as exc:
            if not skip_degenerate:
                raise
            log.warning("skipping point %d: %s", i, exc)
            continue
        bases.append(T)
        spectra.append(s)
        kept.append(i)
    if not kept:
        raise DegenerateNeighborhoodError(None, "every requested point is degenerate")
    return TangentFrame(basis=np.stack(bases), spectrum=np.stack(spectra),
                        indices=np.asarray(kept, dtype=int))


def rmetric(laplacian_row, local_embedding, center, d, index=None, rank_tol=RANK_TOL):
    """Pushforward metric at one point.

    ``H = 1/2 * Phi_c^T diag(L_row) Phi_c`` with ``Phi_c`` the neighbor
    embedding coordinates centered at ``center``; ``H`` estimates the dual
    metric, so ``G = V diag(1/Lambda) V^T`` over its top ``d`` eigenpairs.
    The factor 1/2 comes from ``Delta(f g) = 2 <grad f, grad g>`` for
    functions vanishing at the center.

    Returns ``(G, V, Lambda)``.
    """
    Phi = np.asarray(local_embedding, dtype=float) - np.asarray(center, dtype=float)
    Lrow = np.asarray(laplacian_row, dtype=float)
    if Phi.shape[0] != Lrow.shape[0]:
        raise ValidationError("Laplacian row and local embedding disagree in length")
    m = Phi.shape[1]
    if d > m:
        raise ValidationError(f"intrinsic dimension {d} exceeds embedding dimension {m}")
    H = 0.5 * (Phi.T * Lrow) @ Phi
    H = 0.5 * (H + H.T)
    vals, vecs = np.linalg.eigh(H)
    vals, vecs = vals[::-1][:d], vecs[:, ::-1][:, :d]
    if np.any(vals <= rank_tol):
        raise RankDeficiencyError(index, vals.tolist())
    V = _sign_fix_columns(vecs.copy())
    G = (V / vals) @ V.T
    return 0.5 * (G + G.T), V, vals


def estimate_metrics(laplacian, graph, embedding, d, indices=None):
    if indices is None:
        indices = np.arange(embedding.n)
    Phi = embedding.coords
    Gs, Vs, lams = [], [], []
    for i in np.asarray(indices, dtype=int):
        G, V, lam = rmetric(laplacian.row(i), Phi[graph.neighbors(i)], Phi[i], d, index=i)
        Gs.append(G)
        Vs.append(V)
        lams.append(lam)
    return PushforwardMetric(G=np.stack(Gs), V=np.stack(Vs), eigenvalues=np.stack(lams),
                             indices=np.asarray(indices, dtype=int))
