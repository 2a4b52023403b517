"""Tangent-space gradients of the embedding coordinates by metric pull-back."""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DegenerateNeighborhoodError
from .graph import local_positions
from .tangent import RANK_TOL, rmetric

COND_LIMIT = 1e12


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CoordinateGradients:
    """``Y[r]`` is ``d x m``; column ``k`` is grad phi_k at ``indices[r]`` in basis T."""

    Y: np.ndarray
    indices: np.ndarray
    ill_conditioned: tuple = field(default=())


def pullback_dphi(T, local_data, center, local_embedding, phi_center, laplacian_row, d,
                  index=None, metric=None):
    """Gradients of all embedding coordinates at one point, in the basis ``T``.

    Solves ``A^T Y = B^T G`` in the least-squares sense through a QR
    factorization of ``A^T``, where ``A = T^T (Xi - xi)^T`` and
    ``B = (Phi - phi)^T``. ``G`` is computed by :func:`rmetric` unless given.

    Returns ``(Y, condition_number_of_A_A^T)``.
    """
    if metric is None:
        metric, _, _ = rmetric(laplacian_row, local_embedding, phi_center, d, index=index)
    At = (np.asarray(local_data, dtype=float) - center) @ T          # k x d
    Bt = np.asarray(local_embedding, dtype=float) - phi_center       # k x m
    if At.shape[0] < d:
        raise DegenerateNeighborhoodError(index, f"only {At.shape[0]} neighbors for d={d}")
    Q, R = la.qr(At, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= RANK_TOL * max(diag.max(), 1e-300):
        raise DegenerateNeighborhoodError(index, "projected neighborhood has rank < d")
    Y = la.solve_triangular(R, Q.T @ (Bt @ metric))
    sv = np.linalg.svd(R, compute_uv=False)
    cond = float((sv[0] / sv[-1]) ** 2)
    return Y, cond


def estimate_coordinate_gradients(cloud, graph, laplacian, embedding, frames):
    """Run :func:`pullback_dphi` at every point of ``frames.indices``."""
    Phi = embedding.coords
    d = frames.d
    Ys, bad = [], []
    for r, i in enumerate(frames.indices):
        nbrs = graph.neighbors(i)
        Y, cond = pullback_dphi(frames.basis[r], local_positions(cloud, graph, i),
                                cloud.data[i], Phi[nbrs], Phi[i], laplacian.row(i), d, index=i)
        if cond > COND_LIMIT:
            bad.append(int(i))
        Ys.append(Y)
    if bad:
        warnings.warn(
            f"{len(bad)} neighborhoods are ill-conditioned (cond(A A^T) > {COND_LIMIT:g}); "
            f"first: point {bad[0]}",
            IllConditionedWarning,
            stacklevel=2,
        )
    return CoordinateGradients(Y=np.stack(Ys), indices=frames.indices.copy(),
                               ill_conditioned=tuple(bad))
