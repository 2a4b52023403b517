"""Spectral (diffusion maps) embedding from a renormalized Laplacian."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ValidationError
from .io import read_matrix_csv

DENSE_LIMIT = 3000


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray
    source: str = "computed"
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2:
            raise ValidationError(f"embedding must be 2-D, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            row = int(np.argwhere(~np.isfinite(coords))[0, 0])
            raise ValidationError(f"non-finite embedding coordinate in row {row}")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self):
        return self.coords.shape[0]

    @property
    def m(self):
        return self.coords.shape[1]


def fix_signs(vectors, atol=1e-12):
    """Flip columns so the first entry with magnitude above ``atol`` is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        big = np.flatnonzero(np.abs(col) > atol * max(np.abs(col).max(), 1e-300))
        if big.size and col[big[0]] < 0:
            vectors[:, k] = -col
    return vectors


def _symmetrized(lap, operator):
    """Symmetric matrix similar to the requested operator and the back-transform."""
    L = lap.L
    wt = lap.renorm_weights
    if wt is None:
        raise ValidationError(
            "Laplacian lacks renormalization weights; cannot symmetrize"
        )
    s = np.sqrt(wt)
    # W^{1/2} L W^{-1/2} is symmetric because W^{-1} Lt is similar to
    # W^{-1/2} Lt W^{-1/2}.
    S = sp.diags(s) @ L @ sp.diags(1.0 / s)
    S = ((S + S.T) * 0.5).tocsr()
    if operator == "normalized":
        # eigenvectors of Wt^{-1} Lt: shift and scale of the same matrix
        scale = lap.bandwidth ** 2 / 4.0
        S = (S * scale + sp.identity(S.shape[0], format="csr")).tocsr()
    elif operator != "laplacian":
        raise ValidationError(f"unknown operator {operator!r}")
    return S, 1.0 / s


def _top_eigenpairs(S, k, method, tol):
    n = S.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        vals, vecs = la.eigh(S.toarray(), subset_by_index=[n - k, n - 1])
    elif method == "lanczos":
        ncv = min(n, max(4 * k + 1, 40))
        v0 = np.ones(n) / np.sqrt(n)
        try:
            vals, vecs = spla.eigsh(S, k=k, which="LA", ncv=ncv, tol=tol,
                                    maxiter=20 * n, v0=v0)
        except spla.ArpackNoConvergence as exc:
            resid = None
            if exc.eigenvalues is not None and len(exc.eigenvalues):
                r = S @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
                resid = float(np.linalg.norm(r, axis=0).max())
            raise ConvergenceError(
                f"Lanczos eigensolver did not converge (attained residual {resid})",
                attained=resid,
            ) from None
    else:
        raise ValidationError(f"unknown eigensolver {method!r}")
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def spectral_embed(lap, m, method="auto", operator="laplacian", tol=0.0,
                   residual_tol=1e-8):
    """Embed with the ``m`` eigenvectors of ``L`` nearest zero, trivial one dropped.

    Eigenvectors are scaled to norm ``sqrt(n)`` with the first clearly
    nonzero entry positive. ``operator="normalized"`` uses ``Wt^-1 Lt``
    instead of ``L`` (same eigenvectors, eigenvalues mapped affinely).
    """
    n = lap.n
    if m < 1 or m >= n:
        raise ValidationError(f"embedding dimension must satisfy 1 <= m < n, got m={m}, n={n}")
    S, back = _symmetrized(lap, operator)
    vals, vecs = _top_eigenpairs(S, m + 1, method, tol)
    vals, vecs = vals[1:], vecs[:, 1:]
    coords = vecs * back[:, None]
    coords /= np.linalg.norm(coords, axis=0)

    if operator == "laplacian":
        A = lap.L
    else:
        A = (lap.L * (lap.bandwidth ** 2 / 4.0) + sp.identity(n)).tocsr()
    resid = np.linalg.norm(A @ coords - coords * vals, axis=0)
    bound = residual_tol * spla.norm(A, np.inf)
    if np.any(resid > bound):
        raise ConvergenceError(
            f"eigenpair residual {resid.max():.3e} exceeds {bound:.3e}",
            attained=float(resid.max()),
        )
    coords = fix_signs(coords) * np.sqrt(n)
    return Embedding(coords=coords, source="computed", eigenvalues=vals)


def load_embedding(path, n=None, skip_header=False):
    """Read externally computed coordinates (``n`` rows x ``m`` columns)."""
    coords = read_matrix_csv(path, skip_header=skip_header, allow_nonfinite=True)
    if n is not None and coords.shape[0] != n:
        raise ValidationError(
            f"embedding {path} has {coords.shape[0]} rows, expected {n}"
        )
    return Embedding(coords=coords, source="external")
