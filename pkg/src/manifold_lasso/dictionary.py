"""Dictionaries of smooth functions with analytic gradients.

A dictionary entry is built from a small JSON schema ``{name, family, params}``;
library users may also pass arbitrary ``evaluate``/``gradient`` callables.
All callables are vectorized: they take an ``(n, D)`` array and return
``(n,)`` values or ``(n, D)`` gradients.
"""

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DictionaryFunction:
    name: str
    evaluate: Callable
    gradient: Callable
    family: str = "callback"
    params: dict = field(default_factory=dict)
    identically_zero: bool = False

    def to_config(self):
        if self.family == "callback":
            raise ValidationError(f"function {self.name!r} is a callback and has no config form")
        return {"name": self.name, "family": self.family, "params": dict(self.params)}


# -- geometry of atom positions -------------------------------------------------

def _atom(X, a):
    return X[:, 3 * a:3 * a + 3]


def dihedral(X, atoms):
    """Dihedral angle of atoms ``(a, b, c, d)`` in ``(-pi, pi]``, per row of ``X``."""
    p0, p1, p2, p3 = (_atom(X, a) for a in atoms)
    F, G, H = p0 - p1, p1 - p2, p3 - p2
    A, B = np.cross(F, G), np.cross(H, G)
    gnorm = np.linalg.norm(G, axis=1)
    y = np.einsum("ij,ij->i", np.cross(B, A), G) / gnorm
    x = np.einsum("ij,ij->i", A, B)
    return np.arctan2(y, x)


def dihedral_gradient(X, atoms):
    p0, p1, p2, p3 = (_atom(X, a) for a in atoms)
    F, G, H = p0 - p1, p1 - p2, p3 - p2
    A, B = np.cross(F, G), np.cross(H, G)
    a2 = np.einsum("ij,ij->i", A, A)[:, None]
    b2 = np.einsum("ij,ij->i", B, B)[:, None]
    g = np.linalg.norm(G, axis=1)[:, None]
    fg = np.einsum("ij,ij->i", F, G)[:, None]
    hg = np.einsum("ij,ij->i", H, G)[:, None]
    d0 = -g / a2 * A
    d3 = g / b2 * B
    d1 = -d0 + fg / (a2 * g) * A - hg / (b2 * g) * B
    d2 = -fg / (a2 * g) * A + hg / (b2 * g) * B - d3
    out = np.zeros_like(X, dtype=float)
    for atom, block in zip(atoms, (d0, d1, d2, d3)):
        out[:, 3 * atom:3 * atom + 3] += block
    return out


def bond_angle(X, atoms):
    """Planar angle at the middle atom of ``(a, b, c)``, in ``[0, pi]``."""
    p0, p1, p2 = (_atom(X, a) for a in atoms)
    u, v = p0 - p1, p2 - p1
    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=1), np.einsum("ij,ij->i", u, v))


def bond_angle_gradient(X, atoms):
    p0, p1, p2 = (_atom(X, a) for a in atoms)
    u, v = p0 - p1, p2 - p1
    nu = np.linalg.norm(u, axis=1)[:, None]
    nv = np.linalg.norm(v, axis=1)[:, None]
    cos = np.einsum("ij,ij->i", u, v)[:, None] / (nu * nv)
    sin = np.sqrt(np.clip(1.0 - cos * cos, 0.0, None))
    du = -(v / (nu * nv) - cos * u / nu ** 2) / sin
    dv = -(u / (nu * nv) - cos * v / nv ** 2) / sin
    out = np.zeros_like(X, dtype=float)
    for atom, block in zip(atoms, (du, -du - dv, dv)):
        out[:, 3 * atom:3 * atom + 3] += block
    return out


# -- families -------------------------------------------------------------------

def _unit(X, k):
    e = np.zeros_like(X, dtype=float)
    e[:, k] = 1.0
    return e


def _family(family, params):
    p = dict(params)
    if family == "coordinate":
        k = int(p["index"])
        return (lambda X: X[:, k].astype(float)), (lambda X: _unit(X, k)), False
    if family == "product":
        i, j = int(p["i"]), int(p["j"])

        def grad(X):
            out = np.zeros_like(X, dtype=float)
            out[:, i] += X[:, j]
            out[:, j] += X[:, i]
            return out
        return (lambda X: X[:, i] * X[:, j]), grad, False
    if family == "sin_sum":
        i, j = int(p["i"]), int(p["j"])

        def grad(X):
            c = np.cos(X[:, i] + X[:, j])
            out = np.zeros_like(X, dtype=float)
            out[:, i] += c
            out[:, j] += c
            return out
        return (lambda X: np.sin(X[:, i] + X[:, j])), grad, False
    if family == "square_sum":
        i, j = int(p["i"]), int(p["j"])

        def grad(X):
            out = np.zeros_like(X, dtype=float)
            out[:, i] += 2 * X[:, i]
            out[:, j] += 2 * X[:, j]
            return out
        return (lambda X: X[:, i] ** 2 + X[:, j] ** 2), grad, False
    if family == "zero":
        return (lambda X: np.zeros(X.shape[0])), (lambda X: np.zeros_like(X, dtype=float)), True
    if family == "torsion":
        atoms = tuple(int(a) for a in p["atoms"])
        if len(atoms) != 4:
            raise ValidationError("torsion needs exactly 4 atoms")
        return (lambda X: dihedral(X, atoms)), (lambda X: dihedral_gradient(X, atoms)), False
    if family == "angle":
        atoms = tuple(int(a) for a in p["atoms"])
        if len(atoms) != 3:
            raise ValidationError("angle needs exactly 3 atoms")
        return (lambda X: bond_angle(X, atoms)), (lambda X: bond_angle_gradient(X, atoms)), False
    raise ValidationError(f"unknown dictionary family {family!r}")


def make_function(name, family, params=None):
    """Build a dictionary entry from the config schema.

    Every family accepts an optional ``scale`` parameter multiplying the
    function (and its gradient).
    """
    params = dict(params or {})
    try:
        f, g, zero = _family(family, params)
    except KeyError as exc:
        raise ValidationError(f"{name}: missing parameter {exc}") from None
    scale = params.get("scale")
    if scale is not None:
        c = float(scale)
        f0, g0 = f, g
        f = lambda X: c * f0(X)  # noqa: E731
        g = lambda X: c * g0(X)  # noqa: E731
    return DictionaryFunction(name=name, evaluate=f, gradient=g, family=family,
                              params=params, identically_zero=zero)


@dataclass(frozen=True)
class Dictionary:
    """Ordered dictionary ``g_1..g_p`` with normalizers ``gamma`` (ones until normalized)."""

    functions: tuple
    normalizers: np.ndarray | None = None

    def __post_init__(self):
        funcs = tuple(self.functions)
        if not funcs:
            raise ValidationError("dictionary must contain at least one function")
        object.__setattr__(self, "functions", funcs)
        gamma = np.ones(len(funcs)) if self.normalizers is None else np.asarray(self.normalizers, float)
        if gamma.shape != (len(funcs),) or np.any(gamma <= 0):
            raise ValidationError("normalizers must be p positive numbers")
        object.__setattr__(self, "normalizers", gamma)

    @property
    def p(self):
        return len(self.functions)

    @property
    def names(self):
        return [f.name for f in self.functions]

    def evaluate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([f.evaluate(X) for f in self.functions], axis=1) / self.normalizers

    def raw_gradients(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([f.gradient(X) for f in self.functions], axis=1)

    def to_config(self):
        return [f.to_config() for f in self.functions]


def dictionary_from_config(entries):
    if not isinstance(entries, list) or not entries:
        raise ValidationError("dictionary config must be a non-empty JSON list")
    funcs = []
    for k, entry in enumerate(entries):
        try:
            funcs.append(make_function(entry.get("name", f"g{k + 1}"), entry["family"],
                                       entry.get("params", {})))
        except (KeyError, AttributeError):
            raise ValidationError(f"dictionary entry {k} lacks a family") from None
    return Dictionary(tuple(funcs))


def _points(cloud_or_array):
    data = getattr(cloud_or_array, "data", cloud_or_array)
    return np.atleast_2d(np.asarray(data, dtype=float))


def eval_gradients(dictionary, cloud):
    """Normalized gradients as an ``(n, p, D)`` array."""
    grads = dictionary.raw_gradients(_points(cloud))
    bad = ~np.isfinite(grads)
    if bad.any():
        i, j, _ = np.argwhere(bad)[0]
        raise ValidationError(
            f"non-finite gradient of {dictionary.functions[j].name!r} (j={j}) at point {i}"
        )
    return grads / dictionary.normalizers[None, :, None]


def normalize_dictionary(dictionary, cloud, frames=None):
    """Return a copy with ``gamma_j^2 = mean_i ||grad g_j(xi_i)||^2``.

    With tangent ``frames`` the gradients are first projected on the tangent
    bases and the mean runs over ``frames.indices``; otherwise the ambient
    gradient over every point of ``cloud`` is used. Identically zero entries
    keep ``gamma = 1``. Normalizers are always computed from the raw
    functions, so normalizing twice is the same as normalizing once.
    """
    X = _points(cloud)
    if frames is not None:
        grads = dictionary.raw_gradients(X[frames.indices])
        grads = np.einsum("rDd,rpD->rpd", frames.basis, grads)
    else:
        grads = dictionary.raw_gradients(X)
    if not np.all(np.isfinite(grads)):
        i, j, _ = np.argwhere(~np.isfinite(grads))[0]
        raise ValidationError(f"non-finite gradient of entry {j} at point {i}")
    gamma = np.sqrt(np.mean(np.einsum("rpk,rpk->rp", grads, grads), axis=0))
    for j, f in enumerate(dictionary.functions):
        if f.identically_zero:
            gamma[j] = 1.0
        elif not gamma[j] > 0:
            raise ValidationError(f"dictionary entry {j} ({f.name!r}) has zero gradient on the data")
    return replace(dictionary, normalizers=gamma)


def project_gradients(gradients, frames):
    """``X_i = T_i^T [grad g_1 .. grad g_p]`` as an ``(n, d, p)`` array."""
    gradients = np.asarray(gradients, dtype=float)
    if gradients.shape[0] != frames.basis.shape[0] or gradients.shape[2] != frames.D:
        raise ValidationError(
            f"gradient tensor {gradients.shape} does not match frames {frames.basis.shape}"
        )
    return np.einsum("rDd,rpD->rdp", frames.basis, gradients)


def unit_normalize_columns(gradients):
    """Per-point unit-norm design ``(n, D, p)`` from gradients ``(n, p, D)``.

    Zero gradients stay zero.
    """
    gradients = np.asarray(gradients, dtype=float)
    norms = np.linalg.norm(gradients, axis=2, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.transpose(gradients / safe, (0, 2, 1))


@dataclass(frozen=True)
class GradientProblem:
    """Per-point designs ``X`` (``n x d x p``) and responses ``Y`` (``n x d x m``)."""

    X: np.ndarray
    Y: np.ndarray
    names: tuple = ()
    indices: np.ndarray | None = None

    def to_lasso(self):
        from .flasso import LassoProblem
        return LassoProblem(self.X, self.Y, names=tuple(self.names))
