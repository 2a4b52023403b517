"""Synthetic datasets with known functional support.

All dictionary and support indices are 0-based. Every generator draws from
``numpy.random.default_rng(seed)`` only, so outputs are reproducible for a
fixed seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .dictionary import Dictionary, make_function, unit_normalize_columns
from .errors import ValidationError
from .flasso import LassoProblem
from .graph import PointCloud

KINDS = ("example1_g1", "example1_g2", "example2", "rigid_skeleton_torus",
         "circle", "flat_plane", "linear_isometry")


@dataclass(frozen=True)
class SyntheticProblem:
    """A flat functional-lasso instance: design, response and ground truth."""

    problem: LassoProblem
    true_support: tuple
    points: np.ndarray
    dictionary: Dictionary


def _add_noise(rng, A, sigma2):
    if sigma2 == 0:
        return A
    return A + rng.normal(scale=np.sqrt(sigma2), size=A.shape)


def _flat_problem(rng, xi, dictionary, grad_f, sigma2, support):
    """Gradients of the dictionary and of ``f`` with noise, columns unit-normalized."""
    if sigma2 < 0:
        raise ValidationError("noise variance must be nonnegative")
    grads = dictionary.raw_gradients(xi)                     # n x p x D
    noisy = np.array(grads)
    for j, f in enumerate(dictionary.functions):
        # the zero function keeps an all-zero column
        if not f.identically_zero:
            noisy[:, j, :] = _add_noise(rng, grads[:, j, :], sigma2)
    X = unit_normalize_columns(noisy)
    Y = _add_noise(rng, grad_f, sigma2)[:, :, None]
    return SyntheticProblem(LassoProblem(X, Y, names=tuple(dictionary.names)),
                            tuple(support), xi, dictionary)


def example1_dictionary(variant):
    if variant == "G1":
        funcs = [make_function(f"xi{k + 1}", "coordinate", {"index": k}) for k in range(4)]
        return Dictionary(tuple(funcs)), (0, 1)
    if variant == "G2":
        funcs = [make_function("xi1", "coordinate", {"index": 0}),
                 make_function("xi2", "coordinate", {"index": 1}),
                 make_function("xi1*xi2", "product", {"i": 0, "j": 1}),
                 make_function("zero", "zero")]
        return Dictionary(tuple(funcs)), (2,)
    raise ValidationError(f"unknown Example 1 dictionary {variant!r}")


def gen_example1(n, dict_variant="G1", noise_sigma2=0.0, seed=0):
    """``f = xi_1 xi_2`` on ``D = 4`` Gaussian coordinates of variance 0.2.

    ``y_i = grad f(xi_i) = (xi_2, xi_1, 0, 0)``; ``dict_variant`` is ``"G1"``
    (the four coordinates, support ``(0, 1)``) or ``"G2"`` (``xi_1, xi_2,
    xi_1 xi_2`` and the zero function, support ``(2,)``).
    """
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    xi = rng.normal(scale=np.sqrt(0.2), size=(n, 4))
    dictionary, support = example1_dictionary(dict_variant)
    grad_f = np.zeros_like(xi)
    grad_f[:, 0], grad_f[:, 1] = xi[:, 1], xi[:, 0]
    return _flat_problem(rng, xi, dictionary, grad_f, noise_sigma2, support)


def example2_dictionary(d):
    funcs = [make_function(f"sin(xi{k + 1}+xi{k + 2})", "sin_sum", {"i": k, "j": k + 1})
             for k in range(d - 1)]
    funcs += [make_function(f"xi{k + 1}^2+xi{k + 3}^2", "square_sum", {"i": k, "j": k + 2})
              for k in range(d - 2)]
    return Dictionary(tuple(funcs)), (0, d + 1)


def example2_gradient(xi):
    """Gradient of ``sin(xi_1 + xi_2) (xi_3^2 + xi_5^2)``."""
    s = np.sin(xi[:, 0] + xi[:, 1])
    c = np.cos(xi[:, 0] + xi[:, 1])
    q = xi[:, 2] ** 2 + xi[:, 4] ** 2
    g = np.zeros_like(xi)
    g[:, 0] = g[:, 1] = c * q
    g[:, 2] = 2 * xi[:, 2] * s
    g[:, 4] = 2 * xi[:, 4] * s
    return g


def gen_example2(n, d=8, noise_sigma2=0.05, seed=0):
    """``f = g_0 g_{d+1} = sin(xi_1 + xi_2)(xi_3^2 + xi_5^2)`` in ``D = d``.

    The dictionary has ``p = 2d - 3`` entries: ``sin(xi_k + xi_{k+1})`` for
    ``k = 1..d-1`` then ``xi_k^2 + xi_{k+2}^2`` for ``k = 1..d-2``.
    """
    if d < 5:
        raise ValidationError("Example 2 needs d >= 5")
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    xi = rng.normal(scale=np.sqrt(0.2), size=(n, d))
    dictionary, support = example2_dictionary(d)
    return _flat_problem(rng, xi, dictionary, example2_gradient(xi), noise_sigma2, support)


# -- articulated skeleton -------------------------------------------------------

# Bond lengths (angstrom) and angles (degrees) of the 9-atom skeleton.
# Atoms: 0 C1 (methyl carbon), 1 C2, 2 O, 3-5 methyl H, 6-7 methylene H,
# 8 hydroxyl H.
BOND_CC = 1.54
BOND_CO = 1.43
BOND_CH = 1.09
BOND_OH = 0.971
ANGLE_TETRA = 109.5
ANGLE_HCC_METHYL = 111.0
ANGLE_COH = 109.0

SKELETON_ATOMS = ("C1", "C2", "O", "H3", "H4", "H5", "H6", "H7", "H8")
TORSION_A = (3, 0, 1, 2)   # methyl rotation about C1-C2
TORSION_B = (0, 1, 2, 8)   # hydroxyl rotation about C2-O
NOISE_TORSIONS = ((6, 1, 2, 7), (3, 0, 4, 5))


def place_atom(a, b, c, bond, angle, torsion):
    """Position ``d`` with ``|cd| = bond``, angle ``bcd`` and dihedral ``abcd``.

    Vectorized over rows; angles in radians.
    """
    bc = c - b
    bc /= np.linalg.norm(bc, axis=-1, keepdims=True)
    nrm = np.cross(b - a, bc)
    nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
    m = np.cross(nrm, bc)
    local = np.stack([-bond * np.cos(angle) * np.ones_like(torsion),
                      bond * np.sin(angle) * np.cos(torsion),
                      bond * np.sin(angle) * np.sin(torsion)], axis=-1)
    return c + local[..., :1] * bc + local[..., 1:2] * m + local[..., 2:] * nrm


def skeleton_positions(angle_a, angle_b):
    """Noise-free ``(n, 9, 3)`` configurations for rotation angles ``A`` and ``B``."""
    angle_a = np.asarray(angle_a, dtype=float)
    angle_b = np.asarray(angle_b, dtype=float)
    n = angle_a.shape[0]
    tet, coh = np.deg2rad(ANGLE_TETRA), np.deg2rad(ANGLE_COH)
    hcc = np.deg2rad(ANGLE_HCC_METHYL)
    c1 = np.zeros((n, 3))
    c2 = np.tile([BOND_CC, 0.0, 0.0], (n, 1))
    o = np.tile([BOND_CC - BOND_CO * np.cos(tet), BOND_CO * np.sin(tet), 0.0], (n, 1))
    zeros = np.zeros(n)
    h6 = place_atom(o, c1, c2, BOND_CH, tet, zeros + 2 * np.pi / 3)
    h7 = place_atom(o, c1, c2, BOND_CH, tet, zeros - 2 * np.pi / 3)
    methyl = [place_atom(o, c2, c1, BOND_CH, hcc, angle_a + k * 2 * np.pi / 3)
              for k in range(3)]
    h8 = place_atom(c1, c2, o, BOND_OH, coh, angle_b)
    return np.stack([c1, c2, o, *methyl, h6, h7, h8], axis=1)


def skeleton_dictionary():
    entries = [("torsion_A", TORSION_A), ("torsion_B", TORSION_B)]
    entries += [(f"torsion_noise{k + 1}", q) for k, q in enumerate(NOISE_TORSIONS)]
    return Dictionary(tuple(make_function(name, "torsion", {"atoms": list(q)})
                            for name, q in entries))


def gen_rigid_skeleton(n, noise_sigma2=0.01, seed=0):
    """Ethanol-like skeleton rotating about its C-C and C-O bonds.

    The rotation angles are uniform on ``[0, 2 pi)``; Gaussian noise of
    variance ``noise_sigma2`` is added to every coordinate. Returns
    ``(cloud, dictionary, true_support)`` with ``cloud.meta["angles"]`` the
    ``(n, 2)`` sampled angles. The articulated torsions equal the angles
    (mod 2 pi) in the absence of noise.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2 * np.pi, size=(n, 2))
    pos = skeleton_positions(angles[:, 0], angles[:, 1]).reshape(n, 27)
    pos = _add_noise(rng, pos, noise_sigma2)
    cloud = PointCloud(pos, meta={"angles": angles, "atoms": SKELETON_ATOMS})
    return cloud, skeleton_dictionary(), (0, 1)


# -- oracles for the geometry stages --------------------------------------------

@dataclass(frozen=True)
class ValidationManifold:
    """Point cloud with analytic ground truth.

    ``tangent`` is an ``(n, D, d)`` orthonormal basis of the true tangent
    spaces; ``embedding`` (when present) is an isometric ``(n, m)``
    embedding and ``intrinsic`` the intrinsic coordinates.
    """

    cloud: PointCloud
    tangent: np.ndarray
    intrinsic: np.ndarray
    embedding: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def _orthonormal(rng, rows, cols):
    Q, _ = np.linalg.qr(rng.normal(size=(rows, cols)))
    return Q[:, :cols]


def gen_validation_manifolds(kind, n, params=None, seed=0):
    """Circle, flat plane or linear isometry with analytic oracles.

    ``circle``: unit circle, ``params`` ``D`` (ambient, lifted by a random
    orthogonal map when ``D > 2``), ``equally_spaced`` (default False),
    ``noise``.
    ``flat_plane``: ``d``-plane through the origin in ``R^D`` with uniform
    coordinates in ``[-1, 1]`` (a regular ``k^d`` grid with ``grid=True``),
    optional normal ``noise`` (std).
    ``linear_isometry``: a plane as above plus ``Phi = C u`` with ``C``
    having orthonormal columns, ``m`` rows.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "circle":
        D = int(params.get("D", 2))
        if params.get("equally_spaced", False):
            t = 2 * np.pi * np.arange(n) / n
        else:
            t = rng.uniform(0, 2 * np.pi, n)
        pts = np.stack([np.cos(t), np.sin(t)], axis=1)
        tan = np.stack([-np.sin(t), np.cos(t)], axis=1)[:, :, None]
        if D > 2:
            Q = _orthonormal(rng, D, 2)
            pts, tan = pts @ Q.T, np.einsum("Dk,nkd->nDd", Q, tan)
        noise = float(params.get("noise", 0.0))
        if noise:
            pts = pts + rng.normal(scale=noise, size=pts.shape)
        return ValidationManifold(PointCloud(pts), tan, t[:, None])
    if kind in ("flat_plane", "linear_isometry"):
        d = int(params.get("d", 2))
        D = int(params.get("D", 3))
        if d > D:
            raise ValidationError("plane dimension exceeds ambient dimension")
        B = _orthonormal(rng, D, d)
        if params.get("grid", False):
            side = int(round(n ** (1.0 / d)))
            if side ** d != n or side < 2:
                raise ValidationError(f"grid sampling needs n = k^{d} with k >= 2, got n={n}")
            axes = [np.linspace(-1, 1, side)] * d
            u = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(n, d)
        else:
            u = rng.uniform(-1, 1, size=(n, d))
        pts = u @ B.T
        noise = float(params.get("noise", 0.0))
        if noise:
            normal = np.eye(D) - B @ B.T
            pts = pts + rng.normal(scale=noise, size=pts.shape) @ normal
        tan = np.broadcast_to(B, (n, D, d)).copy()
        emb = None
        extras = {"basis": B}
        if kind == "linear_isometry":
            m = int(params.get("m", d))
            if m < d:
                raise ValidationError("isometric embedding needs m >= d")
            C = _orthonormal(rng, m, d)
            emb = u @ C.T
            extras["map"] = C
        return ValidationManifold(PointCloud(pts), tan, u, emb, extras)
    raise ValidationError(f"unknown validation manifold {kind!r}")


def gen_recovery_instance(rng, n=10, d=4, p=4, s=2, m=1, coherence=0.1, sigma=0.05,
                          beta_scale=1.0):
    """Random unit-column design with a planted support ``range(s)``.

    Off-support columns are ``a v + sqrt(1 - a^2) w`` with ``v`` a unit vector
    in the span of the support columns, ``w`` a unit vector orthogonal to
    it and ``a`` uniform in ``[-coherence, coherence]``; this keeps the
    S-incoherence at most ``coherence``-ish while leaving everything else
    random. Returns ``(problem, beta_true, noise)``.
    """
    if s >= d:
        raise ValidationError("need s < d to leave room for off-support columns")
    X = np.empty((n, d, p))
    for i in range(n):
        S = _orthonormal(rng, d, d) @ np.eye(d)[:, :s]
        # random, not orthogonal, support columns
        mix = rng.normal(size=(s, s)) * 0.3 + np.eye(s)
        XS = S @ mix
        XS /= np.linalg.norm(XS, axis=0)
        X[i, :, :s] = XS
        basis, _ = np.linalg.qr(XS)
        for j in range(s, p):
            v = basis @ rng.normal(size=s)
            v /= np.linalg.norm(v)
            w = rng.normal(size=d)
            w -= basis @ (basis.T @ w)
            w /= np.linalg.norm(w)
            a = rng.uniform(-coherence, coherence)
            X[i, :, j] = a * v + np.sqrt(1 - a * a) * w
    beta = np.zeros((n, p, m))
    beta[:, :s, :] = beta_scale * rng.normal(size=(n, s, m))
    noise = sigma * rng.normal(size=(n, d, m))
    Y = np.einsum("idp,ipm->idm", X, beta) + noise
    return LassoProblem(X, Y), beta, noise
