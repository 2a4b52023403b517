import numpy as np
import pytest

from manifold_lasso.dictionary import (Dictionary, dictionary_from_config, dihedral,
                                       dihedral_gradient, eval_gradients, make_function,
                                       normalize_dictionary, project_gradients,
                                       unit_normalize_columns)
from manifold_lasso.errors import ValidationError
from manifold_lasso.graph import PointCloud
from manifold_lasso.tangent import TangentFrame

from _oracles import central_gradient, dihedral_reference, random_rotation


def frames_for(basis):
    basis = np.asarray(basis, dtype=float)
    n = basis.shape[0]
    return TangentFrame(basis=basis, spectrum=np.ones((n, basis.shape[2])), indices=np.arange(n))


def test_coordinate_gradient():
    d = Dictionary((make_function("x1", "coordinate", {"index": 0}),))
    X = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(eval_gradients(d, X)[:, 0], np.tile([1.0, 0, 0, 0], (5, 1)))


def test_product_gradient_matches_example():
    d = Dictionary((make_function("x1x2", "product", {"i": 0, "j": 1}),))
    np.testing.assert_array_equal(eval_gradients(d, [[1.0, 2.0, 5.0, 7.0]])[0, 0],
                                  [2.0, 1.0, 0.0, 0.0])


def test_sin_sum_gradient_at_origin():
    d = Dictionary((make_function("s", "sin_sum", {"i": 0, "j": 1}),))
    np.testing.assert_array_equal(eval_gradients(d, np.zeros((1, 5)))[0, 0], [1, 1, 0, 0, 0])


@pytest.mark.parametrize("family,params", [
    ("product", {"i": 0, "j": 2}),
    ("sin_sum", {"i": 1, "j": 2}),
    ("square_sum", {"i": 0, "j": 3}),
    ("torsion", {"atoms": [0, 1, 2, 3]}),
    ("angle", {"atoms": [0, 1, 2]}),
])
def test_analytic_gradients_match_finite_differences(family, params):
    rng = np.random.default_rng(1)
    f = make_function("f", family, params)
    for _ in range(20):
        x = rng.normal(size=12)
        fd = central_gradient(lambda v: f.evaluate(v[None, :])[0], x)
        an = f.gradient(x[None, :])[0]
        assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_dihedral_sign_convention():
    # front bond along +x, rear bond along +y, viewed along +z: +90 degrees
    X = np.array([[1.0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 1]])
    assert dihedral(X, (0, 1, 2, 3))[0] == pytest.approx(np.pi / 2, abs=1e-15)


def test_dihedral_matches_reference_and_rigid_motion_invariance():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 12))
    ref = [dihedral_reference(*row.reshape(4, 3)) for row in X]
    np.testing.assert_allclose(dihedral(X, (0, 1, 2, 3)), ref, atol=1e-12)
    for _ in range(5):
        R = random_rotation(rng, 3)
        t = rng.normal(size=3)
        moved = (X.reshape(50, 4, 3) @ R.T + t).reshape(50, 12)
        diff = dihedral(moved, (0, 1, 2, 3)) - dihedral(X, (0, 1, 2, 3))
        assert np.abs((diff + np.pi) % (2 * np.pi) - np.pi).max() <= 1e-10


def test_dihedral_gradient_is_orthogonal_to_rigid_motions():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(10, 12))
    G = dihedral_gradient(X, (0, 1, 2, 3)).reshape(10, 4, 3)
    np.testing.assert_allclose(G.sum(axis=1), 0.0, atol=1e-10)
    torque = np.cross(X.reshape(10, 4, 3), G).sum(axis=1)
    np.testing.assert_allclose(torque, 0.0, atol=1e-10)


def test_normalization_is_idempotent_and_scale_free():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 3))
    base = Dictionary((make_function("a", "product", {"i": 0, "j": 1}),
                       make_function("b", "coordinate", {"index": 2})))
    scaled = Dictionary((make_function("a", "product", {"i": 0, "j": 1, "scale": 8.0}),
                         make_function("b", "coordinate", {"index": 2, "scale": 0.25})))
    n1 = normalize_dictionary(base, X)
    n2 = normalize_dictionary(scaled, X)
    np.testing.assert_array_equal(n2.normalizers, n1.normalizers * [8.0, 0.25])
    np.testing.assert_array_equal(eval_gradients(n1, X), eval_gradients(n2, X))
    np.testing.assert_array_equal(normalize_dictionary(n1, X).normalizers, n1.normalizers)
    g = eval_gradients(n1, X)
    np.testing.assert_allclose(np.mean(np.sum(g * g, axis=2), axis=0), 1.0, rtol=1e-14)


def test_unit_coordinate_keeps_unit_gamma():
    d = Dictionary((make_function("x1", "coordinate", {"index": 0}),))
    assert normalize_dictionary(d, np.zeros((3, 2))).normalizers[0] == 1.0


def test_tangent_normalization_hand_projection():
    d = Dictionary((make_function("x1", "coordinate", {"index": 0}),))
    X = np.zeros((3, 2))
    e1 = frames_for(np.tile([[1.0], [0.0]], (3, 1, 1)))
    assert normalize_dictionary(d, X, e1).normalizers[0] == 1.0
    e2 = frames_for(np.tile([[0.0], [1.0]], (3, 1, 1)))
    with pytest.raises(ValidationError, match="zero gradient"):
        normalize_dictionary(d, X, e2)


def test_zero_function_keeps_gamma_one():
    d = Dictionary((make_function("z", "zero"), make_function("x", "coordinate", {"index": 0})))
    n = normalize_dictionary(d, np.ones((4, 2)))
    assert n.normalizers[0] == 1.0
    np.testing.assert_array_equal(eval_gradients(n, np.ones((4, 2)))[:, 0], 0.0)


def test_projection_hand_values_and_rebasing():
    frames = frames_for(np.eye(3)[None, :, :2])
    X = project_gradients(np.array([[[3.0, 4.0, 5.0]]]), frames)
    np.testing.assert_array_equal(X[0, :, 0], [3.0, 4.0])
    orth = frames_for(np.array([[[0.0], [0.0], [1.0]]]))
    np.testing.assert_array_equal(project_gradients(np.array([[[1.0, 2.0, 0.0]]]), orth), 0.0)
    rng = np.random.default_rng(5)
    T = np.linalg.qr(rng.normal(size=(4, 2)))[0]
    Gam = random_rotation(rng, 2)
    grads = rng.normal(size=(1, 3, 4))
    a = project_gradients(grads, frames_for(T[None]))
    b = project_gradients(grads, frames_for((T @ Gam)[None]))
    np.testing.assert_allclose(b[0], Gam.T @ a[0], atol=1e-14)


def test_unit_normalize_columns():
    g = np.array([[[3.0, 4.0], [0.0, 0.0]]])
    X = unit_normalize_columns(g)
    np.testing.assert_array_equal(X[0], [[0.6, 0.0], [0.8, 0.0]])


def test_config_roundtrip_and_errors():
    d = Dictionary((make_function("t", "torsion", {"atoms": [0, 1, 2, 3]}),
                    make_function("s", "square_sum", {"i": 0, "j": 1, "scale": 2.0})))
    back = dictionary_from_config(d.to_config())
    X = np.random.default_rng(6).normal(size=(3, 12))
    np.testing.assert_array_equal(back.raw_gradients(X), d.raw_gradients(X))
    with pytest.raises(ValidationError):
        dictionary_from_config([])
    with pytest.raises(ValidationError):
        dictionary_from_config([{"name": "x"}])
    with pytest.raises(ValidationError):
        make_function("bad", "torsion", {"atoms": [0, 1]})
    with pytest.raises(ValidationError):
        make_function("bad", "nope")
    with pytest.raises(ValidationError, match="non-finite"), np.errstate(all="ignore"):
        eval_gradients(Dictionary((make_function("a", "angle", {"atoms": [0, 1, 2]}),)),
                       PointCloud(np.zeros((1, 9))))
