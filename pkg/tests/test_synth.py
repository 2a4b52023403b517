import numpy as np
import pytest

from manifold_lasso.dictionary import dihedral
from manifold_lasso.errors import ValidationError
from manifold_lasso.synth import (TORSION_A, TORSION_B, example2_gradient, gen_example1,
                                  gen_example2, gen_recovery_instance, gen_rigid_skeleton,
                                  gen_validation_manifolds, skeleton_positions)

from _oracles import central_gradient


def wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def test_example1_response_hand_value():
    syn = gen_example1(200, "G1", seed=0)
    xi = syn.points
    # y_i = (xi_2, xi_1, 0, 0): at xi = (1, 2, ., .) this is (2, 1, 0, 0)
    np.testing.assert_array_equal(syn.problem.Y[:, :, 0],
                                  np.column_stack([xi[:, 1], xi[:, 0], 0 * xi[:, :2]]))
    assert syn.true_support == (0, 1)
    assert gen_example1(5, "G2").true_support == (2,)
    assert np.std(xi) == pytest.approx(np.sqrt(0.2), rel=0.1)


def test_example2_gradient():
    np.testing.assert_array_equal(example2_gradient(np.zeros((1, 8))), 0.0)
    rng = np.random.default_rng(0)

    def f(x):
        return np.sin(x[0] + x[1]) * (x[2] ** 2 + x[4] ** 2)

    for x in rng.normal(size=(10, 8)):
        fd = central_gradient(f, x)
        np.testing.assert_allclose(example2_gradient(x[None])[0], fd, atol=1e-8)
    syn = gen_example2(10, d=8, seed=1)
    assert syn.problem.p == 13 and syn.true_support == (0, 9)
    with pytest.raises(ValidationError):
        gen_example2(10, d=4)


def test_unit_columns_and_reproducibility():
    a = gen_example2(50, d=8, noise_sigma2=0.05, seed=3).problem
    b = gen_example2(50, d=8, noise_sigma2=0.05, seed=3).problem
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_allclose(np.linalg.norm(a.X, axis=1), 1.0, atol=1e-12)
    c = gen_example2(50, d=8, noise_sigma2=0.05, seed=4).problem
    assert not np.array_equal(a.Y, c.Y)
    g2 = gen_example1(20, "G2", noise_sigma2=0.01, seed=0).problem
    np.testing.assert_array_equal(g2.X[:, :, 3], 0.0)


def test_skeleton_torsions_follow_the_angles():
    cloud, dictionary, support = gen_rigid_skeleton(500, noise_sigma2=0.0, seed=0)
    angles = cloud.meta["angles"]
    for q, col in ((TORSION_A, 0), (TORSION_B, 1)):
        offset = wrap(dihedral(cloud.data, q) - angles[:, col])
        assert np.abs(wrap(offset - offset[0])).max() <= 1e-10
    assert support == (0, 1)
    assert list(dictionary.names[:2]) == ["torsion_A", "torsion_B"]


def test_skeleton_is_rigid():
    rng = np.random.default_rng(1)
    pos = skeleton_positions(rng.uniform(0, 6, 50), rng.uniform(0, 6, 50))
    dists = np.linalg.norm(pos[:, :, None] - pos[:, None], axis=-1)
    bonded = [(0, 1), (1, 2), (0, 3), (0, 4), (0, 5), (1, 6), (1, 7), (2, 8)]
    for a, b in bonded:
        assert np.ptp(dists[:, a, b]) <= 1e-12


def test_torsion_gradients_match_finite_differences_on_skeleton():
    cloud, dictionary, _ = gen_rigid_skeleton(100, noise_sigma2=0.01, seed=2)
    G = dictionary.raw_gradients(cloud.data)
    for i in range(0, 100, 10):
        for j, f in enumerate(dictionary.functions):
            fd = central_gradient(lambda v: f.evaluate(v[None])[0], cloud.data[i])
            assert np.linalg.norm(G[i, j] - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_validation_manifolds():
    circ = gen_validation_manifolds("circle", 4, {"equally_spaced": True})
    np.testing.assert_allclose(circ.intrinsic[:, 0], [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    np.testing.assert_allclose(circ.cloud.data, [[1, 0], [0, 1], [-1, 0], [0, -1]],
                               atol=1e-15)
    grid = gen_validation_manifolds("flat_plane", 9, {"d": 2, "D": 4, "grid": True})
    np.testing.assert_array_equal(np.unique(grid.intrinsic), [-1.0, 0.0, 1.0])
    B = grid.extras["basis"]
    np.testing.assert_allclose(grid.cloud.data, grid.intrinsic @ B.T, atol=1e-15)
    iso = gen_validation_manifolds("linear_isometry", 30, {"d": 2, "D": 3, "m": 4}, seed=1)
    pd = np.linalg.norm(iso.cloud.data[:, None] - iso.cloud.data[None], axis=-1)
    ed = np.linalg.norm(iso.embedding[:, None] - iso.embedding[None], axis=-1)
    np.testing.assert_allclose(ed, pd, atol=1e-12)
    with pytest.raises(ValidationError):
        gen_validation_manifolds("flat_plane", 10, {"grid": True})
    with pytest.raises(ValidationError):
        gen_validation_manifolds("torus", 10)


def test_recovery_instance_structure():
    rng = np.random.default_rng(5)
    prob, beta, noise = gen_recovery_instance(rng, n=8, d=5, p=6, s=2, coherence=0.2)
    np.testing.assert_allclose(np.linalg.norm(prob.X, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(beta[:, 2:], 0.0)
    np.testing.assert_allclose(prob.Y - prob.predict(beta), noise, atol=1e-14)
    with pytest.raises(ValidationError):
        gen_recovery_instance(rng, d=2, s=2)
