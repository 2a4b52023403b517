import numpy as np
import pytest
import scipy.linalg as la

from manifold_lasso.embedding import fix_signs, load_embedding, spectral_embed
from manifold_lasso.errors import ParseError, ValidationError
from manifold_lasso.graph import PointCloud, build_laplacian, build_neighbor_graph
from manifold_lasso.synth import gen_validation_manifolds

from _oracles import dense_laplacian


@pytest.fixture(scope="module")
def circle_laplacian():
    man = gen_validation_manifolds("circle", 2000, seed=1)
    return man, build_laplacian(build_neighbor_graph(man.cloud, radius=0.5, bandwidth=0.2))


def test_two_point_eigenpair():
    lap = build_laplacian(build_neighbor_graph(PointCloud([[0.0], [0.0]]), 1.0, 1.0))
    emb = spectral_embed(lap, 1)
    assert emb.eigenvalues[0] == pytest.approx(-4.0)
    v = emb.coords[:, 0]
    assert v[0] == pytest.approx(-v[1])
    assert np.linalg.norm(v) == pytest.approx(np.sqrt(2))


def test_m_equal_n_is_rejected():
    lap = build_laplacian(build_neighbor_graph(PointCloud([[0.0], [0.0]]), 1.0, 1.0))
    with pytest.raises(ValidationError):
        spectral_embed(lap, 2)


def test_circle_embedding_is_an_ellipse(circle_laplacian):
    _, lap = circle_laplacian
    emb = spectral_embed(lap, 2)
    x, y = emb.coords.T
    # fit x^2/a^2 + y^2/b^2 = 1 by least squares in (1/a^2, 1/b^2)
    coef, *_ = np.linalg.lstsq(np.stack([x * x, y * y], axis=1), np.ones_like(x), rcond=None)
    radial = np.sqrt(coef[0] * x * x + coef[1] * y * y)
    assert np.abs(radial - 1).max() <= 0.02


def test_eigenpairs_match_nonsymmetric_dense_oracle():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=(300, 2))
    lap = build_laplacian(build_neighbor_graph(PointCloud(pts), 0.3, 0.15))
    emb = spectral_embed(lap, 4)
    vals = la.eigvals(dense_laplacian(pts, 0.3, 0.15)).real
    expected = np.sort(vals)[::-1][1:5]
    np.testing.assert_allclose(emb.eigenvalues, expected, rtol=1e-8, atol=1e-8)
    L = lap.L
    resid = np.linalg.norm(L @ emb.coords - emb.coords * emb.eigenvalues, axis=0)
    assert resid.max() <= 1e-8 * abs(L).sum(axis=1).max() * np.sqrt(300)


def test_dense_and_lanczos_solvers_agree(circle_laplacian):
    _, lap = circle_laplacian
    a = spectral_embed(lap, 3, method="dense")
    b = spectral_embed(lap, 3, method="lanczos")
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-6, atol=1e-8)
    # leading pair is (numerically) degenerate on the circle; compare spans there
    P = a.coords[:, :2] @ np.linalg.pinv(a.coords[:, :2])
    Q = b.coords[:, :2] @ np.linalg.pinv(b.coords[:, :2])
    assert np.linalg.norm(P - Q, 2) <= 1e-6
    np.testing.assert_allclose(a.coords[:, 2], b.coords[:, 2], atol=1e-6)


def test_scaling_sign_and_weighted_orthogonality():
    rng = np.random.default_rng(3)
    lap = build_laplacian(build_neighbor_graph(PointCloud(rng.uniform(size=(400, 2))), 0.3, 0.15))
    emb = spectral_embed(lap, 3)
    n = 400
    np.testing.assert_allclose(np.linalg.norm(emb.coords, axis=0), np.sqrt(n), rtol=1e-12)
    for k in range(3):
        col = emb.coords[:, k]
        first = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
        assert first > 0
    # L is self-adjoint for the weights wt, so eigenvectors are wt-orthogonal
    G = emb.coords.T @ (lap.renorm_weights[:, None] * emb.coords)
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() <= 1e-8 * np.abs(np.diag(G)).max()


def test_fix_signs_makes_first_nonzero_positive():
    V = np.array([[0.0, 1.0], [-2.0, -1.0]])
    np.testing.assert_array_equal(fix_signs(V), [[0.0, 1.0], [2.0, -1.0]])


def test_load_embedding(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n")
    emb = load_embedding(path, 2)
    np.testing.assert_array_equal(emb.coords, [[1.0, 2.0], [3.0, 4.0]])
    assert emb.source == "external"
    with pytest.raises(ValidationError, match="expected 3"):
        load_embedding(path, 3)
    path.write_text("1.0,2.0\nnan,4.0\n")
    with pytest.raises(ValidationError, match="row 1"):
        load_embedding(path, 2)
    path.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(ParseError, match=":2:"):
        load_embedding(path, 2)
