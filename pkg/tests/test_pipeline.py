import numpy as np
import pytest

from manifold_lasso.errors import StageError, ValidationError
from manifold_lasso.graph import PointCloud
from manifold_lasso.pipeline import PipelineConfig, read_design, run_pipeline, subsample_indices
from manifold_lasso.synth import gen_rigid_skeleton


@pytest.fixture(scope="module")
def skeleton():
    cloud, dictionary, support = gen_rigid_skeleton(2000, seed=1)
    return cloud, dictionary.to_config(), support


def config(dictionary, **kw):
    base = dict(radius=0.9, bandwidth=0.4, d=2, m=3, dictionary=dictionary, subsample=100)
    base.update(kw)
    return PipelineConfig(**base)


def test_repeats_write_separate_directories(skeleton, tmp_path):
    cloud, dictionary, support = skeleton
    result = run_pipeline(config(dictionary, seeds=[3, 5], output=str(tmp_path)), cloud=cloud)
    assert len(result.repeats) == 2
    for k, rep in enumerate(result.repeats):
        assert rep.support == support
        assert (tmp_path / f"repeat_{k}" / "path.csv").exists()
        design = read_design(tmp_path / f"repeat_{k}")
        np.testing.assert_array_equal(design.X, rep.problem.X)
    assert not np.array_equal(result.repeats[0].indices, result.repeats[1].indices)


def test_embedding_sign_flip_keeps_support(skeleton):
    cloud, dictionary, support = skeleton
    base = run_pipeline(config(dictionary, seeds=[3]), cloud=cloud)
    flipped = base.embedding.coords * np.array([1.0, -1.0, -1.0])
    again = run_pipeline(config(dictionary, seeds=[3]), cloud=cloud, embedding=flipped)
    assert again.supports == base.supports == [support]


def test_stage_errors_name_the_stage(skeleton):
    cloud, dictionary, _ = skeleton
    with pytest.raises(StageError, match=r"\[graph\]") as exc:
        run_pipeline(config(dictionary, radius=0.05, bandwidth=0.02), cloud=cloud)
    assert exc.value.exit_code == 3
    with pytest.raises(StageError, match=r"\[embedding\]"):
        run_pipeline(config(dictionary), cloud=cloud, embedding=np.zeros((10, 3)))


def test_config_validation():
    with pytest.raises(ValidationError, match="exceeds"):
        PipelineConfig(d=3, m=2, dictionary=[])
    with pytest.raises(ValidationError, match="unknown config keys"):
        PipelineConfig.from_dict({"dictionary": [], "bogus": 1})
    with pytest.raises(ValidationError):
        PipelineConfig(dictionary=[], bandwidth=0.0)
    with pytest.raises(ValidationError):
        PipelineConfig(dictionary=[], lambdas="sometimes")


def test_subsample_indices():
    np.testing.assert_array_equal(subsample_indices(5, None, 0), np.arange(5))
    a = subsample_indices(100, 10, 7)
    np.testing.assert_array_equal(a, subsample_indices(100, 10, 7))
    assert len(np.unique(a)) == 10
    with pytest.raises(ValidationError):
        subsample_indices(5, 6, 0)
    with pytest.raises(ValidationError):
        subsample_indices(5, [0, 0], 0)
    with pytest.raises(ValidationError):
        subsample_indices(5, [5], 0)


def test_missing_cloud():
    with pytest.raises(ValidationError, match="no point cloud"):
        run_pipeline(PipelineConfig(dictionary=[]))
    tiny = PointCloud(np.zeros((3, 2)))
    with pytest.raises(StageError, match=r"\[input\].*family") as exc:
        run_pipeline(PipelineConfig(dictionary=[{"name": "x"}], d=1, m=1), cloud=tiny)
    assert exc.value.exit_code == 2
