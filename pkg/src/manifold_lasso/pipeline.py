"""End-to-end ManifoldLasso runs and the artifacts of individual stages.

Graph, Laplacian and embedding always use every point; tangent frames,
dictionary gradients and pull-backs are computed only on the subsample
(all points when none is requested). Each seed in ``seeds`` draws an
independent subsample and is written to its own ``repeat_<k>`` directory.
"""

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import check_recovery_conditions, geometry_summary, has_unit_columns
from .dictionary import (dictionary_from_config, eval_gradients, normalize_dictionary,
                         project_gradients)
from .embedding import Embedding, load_embedding, spectral_embed
from .errors import ManifoldLassoError, StageError, ValidationError
from .flasso import LassoProblem, lambda_grid, regularization_path, select_support
from .graph import PointCloud, build_laplacian, build_neighbor_graph
from .pullback import estimate_coordinate_gradients
from .tangent import estimate_tangent_frames

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Inputs of a ManifoldLasso run.

    ``lambdas`` is ``"auto"`` (``n_lambdas`` geometric values from
    ``lambda_max`` down to ``lambda_ratio * lambda_max``) or an explicit
    descending list. ``subsample`` is a list of indices, a size drawn per
    seed, or None for all points. ``normalization`` picks the gradient norm
    used for the dictionary scales (``"ambient"`` or ``"tangent"``).
    """

    cloud: str | None = None
    embedding: str | None = None
    skip_header: bool = False
    radius: float | None = None
    bandwidth: float = 1.0
    kernel_exponent: int = 2
    d: int = 1
    m: int = 2
    dictionary: list | str | None = None
    normalization: str = "ambient"
    lambdas: list | str = "auto"
    n_lambdas: int = 50
    lambda_ratio: float = 1e-3
    tol: float = 1e-10
    subsample: list | int | None = None
    seeds: list = field(default_factory=lambda: [0])
    eigensolver: str = "auto"
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.d) < 1:
            raise ValidationError("d must be at least 1")
        if int(self.m) < 1:
            raise ValidationError("m must be at least 1")
        if self.d > self.m:
            raise ValidationError(f"intrinsic dimension d={self.d} exceeds embedding dimension m={self.m}")
        if not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        if self.radius is not None and not self.radius > 0:
            raise ValidationError("radius must be positive")
        if self.normalization not in ("ambient", "tangent"):
            raise ValidationError(f"unknown normalization {self.normalization!r}")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if not self.seeds:
            raise ValidationError("seeds must be a nonempty list")
        if isinstance(self.lambdas, str) and self.lambdas != "auto":
            raise ValidationError("lambdas must be 'auto' or a list of numbers")
        if self.dictionary is None:
            raise ValidationError("a dictionary is required")
        if isinstance(self.subsample, int) and self.subsample < 1:
            raise ValidationError("subsample size must be positive")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self):
        return dataclasses.asdict(self)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except ManifoldLassoError as exc:
        raise StageError(name, exc) from exc


def _load_dictionary(entries):
    if isinstance(entries, str):
        entries = io.read_json(entries)
    return dictionary_from_config(entries)


def subsample_indices(n, subsample, seed):
    if subsample is None:
        return np.arange(n)
    if isinstance(subsample, (int, np.integer)):
        if subsample > n:
            raise ValidationError(f"subsample size {subsample} exceeds n={n}")
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(n, size=int(subsample), replace=False))
    idx = np.asarray(subsample, dtype=int)
    if idx.ndim != 1 or idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise ValidationError("subsample indices out of range")
    if np.unique(idx).size != idx.size:
        raise ValidationError("subsample indices must be distinct")
    return idx


@dataclass
class RepeatResult:
    seed: int
    indices: np.ndarray
    problem: LassoProblem
    path: object
    support: tuple | None
    selected: int | None
    certificate: dict | None
    messages: list


@dataclass
class PipelineResult:
    config: PipelineConfig
    graph: object
    laplacian: object
    embedding: Embedding
    repeats: list

    @property
    def supports(self):
        return [r.support for r in self.repeats]


def build_problem(cloud, graph, laplacian, embedding, dictionary, d, indices,
                  normalization="ambient"):
    """Per-point design ``X_i`` and response ``Y_i`` at ``indices``."""
    frames = _stage("tangent", estimate_tangent_frames, cloud, graph, d, indices)
    if normalization == "tangent":
        dictionary = _stage("dictionary", normalize_dictionary, dictionary, cloud, frames)
    else:
        dictionary = _stage("dictionary", normalize_dictionary, dictionary, cloud)
    grads = _stage("dictionary", eval_gradients, dictionary, cloud.data[frames.indices])
    X = project_gradients(grads, frames)
    Y = _stage("pullback", estimate_coordinate_gradients, cloud, graph, laplacian,
               embedding, frames).Y
    return LassoProblem(X, Y, names=tuple(dictionary.names)), frames


def _lambda_values(config, problem):
    if config.lambdas == "auto":
        return lambda_grid(problem, config.n_lambdas, config.lambda_ratio)
    return np.asarray(config.lambdas, dtype=float)


def solve_and_select(problem, lambdas, d, tol):
    """Path, cardinality-matched support and certificate for one problem."""
    path = _stage("flasso", regularization_path, problem, lambdas, tol)
    messages = []
    try:
        support, k = select_support(path, d)
    except ValidationError as exc:
        messages.append(f"selection inconclusive: {exc}")
        return path, None, None, None, messages
    cert = None
    if 0 < len(support) < problem.p:
        try:
            if has_unit_columns(problem):
                cert = check_recovery_conditions(problem, support, path.lambdas[k],
                                                 solution=path[k]).to_dict()
            else:
                cert = geometry_summary(problem, support)
                messages.append("design columns are not unit-norm; recovery certificate "
                                "hypotheses do not apply, mu and nu use column directions")
        except ManifoldLassoError as exc:
            messages.append(f"certificate unavailable: {exc}")
    return path, support, k, cert, messages


def run_pipeline(config, cloud=None, embedding=None):
    """Run every step for each seed; write artifacts when ``config.output`` is set.

    ``cloud`` and ``embedding`` may be passed in memory instead of by path.
    """
    config.validate()
    if cloud is None:
        if config.cloud is None:
            raise ValidationError("no point cloud given")
        cloud = _stage("input", lambda: PointCloud(io.read_matrix(config.cloud, config.skip_header)))
    dictionary = _stage("input", _load_dictionary, config.dictionary)
    if dictionary.functions and cloud.D and config.d > cloud.D:
        raise ValidationError(f"d={config.d} exceeds ambient dimension {cloud.D}")

    graph = _stage("graph", build_neighbor_graph, cloud, config.radius, config.bandwidth,
                   config.kernel_exponent)
    laplacian = _stage("laplacian", build_laplacian, graph)
    if embedding is None and config.embedding is not None:
        embedding = _stage("embedding", load_embedding, config.embedding, cloud.n,
                           config.skip_header)
    if embedding is None:
        embedding = _stage("embedding", spectral_embed, laplacian, config.m,
                           config.eigensolver)
    elif not isinstance(embedding, Embedding):
        embedding = _stage("embedding", Embedding, embedding, "external")
    if embedding.n != cloud.n:
        raise StageError("embedding", ValidationError(
            f"embedding has {embedding.n} rows for {cloud.n} points"))
    if embedding.m < config.d:
        raise StageError("embedding", ValidationError(
            f"embedding dimension {embedding.m} is below d={config.d}"))

    out = None
    if config.output is not None:
        out = io.ensure_dir(config.output)
        io.write_json(out / "config.json", config.to_dict())
        if embedding.source == "computed":
            io.write_matrix_csv(out / "embedding.csv", embedding.coords)

    repeats = []
    for k, seed in enumerate(config.seeds):
        indices = subsample_indices(cloud.n, config.subsample, seed)
        problem, frames = build_problem(cloud, graph, laplacian, embedding, dictionary,
                                        config.d, indices, config.normalization)
        target = None
        if out is not None:
            target = out / f"repeat_{k}" if len(config.seeds) > 1 else out
            write_design(target, problem, frames.indices)
        lambdas = _lambda_values(config, problem)
        path, support, sel, cert, messages = solve_and_select(problem, lambdas, config.d,
                                                              config.tol)
        for msg in messages:
            log.warning("seed %s: %s", seed, msg)
        result = RepeatResult(int(seed), frames.indices, problem, path, support, sel, cert,
                              messages)
        repeats.append(result)
        if target is not None:
            write_flasso_outputs(target, path, support, sel)
            io.write_json(target / "diagnostics.json",
                          {"certificate": cert, "messages": messages})

    result = PipelineResult(config, graph, laplacian, embedding, repeats)
    if out is not None:
        io.write_json(out / "report.json", report(result))
    return result


def report(result):
    """Summary with the lambda-selection trace of every repeat."""
    reps = []
    for r in result.repeats:
        reps.append({
            "seed": r.seed,
            "n_points": int(len(r.indices)),
            "support": None if r.support is None else [int(j) for j in r.support],
            "support_names": None if r.support is None
            else [r.problem.names[j] for j in r.support],
            "lambda_selected": None if r.selected is None
            else float(r.path.lambdas[r.selected]),
            "selection_trace": [[float(lam), len(s)] for lam, s in
                                zip(r.path.lambdas, r.path.supports)],
            "messages": r.messages,
        })
    return {
        "header": {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")},
        "config": result.config.to_dict(),
        "embedding_eigenvalues": None if result.embedding.eigenvalues is None
        else [float(v) for v in result.embedding.eigenvalues],
        "repeats": reps,
    }


# -- artifacts ------------------------------------------------------------------

def write_design(directory, problem, indices=None):
    """``X.csv`` and ``Y.csv`` (one row per point, flattened row-major) plus ``design.json``."""
    directory = io.ensure_dir(directory)
    n, d, p, m = problem.n, problem.d, problem.p, problem.m
    io.write_matrix_csv(Path(directory) / "X.csv", problem.X.reshape(n, d * p))
    io.write_matrix_csv(Path(directory) / "Y.csv", problem.Y.reshape(n, d * m))
    meta = {"n": n, "d": d, "p": p, "m": m, "names": list(problem.names)}
    if indices is not None:
        meta["indices"] = [int(i) for i in indices]
    io.write_json(Path(directory) / "design.json", meta)


def read_design(path):
    """Load a design written by :func:`write_design` (directory or ``design.json``)."""
    path = Path(path)
    directory = path if path.is_dir() else path.parent
    meta = io.read_json(directory / "design.json")
    try:
        n, d, p, m = (int(meta[k]) for k in ("n", "d", "p", "m"))
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"{directory / 'design.json'} lacks n, d, p, m") from None
    X = io.read_matrix_csv(directory / "X.csv")
    Y = io.read_matrix_csv(directory / "Y.csv")
    if X.shape != (n, d * p) or Y.shape != (n, d * m):
        raise ValidationError(f"design files do not match n={n}, d={d}, p={p}, m={m}")
    names = tuple(meta.get("names") or ())
    return LassoProblem(X.reshape(n, d, p), Y.reshape(n, d, m), names=names)


def write_flasso_outputs(directory, path, support, selected):
    directory = io.ensure_dir(directory)
    header = ["lambda", "group_index", "group_name", "group_norm"]
    m = path[0].beta.shape[2]
    header += [f"norm_coord_{k}" for k in range(m)]
    with open(Path(directory) / "path.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for lam, j, name, *norms in path.table():
            writer.writerow([repr(lam), j, name] + [repr(v) for v in norms])
    io.write_json(Path(directory) / "support.json", {
        "support": None if support is None else [int(j) for j in support],
        "support_names": None if support is None else [path.names[j] for j in support],
        "lambda_selected": None if selected is None else float(path.lambdas[selected]),
        "gaps": [float(s.duality_gap) for s in path],
        "lambdas": [float(v) for v in path.lambdas],
    })
