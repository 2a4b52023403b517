"""Command line front end: ``manifold-lasso <stage> ...``.

Every stage reads the artifacts written by the previous one and writes its
own into ``--out``. Artifact arguments accept either the directory a stage
wrote to or the main file inside it. Exit codes: 0 success, 2 invalid input,
3 numerical failure, 4 I/O error.
"""

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import check_recovery_conditions
from .dictionary import (dictionary_from_config, eval_gradients, normalize_dictionary,
                         project_gradients)
from .embedding import load_embedding, spectral_embed
from .errors import InputFileError, ManifoldLassoError, ValidationError
from .flasso import LassoProblem, lambda_grid, regularization_path, select_support
from .graph import (LaplacianMatrix, PointCloud, build_laplacian, build_neighbor_graph,
                    graph_from_kernel)
from .pipeline import (PipelineConfig, read_design, report, run_pipeline, subsample_indices,
                       write_design, write_flasso_outputs)
from .pullback import estimate_coordinate_gradients
from .synth import gen_example1, gen_example2, gen_rigid_skeleton, gen_validation_manifolds
from .tangent import TangentFrame, estimate_metrics, estimate_tangent_frames

log = logging.getLogger("manifold_lasso")


# -- artifact helpers -----------------------------------------------------------

def _locate(path, default):
    """Main file of an artifact given a directory or the file itself."""
    path = Path(path)
    return path / default if path.is_dir() else path


def _meta(path, name):
    return io.read_json(Path(path).parent / name)


def _read_cloud(path, skip_header=False):
    return PointCloud(io.read_matrix(path, skip_header=skip_header))


def _write_graph(out, graph):
    io.write_coo_csv(out / "kernel.csv", graph.kernel)
    io.write_json(out / "graph.json", {"n": graph.n, "radius": graph.radius,
                                       "bandwidth": graph.bandwidth,
                                       "kernel_exponent": graph.kernel_exponent})


def _read_graph(path):
    path = _locate(path, "kernel.csv")
    meta = _meta(path, "graph.json")
    n = int(meta["n"])
    K = io.read_coo_csv(path, shape=(n, n))
    return graph_from_kernel(K, meta["radius"], meta["bandwidth"], meta["kernel_exponent"])


def _read_laplacian(path):
    path = _locate(path, "laplacian.csv")
    meta = _meta(path, "laplacian.json")
    n = int(meta["n"])
    L = io.read_coo_csv(path, shape=(n, n))
    L.sort_indices()
    weights = io.read_matrix_csv(path.parent / "laplacian_weights.csv").ravel()
    return LaplacianMatrix(L=L, bandwidth=float(meta["bandwidth"]), renorm_weights=weights)


def _read_embedding(path, n=None):
    return load_embedding(_locate(path, "embedding.csv"), n)


def _read_tangent(path):
    path = _locate(path, "tangent.csv")
    meta = _meta(path, "tangent.json")
    D, d = int(meta["D"]), int(meta["d"])
    idx, basis = io.read_indexed_rows(path, (D, d))
    _, spectrum = io.read_indexed_rows(path.parent / "tangent_spectrum.csv", (d,))
    return TangentFrame(basis=basis, spectrum=spectrum, indices=idx)


def _read_indices(path):
    values = io.read_matrix_csv(path).ravel()
    if not np.all(values == np.round(values)):
        raise ValidationError(f"{path}: indices must be integers")
    return values.astype(int)


def _parse_ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma separated list of integers, got {text!r}") from None


def parse_lambda_grid(text):
    """``auto``, ``auto:N``, ``auto:N:ratio``, ``v1,v2,...`` or ``@file``.

    Returns ``("auto", N, ratio)`` or ``("list", values)``.
    """
    text = text.strip()
    if text.startswith("auto"):
        parts = text.split(":")
        try:
            count = int(parts[1]) if len(parts) > 1 else 50
            ratio = float(parts[2]) if len(parts) > 2 else 1e-3
        except ValueError:
            raise ValidationError(f"bad lambda grid {text!r}") from None
        if len(parts) > 3 or parts[0] != "auto" or count < 1 or not 0 < ratio <= 1:
            raise ValidationError(f"bad lambda grid {text!r}")
        return ("auto", count, ratio)
    if text.startswith("@"):
        values = io.read_matrix_csv(text[1:]).ravel()
    else:
        try:
            values = np.array([float(v) for v in text.split(",") if v.strip()])
        except ValueError:
            raise ValidationError(f"bad lambda grid {text!r}") from None
    if values.size == 0:
        raise ValidationError("empty lambda grid")
    return ("list", values)


def _grid_values(grid, problem):
    if grid[0] == "auto":
        return lambda_grid(problem, grid[1], grid[2])
    return grid[1]


# -- stages ---------------------------------------------------------------------

def cmd_synth(args):
    out = io.ensure_dir(args.out)
    writer = io.write_binary if args.binary else io.write_matrix_csv
    cloud_name = "cloud.bin" if args.binary else "cloud.csv"
    if args.kind in ("example1", "example2"):
        if args.kind == "example1":
            sigma2 = 0.0 if args.noise is None else args.noise
            prob = gen_example1(args.n, args.variant, sigma2, args.seed)
        else:
            sigma2 = 0.05 if args.noise is None else args.noise
            prob = gen_example2(args.n, args.dim, sigma2, args.seed)
        writer(out / cloud_name, prob.points)
        write_design(out, prob.problem)
        io.write_json(out / "dictionary.json", prob.dictionary.to_config())
        io.write_json(out / "truth.json", {"support": list(prob.true_support)})
    elif args.kind == "skeleton":
        sigma2 = 0.01 if args.noise is None else args.noise
        cloud, dictionary, support = gen_rigid_skeleton(args.n, sigma2, args.seed)
        writer(out / cloud_name, cloud.data)
        io.write_matrix_csv(out / "angles.csv", cloud.meta["angles"])
        io.write_json(out / "dictionary.json", dictionary.to_config())
        io.write_json(out / "truth.json", {"support": list(support),
                                           "atoms": list(cloud.meta["atoms"])})
    else:
        params = json.loads(args.params) if args.params else {}
        if args.noise is not None:
            params["noise"] = args.noise
        man = gen_validation_manifolds(args.kind, args.n, params, args.seed)
        writer(out / cloud_name, man.cloud.data)
        n, D, d = man.tangent.shape
        io.write_indexed_rows(out / "tangent_true.csv", range(n), man.tangent)
        io.write_matrix_csv(out / "intrinsic.csv", man.intrinsic)
        if man.embedding is not None:
            io.write_matrix_csv(out / "embedding_true.csv", man.embedding)
        io.write_json(out / "truth.json", {"kind": args.kind, "D": D, "d": d, "params": params})
    print(f"wrote {args.kind} sample to {out}")


def cmd_graph(args):
    cloud = _read_cloud(args.cloud, args.skip_header)
    graph = build_neighbor_graph(cloud, args.radius, args.bandwidth, args.kernel_exponent,
                                 method=args.method)
    out = io.ensure_dir(args.out)
    _write_graph(out, graph)
    sizes = graph.sizes
    print(f"graph: n={graph.n} edges={int(sizes.sum())} "
          f"neighbors min/median/max={sizes.min()}/{int(np.median(sizes))}/{sizes.max()}")


def cmd_laplacian(args):
    lap = build_laplacian(_read_graph(args.graph))
    out = io.ensure_dir(args.out)
    io.write_coo_csv(out / "laplacian.csv", lap.L)
    io.write_matrix_csv(out / "laplacian_weights.csv", lap.renorm_weights[:, None])
    io.write_json(out / "laplacian.json", {"n": lap.n, "bandwidth": lap.bandwidth})
    print(f"laplacian: n={lap.n}")


def cmd_embed(args):
    lap = _read_laplacian(args.laplacian)
    emb = spectral_embed(lap, args.m, method=args.eigensolver)
    out = io.ensure_dir(args.out)
    io.write_matrix_csv(out / "embedding.csv", emb.coords)
    io.write_matrix_csv(out / "eigenvalues.csv", emb.eigenvalues[:, None])
    print("eigenvalues: " + " ".join(f"{v:.6g}" for v in emb.eigenvalues))


def _stage_indices(args, n):
    if args.indices:
        return subsample_indices(n, list(_read_indices(args.indices)), args.seed)
    return subsample_indices(n, args.subsample, args.seed)


def cmd_tangent(args):
    cloud = _read_cloud(args.cloud, args.skip_header)
    graph = _read_graph(args.graph)
    frames = estimate_tangent_frames(cloud, graph, args.d, _stage_indices(args, cloud.n))
    out = io.ensure_dir(args.out)
    io.write_indexed_rows(out / "tangent.csv", frames.indices, frames.basis)
    io.write_indexed_rows(out / "tangent_spectrum.csv", frames.indices, frames.spectrum)
    io.write_json(out / "tangent.json", {"d": frames.d, "D": frames.D})
    print(f"tangent frames at {len(frames.indices)} points")


def cmd_rmetric(args):
    graph = _read_graph(args.graph)
    lap = _read_laplacian(args.laplacian)
    emb = _read_embedding(args.embedding, graph.n)
    idx = _stage_indices(args, graph.n)
    metric = estimate_metrics(lap, graph, emb, args.d, idx)
    out = io.ensure_dir(args.out)
    io.write_indexed_rows(out / "rmetric.csv", metric.indices, metric.G)
    io.write_indexed_rows(out / "rmetric_eigenvalues.csv", metric.indices, metric.eigenvalues)
    print(f"metrics at {len(metric.indices)} points")


def cmd_pullback(args):
    cloud = _read_cloud(args.cloud, args.skip_header)
    graph = _read_graph(args.graph)
    lap = _read_laplacian(args.laplacian)
    emb = _read_embedding(args.embedding, cloud.n)
    frames = _read_tangent(args.tangent)
    grads = estimate_coordinate_gradients(cloud, graph, lap, emb, frames)
    out = io.ensure_dir(args.out)
    io.write_indexed_rows(out / "pullback.csv", grads.indices, grads.Y)
    io.write_json(out / "pullback.json", {"d": frames.d, "m": emb.m,
                                          "ill_conditioned": list(grads.ill_conditioned)})
    if args.dictionary:
        dictionary = dictionary_from_config(io.read_json(args.dictionary))
        if args.normalization == "tangent":
            dictionary = normalize_dictionary(dictionary, cloud, frames)
        else:
            dictionary = normalize_dictionary(dictionary, cloud)
        X = project_gradients(eval_gradients(dictionary, cloud.data[frames.indices]), frames)
        problem = LassoProblem(X, grads.Y, names=tuple(dictionary.names))
        write_design(out, problem, frames.indices)
    print(f"pulled back {emb.m} coordinates at {len(grads.indices)} points")


def cmd_flasso(args):
    problem = read_design(args.design)
    grid = parse_lambda_grid(args.lambda_grid)
    path = regularization_path(problem, _grid_values(grid, problem), tol=args.tol)
    target = args.select if args.select is not None else problem.d
    support, k = None, None
    try:
        support, k = select_support(path, target)
    except ValidationError as exc:
        log.warning("selection inconclusive: %s", exc)
    out = io.ensure_dir(args.out)
    write_flasso_outputs(out, path, support, k)
    if support is None:
        print("support: none selected")
    else:
        names = [path.names[j] for j in support]
        print(f"support: {list(support)} {names} at lambda={path.lambdas[k]:.6g}")


def cmd_diagnose(args):
    problem = read_design(args.problem)
    beta = None
    if args.beta_true:
        beta = io.read_matrix_csv(args.beta_true).reshape(problem.n, problem.p, problem.m)
    cert = check_recovery_conditions(problem, _parse_ints(args.support), args.lam,
                                     beta_true=beta, tol=args.tol)
    text = json.dumps(cert.to_dict(), indent=2, sort_keys=True)
    if args.out:
        io.write_json(args.out, cert.to_dict())
    print(text)


_OVERRIDES = {
    "cloud": "cloud", "embedding": "embedding", "radius": "radius", "bandwidth": "bandwidth",
    "d": "d", "m": "m", "dictionary": "dictionary", "normalization": "normalization",
    "tol": "tol", "eigensolver": "eigensolver", "out": "output",
}


def effective_config(args):
    """Config file values overridden by every flag given on the command line."""
    values = dict(io.read_json(args.config)) if args.config else {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    if args.lambda_grid is not None:
        grid = parse_lambda_grid(args.lambda_grid)
        if grid[0] == "auto":
            values.update(lambdas="auto", n_lambdas=grid[1], lambda_ratio=grid[2])
        else:
            values["lambdas"] = [float(v) for v in grid[1]]
    if args.subsample is not None:
        values["subsample"] = args.subsample
    if args.seeds is not None:
        values["seeds"] = _parse_ints(args.seeds)
    try:
        return PipelineConfig.from_dict(values)
    except TypeError as exc:
        raise ValidationError(f"invalid config: {exc}") from None


def cmd_pipeline(args):
    config = effective_config(args)
    if config.output is None:
        raise ValidationError("an output directory is required (--out or 'output')")
    result = run_pipeline(config)
    summary = report(result)
    for rep in summary["repeats"]:
        print(f"seed {rep['seed']}: support {rep['support_names']} "
              f"lambda={rep['lambda_selected']}")


# -- parser ---------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="manifold-lasso",
                                     description="Explain embedding coordinates with "
                                                 "sparse dictionary functions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on BLAS/LAPACK threads")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        return p

    def cloud_args(p):
        p.add_argument("--cloud", required=True, help="point cloud (CSV or binary)")
        p.add_argument("--skip-header", action="store_true")

    def subsample_args(p):
        p.add_argument("--indices", help="CSV of 0-based point indices")
        p.add_argument("--subsample", type=int, help="random subsample size")
        p.add_argument("--seed", type=int, default=0)

    p = stage("synth", cmd_synth, "generate synthetic data")
    p.add_argument("--kind", required=True,
                   choices=["example1", "example2", "skeleton", "circle", "flat_plane",
                            "linear_isometry"])
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, help="noise variance (std for validation manifolds)")
    p.add_argument("--variant", default="G1", choices=["G1", "G2"], help="example1 dictionary")
    p.add_argument("--dim", type=int, default=8, help="example2 ambient dimension")
    p.add_argument("--params", help="JSON parameters for validation manifolds")
    p.add_argument("--binary", action="store_true", help="write the cloud in binary form")
    p.add_argument("--out", required=True)

    p = stage("graph", cmd_graph, "neighborhood graph and kernel")
    cloud_args(p)
    p.add_argument("--radius", type=float)
    p.add_argument("--bandwidth", type=float, required=True)
    p.add_argument("--kernel-exponent", type=int, default=2, choices=[1, 2])
    p.add_argument("--method", default="auto", choices=["auto", "brute", "tree"])
    p.add_argument("--out", required=True)

    p = stage("laplacian", cmd_laplacian, "renormalized graph Laplacian")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)

    p = stage("embed", cmd_embed, "spectral embedding")
    p.add_argument("--laplacian", required=True)
    p.add_argument("-m", type=int, required=True)
    p.add_argument("--eigensolver", default="auto", choices=["auto", "dense", "lanczos"])
    p.add_argument("--out", required=True)

    p = stage("tangent", cmd_tangent, "local PCA tangent frames")
    cloud_args(p)
    p.add_argument("--graph", required=True)
    p.add_argument("-d", type=int, required=True)
    subsample_args(p)
    p.add_argument("--out", required=True)

    p = stage("rmetric", cmd_rmetric, "pushforward metric of the embedding")
    p.add_argument("--graph", required=True)
    p.add_argument("--laplacian", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("-d", type=int, required=True)
    subsample_args(p)
    p.add_argument("--out", required=True)

    p = stage("pullback", cmd_pullback, "embedding gradients in tangent coordinates")
    cloud_args(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--laplacian", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--tangent", required=True)
    p.add_argument("--dictionary", help="also write the lasso design for this dictionary")
    p.add_argument("--normalization", default="ambient", choices=["ambient", "tangent"])
    p.add_argument("--out", required=True)

    p = stage("flasso", cmd_flasso, "functional lasso regularization path")
    p.add_argument("--design", required=True, help="directory with X.csv, Y.csv, design.json")
    p.add_argument("--lambda-grid", default="auto")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--select", type=int, help="target support size (default: d)")
    p.add_argument("--out", required=True)

    p = stage("diagnose", cmd_diagnose, "recovery certificate")
    p.add_argument("--problem", required=True, help="design directory")
    p.add_argument("--support", required=True, help="comma separated group indices")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--beta-true", help="CSV of true coefficients, n rows of p*m values")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="write the certificate JSON here")

    p = stage("pipeline", cmd_pipeline, "full ManifoldLasso run")
    p.add_argument("--config", help="JSON config; flags override its keys")
    p.add_argument("--cloud")
    p.add_argument("--embedding")
    p.add_argument("--radius", type=float)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("-d", type=int)
    p.add_argument("-m", type=int)
    p.add_argument("--dictionary")
    p.add_argument("--normalization", choices=["ambient", "tangent"])
    p.add_argument("--lambda-grid")
    p.add_argument("--tol", type=float)
    p.add_argument("--subsample", type=int)
    p.add_argument("--seeds", help="comma separated seeds, one repeat each")
    p.add_argument("--eigensolver", choices=["auto", "dense", "lanczos"])
    p.add_argument("--out")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ValidationError("--threads must be positive")
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                args.func(args)
        else:
            args.func(args)
    except ManifoldLassoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputFileError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
