"""Command-line entry point: train, encode, query, eval, bench and sweep."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from globalhash.codes import (
    hamming_to_all,
    rank_by_hamming,
    read_codes,
    require_same_length,
    write_codes,
)
from globalhash.constellation import default_rho, derive_dims
from globalhash.dataio import (
    DatasetSpec,
    make_synthetic,
    one_hot,
    read_labels,
    read_vectors,
    split_indices,
)
from globalhash.dependent import TrainConfigDD, train_dd
from globalhash.dependent import write_trace_csv as write_dd_trace
from globalhash.embedding import embed, fit_cca, fit_pca
from globalhash.evaluation import (
    EvalReport,
    build_ground_truth,
    evaluate,
    ground_truth_from_indices,
    ground_truth_from_labels,
    write_report_csv,
)
from globalhash.independent import TrainConfigDI, build_di_constellation
from globalhash.independent import write_trace_csv as write_di_trace
from globalhash.lsh import fit_lsh
from globalhash.modelfile import HashingModel, encode_vectors, read_model, write_model

logger = logging.getLogger(__name__)

METHODS = ("dd", "di", "lsh")


def train_hashing_model(
    data: np.ndarray,
    method: str,
    c: int,
    rho: Optional[float] = None,
    r_s: float = 2.0,
    seed: int = 0,
    labels: Optional[np.ndarray] = None,
    extra_anchor: bool = True,
    max_iter: Optional[int] = None,
    threads: Optional[int] = None,
    trace_path: Optional[Path] = None,
) -> Tuple[HashingModel, str]:
    """
    Fit an embedding and place satellites on raw training descriptors.

    The embedded dimension follows from ``c`` and ``rho`` and is capped by
    what the data supports: D, n − 1, and the label count for CCA.

    :param method:
        ``dd`` for data-dependent training, ``di`` for data-independent
        placement, ``lsh`` for the random-projection baseline
    :param labels:
        an n×l label matrix; when given the embedding is CCA instead of PCA
    :returns:
        the model and a one-line training summary
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose one of {', '.join(METHODS)}")
    if method == "lsh":
        return HashingModel(lsh=fit_lsh(data, c, seed=seed)), f"lsh: {c} random hyperplanes"

    rho = rho if rho is not None else default_rho(c)
    n, input_dim = data.shape
    limit = min(input_dim, n - 1)
    if labels is not None:
        limit = min(limit, labels.shape[1])
    d, groups = derive_dims(c, rho, limit, extra_anchor=extra_anchor)
    embedding = fit_cca(data, labels, d) if labels is not None else fit_pca(data, d)
    points = embed(embedding, data)
    logger.info("%s embedding to d=%d for c=%d in %d groups", embedding.kind, d, c, len(groups))

    options: Dict[str, object] = dict(
        c=c, rho=rho, r_s=r_s, seed=seed, extra_anchor=extra_anchor, threads=threads
    )
    if max_iter is not None:
        options["max_iter"] = max_iter
    if method == "dd":
        constellation, report = train_dd(points, TrainConfigDD(**options))
        if trace_path is not None:
            write_dd_trace(report, trace_path)
        summary = f"dd: {report}"
    else:
        constellation, trace = build_di_constellation(points, TrainConfigDI(**options))
        if trace_path is not None:
            write_di_trace(trace, trace_path)
        summary = (
            f"di: E {trace.objective[-1]:.6g} after {len(trace.objective) - 1} steps, "
            f"{trace.rejected} rejected"
        )
    return HashingModel(embedding=embedding, constellation=constellation), summary


def _dataset(args: argparse.Namespace, path: Path) -> np.ndarray:
    return read_vectors(DatasetSpec(path=path, format=args.format, limit=args.limit))


def _labels_for(args: argparse.Namespace, n: int) -> Optional[np.ndarray]:
    if not args.supervised:
        return None
    if args.labels is None:
        raise ValueError("--supervised needs --labels")
    labels = read_labels(args.labels)
    if labels.shape[0] < n:
        raise ValueError(f"{args.labels} has {labels.shape[0]} label rows for {n} vectors")
    return labels[:n]


def cmd_train(args: argparse.Namespace) -> None:
    """Train a model on a dataset and write it as a GHS1 file."""
    data = _dataset(args, args.input)
    labels = _labels_for(args, data.shape[0])
    started = time.perf_counter()
    model, summary = train_hashing_model(
        data,
        method=args.method,
        c=args.bits,
        rho=args.rho,
        r_s=args.rs,
        seed=args.seed,
        labels=labels,
        extra_anchor=not args.no_extra_anchor,
        max_iter=args.max_iter,
        threads=args.threads,
        trace_path=args.trace,
    )
    write_model(model, args.out)
    print(f"{summary}; wrote {args.out} in {time.perf_counter() - started:.2f}s")


def cmd_encode(args: argparse.Namespace) -> None:
    """Hash a dataset with a saved model and write a GHSC code file."""
    model = read_model(args.model)
    codes = encode_vectors(model, _dataset(args, args.input), threads=args.threads)
    write_codes(codes, args.out)
    print(f"wrote {codes.n} codes of {codes.c} bits to {args.out}")


def cmd_query(args: argparse.Namespace) -> None:
    """Print the k nearest base codes of each query vector."""
    model = read_model(args.model)
    base = read_codes(args.base_codes)
    queries = encode_vectors(model, _dataset(args, args.query_vectors), threads=args.threads)
    require_same_length(base, queries)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["query", "rank", "index", "distance"])
    for i in range(queries.n):
        distances = hamming_to_all(queries.row(i), base)
        for rank, index in enumerate(rank_by_hamming(queries.row(i), base, args.k)):
            writer.writerow([i, rank, int(index), int(distances[index])])


def _write_rows(rows: List[Dict[str, object]], out: Optional[Path]) -> None:
    if out is None:
        write_report_csv(rows)
        return
    with open(out, "w", newline="", encoding="utf-8") as f:
        write_report_csv(rows, f)


def _label_table(path: Path) -> np.ndarray:
    """Get class ids from a one-column label file, or the 0/1 matrix of a wider one."""
    table = read_vectors(DatasetSpec(path=path, format="csv"))
    if table.shape[1] == 1:
        return table[:, 0]
    return read_labels(path)


def cmd_eval(args: argparse.Namespace) -> None:
    """Score query codes against base codes and write an evaluation row."""
    base = read_codes(args.base_codes)
    queries = read_codes(args.query_codes)
    require_same_length(base, queries)
    if args.ground_truth is not None:
        table = read_vectors(DatasetSpec(path=args.ground_truth, format="ivecs"))
        truth = ground_truth_from_indices(table.astype(np.int64), n_base=base.n)
    elif args.base_labels is not None and args.query_labels is not None:
        truth = ground_truth_from_labels(
            _label_table(args.base_labels), _label_table(args.query_labels)
        )
    elif args.base_vectors is not None and args.query_vectors is not None:
        truth = build_ground_truth(
            _dataset(args, args.base_vectors),
            _dataset(args, args.query_vectors),
            fraction=args.fraction,
            threads=args.threads,
        )
    else:
        raise ValueError(
            "eval needs --ground-truth, both --base-labels and --query-labels, "
            "or both --base-vectors and --query-vectors"
        )
    report = evaluate(base, queries, truth, radius=args.radius, threads=args.threads)
    _write_rows([report.model_copy(update={"method": args.method}).to_row()], args.out)


class BenchData:
    """
    A base/query split of one dataset with its ground truth.

    With ``label_truth`` the relevant base points of a query are those
    sharing one of its labels; otherwise they are its nearest
    ``fraction`` of the base set by Euclidean distance.
    """

    def __init__(
        self,
        data: np.ndarray,
        labels: Optional[np.ndarray],
        query_count: int,
        seed: int,
        fraction: float,
        threads: Optional[int] = None,
        label_truth: bool = False,
    ):
        train_index, query_index = split_indices(data.shape[0], query_count, seed)
        self.base = data[train_index]
        self.queries = data[query_index]
        self.labels = None if labels is None else labels[train_index]
        if label_truth:
            if labels is None:
                raise ValueError("label ground truth needs labels")
            self.truth = ground_truth_from_labels(self.labels, labels[query_index])
        else:
            self.truth = build_ground_truth(
                self.base, self.queries, fraction=fraction, threads=threads
            )


def _bench_data(args: argparse.Namespace) -> BenchData:
    if args.synthetic is not None:
        data, class_ids = make_synthetic(
            args.synthetic,
            n=args.n,
            d=args.dim,
            k_clusters=args.clusters,
            seed=args.seed,
            outlier_fraction=args.outliers,
        )
        labels = one_hot(class_ids) if args.supervised else None
    elif args.input is not None:
        data = _dataset(args, args.input)
        labels = _labels_for(args, data.shape[0])
    else:
        raise ValueError("give --input or --synthetic")
    return BenchData(
        data,
        labels,
        args.queries,
        args.seed,
        args.fraction,
        args.threads,
        label_truth=args.supervised,
    )


def run_bench(
    bench: BenchData,
    method: str,
    c: int,
    rho: Optional[float] = None,
    r_s: float = 2.0,
    seed: int = 0,
    radius: int = 2,
    extra_anchor: bool = True,
    max_iter: Optional[int] = None,
    threads: Optional[int] = None,
) -> EvalReport:
    """Train on the base split, encode both splits and evaluate, timing each stage."""
    started = time.perf_counter()
    model, summary = train_hashing_model(
        bench.base,
        method=method,
        c=c,
        rho=rho,
        r_s=r_s,
        seed=seed,
        labels=bench.labels if method != "lsh" else None,
        extra_anchor=extra_anchor,
        max_iter=max_iter,
        threads=threads,
    )
    train_seconds = time.perf_counter() - started
    logger.info("%s", summary)
    started = time.perf_counter()
    base_codes = encode_vectors(model, bench.base, threads=threads)
    query_codes = encode_vectors(model, bench.queries, threads=threads)
    encode_seconds = time.perf_counter() - started
    report = evaluate(base_codes, query_codes, bench.truth, radius=radius, threads=threads)
    name = method if bench.labels is None or method == "lsh" else f"cca-{method}"
    return report.model_copy(
        update={
            "method": name,
            "seed": seed,
            "train_seconds": train_seconds,
            "encode_seconds": encode_seconds,
        }
    )


def _method_list(text: str) -> List[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise ValueError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
    return methods


def _float_grid(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ValueError(f"cannot parse grid {text!r}: {err}") from err


def cmd_bench(args: argparse.Namespace) -> None:
    """Split, train, encode and evaluate each method in one run."""
    methods = _method_list(args.methods)
    bench = _bench_data(args)
    rows = []
    for method in methods:
        report = run_bench(
            bench,
            method,
            c=args.bits,
            rho=args.rho,
            r_s=args.rs,
            seed=args.seed,
            radius=args.radius,
            max_iter=args.max_iter,
            threads=args.threads,
        )
        rows.append(report.to_row())
    _write_rows(rows, args.out)


def cmd_sweep(args: argparse.Namespace) -> None:
    """Run a bench for every cell of an r_s × rho grid, one CSV row per cell."""
    methods = [m for m in _method_list(args.methods) if m != "lsh"]
    if not methods:
        raise ValueError("sweep needs dd or di among --methods")
    bench = _bench_data(args)
    rows = []
    for method in methods:
        for r_s in _float_grid(args.rs_grid):
            for rho in _float_grid(args.rho_grid):
                report = run_bench(
                    bench,
                    method,
                    c=args.bits,
                    rho=rho,
                    r_s=r_s,
                    seed=args.seed,
                    radius=args.radius,
                    max_iter=args.max_iter,
                    threads=args.threads,
                )
                rows.append(report.to_row(r_s=r_s, rho=rho, layout="c=d+1"))
            if args.compare_c_equals_d:
                report = run_bench(
                    bench,
                    method,
                    c=args.bits,
                    rho=1.0,
                    r_s=r_s,
                    seed=args.seed,
                    radius=args.radius,
                    extra_anchor=False,
                    max_iter=args.max_iter,
                    threads=args.threads,
                )
                rows.append(report.to_row(r_s=r_s, rho=1.0, layout="c=d"))
    _write_rows(rows, args.out)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["fvecs", "bvecs", "ivecs", "csv"], default=None)
    parser.add_argument("--limit", type=int, default=None, help="read at most this many rows")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bits", type=int, required=True, help="code length c")
    parser.add_argument("--rho", type=float, default=None)
    parser.add_argument("--rs", type=float, default=2.0, help="satellite radius")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--labels", type=Path, default=None)
    parser.add_argument("--supervised", action="store_true", help="use a CCA embedding")


def _add_bench_flags(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--input", type=Path)
    source.add_argument("--synthetic", choices=["gaussian_clusters", "uniform_ball"])
    parser.add_argument("--n", type=int, default=10000, help="synthetic point count")
    parser.add_argument("--dim", type=int, default=64, help="synthetic dimension")
    parser.add_argument("--clusters", type=int, default=10)
    parser.add_argument(
        "--outliers", type=float, default=0.001, help="share of synthetic rows with wide noise"
    )
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--fraction", type=float, default=0.02)
    parser.add_argument("--radius", type=int, default=2)
    parser.add_argument("--methods", default="dd,di,lsh")
    parser.add_argument("--out", type=Path, default=None)


def build_parser() -> argparse.ArgumentParser:
    """Get the argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="globalhash", description="Learn binary codes with distance-to-satellite hashing."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--threads", type=int, default=None)
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="fit a model and write it")
    train.add_argument("--input", type=Path, required=True)
    _add_data_flags(train)
    _add_training_flags(train)
    train.add_argument("--method", choices=METHODS, default="dd")
    train.add_argument("--no-extra-anchor", action="store_true", help="use groups of d satellites")
    train.add_argument("--trace", type=Path, default=None, help="write the objective trace CSV")
    train.add_argument("--out", type=Path, required=True)
    train.set_defaults(func=cmd_train)

    encode = commands.add_parser("encode", help="hash vectors with a saved model")
    encode.add_argument("--model", type=Path, required=True)
    encode.add_argument("--input", type=Path, required=True)
    _add_data_flags(encode)
    encode.add_argument("--out", type=Path, required=True)
    encode.set_defaults(func=cmd_encode)

    query = commands.add_parser("query", help="rank base codes for query vectors")
    query.add_argument("--model", type=Path, required=True)
    query.add_argument("--base-codes", type=Path, required=True)
    query.add_argument("--query-vectors", type=Path, required=True)
    query.add_argument("--k", type=int, default=10)
    _add_data_flags(query)
    query.set_defaults(func=cmd_query)

    evaluation = commands.add_parser("eval", help="score code files against ground truth")
    evaluation.add_argument("--base-codes", type=Path, required=True)
    evaluation.add_argument("--query-codes", type=Path, required=True)
    evaluation.add_argument("--ground-truth", type=Path, default=None, help="ivecs neighbor table")
    evaluation.add_argument("--base-vectors", type=Path, default=None)
    evaluation.add_argument("--query-vectors", type=Path, default=None)
    evaluation.add_argument(
        "--base-labels", type=Path, default=None, help="score against shared labels"
    )
    evaluation.add_argument("--query-labels", type=Path, default=None)
    evaluation.add_argument("--fraction", type=float, default=0.02)
    evaluation.add_argument("--radius", type=int, default=2)
    evaluation.add_argument("--method", default="", help="label for the method column")
    evaluation.add_argument("--out", type=Path, default=None)
    _add_data_flags(evaluation)
    evaluation.set_defaults(func=cmd_eval)

    bench = commands.add_parser("bench", help="split, train, encode and evaluate")
    _add_bench_flags(bench)
    _add_data_flags(bench)
    _add_training_flags(bench)
    bench.set_defaults(func=cmd_bench)

    sweep = commands.add_parser("sweep", help="bench over a grid of r_s and rho")
    _add_bench_flags(sweep)
    _add_data_flags(sweep)
    _add_training_flags(sweep)
    sweep.add_argument("--rs-grid", default="0.1,0.5,1,2,4")
    sweep.add_argument("--rho-grid", default="1")
    sweep.add_argument(
        "--compare-c-equals-d", action="store_true", help="also run groups of d satellites at rho=1"
    )
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; get 0 on success and 1 on any reported error."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0
