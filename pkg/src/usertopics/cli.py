"""Command-line pipeline: synth, ingest, cluster, sweep-k, bench-m, report.

Each command works against a workspace directory with well-known file
names, writes a JSON manifest recording every parameter plus per-stage
wall-clock timings, and is deterministic given its configuration and seed
(timing fields aside). A lock file keeps concurrent writers out of a
workspace.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Environment overrides: USERTOPICS_SEED (seed default) and USERTOPICS_OUT
(output directory default).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from . import clustering as clus
from . import ingest, lsa, reporting, synth, weighting
from .matrix import domain_stats, rank_domains, read_matrix, write_matrix

log = logging.getLogger(__name__)

PROFILE_PREFIX = "profile"
FEATURE_PREFIX = "feature"
LSA_PREFIX = "lsa"

# reference defaults: 5-minute gap, byte metric, natural log, M=80, K=8,
# sweep 1..13, 10 restarts
DEFAULT_M = 80
DEFAULT_K = 8
DEFAULT_K_RANGE = (1, 13)
DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6
DEFAULT_M_LIST = "100,200,300,400,500,600,700,800"
DEFAULT_BENCH_REPEATS = 5


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _env_seed() -> int:
    raw = os.environ.get("USERTOPICS_SEED", "").strip()
    if raw:
        try:
            return int(raw)
        except ValueError as exc:
            raise UsageError(f"USERTOPICS_SEED must be an integer, got {raw!r}") from exc
    return 0


def _env_out() -> str | None:
    return os.environ.get("USERTOPICS_OUT") or None


@contextlib.contextmanager
def _workspace_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(
            f"workspace {directory} is locked by another run (remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing required {what} path")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} file not found: {p}")
    return p


def _write_manifest(path: Path, command: str, params: dict, results: dict, timings: dict):
    manifest = {
        "command": command,
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "params": params,
        "results": results,
        "timings": timings,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


class _Stopwatch:
    def __init__(self):
        self.stages: dict[str, float] = {}
        self._t0 = time.perf_counter()

    @contextlib.contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        yield
        self.stages[name] = time.perf_counter() - start

    def total(self) -> float:
        return time.perf_counter() - self._t0


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    spec_path = _require_file(args.spec, "spec")
    try:
        spec = synth.SynthSpec.from_file(spec_path)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"malformed synth spec {spec_path}: {exc}") from exc
    with _workspace_lock(out_dir):
        watch = _Stopwatch()
        with watch.stage("generate"):
            sessions, truth = synth.generate(spec)
        with watch.stage("write"):
            ingest.write_sessions_csv(sessions, out_dir / "sessions.csv")
            synth.write_truth(truth, out_dir / "truth.csv")
        _write_manifest(
            out_dir / "synth_manifest.json",
            "synth",
            params={"spec": str(spec_path), "seed": spec.seed},
            results={
                "n_sessions": len(sessions),
                "n_users": spec.n_users,
                "n_topics": spec.n_topics,
                "n_domains": spec.n_domains,
                "universal_domain": spec.universal_domain,
            },
            timings={"stages_s": watch.stages, "total_s": watch.total()},
        )
    print(f"generated {len(sessions)} sessions for {spec.n_users} users -> {out_dir}")
    return 0


def _parse_session_input(args):
    if args.raw_events:
        path = _require_file(args.raw_events, "raw events")
        report = ingest.parse_raw_events(
            path,
            delimiter=args.delimiter,
            fail_fast=args.fail_fast,
            truncate_domains=args.truncate_domains,
        )
        sessions = ingest.sessionize(report.records, gap_threshold=args.gap)
        return sessions, report
    path = _require_file(args.sessions, "sessions")
    report = ingest.parse_sessions(
        path,
        delimiter=args.delimiter,
        fail_fast=args.fail_fast,
        truncate_domains=args.truncate_domains,
    )
    return report.records, report


def cmd_ingest(args) -> int:
    workspace = Path(args.workspace)
    if args.gap <= 0:
        raise UsageError(f"gap must be positive, got {args.gap}")
    with _workspace_lock(workspace):
        watch = _Stopwatch()
        try:
            with watch.stage("parse"):
                sessions, report = _parse_session_input(args)
        except ingest.ParseError as exc:
            raise DataError(str(exc)) from exc
        with watch.stage("aggregate"):
            matrix = ingest.build_profile_matrix(
                sessions,
                metric=args.metric,
                canonical_order=not args.first_appearance,
            )
        with watch.stage("stats"):
            stats = domain_stats(matrix)
            ranked = rank_domains(stats, by="median")
        with watch.stage("write"):
            write_matrix(matrix, workspace / PROFILE_PREFIX)
            stats_path = workspace / "domain_stats.txt"
            with open(stats_path, "w", newline="\n") as fh:
                fh.write(
                    f"# n_users: {matrix.n_users}\n# n_domains: {matrix.n_domains}\n"
                    f"# nonzero_median_fraction: {stats.nonzero_median_fraction:.6g}\n"
                )
                fh.write("domain,median,n_users_visited,total\n")
                pos = {d: j for j, d in enumerate(stats.domains)}
                for name in ranked:
                    j = pos[name]
                    fh.write(
                        f"{name},{stats.median[j]:.6g},{stats.n_visitors[j]},"
                        f"{stats.total[j]:.6g}\n"
                    )
        _write_manifest(
            workspace / "ingest_manifest.json",
            "ingest",
            params={
                "sessions": args.sessions,
                "raw_events": args.raw_events,
                "gap": args.gap,
                "metric": args.metric,
                "delimiter": args.delimiter,
                "fail_fast": args.fail_fast,
                "truncate_domains": args.truncate_domains,
                "first_appearance": args.first_appearance,
            },
            results={
                "n_users": matrix.n_users,
                "n_domains": matrix.n_domains,
                "nnz": matrix.nnz,
                "parse_errors": report.n_errors,
                "parse_warnings": len(report.warnings),
                "nonzero_median_fraction": stats.nonzero_median_fraction,
            },
            timings={"stages_s": watch.stages, "total_s": watch.total()},
        )
    print(
        f"ingested {matrix.n_users} users x {matrix.n_domains} domains "
        f"({matrix.nnz} entries, {report.n_errors} bad rows) -> {workspace}"
    )
    return 0


def _load_profile(workspace: Path):
    prefix = workspace / PROFILE_PREFIX
    if not prefix.with_name(prefix.name + ".triplets.txt").is_file():
        raise DataError(f"no ingested profile matrix under {workspace}")
    return read_matrix(prefix)


def _weight(profile, mode: str, base: float):
    if mode == "tfidf":
        return weighting.tfidf(profile, base=base)
    if mode == "row_normalized":
        return weighting.row_normalize(profile)
    raise UsageError(f"unknown weighting mode: {mode!r}")


def _check_rank(m: int, feature) -> None:
    limit = min(feature.n_users, feature.n_domains)
    if not 1 <= m <= limit:
        raise UsageError(f"M={m} outside [1, {limit}] for this matrix")


def _parse_reports(args):
    demo = []
    tx = []
    if args.demographics:
        path = _require_file(args.demographics, "demographics")
        demo = ingest.parse_demographics(
            path, delimiter=args.delimiter, fail_fast=args.fail_fast
        ).records
    if args.transactions:
        path = _require_file(args.transactions, "transactions")
        tx = ingest.parse_transactions(
            path, delimiter=args.delimiter, fail_fast=args.fail_fast
        ).records
    return demo, tx


def _write_reports(out_dir: Path, feature, clustering, demo, tx, top_n: int):
    topics = reporting.cluster_topics(feature, clustering, top_n=top_n)
    gender = reporting.gender_breakdown(clustering, feature.users, demo)
    birth = reporting.birth_year_distribution(clustering, feature.users, demo)
    spend = reporting.spend_distribution(clustering, feature.users, tx)
    reporting.write_topic_report(out_dir / "report_topics.txt", topics)
    reporting.write_gender_report(out_dir / "report_gender.txt", gender)
    reporting.write_birth_year_report(out_dir / "report_birth_years.txt", birth)
    reporting.write_spend_report(out_dir / "report_spend.txt", spend)
    summary = reporting.summary_dict(topics, gender, birth, spend)
    reporting.write_summary(out_dir / "summary.json", summary)
    return topics


def cmd_cluster(args) -> int:
    workspace = Path(args.workspace)
    out_dir = Path(args.out_dir) if args.out_dir else workspace
    profile = _load_profile(workspace)
    if not 1 <= args.k <= profile.n_users:
        raise UsageError(f"K={args.k} outside [1, {profile.n_users}]")
    with _workspace_lock(out_dir):
        watch = _Stopwatch()
        try:
            demo, tx = _parse_reports(args)
        except ingest.ParseError as exc:
            raise DataError(str(exc)) from exc
        with watch.stage("weighting"):
            feature = _weight(profile, args.weighting, args.log_base)
        _check_rank(args.m, feature)
        if args.k > feature.n_users:
            raise UsageError(f"K={args.k} exceeds {feature.n_users} weighted users")
        with watch.stage("lsa"):
            model = lsa.truncated_svd(feature, args.m, method=args.method, seed=args.seed)
            model = lsa.canonicalize_signs(model)
            features = lsa.user_features(model, scale=args.scale_features)
        with watch.stage("cluster"):
            result = clus.kmeans(
                features,
                args.k,
                restarts=args.restarts,
                max_iter=args.max_iter,
                tol=args.tol,
                seed=args.seed,
            )
        with watch.stage("report"):
            topics = _write_reports(out_dir, feature, result, demo, tx, args.top_n)
        with watch.stage("write"):
            write_matrix(feature, out_dir / FEATURE_PREFIX)
            lsa.save_model(model, out_dir / LSA_PREFIX)
            clus.write_clustering(result, feature.users, out_dir)
        dropped = profile.n_users - feature.n_users
        _write_manifest(
            out_dir / "manifest.json",
            "cluster",
            params={
                "workspace": str(workspace),
                "demographics": args.demographics,
                "transactions": args.transactions,
                "weighting": args.weighting,
                "log_base": args.log_base,
                "m": args.m,
                "k": args.k,
                "restarts": args.restarts,
                "max_iter": args.max_iter,
                "tol": args.tol,
                "seed": args.seed,
                "method": args.method,
                "scale_features": args.scale_features,
                "top_n": args.top_n,
            },
            results={
                "n_users": feature.n_users,
                "n_domains": feature.n_domains,
                "dropped_zero_users": dropped,
                "negative_weight_fraction": weighting.negative_fraction(feature),
                "svd_method": model.method,
                "inertia": result.inertia,
                "iterations_run": result.iterations_run,
                "cluster_sizes": [int(s) for s in np.bincount(result.assignments, minlength=result.k)],
                "labels": topics.labels,
            },
            timings={"stages_s": watch.stages, "total_s": watch.total()},
        )
    print(
        f"clustered {feature.n_users} users into K={args.k} (M={args.m}, "
        f"{args.weighting}); inertia {result.inertia:.6g} -> {out_dir}"
    )
    return 0


def cmd_sweep_k(args) -> int:
    workspace = Path(args.workspace)
    out_dir = Path(args.out_dir) if args.out_dir else workspace
    profile = _load_profile(workspace)
    if args.k_min < 1 or args.k_max < args.k_min:
        raise UsageError(f"bad K range [{args.k_min}, {args.k_max}]")
    if args.k_max > profile.n_users:
        raise UsageError(f"K_max={args.k_max} exceeds {profile.n_users} users")
    with _workspace_lock(out_dir):
        watch = _Stopwatch()
        with watch.stage("weighting"):
            feature = _weight(profile, args.weighting, args.log_base)
        _check_rank(args.m, feature)
        if args.k_max > feature.n_users:
            raise UsageError(f"K_max={args.k_max} exceeds {feature.n_users} weighted users")
        with watch.stage("lsa"):
            model = lsa.truncated_svd(feature, args.m, method=args.method, seed=args.seed)
            model = lsa.canonicalize_signs(model)
            features = lsa.user_features(model, scale=args.scale_features)
        with watch.stage("sweep"):
            results = clus.sweep_k(
                features,
                args.k_min,
                args.k_max,
                restarts=args.restarts,
                max_iter=args.max_iter,
                tol=args.tol,
                seed=args.seed,
            )
        table_path = out_dir / "sweep_k.txt"
        with open(table_path, "w", newline="\n") as fh:
            fh.write("k,inertia\n")
            for res in results:
                fh.write(f"{res.k},{res.inertia:.6g}\n")
        _write_manifest(
            out_dir / "manifest.json",
            "sweep-k",
            params={
                "workspace": str(workspace),
                "weighting": args.weighting,
                "log_base": args.log_base,
                "m": args.m,
                "k_min": args.k_min,
                "k_max": args.k_max,
                "restarts": args.restarts,
                "max_iter": args.max_iter,
                "tol": args.tol,
                "seed": args.seed,
                "method": args.method,
                "scale_features": args.scale_features,
            },
            results={"inertia": {str(r.k): r.inertia for r in results}},
            timings={"stages_s": watch.stages, "total_s": watch.total()},
        )
    for res in results:
        print(f"K={res.k:3d}  inertia={res.inertia:.6g}")
    return 0


def cmd_bench_m(args) -> int:
    workspace = Path(args.workspace)
    out_dir = Path(args.out_dir) if args.out_dir else workspace
    profile = _load_profile(workspace)
    try:
        m_list = [int(tok) for tok in args.m_list.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad M list {args.m_list!r}") from exc
    if not m_list:
        raise UsageError("empty M list")
    if args.repeats < 1:
        raise UsageError("repeats must be at least 1")
    rows = []
    with _workspace_lock(out_dir):
        for m in m_list:
            stage_times = {"weighting": [], "lsa": [], "cluster": [], "total": []}
            for rep in range(args.repeats):
                t0 = time.perf_counter()
                feature = _weight(profile, args.weighting, args.log_base)
                t1 = time.perf_counter()
                _check_rank(m, feature)
                model = lsa.truncated_svd(feature, m, method=args.method, seed=args.seed)
                features = lsa.user_features(model, scale=args.scale_features)
                t2 = time.perf_counter()
                clus.kmeans(
                    features,
                    min(args.k, features.shape[0]),
                    restarts=args.restarts,
                    max_iter=args.max_iter,
                    tol=args.tol,
                    seed=args.seed,
                )
                t3 = time.perf_counter()
                stage_times["weighting"].append(t1 - t0)
                stage_times["lsa"].append(t2 - t1)
                stage_times["cluster"].append(t3 - t2)
                stage_times["total"].append(t3 - t0)
            rows.append(
                {
                    "m": m,
                    "weighting_median_s": statistics.median(stage_times["weighting"]),
                    "lsa_median_s": statistics.median(stage_times["lsa"]),
                    "cluster_median_s": statistics.median(stage_times["cluster"]),
                    "total_median_s": statistics.median(stage_times["total"]),
                    "total_min_s": min(stage_times["total"]),
                    "total_max_s": max(stage_times["total"]),
                }
            )
        table_path = out_dir / "bench_m.txt"
        with open(table_path, "w", newline="\n") as fh:
            fh.write(
                "m,weighting_median_s,lsa_median_s,cluster_median_s,"
                "total_median_s,total_min_s,total_max_s\n"
            )
            for row in rows:
                fh.write(
                    f"{row['m']},{row['weighting_median_s']:.6g},"
                    f"{row['lsa_median_s']:.6g},{row['cluster_median_s']:.6g},"
                    f"{row['total_median_s']:.6g},{row['total_min_s']:.6g},"
                    f"{row['total_max_s']:.6g}\n"
                )
        _write_manifest(
            out_dir / "manifest.json",
            "bench-m",
            params={
                "workspace": str(workspace),
                "m_list": m_list,
                "repeats": args.repeats,
                "weighting": args.weighting,
                "log_base": args.log_base,
                "k": args.k,
                "restarts": args.restarts,
                "max_iter": args.max_iter,
                "tol": args.tol,
                "seed": args.seed,
                "method": args.method,
            },
            results={"rows": rows},
            timings={"note": "benchmark results are themselves timings"},
        )
    for row in rows:
        print(
            f"M={row['m']:4d}  total median {row['total_median_s']:.3f}s "
            f"(min {row['total_min_s']:.3f}s, max {row['total_max_s']:.3f}s)"
        )
    return 0


def cmd_report(args) -> int:
    workspace = Path(args.workspace)
    out_dir = Path(args.out_dir) if args.out_dir else workspace
    feature_prefix = workspace / FEATURE_PREFIX
    if not feature_prefix.with_name(feature_prefix.name + ".triplets.txt").is_file():
        raise DataError(f"no clustered feature matrix under {workspace}")
    feature = read_matrix(feature_prefix)
    assignments_path = workspace / "assignments.csv"
    if not assignments_path.is_file():
        raise DataError(f"no assignments file under {workspace}")
    mapping = clus.read_assignments(assignments_path)
    try:
        labels = np.array([mapping[u] for u in feature.users], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"assignments missing user {exc}") from exc
    k = int(labels.max()) + 1 if labels.size else 1
    centroids = np.zeros((k, 1))
    result = clus.Clustering(
        k=k,
        assignments=labels,
        centroids=centroids,
        inertia=0.0,
        restarts=0,
        iterations_run=0,
        seed=0,
    )
    try:
        demo, tx = _parse_reports(args)
    except ingest.ParseError as exc:
        raise DataError(str(exc)) from exc
    with _workspace_lock(out_dir):
        _write_reports(out_dir, feature, result, demo, tx, args.top_n)
    print(f"reports regenerated -> {out_dir}")
    return 0


# --------------------------------------------------------------------------
# argument wiring
# --------------------------------------------------------------------------


def _add_common_model_flags(p):
    p.add_argument("--weighting", choices=["tfidf", "row_normalized"], default="tfidf")
    p.add_argument("--log-base", type=float, default=float(np.e),
                   help="logarithm base for TF and IDF (default: natural)")
    p.add_argument("--method", choices=["auto", "exact", "randomized"], default="auto")
    p.add_argument("--scale-features", action="store_true",
                   help="scale user features by the singular values")
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=_env_seed(),
                   help="random seed (env: USERTOPICS_SEED)")


def _add_report_flags(p):
    p.add_argument("--demographics", help="demographics CSV path")
    p.add_argument("--transactions", help="transactions CSV path")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--fail-fast", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="usertopics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session corpus")
    p.add_argument("--spec", required=True, help="JSON spec path")
    p.add_argument("--out-dir", default=_env_out(), required=_env_out() is None,
                   help="output directory (env: USERTOPICS_OUT)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse logs and build the profile matrix")
    p.add_argument("--workspace", required=True, help="workspace directory to create")
    p.add_argument("--sessions", help="session CSV path")
    p.add_argument("--raw-events", help="raw event CSV path (sessionized on the fly)")
    p.add_argument("--gap", type=float, default=ingest.DEFAULT_GAP_SECONDS,
                   help="sessionization gap threshold in seconds")
    p.add_argument("--metric", choices=list(ingest.PROFILE_METRICS), default="bytes")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--truncate-domains", action="store_true",
                   help="cut domains down to a registrable suffix heuristically")
    p.add_argument("--first-appearance", action="store_true",
                   help="index users/domains in first-appearance order "
                        "instead of sorted")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="weight, factorize, cluster and report")
    p.add_argument("--workspace", required=True, help="ingested workspace")
    p.add_argument("--out-dir", default=_env_out(),
                   help="output directory (default: the workspace)")
    p.add_argument("-M", "--m", dest="m", type=int, default=DEFAULT_M)
    p.add_argument("-K", "--k", dest="k", type=int, default=DEFAULT_K)
    _add_common_model_flags(p)
    _add_report_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep-k", help="inertia for a range of cluster counts")
    p.add_argument("--workspace", required=True)
    p.add_argument("--out-dir", default=_env_out())
    p.add_argument("-M", "--m", dest="m", type=int, default=DEFAULT_M)
    p.add_argument("--k-min", type=int, default=DEFAULT_K_RANGE[0])
    p.add_argument("--k-max", type=int, default=DEFAULT_K_RANGE[1])
    _add_common_model_flags(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("bench-m", help="runtime of the pipeline for several ranks")
    p.add_argument("--workspace", required=True)
    p.add_argument("--out-dir", default=_env_out())
    p.add_argument("--m-list", default=DEFAULT_M_LIST,
                   help="comma-separated truncation ranks")
    p.add_argument("--repeats", type=int, default=DEFAULT_BENCH_REPEATS)
    p.add_argument("-K", "--k", dest="k", type=int, default=DEFAULT_K)
    _add_common_model_flags(p)
    p.set_defaults(func=cmd_bench_m)

    p = sub.add_parser("report", help="regenerate reports from a clustered workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--out-dir", default=_env_out())
    _add_report_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
