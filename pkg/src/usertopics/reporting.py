"""Cluster analysis reports: topic labels, gender, birth years, spending.

Reports are emitted as plot-ready tabular text plus one combined JSON
summary; numeric values are printed with 6 significant digits. Rerunning a
report on identical inputs is bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import Clustering
from .matrix import FeatureMatrix
from .records import DemographicRecord, TransactionRecord


def _fmt(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True, eq=False)
class ClusterTopicReport:
    """Per-cluster mean weights and the top-weighted domains."""

    sizes: np.ndarray  # cluster sizes, sum equals the clustered user count
    mean_weights: np.ndarray  # k x n_domains, zeros included in the mean
    top: list[list[tuple[str, float]]]  # per cluster, descending weight
    labels: list[str | None]  # top-1 domain per cluster, None if no weight
    domains: tuple[str, ...]
    provenance: str


def cluster_topics(
    f: FeatureMatrix, c: Clustering, top_n: int = 10
) -> ClusterTopicReport:
    """Mean feature weight per (cluster, domain) and top-``top_n`` lists.

    The mean divides by the full cluster size, structural zeros included.
    Only domains with a nonzero mean are ranked; ties break by domain name.
    The cluster label is the heaviest domain.
    """
    if f.n_users != c.assignments.shape[0]:
        raise ValueError(
            f"matrix has {f.n_users} rows but clustering has "
            f"{c.assignments.shape[0]} assignments"
        )
    sizes = np.bincount(c.assignments, minlength=c.k)
    sums = np.zeros((c.k, f.n_domains))
    rows = np.repeat(np.arange(f.n_users), np.diff(f.indptr))
    np.add.at(sums, (c.assignments[rows], f.indices), f.data)
    means = sums / np.maximum(sizes, 1)[:, None]
    top: list[list[tuple[str, float]]] = []
    labels: list[str | None] = []
    for g in range(c.k):
        nonzero = np.flatnonzero(means[g] != 0.0)
        ranked = sorted(nonzero, key=lambda j: (-means[g, j], f.domains[j]))
        entries = [(f.domains[j], float(means[g, j])) for j in ranked[:top_n]]
        top.append(entries)
        labels.append(entries[0][0] if entries else None)
    return ClusterTopicReport(
        sizes=sizes,
        mean_weights=means,
        top=top,
        labels=labels,
        domains=f.domains,
        provenance=f.provenance,
    )


def top_domain_union(report: ClusterTopicReport) -> list[str]:
    """Union of every cluster's top list, name-ascending (plot axis)."""
    return sorted({name for entries in report.top for name, _ in entries})


@dataclass(frozen=True, eq=False)
class GenderReport:
    males: np.ndarray  # per cluster
    females: np.ndarray
    unknown: np.ndarray
    fractions: list[float | None]  # males / (males + females); None if no known
    overall_fraction: float | None


def _gender_map(demographics) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for rec in demographics:
        mapping[rec.user_id] = rec.gender
    return mapping


def gender_breakdown(
    c: Clustering, user_ids, demographics: list[DemographicRecord]
) -> GenderReport:
    """Male fraction per cluster and overall.

    Users absent from the demographic data count as unknown; unknowns are
    excluded from the fraction denominator and reported separately. A
    cluster with no known genders gets fraction None, not zero.
    """
    genders = _gender_map(demographics)
    males = np.zeros(c.k, dtype=np.int64)
    females = np.zeros(c.k, dtype=np.int64)
    unknown = np.zeros(c.k, dtype=np.int64)
    for uid, lab in zip(user_ids, c.assignments):
        g = genders.get(uid, "unknown")
        if g == "male":
            males[lab] += 1
        elif g == "female":
            females[lab] += 1
        else:
            unknown[lab] += 1
    fractions: list[float | None] = []
    for g in range(c.k):
        known = males[g] + females[g]
        fractions.append(float(males[g] / known) if known else None)
    total_known = int(males.sum() + females.sum())
    overall = float(males.sum() / total_known) if total_known else None
    return GenderReport(
        males=males,
        females=females,
        unknown=unknown,
        fractions=fractions,
        overall_fraction=overall,
    )


@dataclass(frozen=True, eq=False)
class BirthYearReport:
    years: tuple[int, ...]  # ascending
    counts: np.ndarray  # k x len(years)
    normalized: np.ndarray  # rows sum to 1 for clusters with any data


def birth_year_distribution(
    c: Clustering, user_ids, demographics: list[DemographicRecord]
) -> BirthYearReport:
    """Counts per (cluster, birth year); missing years are excluded."""
    by_user = {rec.user_id: rec.birth_year for rec in demographics}
    pairs = [
        (int(lab), by_user[uid])
        for uid, lab in zip(user_ids, c.assignments)
        if by_user.get(uid) is not None
    ]
    years = tuple(sorted({year for _, year in pairs}))
    pos = {y: i for i, y in enumerate(years)}
    counts = np.zeros((c.k, len(years)), dtype=np.int64)
    for lab, year in pairs:
        counts[lab, pos[year]] += 1
    row_totals = counts.sum(axis=1)
    normalized = counts / np.maximum(row_totals, 1)[:, None]
    return BirthYearReport(years=years, counts=counts, normalized=normalized)


@dataclass(frozen=True, eq=False)
class SpendReport:
    edges: np.ndarray
    counts: np.ndarray  # k x n_bins, per-cluster rows sum to cluster size
    means: np.ndarray  # per-cluster mean of per-user totals
    totals: np.ndarray  # per-user total spend, aligned with user_ids


def spend_distribution(
    c: Clustering,
    user_ids,
    transactions: list[TransactionRecord],
    bins=None,
) -> SpendReport:
    """Per-user total spend histogrammed and averaged per cluster.

    Users without transactions count as total 0. ``bins`` is an explicit
    increasing edge sequence; by default 10 equal-width bins span
    [0, max total] (the last bin is closed so every total lands somewhere).
    """
    spent: dict[str, float] = {}
    for t in transactions:
        spent[t.user_id] = spent.get(t.user_id, 0.0) + t.amount
    totals = np.array([spent.get(uid, 0.0) for uid in user_ids])
    if bins is None:
        top = float(totals.max()) if totals.size and totals.max() > 0 else 1.0
        edges = np.linspace(0.0, top, 11)
    else:
        edges = np.asarray(bins, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be an increasing sequence")
    n_bins = edges.size - 1
    pos = np.searchsorted(edges, totals, side="right") - 1
    pos = np.clip(pos, 0, n_bins - 1)  # closed outer bins: everything tallies
    counts = np.zeros((c.k, n_bins), dtype=np.int64)
    np.add.at(counts, (c.assignments, pos), 1)
    sums = np.zeros(c.k)
    np.add.at(sums, c.assignments, totals)
    sizes = np.bincount(c.assignments, minlength=c.k)
    means = sums / np.maximum(sizes, 1)
    return SpendReport(edges=edges, counts=counts, means=means, totals=totals)


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------


def write_topic_report(path: str | Path, report: ClusterTopicReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# provenance: {report.provenance}\n")
        fh.write("cluster,size,label,rank,domain,mean_weight\n")
        for g, entries in enumerate(report.top):
            label = report.labels[g] or ""
            if not entries:
                fh.write(f"{g},{report.sizes[g]},{label},,,\n")
            for rank, (domain, weight) in enumerate(entries, start=1):
                fh.write(
                    f"{g},{report.sizes[g]},{label},{rank},{domain},{_fmt(weight)}\n"
                )


def write_gender_report(path: str | Path, report: GenderReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("cluster,males,females,unknown,male_fraction\n")
        for g in range(len(report.males)):
            frac = report.fractions[g]
            fh.write(
                f"{g},{report.males[g]},{report.females[g]},{report.unknown[g]},"
                f"{_fmt(frac) if frac is not None else ''}\n"
            )
        overall = report.overall_fraction
        fh.write(
            f"overall,{report.males.sum()},{report.females.sum()},"
            f"{report.unknown.sum()},{_fmt(overall) if overall is not None else ''}\n"
        )


def write_birth_year_report(path: str | Path, report: BirthYearReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("cluster,birth_year,count,fraction\n")
        for g in range(report.counts.shape[0]):
            for i, year in enumerate(report.years):
                if report.counts[g, i]:
                    fh.write(
                        f"{g},{year},{report.counts[g, i]},"
                        f"{_fmt(report.normalized[g, i])}\n"
                    )


def write_spend_report(path: str | Path, report: SpendReport) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("cluster,mean_spend,bin_low,bin_high,count\n")
        for g in range(report.counts.shape[0]):
            for b in range(report.counts.shape[1]):
                fh.write(
                    f"{g},{_fmt(report.means[g])},{_fmt(report.edges[b])},"
                    f"{_fmt(report.edges[b + 1])},{report.counts[g, b]}\n"
                )


def summary_dict(
    topics: ClusterTopicReport,
    gender: GenderReport | None = None,
    birth: BirthYearReport | None = None,
    spend: SpendReport | None = None,
) -> dict:
    """Combined machine-readable summary of all reports."""
    out: dict = {
        "provenance": topics.provenance,
        "cluster_sizes": [int(s) for s in topics.sizes],
        "labels": topics.labels,
        "top_domains": [
            [{"domain": d, "mean_weight": float(f"{w:.6g}")} for d, w in entries]
            for entries in topics.top
        ],
        "top_domain_union": top_domain_union(topics),
    }
    if gender is not None:
        out["gender"] = {
            "male_fraction_per_cluster": [
                None if f is None else float(f"{f:.6g}") for f in gender.fractions
            ],
            "overall_male_fraction": (
                None
                if gender.overall_fraction is None
                else float(f"{gender.overall_fraction:.6g}")
            ),
        }
    if birth is not None:
        out["birth_years"] = {
            "years": list(birth.years),
            "counts": birth.counts.tolist(),
        }
    if spend is not None:
        out["spend"] = {
            "edges": [float(f"{e:.6g}") for e in spend.edges],
            "mean_per_cluster": [float(f"{m:.6g}") for m in spend.means],
        }
    return out


def write_summary(path: str | Path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
