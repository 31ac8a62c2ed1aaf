"""Synthetic session corpora with planted topic structure, plus recovery
metrics.

Each synthetic user carries a topic mixture; every session draws a topic
from that mixture and a domain from the topic's word distribution, so the
marginal domain probability is the mixture-weighted sum of the per-topic
distributions. Session byte counts are log-normal to mimic the heavy tail
of real traffic. Generation is per-user independent given derived seeds
and therefore reproducible bit for bit and order-stable.

The optional universal domain is injected into every user's traffic (30%
of sessions by default). It reproduces the portal-site situation where one
domain is visited by everybody: inverse-document-frequency weighting
assigns it exactly zero weight, while plain row normalization lets it
dominate.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .records import SessionRecord

_BASE_EPOCH = int(datetime(2014, 9, 1, tzinfo=timezone.utc).timestamp())

SESSION_DISTRIBUTIONS = ("fixed", "poisson", "uniform")
USER_TOPIC_MODES = ("hard", "mixed")


def disjoint_topic_word(n_topics: int, n_domains: int) -> np.ndarray:
    """Row-stochastic matrix with disjoint, uniform per-topic supports."""
    if n_domains < n_topics:
        raise ValueError("need at least one domain per topic")
    mat = np.zeros((n_topics, n_domains))
    for t, block in enumerate(np.array_split(np.arange(n_domains), n_topics)):
        mat[t, block] = 1.0 / block.size
    return mat


def overlapping_topic_word(
    n_topics: int, n_domains: int, shared_mass: float
) -> np.ndarray:
    """Topics put ``shared_mass`` of their weight on one common domain pool.

    Domains split into n_topics exclusive blocks plus one shared block;
    each topic is uniform over its own block with the remaining mass and
    uniform over the shared block with ``shared_mass``.
    """
    if not 0.0 <= shared_mass < 1.0:
        raise ValueError("shared_mass must lie in [0, 1)")
    if n_domains < n_topics + 1:
        raise ValueError("need at least one domain per topic plus a shared pool")
    blocks = np.array_split(np.arange(n_domains), n_topics + 1)
    shared = blocks[-1]
    mat = np.zeros((n_topics, n_domains))
    for t in range(n_topics):
        mat[t, blocks[t]] = (1.0 - shared_mass) / blocks[t].size
        mat[t, shared] = shared_mass / shared.size
    return mat


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Parameters of the generative corpus."""

    n_topics: int
    n_domains: int
    n_users: int
    topic_word: np.ndarray  # T x W, rows sum to 1
    user_topic_mode: str = "hard"
    fixed_mixture: tuple[float, ...] | None = None  # mixed mode: share one p_t
    mixed_concentration: float = 1.0  # mixed mode: Dirichlet concentration
    sessions_dist: str = "fixed"
    sessions_lo: int = 60
    sessions_hi: int = 60
    bytes_median: float = 1e4
    bytes_sigma: float = 1.5  # log-space standard deviation
    universal_domain: str | None = None
    universal_share: float = 0.3
    seed: int = 0
    domain_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.user_topic_mode not in USER_TOPIC_MODES:
            raise ValueError(f"unknown user_topic_mode: {self.user_topic_mode!r}")
        if self.sessions_dist not in SESSION_DISTRIBUTIONS:
            raise ValueError(f"unknown sessions_dist: {self.sessions_dist!r}")
        if self.n_topics < 1 or self.n_domains < 1 or self.n_users < 1:
            raise ValueError("n_topics, n_domains and n_users must be positive")
        if self.topic_word.shape != (self.n_topics, self.n_domains):
            raise ValueError("topic_word shape must be (n_topics, n_domains)")
        if np.any(self.topic_word < 0):
            raise ValueError("topic_word entries must be non-negative")
        if np.abs(self.topic_word.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("topic_word rows must sum to 1 within 1e-9")
        if self.fixed_mixture is not None:
            mix = np.asarray(self.fixed_mixture)
            if mix.shape != (self.n_topics,) or np.any(mix < 0):
                raise ValueError("fixed_mixture must be a length-T non-negative vector")
            if abs(mix.sum() - 1.0) > 1e-9:
                raise ValueError("fixed_mixture must sum to 1 within 1e-9")
        if self.sessions_lo < 1 or self.sessions_hi < self.sessions_lo:
            raise ValueError("bad sessions_per_user range")
        if not 0.0 <= self.universal_share < 1.0:
            raise ValueError("universal_share must lie in [0, 1)")
        if self.bytes_median <= 0 or self.bytes_sigma < 0:
            raise ValueError("bad byte distribution parameters")
        if not self.domain_names:
            object.__setattr__(
                self,
                "domain_names",
                tuple(f"dom{j:04d}" for j in range(self.n_domains)),
            )
        elif len(self.domain_names) != self.n_domains:
            raise ValueError("domain_names must cover n_domains")

    @staticmethod
    def from_dict(raw: dict) -> "SynthSpec":
        """Build a spec from the JSON configuration layout (see from_file)."""
        known = {
            "n_topics",
            "n_domains",
            "n_users",
            "topics",
            "user_topic_mode",
            "fixed_mixture",
            "mixed_concentration",
            "sessions",
            "bytes_median",
            "bytes_sigma",
            "universal_domain",
            "universal_share",
            "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        for key in ("n_topics", "n_domains", "n_users"):
            if key not in raw:
                raise ValueError(f"missing spec key: {key}")
        n_topics = int(raw["n_topics"])
        n_domains = int(raw["n_domains"])
        topics = raw.get("topics", {"kind": "disjoint"})
        kind = topics.get("kind", "disjoint")
        if kind == "disjoint":
            topic_word = disjoint_topic_word(n_topics, n_domains)
        elif kind == "overlap":
            topic_word = overlapping_topic_word(
                n_topics, n_domains, float(topics.get("share", 0.2))
            )
        elif kind == "matrix":
            topic_word = np.asarray(topics["rows"], dtype=np.float64)
        else:
            raise ValueError(f"unknown topics kind: {kind!r}")
        sessions = raw.get("sessions", {})
        fixed_mixture = raw.get("fixed_mixture")
        return SynthSpec(
            n_topics=n_topics,
            n_domains=n_domains,
            n_users=int(raw["n_users"]),
            topic_word=topic_word,
            user_topic_mode=raw.get("user_topic_mode", "hard"),
            fixed_mixture=tuple(fixed_mixture) if fixed_mixture else None,
            mixed_concentration=float(raw.get("mixed_concentration", 1.0)),
            sessions_dist=sessions.get("dist", "fixed"),
            sessions_lo=int(sessions.get("lo", 60)),
            sessions_hi=int(sessions.get("hi", sessions.get("lo", 60))),
            bytes_median=float(raw.get("bytes_median", 1e4)),
            bytes_sigma=float(raw.get("bytes_sigma", 1.5)),
            universal_domain=raw.get("universal_domain"),
            universal_share=float(raw.get("universal_share", 0.3)),
            seed=int(raw.get("seed", 0)),
        )

    @staticmethod
    def from_file(path: str | Path) -> "SynthSpec":
        with open(path) as fh:
            return SynthSpec.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Planted per-user labels: dominant topic and full mixture."""

    user_ids: tuple[str, ...]
    dominant: np.ndarray  # argmax of the mixture, lowest index on ties
    topic_mix: np.ndarray  # n_users x n_topics


def _draw_session_count(spec: SynthSpec, rng: np.random.Generator) -> int:
    if spec.sessions_dist == "fixed":
        return spec.sessions_lo
    if spec.sessions_dist == "poisson":
        return max(1, int(rng.poisson(spec.sessions_lo)))
    return int(rng.integers(spec.sessions_lo, spec.sessions_hi + 1))


def generate(
    spec: SynthSpec, seed: int | None = None
) -> tuple[list[SessionRecord], GroundTruth]:
    """Sample a session corpus and its planted topic labels.

    ``seed`` overrides ``spec.seed``; each user draws from an independent
    generator derived from (seed, user index), so output never depends on
    generation order.
    """
    base_seed = spec.seed if seed is None else seed
    sessions: list[SessionRecord] = []
    user_ids = tuple(f"u{idx:05d}" for idx in range(spec.n_users))
    mixtures = np.zeros((spec.n_users, spec.n_topics))
    topic_cum = np.cumsum(spec.topic_word, axis=1)
    log_median = np.log(spec.bytes_median)
    for idx in range(spec.n_users):
        rng = np.random.default_rng((base_seed, idx))
        if spec.user_topic_mode == "hard":
            topic = int(rng.integers(spec.n_topics))
            mixtures[idx, topic] = 1.0
        elif spec.fixed_mixture is not None:
            mixtures[idx] = np.asarray(spec.fixed_mixture)
        else:
            alpha = np.full(spec.n_topics, spec.mixed_concentration)
            mixtures[idx] = rng.dirichlet(alpha)
        n_sessions = _draw_session_count(spec, rng)
        n_universal = (
            max(1, int(round(spec.universal_share * n_sessions)))
            if spec.universal_domain
            else 0
        )
        n_topic_sessions = n_sessions - n_universal
        mix_cum = np.cumsum(mixtures[idx])
        topics = np.searchsorted(
            mix_cum, rng.random(n_topic_sessions), side="right"
        ).clip(0, spec.n_topics - 1)
        rvals = rng.random(n_topic_sessions)
        domain_idx = np.empty(n_topic_sessions, dtype=np.int64)
        for t in np.unique(topics):
            mask = topics == t
            domain_idx[mask] = np.searchsorted(topic_cum[t], rvals[mask], side="right")
        domain_idx = domain_idx.clip(0, spec.n_domains - 1)
        domains = [spec.domain_names[j] for j in domain_idx]
        domains.extend([spec.universal_domain] * n_universal)
        nbytes = np.maximum(
            1,
            np.rint(
                np.exp(log_median + spec.bytes_sigma * rng.standard_normal(n_sessions))
            ),
        )
        durations = rng.integers(30, 900, size=n_sessions)
        locations = rng.integers(0, 50, size=n_sessions)
        requests = 1 + rng.poisson(4.0, size=n_sessions)
        for s_idx, domain in enumerate(domains):
            sessions.append(
                SessionRecord(
                    user_id=user_ids[idx],
                    start_time=_BASE_EPOCH + idx * 7 + s_idx * 3600,
                    duration=float(durations[s_idx]),
                    location=f"ap{int(locations[s_idx]):03d}",
                    domain=domain,
                    isp="campus",
                    http_requests=int(requests[s_idx]),
                    service_class="web",
                    bytes=int(nbytes[s_idx]),
                )
            )
    dominant = np.argmax(mixtures, axis=1).astype(np.int64)
    truth = GroundTruth(user_ids=user_ids, dominant=dominant, topic_mix=mixtures)
    return sessions, truth


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "topic"])
        for uid, topic in zip(truth.user_ids, truth.dominant):
            writer.writerow([uid, int(topic)])


def read_truth(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["user_id", "topic"]:
            raise ValueError(f"{path}: unexpected header {header}")
        return {row[0]: int(row[1]) for row in reader if row}


# --------------------------------------------------------------------------
# recovery metrics
# --------------------------------------------------------------------------


def _comb2(x: int) -> int:
    return x * (x - 1) // 2


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    1.0 for identical partitions (up to relabeling), around 0 for
    independent ones; can go negative. Degenerate cases where the
    correction denominator vanishes (both partitions trivial and equal)
    return 1.0 by convention.
    """
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        raise ValueError(f"partition lengths differ: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise ValueError("partitions must be non-empty")
    contingency: dict[tuple, int] = {}
    count_a: dict = {}
    count_b: dict = {}
    for la, lb in zip(a, b):
        contingency[(la, lb)] = contingency.get((la, lb), 0) + 1
        count_a[la] = count_a.get(la, 0) + 1
        count_b[lb] = count_b.get(lb, 0) + 1
    index = sum(_comb2(v) for v in contingency.values())
    sum_a = sum(_comb2(v) for v in count_a.values())
    sum_b = sum(_comb2(v) for v in count_b.values())
    total = _comb2(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def purity(predicted, truth) -> float:
    """Fraction of points in the majority truth class of their cluster."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError(f"partition lengths differ: {len(predicted)} vs {len(truth)}")
    if not predicted:
        raise ValueError("partitions must be non-empty")
    overlap: dict[tuple, int] = {}
    for p, t in zip(predicted, truth):
        overlap[(p, t)] = overlap.get((p, t), 0) + 1
    best: dict = {}
    for (p, _), count in overlap.items():
        best[p] = max(best.get(p, 0), count)
    return float(sum(best.values()) / len(predicted))
