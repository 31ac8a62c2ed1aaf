"""Parse traffic logs, sessionize raw events, assemble the profile matrix.

All parsers read delimited text with a mandatory header row and collect
malformed rows into a :class:`ParseReport` instead of failing (pass
``fail_fast=True`` to raise on the first bad row). Real logs are dirty;
skip-and-count is the default policy.
"""

from __future__ import annotations

import logging
import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .matrix import ProfileMatrix, csr_from_triplets
from .records import DemographicRecord, RawEvent, SessionRecord, TransactionRecord

log = logging.getLogger(__name__)

SESSION_COLUMNS = (
    "user_id",
    "start_time",
    "duration_s",
    "location",
    "domain",
    "isp",
    "http_requests",
    "service_class",
    "bytes",
)
DEMOGRAPHIC_COLUMNS = ("user_id", "gender", "birth_year", "enrol_year", "degree_type")
TRANSACTION_COLUMNS = ("user_id", "timestamp", "amount")
RAW_EVENT_COLUMNS = ("user_id", "timestamp", "domain", "bytes", "http_requests")

PROFILE_METRICS = ("bytes", "duration", "requests", "session_count")

DEFAULT_GAP_SECONDS = 300.0
DEFAULT_BIRTH_YEAR_RANGE = (1900, 2100)

# naive common second-level suffixes for the registrable-domain heuristic
_COMMON_SLD = frozenset({"com", "net", "org", "edu", "gov", "ac", "co"})


class ParseError(Exception):
    """Unrecoverable input problem (bad header, fail-fast row, etc.)."""


@dataclass
class ParseReport:
    """Parsed records plus per-line errors and free-form warnings."""

    records: list = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)


def normalize_domain(raw: str, truncate: bool = False) -> str:
    """Lowercase and strip scheme, path, query and port.

    With ``truncate`` the name is cut down to a registrable domain using a
    small common-suffix list; this is a heuristic, not a public-suffix
    lookup.
    """
    d = raw.strip().lower()
    if "://" in d:
        d = d.split("://", 1)[1]
    d = d.split("/", 1)[0].split("?", 1)[0].split(":", 1)[0].strip(".")
    if truncate:
        labels = d.split(".")
        if len(labels) >= 3 and labels[-2] in _COMMON_SLD:
            d = ".".join(labels[-3:])
        elif len(labels) > 2:
            d = ".".join(labels[-2:])
    return d


def parse_timestamp(text: str) -> int:
    """ISO-8601 to epoch seconds; naive timestamps are taken as UTC."""
    ts = text.strip()
    if ts.endswith("Z"):
        ts = ts[:-1] + "+00:00"
    dt = datetime.fromisoformat(ts)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def _open_rows(source, delimiter: str, expected_header: tuple[str, ...]):
    """Yield (line_number, row) pairs after validating the header."""
    if hasattr(source, "read"):
        fh = source
        close = False
    else:
        fh = open(source, newline="", encoding="utf-8-sig")
        close = True
    try:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            return  # empty stream: no rows, no errors
        if tuple(h.strip().lower() for h in header) != expected_header:
            raise ParseError(
                f"bad header: expected {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield line_no, row
    finally:
        if close:
            fh.close()


def _run_parser(source, delimiter, columns, convert, fail_fast) -> ParseReport:
    report = ParseReport()
    for line_no, row in _open_rows(source, delimiter, columns):
        try:
            if len(row) != len(columns):
                raise ValueError(f"expected {len(columns)} fields, got {len(row)}")
            record = convert(row, report)
        except (ValueError, OverflowError) as exc:
            if fail_fast:
                raise ParseError(f"line {line_no}: {exc}") from exc
            report.errors.append((line_no, str(exc)))
            continue
        if record is not None:
            report.records.append(record)
    return report


def parse_sessions(
    source,
    *,
    delimiter: str = ",",
    fail_fast: bool = False,
    truncate_domains: bool = False,
) -> ParseReport:
    """Parse a session log (see SESSION_COLUMNS for the schema)."""

    def convert(row, _report):
        return SessionRecord(
            user_id=row[0].strip(),
            start_time=parse_timestamp(row[1]),
            duration=float(row[2]),
            location=row[3].strip(),
            domain=normalize_domain(row[4], truncate=truncate_domains),
            isp=row[5].strip(),
            http_requests=int(row[6]),
            service_class=row[7].strip(),
            bytes=int(row[8]),
        )

    return _run_parser(source, delimiter, SESSION_COLUMNS, convert, fail_fast)


def parse_demographics(
    source,
    *,
    delimiter: str = ",",
    fail_fast: bool = False,
    birth_year_range: tuple[int, int] = DEFAULT_BIRTH_YEAR_RANGE,
) -> ParseReport:
    """Parse user profiles; duplicate user_ids resolve last-wins with a warning."""
    seen: dict[str, int] = {}

    def convert(row, report):
        user_id = row[0].strip()
        gender = row[1].strip().lower() or "unknown"
        birth_year = int(row[2]) if row[2].strip() else None
        if birth_year is not None and not (
            birth_year_range[0] <= birth_year <= birth_year_range[1]
        ):
            raise ValueError(f"birth_year {birth_year} outside plausible range")
        record = DemographicRecord(
            user_id=user_id,
            gender=gender,
            birth_year=birth_year,
            enrol_year=int(row[3]) if row[3].strip() else None,
            degree_type=row[4].strip() or None,
        )
        if user_id in seen:
            msg = f"duplicate user_id {user_id!r}: keeping the last row"
            report.warnings.append(msg)
            log.warning(msg)
            report.records[seen[user_id]] = record
            return None
        seen[user_id] = len(report.records)
        return record

    return _run_parser(source, delimiter, DEMOGRAPHIC_COLUMNS, convert, fail_fast)


def parse_transactions(
    source, *, delimiter: str = ",", fail_fast: bool = False
) -> ParseReport:
    def convert(row, _report):
        return TransactionRecord(
            user_id=row[0].strip(),
            timestamp=parse_timestamp(row[1]),
            amount=float(row[2]),
        )

    return _run_parser(source, delimiter, TRANSACTION_COLUMNS, convert, fail_fast)


def parse_raw_events(
    source,
    *,
    delimiter: str = ",",
    fail_fast: bool = False,
    truncate_domains: bool = False,
) -> ParseReport:
    def convert(row, _report):
        return RawEvent(
            user_id=row[0].strip(),
            timestamp=parse_timestamp(row[1]),
            domain=normalize_domain(row[2], truncate=truncate_domains),
            bytes=int(row[3]),
            http_requests=int(row[4]),
        )

    return _run_parser(source, delimiter, RAW_EVENT_COLUMNS, convert, fail_fast)


def write_sessions_csv(sessions, path, delimiter: str = ",") -> None:
    """Write sessions in the format parse_sessions reads back."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(SESSION_COLUMNS)
        for s in sessions:
            writer.writerow(
                [
                    s.user_id,
                    format_timestamp(s.start_time),
                    repr(float(s.duration)),
                    s.location,
                    s.domain,
                    s.isp,
                    s.http_requests,
                    s.service_class,
                    s.bytes,
                ]
            )


# --------------------------------------------------------------------------
# sessionization
# --------------------------------------------------------------------------


@dataclass
class _OpenSession:
    start: int
    duration: float
    bytes: int
    requests: int
    location: str
    isp: str
    service_class: str

    @property
    def end(self) -> float:
        return self.start + self.duration


def _merge_intervals(items, gap_threshold: float) -> list[SessionRecord]:
    """Merge per-(user, domain) interval streams into sessions.

    ``items`` yields (user_id, domain, start, duration, bytes, requests,
    location, isp, service_class) in non-decreasing time order per user.
    A new interval extends the domain's open session when the pause before
    it is shorter than ``gap_threshold``.
    """
    sessions: list[SessionRecord] = []
    open_by_domain: dict[str, _OpenSession] = {}
    current_user: str | None = None

    def flush(user_id):
        for domain, st in open_by_domain.items():
            sessions.append(
                SessionRecord(
                    user_id=user_id,
                    start_time=st.start,
                    duration=st.duration,
                    location=st.location,
                    domain=domain,
                    isp=st.isp,
                    http_requests=st.requests,
                    service_class=st.service_class,
                    bytes=st.bytes,
                )
            )
        open_by_domain.clear()

    for user_id, domain, start, duration, nbytes, requests, loc, isp, svc in items:
        if user_id != current_user:
            if current_user is not None:
                flush(current_user)
            current_user = user_id
        st = open_by_domain.get(domain)
        if st is not None and start - st.end < gap_threshold:
            st.duration = (start - st.start) + duration
            st.bytes += nbytes
            st.requests += requests
        else:
            if st is not None:
                flush_one = st
                sessions.append(
                    SessionRecord(
                        user_id=user_id,
                        start_time=flush_one.start,
                        duration=flush_one.duration,
                        location=flush_one.location,
                        domain=domain,
                        isp=flush_one.isp,
                        http_requests=flush_one.requests,
                        service_class=flush_one.service_class,
                        bytes=flush_one.bytes,
                    )
                )
            open_by_domain[domain] = _OpenSession(
                start=start,
                duration=duration,
                bytes=nbytes,
                requests=requests,
                location=loc,
                isp=isp,
                service_class=svc,
            )
    if current_user is not None:
        flush(current_user)
    sessions.sort(key=lambda s: (s.user_id, s.start_time, s.domain))
    return sessions


def _check_gap(gap_threshold: float) -> None:
    if not gap_threshold > 0:
        raise ValueError(f"gap_threshold must be positive, got {gap_threshold}")


def sessionize(
    events,
    gap_threshold: float = DEFAULT_GAP_SECONDS,
    *,
    assume_sorted: bool = False,
) -> list[SessionRecord]:
    """Group raw events into sessions.

    Consecutive events of the same user on the same domain merge while the
    inter-event pause stays under ``gap_threshold`` seconds; a pause of
    ``gap_threshold`` or more starts a new session. Session duration spans
    first to last event; bytes and request counts are summed. Events of
    other domains in between do not break a domain's run.

    Input must be ordered by (user_id, timestamp); it is sorted unless
    ``assume_sorted``, in which case order violations raise ValueError.
    """
    _check_gap(gap_threshold)
    events = list(events)
    if assume_sorted:
        for prev, cur in zip(events, events[1:]):
            if (cur.user_id, cur.timestamp) < (prev.user_id, prev.timestamp):
                raise ValueError("events are not sorted by (user_id, timestamp)")
        ordered = events
    else:
        ordered = sorted(events, key=lambda e: (e.user_id, e.timestamp))
    items = (
        (e.user_id, e.domain, e.timestamp, 0.0, e.bytes, e.http_requests, "", "", "")
        for e in ordered
    )
    return _merge_intervals(items, gap_threshold)


def resessionize(
    sessions, gap_threshold: float = DEFAULT_GAP_SECONDS
) -> list[SessionRecord]:
    """Apply the session merge rule to already-built sessions.

    Sessions are treated as activity intervals; the pause between two
    sessions is measured from the end of one to the start of the next.
    Output of :func:`sessionize` maps to itself for the same threshold.
    """
    _check_gap(gap_threshold)
    ordered = sorted(sessions, key=lambda s: (s.user_id, s.start_time))
    items = (
        (
            s.user_id,
            s.domain,
            s.start_time,
            s.duration,
            s.bytes,
            s.http_requests,
            s.location,
            s.isp,
            s.service_class,
        )
        for s in ordered
    )
    return _merge_intervals(items, gap_threshold)


# --------------------------------------------------------------------------
# profile matrix assembly
# --------------------------------------------------------------------------


def _metric_value(session: SessionRecord, metric: str) -> float:
    if metric == "bytes":
        return float(session.bytes)
    if metric == "duration":
        return float(session.duration)
    if metric == "requests":
        return float(session.http_requests)
    return 1.0  # session_count


def build_profile_matrix(
    sessions, metric: str = "bytes", *, canonical_order: bool = True
) -> ProfileMatrix:
    """Aggregate sessions into the users-by-domains activity matrix.

    Entry (i, j) is the chosen metric summed over user i's sessions on
    domain j. Per-cell sums use math.fsum, so the result is bit-identical
    under any permutation of the input. Users whose total activity is zero
    keep their (empty) row; domains with zero total activity are dropped,
    which guarantees every column has at least one visitor.

    ``canonical_order`` sorts users and domains lexicographically (the
    reproducible default); otherwise first-appearance order is kept.
    """
    if metric not in PROFILE_METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {PROFILE_METRICS}")
    cells: dict[tuple[str, str], list[float]] = {}
    users_order: dict[str, None] = {}
    domains_order: dict[str, None] = {}
    for s in sessions:
        users_order.setdefault(s.user_id)
        domains_order.setdefault(s.domain)
        cells.setdefault((s.user_id, s.domain), []).append(_metric_value(s, metric))
    totals = {key: math.fsum(vals) for key, vals in cells.items()}
    domain_active: dict[str, bool] = {d: False for d in domains_order}
    for (_, d), v in totals.items():
        if v > 0:
            domain_active[d] = True
    kept_domains = [d for d in domains_order if domain_active[d]]
    dropped = len(domains_order) - len(kept_domains)
    if dropped:
        log.warning("dropping %d domain(s) with zero total %s", dropped, metric)
    users = sorted(users_order) if canonical_order else list(users_order)
    domains = sorted(kept_domains) if canonical_order else kept_domains
    user_pos = {u: i for i, u in enumerate(users)}
    domain_pos = {d: j for j, d in enumerate(domains)}
    rows, cols, vals = [], [], []
    for (u, d), v in totals.items():
        if v > 0:
            rows.append(user_pos[u])
            cols.append(domain_pos[d])
            vals.append(v)
    indptr, indices, data = csr_from_triplets(len(users), len(domains), rows, cols, vals)
    return ProfileMatrix(
        n_users=len(users),
        n_domains=len(domains),
        indptr=indptr,
        indices=indices,
        data=data,
        users=tuple(users),
        domains=tuple(domains),
    )
