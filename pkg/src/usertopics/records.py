"""Record types shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass

GENDERS = frozenset({"male", "female", "unknown"})


def _check_domain(domain: str) -> None:
    if not domain:
        raise ValueError("domain must be non-empty")
    if any(ch.isspace() for ch in domain):
        raise ValueError(f"domain contains whitespace: {domain!r}")
    if "://" in domain:
        raise ValueError(f"domain carries a scheme prefix: {domain!r}")


@dataclass(frozen=True)
class SessionRecord:
    """One aggregated network session of one user on one domain."""

    user_id: str
    start_time: int  # epoch seconds, UTC
    duration: float  # seconds
    location: str
    domain: str
    isp: str
    http_requests: int
    service_class: str
    bytes: int

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"negative duration: {self.duration}")
        if self.bytes < 0:
            raise ValueError(f"negative bytes: {self.bytes}")
        if self.http_requests < 0:
            raise ValueError(f"negative http_requests: {self.http_requests}")
        _check_domain(self.domain)


@dataclass(frozen=True)
class DemographicRecord:
    """Profile row for one user; optional fields are None when absent."""

    user_id: str
    gender: str
    birth_year: int | None = None
    enrol_year: int | None = None
    degree_type: str | None = None

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender value: {self.gender!r}")


@dataclass(frozen=True)
class TransactionRecord:
    """One campus-card transaction."""

    user_id: str
    timestamp: int  # epoch seconds, UTC
    amount: float  # non-negative, RMB

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError(f"negative amount: {self.amount}")


@dataclass(frozen=True)
class RawEvent:
    """Instantaneous traffic event, input shape for sessionization."""

    user_id: str
    timestamp: int  # epoch seconds, UTC
    domain: str
    bytes: int
    http_requests: int

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError(f"negative bytes: {self.bytes}")
        if self.http_requests < 0:
            raise ValueError(f"negative http_requests: {self.http_requests}")
        _check_domain(self.domain)
