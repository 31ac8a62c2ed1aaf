"""Shared record factories and small corpus builders for the tests."""

from __future__ import annotations

import numpy as np

from usertopics.ingest import build_profile_matrix
from usertopics.records import RawEvent, SessionRecord


def make_session(user="u1", domain="example.com", bytes=100, t=0, duration=60.0,
                 requests=1):
    return SessionRecord(
        user_id=user,
        start_time=t,
        duration=duration,
        location="ap1",
        domain=domain,
        isp="isp",
        http_requests=requests,
        service_class="web",
        bytes=bytes,
    )


def make_event(user="u1", t=0, domain="example.com", bytes=10, requests=1):
    return RawEvent(
        user_id=user, timestamp=t, domain=domain, bytes=bytes, http_requests=requests
    )


def matrix_from_dense(dense, metric="bytes"):
    """Profile matrix whose dense form equals ``dense`` (integer entries)."""
    dense = np.asarray(dense)
    sessions = []
    for i in range(dense.shape[0]):
        for j in range(dense.shape[1]):
            if dense[i, j] > 0:
                sessions.append(
                    make_session(
                        user=f"u{i:04d}", domain=f"d{j:04d}", bytes=int(dense[i, j])
                    )
                )
        if not dense[i].any():
            # keep the user present through a zero-byte session
            sessions.append(make_session(user=f"u{i:04d}", domain="d0000", bytes=0))
    return build_profile_matrix(sessions, metric=metric)


def random_dense_positive(rng, max_users=10, max_domains=10, density=0.6,
                          low=1, high=1000):
    """Random small non-negative integer matrix with no all-zero rows."""
    n = int(rng.integers(2, max_users + 1))
    d = int(rng.integers(2, max_domains + 1))
    dense = np.zeros((n, d), dtype=np.int64)
    for i in range(n):
        while not dense[i].any():
            mask = rng.random(d) < density
            dense[i, mask] = rng.integers(low, high + 1, size=int(mask.sum()))
    return dense
