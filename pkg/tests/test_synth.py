import collections
import json

import numpy as np
import pytest

from usertopics.synth import (
    SynthSpec,
    adjusted_rand_index,
    disjoint_topic_word,
    generate,
    overlapping_topic_word,
    purity,
    read_truth,
    write_truth,
)

from oracles import ari_pair_counting


def spec_with(**kw):
    base = dict(
        n_topics=2,
        n_domains=10,
        n_users=4,
        topic_word=disjoint_topic_word(2, 10),
        sessions_lo=20,
        sessions_hi=20,
        seed=0,
    )
    base.update(kw)
    return SynthSpec(**base)


class TestSpecValidation:
    def test_rows_must_be_stochastic(self):
        bad = disjoint_topic_word(2, 10)
        bad[0, 0] += 0.5
        with pytest.raises(ValueError):
            spec_with(topic_word=bad)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            spec_with(user_topic_mode="soft")

    def test_bad_share(self):
        with pytest.raises(ValueError):
            spec_with(universal_share=1.5)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            SynthSpec.from_dict({"n_topics": 2, "n_domains": 4, "n_users": 2, "bogus": 1})

    def test_from_dict_topics_kinds(self):
        raw = {"n_topics": 2, "n_domains": 10, "n_users": 3}
        assert SynthSpec.from_dict(raw).topic_word.shape == (2, 10)
        raw["topics"] = {"kind": "overlap", "share": 0.2}
        spec = SynthSpec.from_dict(raw)
        assert np.allclose(spec.topic_word.sum(axis=1), 1.0)
        raw["topics"] = {"kind": "matrix", "rows": [[0.5, 0.5] + [0.0] * 8] * 2}
        assert SynthSpec.from_dict(raw).topic_word[0, 0] == 0.5

    def test_json_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"n_topics": 2, "n_domains": 6, "n_users": 3}))
        assert SynthSpec.from_file(path).n_users == 3


class TestGenerate:
    def test_single_topic_frequencies(self):
        # T=1 degenerate: empirical domain marginal matches row 0 within 1%
        spec = spec_with(
            n_topics=1,
            topic_word=disjoint_topic_word(1, 10),
            n_users=20,
            sessions_lo=5000,
            sessions_hi=5000,
        )
        sessions, _ = generate(spec)
        counts = collections.Counter(s.domain for s in sessions)
        total = len(sessions)
        for j, name in enumerate(spec.domain_names):
            empirical = counts[name] / total
            assert abs(empirical - spec.topic_word[0, j]) <= 0.01

    def test_mixture_identity(self):
        # fixed p_t = [0.5, 0.5] over disjoint supports: the domain marginal
        # is the even blend of the two topic rows
        spec = spec_with(
            user_topic_mode="mixed",
            fixed_mixture=(0.5, 0.5),
            n_users=20,
            sessions_lo=5000,
            sessions_hi=5000,
        )
        sessions, truth = generate(spec)
        assert np.allclose(truth.topic_mix, 0.5)
        counts = collections.Counter(s.domain for s in sessions)
        total = len(sessions)
        expected = 0.5 * spec.topic_word[0] + 0.5 * spec.topic_word[1]
        for j, name in enumerate(spec.domain_names):
            assert abs(counts[name] / total - expected[j]) <= 0.01

    def test_seeded_bit_identical(self):
        a_sessions, a_truth = generate(spec_with(seed=9))
        b_sessions, b_truth = generate(spec_with(seed=9))
        assert a_sessions == b_sessions
        assert np.array_equal(a_truth.dominant, b_truth.dominant)

    def test_universal_domain_everywhere(self):
        spec = spec_with(universal_domain="portal.example", n_users=10)
        sessions, _ = generate(spec)
        per_user = collections.defaultdict(set)
        for s in sessions:
            per_user[s.user_id].add(s.domain)
        assert all("portal.example" in doms for doms in per_user.values())

    def test_universal_share_of_sessions(self):
        spec = spec_with(universal_domain="portal.example", sessions_lo=40, sessions_hi=40)
        sessions, _ = generate(spec)
        per_user = collections.Counter(
            s.user_id for s in sessions if s.domain == "portal.example"
        )
        assert all(count == 12 for count in per_user.values())  # 30% of 40

    def test_hard_mode_one_hot(self):
        _, truth = generate(spec_with(n_users=30))
        assert np.array_equal(truth.topic_mix.max(axis=1), np.ones(30))
        assert np.array_equal(truth.dominant, truth.topic_mix.argmax(axis=1))

    def test_overlapping_topics_share_pool(self):
        tw = overlapping_topic_word(2, 12, 0.25)
        assert np.allclose(tw.sum(axis=1), 1.0)
        shared_cols = np.flatnonzero((tw > 0).all(axis=0))
        assert shared_cols.size > 0
        assert np.allclose(tw[:, shared_cols].sum(axis=1), 0.25)

    def test_truth_file_roundtrip(self, tmp_path):
        _, truth = generate(spec_with())
        write_truth(truth, tmp_path / "truth.csv")
        back = read_truth(tmp_path / "truth.csv")
        assert back == {u: int(t) for u, t in zip(truth.user_ids, truth.dominant)}


class TestAdjustedRandIndex:
    def test_identical(self):
        assert adjusted_rand_index([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0

    def test_relabeling_invariant(self):
        assert adjusted_rand_index([0, 0, 1, 2], [5, 5, 9, 7]) == 1.0

    def test_matches_pair_counting_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 9))
            a = rng.integers(0, 3, size=n).tolist()
            b = rng.integers(0, 3, size=n).tolist()
            assert adjusted_rand_index(a, b) == pytest.approx(
                ari_pair_counting(a, b), abs=1e-12
            )

    def test_symmetry(self, rng):
        a = rng.integers(0, 4, size=12).tolist()
        b = rng.integers(0, 4, size=12).tolist()
        assert adjusted_rand_index(a, b) == pytest.approx(
            adjusted_rand_index(b, a), abs=1e-12
        )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            adjusted_rand_index([0], [0, 1])


class TestPurity:
    def test_perfect(self):
        assert purity([0, 0, 1], [5, 5, 7]) == 1.0

    def test_single_cluster_two_classes(self):
        assert purity([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5

    def test_singletons(self):
        assert purity([0, 1, 2], [0, 0, 0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            purity([0], [0, 1])
