"""Lexical similarity and hard-negative mining."""

from __future__ import annotations

import io

import numpy as np
import pytest

from attackmapper.catalog import Technique
from attackmapper.errors import (
    CoverageError,
    InsufficientCorpusError,
    ValidationError,
)
from attackmapper.similarity import (
    HardNegative,
    SimilarityConfig,
    attach_hard_negatives,
    char_ngram_overlap,
    combined_similarity,
    jaccard_words,
    mine_hard_negatives,
    normalize,
    read_mined_jsonl,
    stem_tokens,
    tokenize,
    write_mined_jsonl,
)

import helpers


def _random_text(rng: np.random.Generator) -> str:
    vocab = [
        "phishing", "email", "campaign", "credential", "scan", "network",
        "the", "of", "and", "ransom", "encrypt", "access!", "remote,",
        "service", "exploit", "attacker", "tool", "transfer", "brute",
    ]
    count = int(rng.integers(0, 12))
    return " ".join(vocab[i] for i in rng.integers(0, len(vocab), size=count))


class TestNormalize:
    def test_three_stage_cleanup(self):
        assert normalize("Phishing Attack!") == ["phishing", "attack"]

    def test_empty_text(self):
        assert normalize("") == []

    def test_all_stopwords(self):
        assert normalize("The and of") == []

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            text = _random_text(rng)
            once = normalize(text)
            assert normalize(" ".join(once)) == once

    def test_tokenize_keeps_stopwords(self):
        assert tokenize("The and of") == ["the", "and", "of"]


class TestStemTokens:
    def test_examples(self):
        assert stem_tokens(["phishing"]) == ["phish"]
        assert stem_tokens([]) == []
        assert stem_tokens(["emails", "email"]) == ["email", "email"]

    def test_length_preserved(self):
        tokens = ["scanning", "networks", "encrypted", "by"]
        assert len(stem_tokens(tokens)) == len(tokens)


class TestJaccardWords:
    def test_identity(self):
        assert jaccard_words(["a", "b"], ["b", "a"]) == 1.0

    def test_disjoint(self):
        assert jaccard_words(["a"], ["b"]) == 0.0

    def test_hand_counted_sets(self):
        a = ["phish", "email", "target", "user"]
        b = ["target", "phish", "email", "campaign"]
        assert jaccard_words(a, b) == pytest.approx(0.6, abs=1e-12)

    def test_both_empty_is_one(self):
        assert jaccard_words([], []) == 1.0

    def test_one_empty_is_zero(self):
        assert jaccard_words([], ["a"]) == 0.0


class TestCharNgramOverlap:
    def test_hand_counted_grams(self):
        assert char_ngram_overlap("spearphish", "spearphishing") == pytest.approx(
            0.7, abs=1e-12
        )

    def test_identity(self):
        assert char_ngram_overlap("phishing email", "phishing email") == 1.0

    def test_short_side_empty_set(self):
        assert char_ngram_overlap("abc", "abcd") == 0.0

    def test_whitespace_collapsed(self):
        assert char_ngram_overlap("a  phishing  mail", "a phishing mail") == 1.0


class TestCombinedSimilarity:
    def test_identical_any_weight(self):
        for w in (0.0, 0.3, 1.0):
            config = SimilarityConfig(jaccard_weight=w)
            assert combined_similarity("Phishing scan", "Phishing scan", config) == 1.0

    def test_boundary_weights_reduce_to_components(self):
        a, b = "credential phishing email", "phishing email campaign"
        na, nb = " ".join(normalize(a)), " ".join(normalize(b))
        only_words = combined_similarity(a, b, SimilarityConfig(jaccard_weight=1.0))
        only_grams = combined_similarity(a, b, SimilarityConfig(jaccard_weight=0.0))
        assert only_words == jaccard_words(
            stem_tokens(normalize(a)), stem_tokens(normalize(b))
        )
        assert only_grams == char_ngram_overlap(na, nb)

    def test_weighted_blend_arithmetic(self):
        a, b = "credential phishing email", "phishing email campaign"
        word = combined_similarity(a, b, SimilarityConfig(jaccard_weight=1.0))
        gram = combined_similarity(a, b, SimilarityConfig(jaccard_weight=0.0))
        blended = combined_similarity(a, b, SimilarityConfig(jaccard_weight=0.5))
        assert blended == pytest.approx(0.5 * word + 0.5 * gram, abs=1e-15)
        # component values 0.6 and 0.7 at w = 0.5 blend to 0.65
        assert 0.5 * 0.6 + 0.5 * 0.7 == pytest.approx(0.65, abs=1e-12)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            a, b = _random_text(rng), _random_text(rng)
            s_ab = combined_similarity(a, b)
            s_ba = combined_similarity(b, a)
            assert s_ab == s_ba
            assert 0.0 <= s_ab <= 1.0

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            a, b = _random_text(rng), _random_text(rng)
            assert combined_similarity(a, b) == pytest.approx(
                helpers.oracle_similarity(a, b), abs=1e-12
            )

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SimilarityConfig(gram_size=1)
        with pytest.raises(ValidationError):
            SimilarityConfig(jaccard_weight=1.5)


def _technique_corpus(rng: np.random.Generator, n: int) -> list[Technique]:
    vocab = [
        "adversary", "sends", "deceptive", "message", "credential", "scan",
        "network", "service", "ransom", "encrypt", "remote", "access",
        "exploit", "public", "application", "tool", "transfer", "brute",
        "force", "password", "guess", "channel", "exfiltration", "shell",
    ]
    out = []
    for i in range(n):
        words = [vocab[k] for k in rng.integers(0, len(vocab), size=int(rng.integers(3, 9)))]
        out.append(Technique(id=f"T{1000 + i}", name=f"t{i}", description=" ".join(words)))
    return out


class TestMining:
    def test_shared_vocabulary_pairs_up(self):
        techniques = [
            Technique("T1001", "a", "spearphishing email with malicious attachment"),
            Technique("T1002", "b", "spearphishing email with malicious link"),
            Technique("T1003", "c", "encrypting files and demanding ransom payment"),
        ]
        mined = mine_hard_negatives(techniques)
        assert mined["T1001"].negative_technique_id == "T1002"
        assert mined["T1002"].negative_technique_id == "T1001"

    def test_two_techniques_mirror(self):
        techniques = [
            Technique("T1001", "a", "alpha beta gamma"),
            Technique("T1002", "b", "delta epsilon zeta"),
        ]
        mined = mine_hard_negatives(techniques)
        assert mined["T1001"].negative_technique_id == "T1002"
        assert mined["T1002"].negative_technique_id == "T1001"

    def test_insufficient_corpus(self):
        with pytest.raises(InsufficientCorpusError):
            mine_hard_negatives([Technique("T1001", "a", "alone")])

    def test_never_self(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            techniques = _technique_corpus(rng, int(rng.integers(2, 30)))
            for tid, entry in mine_hard_negatives(techniques).items():
                assert entry.negative_technique_id != tid

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        for n in (2, 3, 7, 20, 60):
            techniques = _technique_corpus(rng, n)
            mined = mine_hard_negatives(techniques)
            oracle = helpers.brute_force_mine(techniques)
            assert set(mined) == set(oracle)
            for tid, (neg_id, score) in oracle.items():
                assert mined[tid].negative_technique_id == neg_id
                assert mined[tid].similarity_score == pytest.approx(score, abs=1e-12)

    def test_tie_breaks_to_lowest_id(self):
        # three identical descriptions tie at similarity 1.0
        techniques = [
            Technique("T1003", "c", "identical twin description"),
            Technique("T1001", "a", "identical twin description"),
            Technique("T1002", "b", "identical twin description"),
        ]
        mined = mine_hard_negatives(techniques)
        assert mined["T1001"].negative_technique_id == "T1002"
        assert mined["T1002"].negative_technique_id == "T1001"
        assert mined["T1003"].negative_technique_id == "T1001"
        assert all(m.similarity_score == 1.0 for m in mined.values())

    def test_duplicate_ids_rejected(self):
        techniques = [
            Technique("T1001", "a", "first"),
            Technique("T1001", "b", "second"),
            Technique("T1002", "c", "third"),
        ]
        with pytest.raises(ValidationError):
            mine_hard_negatives(techniques)

    def test_two_sharing_one_id_is_insufficient(self):
        techniques = [
            Technique("T1001", "a", "first"),
            Technique("T1001", "b", "second"),
        ]
        with pytest.raises(InsufficientCorpusError):
            mine_hard_negatives(techniques)


class TestAttach:
    def _fixture(self):
        techniques = {
            "T1001": Technique("T1001", "a", "desc one"),
            "T1002": Technique("T1002", "b", "desc two"),
        }
        mined = {
            "T1001": HardNegative("T1001", "T1002", 0.25),
            "T1002": HardNegative("T1002", "T1001", 0.25),
        }
        return techniques, mined

    def test_shared_positive_reuses_single_negative(self):
        techniques, mined = self._fixture()
        pairs = [("i1", "T1001"), ("i2", "T1001"), ("i3", "T1001")]
        triples = attach_hard_negatives(pairs, mined, techniques)
        assert [t.anchor for t in triples] == ["i1", "i2", "i3"]
        assert {t.positive for t in triples} == {"desc one"}
        assert {t.hard_negative for t in triples} == {"desc two"}

    def test_empty_pairs(self):
        techniques, mined = self._fixture()
        assert attach_hard_negatives([], mined, techniques) == []

    def test_hand_joined_table(self):
        techniques, mined = self._fixture()
        pairs = [("a", "T1001"), ("b", "T1002"), ("c", "T1001"), ("d", "T1002")]
        triples = attach_hard_negatives(pairs, mined, techniques)
        expected = [
            ("a", "desc one", "desc two"),
            ("b", "desc two", "desc one"),
            ("c", "desc one", "desc two"),
            ("d", "desc two", "desc one"),
        ]
        assert [(t.anchor, t.positive, t.hard_negative) for t in triples] == expected
        assert all(t.hn_score == 0.25 for t in triples)

    def test_missing_mined_entry(self):
        techniques, mined = self._fixture()
        with pytest.raises(CoverageError, match="T1999"):
            attach_hard_negatives([("x", "T1999")], mined, techniques)


class TestMinedJsonl:
    def test_round_trip_six_decimals(self):
        mined = {
            "T1001": HardNegative("T1001", "T1002", 1 / 3),
            "T1002": HardNegative("T1002", "T1001", 0.25),
        }
        sink = io.StringIO()
        write_mined_jsonl(mined, sink)
        lines = sink.getvalue().strip().splitlines()
        assert '"score": 0.333333' in lines[0]
        back = read_mined_jsonl(io.StringIO(sink.getvalue()))
        assert back["T1001"].similarity_score == pytest.approx(1 / 3, abs=5e-7)
        assert back["T1002"].negative_technique_id == "T1001"
