import math

import numpy as np
import pytest

from mocap_text.exceptions import EmbeddingError, MetricError
from mocap_text.services.embedding_factory import EmbeddingProviderFactory
from mocap_text.services.metrics_service import (
    bleu,
    bleu4,
    closest_reference_length,
    cosine_similarity,
    semantic_score,
    strip_special,
    text_report,
)


def _split(text):
    return text.split()


class TestBleu:
    """Corpus BLEU"""

    def test_exact_match_scores_one(self):
        """Test a prediction equal to its reference scores 1"""
        hyp = _split("a person walks forward then turns")
        assert bleu4([hyp], [[hyp]]) == 1.0

    def test_brevity_penalty(self):
        """Test a short hypothesis is penalized by exp(1 - r / c)"""
        result = bleu([["a", "b"]], [[["a", "b", "c", "d"]]], max_n=1)
        assert result.precisions == [1.0]
        assert np.isclose(result.brevity_penalty, math.exp(-1))
        assert np.isclose(result.score, math.exp(-1))

    def test_no_penalty_when_longer(self):
        """Test hypotheses longer than the reference are not penalized"""
        result = bleu([["a", "b", "c"]], [[["a", "b"]]], max_n=1)
        assert result.brevity_penalty == 1.0

    def test_clipped_counts(self):
        """Test repeated words count at most as often as in a reference"""
        result = bleu([["the", "the", "the"]], [[["the", "cat"]]], max_n=1)
        assert np.isclose(result.precisions[0], 1 / 3)

    def test_zero_precision_gives_zero(self):
        """Test a missing order makes the unsmoothed score 0"""
        hyp = ["a", "b", "c", "d"]
        assert bleu4([hyp], [[["a", "b", "c", "e"]]]) == 0.0

    def test_add_one_smoothing(self):
        """Test smoothing adds one to orders two and up"""
        hyp = ["a", "b", "c", "d"]
        result = bleu([hyp], [[["a", "b", "c", "e"]]], smoothing=True)
        assert np.allclose(result.precisions, [3 / 4, 3 / 4, 2 / 3, 1 / 2])
        expected = (3 / 4 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
        assert np.isclose(result.score, expected)

    def test_multiple_references(self):
        """Test n-grams may match any reference of the sample"""
        hyp = _split("a man walks slowly")
        refs = [_split("a man walks"), _split("someone walks slowly")]
        assert bleu([hyp], [refs], max_n=1).precisions == [1.0]

    def test_closest_reference_length_prefers_shorter(self):
        """Test ties in reference length pick the shorter one"""
        assert closest_reference_length(4, [["x"] * 3, ["x"] * 5]) == 3

    def test_corpus_not_sentence_average(self):
        """Test counts are pooled over the corpus before dividing"""
        result = bleu([["a"], ["b", "c", "d"]], [[["a"]], [["x", "y", "z"]]], max_n=1)
        assert result.precisions == [0.25]

    @pytest.mark.parametrize(
        "predictions, references",
        [([], []), ([["a"]], []), ([["a"]], [[]])],
    )
    def test_undefined_inputs(self, predictions, references):
        """Test empty or misaligned corpora raise MetricError"""
        with pytest.raises(MetricError):
            bleu(predictions, references)


class TestBleuOracle:
    """Corpus BLEU against a brute-force count"""

    @staticmethod
    def _grams(tokens, n):
        return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]

    def _oracle(self, predictions, references, smoothing):
        matches, totals = [0] * 4, [0] * 4
        c = r = 0
        for hyp, refs in zip(predictions, references):
            c += len(hyp)
            best = None
            for ref in refs:
                key = (abs(len(ref) - len(hyp)), len(ref))
                best = key if best is None or key < best else best
            r += best[1]
            for n in range(1, 5):
                grams = self._grams(hyp, n)
                for gram in set(grams):
                    in_refs = max(self._grams(ref, n).count(gram) for ref in refs)
                    matches[n - 1] += min(grams.count(gram), in_refs)
                totals[n - 1] += len(grams)
        precisions = [
            (m + 1) / (t + 1) if smoothing and n > 0 else (m / t if t else 0.0)
            for n, (m, t) in enumerate(zip(matches, totals))
        ]
        if 0.0 in precisions:
            return 0.0
        penalty = 1.0 if c > r else math.exp(1 - r / c)
        return penalty * math.prod(precisions) ** 0.25

    def test_random_corpora(self, rng):
        """Test bleu4 equals the brute-force score on random corpora"""
        words = ["a", "person", "walks", "turns", "left"]
        for _ in range(300):
            size = int(rng.integers(1, 5))
            predictions = [list(rng.choice(words, size=int(rng.integers(1, 9)))) for _ in range(size)]
            references = [
                [list(rng.choice(words, size=int(rng.integers(1, 9)))) for _ in range(int(rng.integers(1, 4)))]
                for _ in range(size)
            ]
            for smoothing in (False, True):
                expected = self._oracle(predictions, references, smoothing)
                assert np.isclose(bleu4(predictions, references, smoothing), expected)


class TestSemantic:
    """Embedding similarity"""

    def test_cosine(self):
        """Test cosine of orthogonal and parallel vectors"""
        assert cosine_similarity([1, 0], [0, 1]) == 0.0
        assert cosine_similarity([2, 0], [5, 0]) == 1.0

    def test_cosine_zero_vector(self):
        """Test a zero vector raises MetricError"""
        with pytest.raises(MetricError):
            cosine_similarity([0, 0], [1, 0])

    def test_identical_prediction_scores_one(self):
        """Test predicting a reference gives similarity 1"""
        provider = EmbeddingProviderFactory.create("hashed", dimension=64)
        result = semantic_score([["a person walks", "someone waves"]], ["A person walks."], provider)
        assert np.isclose(result.score, 1.0)

    def test_best_reference_then_mean(self):
        """Test several predictions average their best reference match"""
        provider = EmbeddingProviderFactory.create("hashed", dimension=64)
        result = semantic_score(
            [["a person walks"]], [["a person walks", "a person walks"]], provider
        )
        assert np.isclose(result.per_sample[0], 1.0)

    def test_misaligned(self):
        """Test misaligned lists raise MetricError"""
        provider = EmbeddingProviderFactory.create("hashed")
        with pytest.raises(MetricError):
            semantic_score([["a"]], [], provider)

    def test_provider_failure(self, tmp_path):
        """Test a sentence missing from the table raises EmbeddingError"""
        path = tmp_path / "emb.jsonl"
        path.write_text('{"sentence": "a person walks", "vector": [1.0, 0.0]}\n')
        provider = EmbeddingProviderFactory.create("file", path=path)
        with pytest.raises(EmbeddingError):
            semantic_score([["a person walks"]], ["a person waves"], provider)


class TestTextReport:
    """Combined text scores"""

    def test_report(self):
        """Test BLEU@1-4, average length and the semantic score"""
        provider = EmbeddingProviderFactory.create("hashed")
        report = text_report(
            ["a person walks forward then turns"],
            [["A person walks forward, then turns."]],
            provider,
        )
        assert report.bleu == {"bleu1": 1.0, "bleu2": 1.0, "bleu3": 1.0, "bleu4": 1.0}
        assert report.average_length == 6.0
        assert report.brevity_penalty == 1.0
        assert np.isclose(report.semantic_score, 1.0)

    def test_report_without_provider(self):
        """Test the semantic score is omitted without a provider"""
        report = text_report(["a person waves"], [["a person walks"]])
        assert report.semantic_score is None
        assert report.n_samples == 1

    def test_strip_special(self):
        """Test reserved tokens and everything after <eos> are dropped"""
        assert strip_special(["<sos>", "a", "<pad>", "b", "<eos>", "c"]) == ("a", "b")
