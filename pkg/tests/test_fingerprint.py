import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from llmcache.errors import DegenerateFingerprint, EmptySequence, KeyKindError, ShapeError
from llmcache.fingerprint import (
    BitSignature,
    DenseFingerprint,
    FingerprintConfig,
    HyperplaneSet,
    Scheme,
    cosine_similarity,
    fingerprint,
    gaussian_projection,
    mean_pool,
    prefix_attention_stats,
    reduce_dense,
    signature_similarity,
    similarity,
    simhash,
)
from llmcache.transformer.model import attention, embed

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


class TestMeanPool:
    def test_two_rows(self):
        np.testing.assert_array_equal(mean_pool(np.array([[1.0, 3.0], [3.0, 5.0]])), [2.0, 4.0])

    def test_single_row(self):
        np.testing.assert_array_equal(mean_pool(np.array([[7.0, -2.0]])), [7.0, -2.0])

    def test_constant_rows(self, rng):
        r = rng.standard_normal(16)
        np.testing.assert_allclose(mean_pool(np.tile(r, (128, 1))), r, rtol=0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(EmptySequence):
            mean_pool(np.zeros((0, 4)))

    @given(arrays(np.float64, (6, 3), elements=finite), st.randoms())
    def test_permutation_invariant(self, m, r):
        perm = list(range(6))
        r.shuffle(perm)
        np.testing.assert_allclose(mean_pool(m[perm]), mean_pool(m), atol=1e-9)


class TestPrefixStats:
    def test_first_two_rows(self):
        rows = np.array([[0, 0], [2, 2], [9, 9], [9, 9]], dtype=float)
        np.testing.assert_array_equal(prefix_attention_stats(rows, 2), [1.0, 1.0])

    def test_k_beyond_n_is_full_mean(self, rng):
        m = rng.standard_normal((5, 3))
        np.testing.assert_array_equal(prefix_attention_stats(m, 16), mean_pool(m))

    def test_single_row(self):
        np.testing.assert_array_equal(prefix_attention_stats(np.array([[3.0, 4.0]]), 7), [3.0, 4.0])

    def test_empty(self):
        with pytest.raises(EmptySequence):
            prefix_attention_stats(np.zeros((0, 2)), 3)


class TestReduceDense:
    def test_identity_projection_keeps_unit_vector(self):
        v = np.array([0.6, 0.0, 0.8])
        fp = reduce_dense(v, np.eye(3))
        assert fp.normalized
        np.testing.assert_allclose(fp.values, v, rtol=0, atol=1e-15)

    def test_zero_vector(self):
        with pytest.raises(DegenerateFingerprint):
            reduce_dense(np.zeros(4), np.eye(4))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            reduce_dense(np.ones(3), np.eye(4))

    def test_against_straight_line_reference(self):
        rng = np.random.default_rng(99)
        proj = rng.standard_normal((5, 8))
        v = rng.standard_normal(8)
        # Plain-Python re-evaluation, no numpy linear algebra.
        y = [sum(float(proj[i, j]) * float(v[j]) for j in range(8)) for i in range(5)]
        norm = math.sqrt(sum(c * c for c in y))
        expected = [c / norm for c in y]
        np.testing.assert_allclose(reduce_dense(v, proj).values, expected, rtol=0, atol=1e-12)

    def test_normalized_invariant(self, rng):
        for _ in range(20):
            fp = reduce_dense(rng.standard_normal(32), gaussian_projection(16, 32, 3))
            assert abs(np.linalg.norm(fp.values) - 1.0) <= 1e-9
            assert fp.dim == 16


class TestSimHash:
    def test_single_plane_on_itself(self):
        planes = HyperplaneSet.generate(8, 5, 3)
        for i in range(8):
            one = HyperplaneSet(planes.normals[i : i + 1], 3)
            assert simhash(planes.normals[i], one).bits.tolist() == [True]

    def test_seed42_hand_enumerated(self):
        # Signs of the first coordinate of default_rng(42).standard_normal((8, 4)),
        # enumerated by an independent re-implementation.
        sig = simhash(np.array([1.0, 0.0, 0.0, 0.0]), HyperplaneSet.generate(8, 4, 42))
        assert sig.bits.astype(int).tolist() == [1, 0, 0, 1, 1, 0, 0, 1]

    @given(arrays(np.float64, 12, elements=st.floats(-10, 10, allow_nan=False)))
    def test_antisymmetry(self, v):
        planes = HyperplaneSet.generate(64, 12, 5)
        dots = planes.normals @ v
        if not np.any(v) or np.any(dots == 0.0):
            return
        assert simhash(-v, planes) == simhash(v, planes).complement()

    def test_zero_vector(self):
        with pytest.raises(DegenerateFingerprint):
            simhash(np.zeros(4), HyperplaneSet.generate(8, 4, 0))

    def test_hyperplanes_unit_rows_and_reproducible(self):
        a = HyperplaneSet.generate(128, 64, 7)
        b = HyperplaneSet.generate(128, 64, 7)
        np.testing.assert_allclose(np.linalg.norm(a.normals, axis=1), 1.0, atol=1e-9)
        assert a.normals.tobytes() == b.normals.tobytes()

    def test_signature_width_rules(self):
        with pytest.raises(ShapeError):
            BitSignature(np.zeros(1, dtype=np.uint8), 12)
        with pytest.raises(ShapeError):
            BitSignature(np.array([0, 0b00000001], dtype=np.uint8), 12)
        odd = BitSignature.from_bits([1] * 12)
        assert odd.complement().bits.tolist() == [False] * 12
        sig = BitSignature.from_bits([1, 0, 1, 1, 0, 0, 0, 1])
        assert sig.width == 8 and sig.bits.astype(int).tolist() == [1, 0, 1, 1, 0, 0, 0, 1]


class TestSimilarity:
    def test_cosine_examples(self):
        assert cosine_similarity([1.0, 2.0], [1.0, 2.0]) == 1.0
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-9)

    def test_cosine_errors(self):
        with pytest.raises(DegenerateFingerprint):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ShapeError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(
        arrays(np.float64, 6, elements=st.floats(-100, 100, allow_nan=False)),
        arrays(np.float64, 6, elements=st.floats(-100, 100, allow_nan=False)),
        st.floats(1e-3, 1e3),
    )
    def test_cosine_scale_invariance(self, a, b, alpha):
        if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
            return
        c = cosine_similarity(a, b)
        assert -1.0 <= c <= 1.0
        assert cosine_similarity(alpha * a, b) == pytest.approx(c, abs=1e-9)

    def test_signature_examples(self, rng):
        a = BitSignature.from_bits(rng.integers(0, 2, 128))
        assert signature_similarity(a, a) == 1.0
        assert signature_similarity(a, a.complement()) == 0.0
        bits = a.bits.copy()
        bits[rng.choice(128, 32, replace=False)] ^= True
        assert signature_similarity(a, BitSignature.from_bits(bits)) == 0.75

    def test_signature_width_mismatch(self):
        with pytest.raises(ShapeError):
            signature_similarity(BitSignature.from_bits([0] * 8), BitSignature.from_bits([0] * 16))

    def test_mixed_kinds(self):
        with pytest.raises(KeyKindError):
            similarity(DenseFingerprint(np.array([1.0, 0.0])), BitSignature.from_bits([0] * 8))


class TestFingerprint:
    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_deterministic(self, small_weights, scheme):
        cfg = FingerprintConfig(scheme=scheme, dense_dim=16, signature_bits=64, prefix_len=4, seed=3)
        tokens = np.arange(10) % 64
        a = fingerprint(tokens, small_weights, cfg)
        b = fingerprint(tokens, small_weights, cfg)
        assert a == b and hash(a) == hash(b)
        assert isinstance(a, cfg.key_kind)

    def test_dense_mean_constant_tokens(self, small_weights):
        cfg = FingerprintConfig(dense_dim=16, seed=2)
        fp = fingerprint([5] * 9, small_weights, cfg)
        expected = reduce_dense(small_weights.embedding[5], gaussian_projection(16, 32, 2))
        np.testing.assert_allclose(fp.values, expected.values, atol=1e-12)

    def test_prefix_attention_uses_layer1_prefix(self, small_weights):
        cfg = FingerprintConfig(scheme="DensePrefixAttention", dense_dim=16, prefix_len=3, seed=2)
        tokens = np.arange(12)
        h0 = embed(tokens, small_weights).values
        full = attention(h0, small_weights.layers[0])
        expected = reduce_dense(full[:3].mean(axis=0), gaussian_projection(16, 32, 2))
        np.testing.assert_allclose(fingerprint(tokens, small_weights, cfg).values, expected.values, atol=1e-12)

    def test_dense_dim_above_model_dim(self, small_weights):
        with pytest.raises(ValueError):
            fingerprint([1, 2], small_weights, FingerprintConfig(dense_dim=33))

    def test_empty_tokens(self, small_weights):
        with pytest.raises(EmptySequence):
            fingerprint([], small_weights, FingerprintConfig(dense_dim=8))

    def test_simhash_overlap_beats_random(self, default_weights):
        # Monte-Carlo harness: 95%-overlap pairs vs independent pairs, 100 seeded trials.
        cfg = FingerprintConfig(scheme=Scheme.SIMHASH_OF_MEAN, signature_bits=128, seed=0)
        rng = np.random.default_rng(2024)
        n, vocab = 128, default_weights.config.vocab
        shared, independent = [], []
        for _ in range(100):
            a = rng.integers(0, vocab, n)
            b = a.copy()
            pos = rng.choice(n, round(0.05 * n), replace=False)
            b[pos] = rng.integers(0, vocab, pos.size)
            c = rng.integers(0, vocab, n)
            fa = fingerprint(a, default_weights, cfg)
            shared.append(signature_similarity(fa, fingerprint(b, default_weights, cfg)))
            independent.append(signature_similarity(fa, fingerprint(c, default_weights, cfg)))
        assert np.mean(shared) > np.mean(independent)
        assert np.mean(np.array(shared) > np.array(independent)) > 0.95


def test_config_validation():
    with pytest.raises(ValueError):
        FingerprintConfig(signature_bits=12)
    with pytest.raises(ValueError):
        FingerprintConfig(scheme="MinHash")
    assert FingerprintConfig().dense_dim == 64 and FingerprintConfig().signature_bits == 128
    assert FingerprintConfig().prefix_len == 16
