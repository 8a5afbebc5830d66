import math

import numpy as np
import pytest

from llmcache.errors import EmptySequence
from llmcache.workload import (
    Order,
    WorkloadSpec,
    corpus_workload,
    fnv1a_64,
    generate_workload,
    hashing_tokenizer,
    load_corpus,
)


def test_zero_rate_variants_equal_base():
    items = generate_workload(WorkloadSpec(num_bases=3, variants_per_base=4, perturbation_rate=0.0, seq_len=20))
    by_base = {}
    for it in items:
        by_base.setdefault(it.base_id, []).append(it.tokens)
    assert len(by_base) == 3
    for variants in by_base.values():
        assert all(np.array_equal(v, variants[0]) for v in variants)


def test_full_rate_agreement_is_binomial():
    vocab, n = 16, 64
    matches = trials = 0
    for seed in range(10):
        grouped = WorkloadSpec(num_bases=4, variants_per_base=5, perturbation_rate=1.0, seq_len=n,
                               vocab=vocab, seed=seed, order=Order.GROUPED)
        items = generate_workload(grouped)
        # Reconstruct each base from the same generator stream.
        rng = np.random.default_rng(seed)
        bases = rng.integers(0, vocab, size=(4, n))
        for it in items:
            matches += int(np.sum(it.tokens == bases[it.base_id]))
            trials += n
    p = 1 / vocab
    sigma = math.sqrt(trials * p * (1 - p))
    assert abs(matches - trials * p) <= 3 * sigma


def test_deterministic_per_seed():
    spec = WorkloadSpec(num_bases=3, variants_per_base=2, seq_len=16, seed=9)
    a, b = generate_workload(spec), generate_workload(spec)
    assert all(np.array_equal(x.tokens, y.tokens) and x.base_id == y.base_id for x, y in zip(a, b))
    c = generate_workload(WorkloadSpec(num_bases=3, variants_per_base=2, seq_len=16, seed=10))
    assert any(not np.array_equal(x.tokens, y.tokens) for x, y in zip(a, c))


@pytest.mark.parametrize("rho", [0.0, 0.01, 0.05, 0.07, 0.3, 1.0])
def test_perturbation_bound(rho):
    n, vocab = 100, 50
    spec = WorkloadSpec(num_bases=3, variants_per_base=6, perturbation_rate=rho, seq_len=n, vocab=vocab,
                        seed=2, order=Order.GROUPED)
    bases = np.random.default_rng(2).integers(0, vocab, size=(3, n))
    limit = math.ceil(round(rho * n, 9))
    assert spec.perturbed_positions == limit
    for it in generate_workload(spec):
        assert it.seq_len == n and it.rho_applied == rho
        assert int(np.sum(it.tokens != bases[it.base_id])) <= limit


def test_grouped_vs_shuffled_order():
    kw = dict(num_bases=4, variants_per_base=3, seq_len=8)
    grouped = [it.base_id for it in generate_workload(WorkloadSpec(order=Order.GROUPED, **kw))]
    assert grouped == sorted(grouped)
    shuffled = [it.base_id for it in generate_workload(WorkloadSpec(order=Order.SHUFFLED, **kw))]
    assert sorted(shuffled) == grouped and shuffled != grouped


def test_repeat_emits_back_to_back():
    items = generate_workload(WorkloadSpec(num_bases=2, variants_per_base=2, seq_len=8, repeat=3))
    assert len(items) == 12
    for i in range(0, 12, 3):
        assert all(np.array_equal(items[i].tokens, items[i + k].tokens) for k in (1, 2))


@pytest.mark.parametrize("kw", [{"perturbation_rate": -0.1}, {"perturbation_rate": 1.5}, {"seq_len": 0},
                                {"num_bases": 0}, {"repeat": 0}, {"order": "Sideways"}])
def test_rejects_invalid_parameters(kw):
    with pytest.raises(ValueError):
        WorkloadSpec(**kw)


def test_items_are_immutable():
    item = generate_workload(WorkloadSpec(num_bases=1, variants_per_base=1, seq_len=4))[0]
    with pytest.raises(ValueError):
        item.tokens[0] = 0


@pytest.mark.parametrize("data,expected", [
    (b"", 0xCBF29CE484222325),
    (b"a", 0xAF63DC4C8601EC8C),
    (b"foobar", 0x85944171F73967E8),
])
def test_fnv1a_published_vectors(data, expected):
    assert fnv1a_64(data) == expected


def test_tokenizer_consistency():
    x, y, z = hashing_tokenizer("a b a", 1024)
    assert x == z and x != y
    assert list(hashing_tokenizer("word word", 97)) == [fnv1a_64(b"word") % 97] * 2


def test_tokenizer_golden():
    tokens = hashing_tokenizer("the quick brown fox jumps over the lazy dog", 1024)
    assert tokens.tolist() == [380, 412, 463, 910, 730, 111, 380, 815, 233]


def test_tokenizer_errors():
    with pytest.raises(EmptySequence):
        hashing_tokenizer("", 1024)
    with pytest.raises(EmptySequence):
        hashing_tokenizer("  \t\n", 1024)
    with pytest.raises(ValueError):
        hashing_tokenizer("a", 1)


def test_tokenizer_utf8():
    assert hashing_tokenizer("café", 1 << 20)[0] == fnv1a_64("café".encode("utf-8")) % (1 << 20)


def test_load_corpus(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert load_corpus(empty) == []
    docs = tmp_path / "docs.txt"
    docs.write_text("first doc\n   \nsecond doc\n\nthird\n", encoding="utf-8")
    assert load_corpus(docs) == ["first doc", "second doc", "third"]
    with pytest.raises(OSError):
        load_corpus(tmp_path / "missing.txt")


def test_corpus_workload_truncates():
    items = corpus_workload(["a b c d", "e f"], 64, max_len=3)
    assert [it.seq_len for it in items] == [3, 2]
    assert [it.base_id for it in items] == [0, 1]
