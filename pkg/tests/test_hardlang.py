"""Tests for finite monoids, the closure and membership deciders and dataset generation."""

from functools import lru_cache
from itertools import permutations, product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talab import hardlang
from talab.errors import (
    BadTable,
    BalanceUnreachable,
    ConfigError,
    MalformedPairSet,
    UnknownSymbol,
)
from talab.hardlang import (
    ClosureInstance,
    FiniteMonoid,
    GenParams,
    MembershipInstance,
    Morphism,
    closure_brute,
    closure_decide,
    gen_dataset,
    idempotent_power,
    linked_pairs,
    membership_decide,
    monoid_eval,
)

BUILTINS = hardlang.builtin_monoids()
Z2, S3, S5, U1 = (BUILTINS[name] for name in ("z2", "s3", "s5", "u1"))
S3_PERMS = sorted(permutations(range(3)))


def binary_words(max_len):
    for length in range(max_len + 1):
        for letters in product("ab", repeat=length):
            yield "".join(letters)


def test_builtin_tables():
    """Sizes, identities and the Z₂ table."""
    assert Z2.target.table == ((0, 1), (1, 0))
    assert Z2.target.identity == 0
    assert S3.target.size == 6
    assert S5.target.size == 120
    assert U1.target.size == 2
    assert S5.target.element_order(S5.image("b")) == 5
    assert S5.target.element_order(S5.image("a")) == 2


@pytest.mark.parametrize(
    "table,identity",
    [
        ((), 0),
        (((0, 1), (1,)), 0),
        (((0, 2), (1, 0)), 0),
        (((0, 1), (1, 0)), 2),
        (((1, 0), (0, 1)), 0),
        (((0, 1, 2), (1, 2, 1), (2, 2, 1)), 0),
    ],
    ids=["empty", "ragged", "out-of-range", "identity-range", "not-identity", "not-associative"],
)
def test_bad_tables(table, identity):
    """Malformed composition tables are rejected at construction."""
    with pytest.raises(BadTable):
        FiniteMonoid("bad", table, identity)


def test_monoid_eval():
    """Left fold of letter images."""
    assert monoid_eval(Z2, "") == 0
    assert monoid_eval(Z2, "aa") == 0
    assert monoid_eval(Z2, "aba") == 0
    assert monoid_eval(Z2, "abb") == 1
    assert monoid_eval(U1, "bbab") == 1
    assert monoid_eval(U1, "bbb") == 0
    with pytest.raises(UnknownSymbol):
        monoid_eval(Z2, "abc")


def test_s3_composition_convention():
    """(1 2)∘(1 3) is the 3-cycle (1 3 2): apply the right factor first."""
    assert monoid_eval(S3, "ab") == S3_PERMS.index((2, 0, 1))
    assert monoid_eval(S3, "ba") == S3_PERMS.index((1, 2, 0))
    assert monoid_eval(S3, "aa") == S3.target.identity


def test_morphism():
    """Alphabet order fixes token ids."""
    h = Morphism(Z2.target, {"b": 0, "a": 1})
    assert h.alphabet == ("a", "b")
    assert h.tokens("bab") == [1, 0, 1]
    with pytest.raises(UnknownSymbol):
        h.image("z")
    with pytest.raises(BadTable):
        Morphism(Z2.target, {"ab": 0})
    with pytest.raises(BadTable):
        Morphism(Z2.target, {"a": 5})


def test_closure_examples():
    """Z₂, F = {0}, r = 2."""
    accept = frozenset({0})
    assert closure_decide(ClosureInstance(Z2, accept, 2, "aa"))
    assert not closure_decide(ClosureInstance(Z2, accept, 2, "a"))
    assert closure_decide(ClosureInstance(Z2, accept, 2, ""))
    assert closure_brute(ClosureInstance(Z2, accept, 2, ""))
    assert closure_brute(ClosureInstance(Z2, accept, 1, "b"))
    # the two a's only cancel inside one chunk of length 3
    assert not closure_decide(ClosureInstance(Z2, accept, 2, "aba"))
    assert closure_decide(ClosureInstance(Z2, accept, 3, "aba"))


def test_closure_validation():
    """r >= 1 and F inside the monoid; brute force is length-limited."""
    with pytest.raises(ConfigError):
        ClosureInstance(Z2, frozenset({0}), 0)
    with pytest.raises(ConfigError):
        ClosureInstance(Z2, frozenset({7}), 1)
    with pytest.raises(ValueError, match="brute force"):
        closure_brute(ClosureInstance(Z2, frozenset({0}), 2, "a" * 15))
    with pytest.raises(UnknownSymbol):
        closure_decide(ClosureInstance(Z2, frozenset({0}), 2, "ax"))


@pytest.mark.parametrize("name", ["z2", "s3"])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_closure_decide_matches_brute_force(name, r):
    """The dynamic program agrees with exhaustive factorization on all binary words up to 10."""
    h = BUILTINS[name]
    for accept in ({h.target.identity}, {h.image("a")}, {h.image("a"), h.target.identity}):
        for word in binary_words(10):
            inst = ClosureInstance(h, frozenset(accept), r, word)
            assert closure_decide(inst) == closure_brute(inst), (accept, word)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["u1", "s3", "s5"]),
    st.text(alphabet="ab", max_size=12),
    st.integers(1, 4),
    st.data(),
)
def test_closure_decide_matches_brute_force_random(name, word, r, data):
    """Random accepted sets over other monoids."""
    h = BUILTINS[name]
    accept = frozenset(data.draw(st.sets(st.integers(0, h.target.size - 1), min_size=1, max_size=4)))
    inst = ClosureInstance(h, accept, r, word)
    assert closure_decide(inst) == closure_brute(inst)


def test_idempotent_power():
    """Smallest idempotent power."""
    assert idempotent_power(Z2.target, 0) == (1, 0)
    assert idempotent_power(Z2.target, 1) == (2, 0)
    three_cycle = S3_PERMS.index((1, 2, 0))
    assert idempotent_power(S3.target, three_cycle) == (3, S3.target.identity)
    assert idempotent_power(U1.target, 1) == (1, 1)
    assert U1.target.element_order(1) is None


def test_linked_pairs_examples():
    """Z₂ with u = a, v = b, and the identity loop."""
    assert linked_pairs(Z2, "a", "b") == {(1, 0)}
    assert linked_pairs(S3, "ab", "aa") == {(monoid_eval(S3, "ab"), S3.target.identity)}
    assert linked_pairs(U1, "b", "a") == {(1, 1)}
    with pytest.raises(ValueError, match="nonempty"):
        linked_pairs(Z2, "", "a")


def _linked_pairs_by_enumeration(h, u, v):
    m = h.target
    limit = 2 * m.size
    prefixes = {monoid_eval(h, u + v * k) for k in range(limit + 1)}
    loops = {monoid_eval(h, v * k) for k in range(1, limit + 1)}
    return {(s, e) for s in prefixes for e in loops if m.is_idempotent(e) and m.op(s, e) == s}


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(["s3", "u1", "z2"]), st.text("ab", min_size=1, max_size=6), st.text("ab", min_size=1, max_size=6))
def test_linked_pairs_match_enumeration(name, u, v):
    """Linked pairs agree with direct enumeration of h(uv^k) and h(v^m)."""
    h = BUILTINS[name]
    assert linked_pairs(h, u, v) == _linked_pairs_by_enumeration(h, u, v)


def test_membership_examples():
    """Z₂ with u = a, v = b."""
    assert not membership_decide(MembershipInstance(Z2, frozenset(), "a", "b"))
    assert membership_decide(MembershipInstance(Z2, frozenset({(1, 0)}), "a", "b"))
    assert not membership_decide(MembershipInstance(Z2, frozenset({(0, 0)}), "a", "b"))
    with pytest.raises(MalformedPairSet):
        membership_decide(MembershipInstance(Z2, frozenset({(0, 1)}), "a", "b"))


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from(["s3", "u1", "s5"]),
    st.text("ab", min_size=1, max_size=5),
    st.text("ab", min_size=1, max_size=5),
    st.data(),
)
def test_membership_invariant_under_rewriting(name, u, v, data):
    """uv^ω = (uv)v^ω = u(vv)^ω, so the answer does not change for saturated P."""
    h = BUILTINS[name]
    candidates = hardlang.all_linked_pairs(h.target)
    pairs = hardlang.saturate_pairs(h.target, data.draw(st.sets(st.sampled_from(candidates), max_size=6)))
    answer = membership_decide(MembershipInstance(h, pairs, u, v))
    assert membership_decide(MembershipInstance(h, pairs, u + v, v)) == answer
    assert membership_decide(MembershipInstance(h, pairs, u, v + v)) == answer


def test_linked_pair_classes():
    """U₁ keeps three classes; a group collapses to one."""
    classes = hardlang.linked_pair_classes(U1.target)
    assert set(classes) == {frozenset({(0, 0)}), frozenset({(1, 0)}), frozenset({(1, 1)})}
    (only,) = hardlang.linked_pair_classes(Z2.target)
    assert only == {(0, 0), (1, 0)}
    assert hardlang.saturate_pairs(U1.target, {(1, 1)}) == {(1, 1)}
    assert hardlang.saturate_pairs(Z2.target, {(1, 0)}) == {(0, 0), (1, 0)}
    assert hardlang.canonical_pair(Z2.target, (1, 0)) == (0, 0)
    with pytest.raises(MalformedPairSet):
        hardlang.canonical_pair(Z2.target, (0, 1))


def test_monoid_from_dict():
    """Default letters name the elements in order."""
    h = hardlang.monoid_from_dict({"size": 2, "table": [[0, 1], [1, 1]], "identity": 0}, "mine")
    assert h.target.name == "mine"
    assert h.letter_map == {"a": 0, "b": 1}
    with_letters = hardlang.monoid_from_dict({"table": [[0, 1], [1, 0]], "letters": {"x": 1}})
    assert with_letters.alphabet == ("x",)
    with pytest.raises(BadTable):
        hardlang.monoid_from_dict({"size": 3, "table": [[0, 1], [1, 0]]})
    with pytest.raises(BadTable):
        hardlang.monoid_from_dict({"rows": []})
    with pytest.raises(BadTable):
        hardlang.monoid_from_dict({"table": [[0, 1], [1, 1]], "identity": 1})


def test_target_label_tracks_balance():
    """The first N labels contain floor(N·b) positives."""
    for balance in (0.0, 0.3, 0.5, 1.0):
        for count in (1, 7, 10, 33):
            assert sum(hardlang.target_label(i, balance) for i in range(count)) == int(count * balance)


def test_gen_params_validation():
    """Out-of-range settings raise ConfigError."""
    with pytest.raises(ConfigError):
        GenParams(Z2, min_len=0)
    with pytest.raises(ConfigError):
        GenParams(Z2, min_len=5, max_len=4)
    with pytest.raises(ConfigError):
        GenParams(Z2, balance=1.5)
    with pytest.raises(ConfigError):
        GenParams(Z2, r=0)


def test_gen_dataset_empty_and_unknown_task():
    """count = 0 gives nothing; unknown tasks raise."""
    params = GenParams(Z2, frozenset({0}))
    assert gen_dataset("closure", params, 0, 0) == []
    with pytest.raises(ConfigError):
        gen_dataset("parity", params, 1, 0)


def test_gen_closure_z2_labels_verified_by_brute_force():
    """Z₂ closure, length <= 8, 100 examples, balance 0.5 ± 0.1."""
    params = GenParams(Z2, frozenset({0}), r=2, max_len=8)
    examples = gen_dataset("closure", params, 100, seed=0, threads=1)
    assert len(examples) == 100
    assert abs(sum(e.label for e in examples) / 100 - 0.5) <= 0.1
    for example in examples:
        word = example.meta["word"]
        assert 1 <= len(word) <= 8
        assert example.tokens == tuple(Z2.tokens(word))
        assert closure_brute(ClosureInstance(Z2, params.accept, 2, word)) == bool(example.label)


def test_gen_closure_s5_labels_recomputed():
    """S₅ closure with r = 3 on strings up to 32, checked by an independent factorizer."""
    identity = frozenset({S5.target.identity})
    params = GenParams(S5, identity, r=3, max_len=32)
    examples = gen_dataset("closure", params, 40, seed=3, threads=1)

    for example in examples:
        word = example.meta["word"]

        @lru_cache(maxsize=None)
        def factors(start, word=word):
            if start == len(word):
                return True
            return any(
                monoid_eval(S5, word[start : start + length]) in identity and factors(start + length)
                for length in range(1, min(3, len(word) - start) + 1)
            )

        assert factors(0) == bool(example.label)


def test_gen_dataset_deterministic_across_threads():
    """Same seed, same data, whatever the worker count."""
    params = GenParams(U1, frozenset({0}), r=2, max_len=6)
    serial = gen_dataset("closure", params, 30, seed=11, threads=1)
    pooled = gen_dataset("closure", params, 30, seed=11, threads=4)
    assert [e.to_dict() for e in serial] == [e.to_dict() for e in pooled]
    other = gen_dataset("closure", params, 30, seed=12, threads=1)
    assert [e.tokens for e in other] != [e.tokens for e in serial]


def test_gen_membership():
    """Tokens are u, a separator, then v; labels come from the decider."""
    pairs = frozenset({(1, 1)})
    params = GenParams(U1, pairs=pairs, max_len=4)
    examples = gen_dataset("membership", params, 40, seed=5, threads=1)
    separator = len(U1.alphabet)
    for example in examples:
        u, v = example.meta["u"], example.meta["v"]
        assert example.tokens == (*U1.tokens(u), separator, *U1.tokens(v))
        assert membership_decide(MembershipInstance(U1, pairs, u, v)) == bool(example.label)


def test_gen_balance_unreachable():
    """Labels that cannot be drawn raise BalanceUnreachable."""
    with pytest.raises(BalanceUnreachable):
        gen_dataset("closure", GenParams(Z2, frozenset()), 4, seed=0, threads=1)
    everything = hardlang.saturate_pairs(Z2.target, {(1, 0)})
    with pytest.raises(BalanceUnreachable):
        gen_dataset("membership", GenParams(Z2, pairs=everything, retry_budget=20), 4, seed=0, threads=1)
    with pytest.raises(MalformedPairSet):
        gen_dataset("membership", GenParams(Z2, pairs=frozenset({(0, 1)})), 4, seed=0, threads=1)


def test_unsaturated_pairs_depend_on_representation():
    """a^ω written as a·a^ω or a·(aa)^ω hits different Z₂ pairs until P is saturated."""
    raw = frozenset({(0, 0)})
    assert membership_decide(MembershipInstance(Z2, raw, "a", "a"))
    assert not membership_decide(MembershipInstance(Z2, raw, "a", "aa"))
    saturated = hardlang.saturate_pairs(Z2.target, raw)
    assert membership_decide(MembershipInstance(Z2, saturated, "a", "aa"))
