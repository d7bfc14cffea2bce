"""Finite monoids, the (A_{F,r})* closure problem and ω-word membership.

Words are sequences of single-letter strings. A ``Morphism`` maps each letter
to a monoid element and extends to words by a left fold, so the valuation of
"ab" is h(a)∘h(b).

Permutation monoids compose right to left: (f∘g)(x) = f(g(x)).
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations, product
from typing import Any

import numpy as np

from talab.config import get_settings
from talab.errors import (
    BadTable,
    BalanceUnreachable,
    ConfigError,
    MalformedPairSet,
    UnknownSymbol,
)
from talab.utils import type_check

logger = logging.getLogger(__name__)

Pair = tuple[int, int]

EXHAUSTIVE_ASSOCIATIVITY = 64
SAMPLED_TRIPLES = 20000
BRUTE_MAX_LEN = 14
CHUNK_ENUMERATION_CAP = 100_000


@dataclass(frozen=True)
class FiniteMonoid:
    """A composition table with a two-sided identity.

    Associativity is checked exhaustively up to 64 elements and on a fixed
    random sample of triples beyond that.
    """

    name: str
    table: tuple[tuple[int, ...], ...]
    identity: int = 0

    def __post_init__(self) -> None:
        """Verify closure, identity laws and associativity."""
        size = len(self.table)
        if size == 0:
            raise BadTable(f"{self.name}: empty table")
        for row in self.table:
            if len(row) != size:
                raise BadTable(f"{self.name}: table is not square")
            if any(not 0 <= value < size for value in row):
                raise BadTable(f"{self.name}: table entry out of range")
        if not 0 <= self.identity < size:
            raise BadTable(f"{self.name}: identity {self.identity} out of range")
        for element in range(size):
            if (
                self.table[self.identity][element] != element
                or self.table[element][self.identity] != element
            ):
                raise BadTable(f"{self.name}: {self.identity} is not an identity for {element}")
        if size <= EXHAUSTIVE_ASSOCIATIVITY:
            triples: Iterable[tuple[int, int, int]] = product(range(size), repeat=3)
        else:
            rng = np.random.default_rng(0)
            triples = (tuple(t) for t in rng.integers(0, size, size=(SAMPLED_TRIPLES, 3)).tolist())
        table = self.table
        for x, y, z in triples:
            if table[table[x][y]][z] != table[x][table[y][z]]:
                raise BadTable(f"{self.name}: not associative at ({x}, {y}, {z})")

    @property
    def size(self) -> int:
        """Number of elements."""
        return len(self.table)

    def op(self, a: int, b: int) -> int:
        """a∘b."""
        return self.table[a][b]

    def power(self, t: int, k: int) -> int:
        """t^k, with t^0 the identity."""
        result = self.identity
        for _ in range(k):
            result = self.table[result][t]
        return result

    def is_idempotent(self, e: int) -> bool:
        """e∘e = e."""
        return self.table[e][e] == e

    def idempotents(self) -> list[int]:
        """All idempotent elements."""
        return [e for e in range(self.size) if self.is_idempotent(e)]

    def element_order(self, t: int) -> int | None:
        """Smallest k >= 1 with t^k the identity, or None if there is none."""
        value = t
        for k in range(1, self.size + 1):
            if value == self.identity:
                return k
            value = self.table[value][t]
        return None

    def to_dict(self) -> dict[str, Any]:
        """``{size, table, identity}`` document."""
        return {
            "name": self.name,
            "size": self.size,
            "table": [list(row) for row in self.table],
            "identity": self.identity,
        }


@dataclass(frozen=True)
class Morphism:
    """Letter-to-element map extending to words.

    Letters are ordered alphabetically; a letter's position is its token id.
    """

    target: FiniteMonoid
    letter_map: Mapping[str, int]

    def __post_init__(self) -> None:
        """Every letter must map into the target."""
        if not self.letter_map:
            raise BadTable("morphism needs at least one letter")
        for letter, element in self.letter_map.items():
            if not isinstance(letter, str) or len(letter) != 1:
                raise BadTable(f"letters must be single characters, got {letter!r}")
            if not 0 <= element < self.target.size:
                raise BadTable(f"letter {letter!r} maps outside {self.target.name}")

    @property
    def alphabet(self) -> tuple[str, ...]:
        """Letters in token-id order."""
        return tuple(sorted(self.letter_map))

    def image(self, letter: str) -> int:
        """h(letter).

        Raises:
            UnknownSymbol: If the letter is not mapped
        """
        try:
            return self.letter_map[letter]
        except KeyError:
            raise UnknownSymbol(f"letter {letter!r} not in alphabet {self.alphabet}") from None

    def images(self, word: Sequence[str]) -> list[int]:
        """Letter images of ``word``."""
        return [self.image(letter) for letter in word]

    def tokens(self, word: Sequence[str]) -> list[int]:
        """Token ids of ``word``."""
        index = {letter: position for position, letter in enumerate(self.alphabet)}
        self.images(word)
        return [index[letter] for letter in word]


def monoid_eval(m: Morphism, w: Sequence[str]) -> int:
    """Valuation of ``w``; the empty word maps to the identity.

    Raises:
        UnknownSymbol: If ``w`` has an unmapped letter
    """
    monoid = m.target
    value = monoid.identity
    for element in m.images(w):
        value = monoid.op(value, element)
    return value


@dataclass(frozen=True)
class ClosureInstance:
    """Is ``s`` a concatenation of chunks of length <= r valued in F?"""

    morphism: Morphism
    accept: frozenset[int]
    r: int
    s: Sequence[str] = ""

    def __post_init__(self) -> None:
        """Check r and the accepted set."""
        type_check(self.r, int, "r")
        if self.r < 1:
            raise ConfigError(f"chunk bound r must be >= 1, got {self.r}")
        if any(not 0 <= e < self.morphism.target.size for e in self.accept):
            raise ConfigError("accepted set has elements outside the monoid")


def closure_decide(inst: ClosureInstance) -> bool:
    """Decide membership in (A_{F,r})* in O(|s|·r).

    dp[i] holds when s[:i] factors; dp[i] = OR over ℓ <= min(r, i) of
    dp[i−ℓ] AND v(s[i−ℓ:i]) ∈ F, with the chunk valuation grown leftwards.

    Raises:
        UnknownSymbol: If ``s`` has an unmapped letter
    """
    monoid = inst.morphism.target
    images = inst.morphism.images(inst.s)
    reachable = [True] + [False] * len(images)
    for end in range(1, len(images) + 1):
        value = monoid.identity
        for length in range(1, min(inst.r, end) + 1):
            value = monoid.op(images[end - length], value)
            if reachable[end - length] and value in inst.accept:
                reachable[end] = True
                break
    return reachable[-1]


def closure_brute(inst: ClosureInstance) -> bool:
    """Decide membership by trying every factorization.

    Raises:
        ValueError: If |s| > 14
        UnknownSymbol: If ``s`` has an unmapped letter
    """
    word = inst.s
    if len(word) > BRUTE_MAX_LEN:
        raise ValueError(f"brute force limited to length {BRUTE_MAX_LEN}, got {len(word)}")
    inst.morphism.images(word)

    def factors(start: int) -> bool:
        if start == len(word):
            return True
        return any(
            monoid_eval(inst.morphism, word[start : start + length]) in inst.accept
            and factors(start + length)
            for length in range(1, min(inst.r, len(word) - start) + 1)
        )

    return factors(0)


def idempotent_power(m: FiniteMonoid, t: int) -> tuple[int, int]:
    """Smallest k >= 1 with t^k idempotent, and t^k."""
    power, value = 1, t
    while not m.is_idempotent(value):
        value = m.op(value, t)
        power += 1
    assert power <= m.size and m.is_idempotent(value)
    return power, value


def linked_pairs(h: Morphism, u: Sequence[str], v: Sequence[str]) -> set[Pair]:
    """Linked pairs (s, e) reachable from uv^ω.

    With s0 = h(u) and t = h(v): every (s0∘t^a, e) for a in [0, |S|] and e an
    idempotent power t^b, b in [1, |S|], such that (s0∘t^a)∘e = s0∘t^a.

    Raises:
        ValueError: If u or v is empty
        UnknownSymbol: If a letter is unmapped
    """
    if not u or not v:
        raise ValueError("u and v must be nonempty")
    monoid = h.target
    s0, t = monoid_eval(h, u), monoid_eval(h, v)
    prefixes, value = set(), s0
    for _ in range(monoid.size + 1):
        prefixes.add(value)
        value = monoid.op(value, t)
    loops, value = set(), t
    for _ in range(monoid.size):
        if monoid.is_idempotent(value):
            loops.add(value)
        value = monoid.op(value, t)
    return {(s, e) for s in prefixes for e in loops if monoid.op(s, e) == s}


@dataclass(frozen=True)
class MembershipInstance:
    """Is uv^ω accepted by the linked-pair set ``pairs``?"""

    morphism: Morphism
    pairs: frozenset[Pair]
    u: Sequence[str]
    v: Sequence[str]


def check_pairs(monoid: FiniteMonoid, pairs: Iterable[Pair]) -> None:
    """Raise MalformedPairSet unless every second component is idempotent."""
    for s, e in pairs:
        if not (0 <= s < monoid.size and 0 <= e < monoid.size):
            raise MalformedPairSet(f"pair {(s, e)} outside {monoid.name}")
        if not monoid.is_idempotent(e):
            raise MalformedPairSet(f"pair {(s, e)}: {e} is not idempotent")


def membership_decide(inst: MembershipInstance) -> bool:
    """uv^ω ∈ [P] iff some linked pair of uv^ω lies in P.

    Raises:
        MalformedPairSet: If a pair's second component is not idempotent
    """
    check_pairs(inst.morphism.target, inst.pairs)
    if not inst.pairs:
        return False
    return not linked_pairs(inst.morphism, inst.u, inst.v).isdisjoint(inst.pairs)


def all_linked_pairs(m: FiniteMonoid) -> list[Pair]:
    """Every (s, e) with e idempotent and s∘e = s."""
    return [(s, e) for e in m.idempotents() for s in range(m.size) if m.op(s, e) == s]


@lru_cache(maxsize=16)
def linked_pair_classes(m: FiniteMonoid) -> tuple[frozenset[Pair], ...]:
    """Conjugacy classes of linked pairs.

    (s, e) ~ (s∘x, y∘x) whenever e = x∘y and y∘x is idempotent. Both
    pairs represent the same ω-words, so accepting sets should be unions
    of classes.
    """
    pairs = all_linked_pairs(m)
    parent = {pair: pair for pair in pairs}

    def find(pair: Pair) -> Pair:
        while parent[pair] != pair:
            parent[pair] = parent[parent[pair]]
            pair = parent[pair]
        return pair

    factorizations: dict[int, list[tuple[int, int]]] = {e: [] for e in m.idempotents()}
    for x in range(m.size):
        for y in range(m.size):
            product_xy = m.op(x, y)
            if product_xy in factorizations:
                factorizations[product_xy].append((x, y))
    for s, e in pairs:
        for x, y in factorizations[e]:
            conjugate = (m.op(s, x), m.op(y, x))
            if conjugate in parent:
                parent[find(conjugate)] = find((s, e))
    classes: dict[Pair, set[Pair]] = {}
    for pair in pairs:
        classes.setdefault(find(pair), set()).add(pair)
    return tuple(sorted((frozenset(c) for c in classes.values()), key=lambda c: sorted(c)))


def saturate_pairs(m: FiniteMonoid, pairs: Iterable[Pair]) -> frozenset[Pair]:
    """Smallest union of conjugacy classes containing ``pairs``."""
    wanted = set(pairs)
    check_pairs(m, wanted)
    saturated: set[Pair] = set()
    for cls in linked_pair_classes(m):
        if cls & wanted:
            saturated |= cls
    return frozenset(saturated)


def canonical_pair(m: FiniteMonoid, pair: Pair) -> Pair:
    """Least member of the conjugacy class of a linked pair.

    Raises:
        MalformedPairSet: If ``pair`` is not linked
    """
    for cls in linked_pair_classes(m):
        if pair in cls:
            return min(cls)
    raise MalformedPairSet(f"{pair} is not a linked pair of {m.name}")


# Built-in monoids.


def _permutation_monoid(name: str, degree: int) -> tuple[FiniteMonoid, dict[tuple[int, ...], int]]:
    perms = sorted(permutations(range(degree)))
    index = {perm: position for position, perm in enumerate(perms)}
    table = tuple(
        tuple(index[tuple(f[g[x]] for x in range(degree))] for g in perms) for f in perms
    )
    return FiniteMonoid(name, table, index[tuple(range(degree))]), index


def _transposition(degree: int, i: int, j: int) -> tuple[int, ...]:
    perm = list(range(degree))
    perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


@lru_cache(maxsize=1)
def builtin_monoids() -> dict[str, Morphism]:
    """Z₂, S₃, S₅ and the two-element aperiodic monoid U₁, with letters a, b.

    - z2: addition mod 2, a ↦ 1, b ↦ 0
    - s3: a ↦ (1 2), b ↦ (1 3)
    - s5: a ↦ (1 2), b ↦ (1 2 3 4 5)
    - u1: identity 0 and absorbing 1, a ↦ 1, b ↦ 0
    """
    z2 = FiniteMonoid("z2", ((0, 1), (1, 0)), 0)
    s3, s3_index = _permutation_monoid("s3", 3)
    s5, s5_index = _permutation_monoid("s5", 5)
    u1 = FiniteMonoid("u1", ((0, 1), (1, 1)), 0)
    five_cycle = tuple((x + 1) % 5 for x in range(5))
    return {
        "z2": Morphism(z2, {"a": 1, "b": 0}),
        "s3": Morphism(s3, {"a": s3_index[_transposition(3, 0, 1)], "b": s3_index[_transposition(3, 0, 2)]}),
        "s5": Morphism(s5, {"a": s5_index[_transposition(5, 0, 1)], "b": s5_index[five_cycle]}),
        "u1": Morphism(u1, {"a": 1, "b": 0}),
    }


def monoid_from_dict(data: Mapping[str, Any], name: str = "custom") -> Morphism:
    """Build a morphism from ``{size, table, identity[, letters]}``.

    Without ``letters``, element i is the image of letter chr(ord("a") + i).

    Raises:
        BadTable: If the table is not a monoid or disagrees with ``size``
    """
    try:
        table = tuple(tuple(int(value) for value in row) for row in data["table"])
        size = int(data.get("size", len(table)))
        identity = int(data.get("identity", 0))
    except (KeyError, TypeError, ValueError) as error:
        raise BadTable(f"malformed monoid document: {error}") from error
    if size != len(table):
        raise BadTable(f"size {size} but table has {len(table)} rows")
    monoid = FiniteMonoid(str(data.get("name", name)), table, identity)
    letters = data.get("letters")
    if letters is None:
        if size > 26:
            raise BadTable("tables above 26 elements need an explicit letters map")
        letters = {chr(ord("a") + element): element for element in range(size)}
    return Morphism(monoid, {str(letter): int(element) for letter, element in letters.items()})


# Dataset generation.

TASKS = ("closure", "membership")


@dataclass(frozen=True)
class Example:
    """One labeled instance."""

    tokens: tuple[int, ...]
    label: int
    task: str
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        """JSON-lines record."""
        return {"tokens": list(self.tokens), "label": self.label, "task": self.task, "meta": self.meta}


@dataclass(frozen=True)
class GenParams:
    """Generation settings for either task.

    Closure uses ``accept``, ``r`` and the length range; membership draws u
    and v with lengths in ``[1, max_len]`` and uses ``pairs``.
    """

    morphism: Morphism
    accept: frozenset[int] = frozenset()
    r: int = 2
    min_len: int = 1
    max_len: int = 8
    pairs: frozenset[Pair] = frozenset()
    balance: float = 0.5
    tolerance: float = 0.1
    retry_budget: int = 2000

    def __post_init__(self) -> None:
        """Validate ranges."""
        if not 0 <= self.balance <= 1:
            raise ConfigError(f"balance must be in [0, 1], got {self.balance}")
        if self.r < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError(f"bad length range [{self.min_len}, {self.max_len}]")
        if self.retry_budget < 1:
            raise ConfigError("retry budget must be positive")


def target_label(index: int, balance: float) -> int:
    """Deterministic label schedule whose running mean tracks ``balance``."""
    return int(np.floor((index + 1) * balance) - np.floor(index * balance))


def _chunks_by_length(params: GenParams) -> dict[int, list[str]]:
    alphabet = params.morphism.alphabet
    if len(alphabet) ** params.r > CHUNK_ENUMERATION_CAP:
        raise ConfigError(f"|Σ|^r = {len(alphabet) ** params.r} too large to enumerate chunks")
    chunks: dict[int, list[str]] = {}
    for length in range(1, params.r + 1):
        words = ["".join(letters) for letters in product(alphabet, repeat=length)]
        accepted = [w for w in words if monoid_eval(params.morphism, w) in params.accept]
        if accepted:
            chunks[length] = accepted
    return chunks


def _feasible_lengths(chunks: dict[int, list[str]], limit: int) -> list[bool]:
    feasible = [True] + [False] * limit
    for total in range(1, limit + 1):
        feasible[total] = any(feasible[total - length] for length in chunks if length <= total)
    return feasible


def _closure_positive(
    params: GenParams, rng: np.random.Generator, chunks: dict[int, list[str]], feasible: list[bool]
) -> str:
    lengths = [n for n in range(params.min_len, params.max_len + 1) if feasible[n]]
    if not lengths:
        raise BalanceUnreachable("no accepted string has a length in the requested range")
    remaining = int(rng.choice(lengths))
    pieces = []
    while remaining:
        options = [n for n in chunks if n <= remaining and feasible[remaining - n]]
        length = int(rng.choice(options))
        pool = chunks[length]
        pieces.append(pool[int(rng.integers(len(pool)))])
        remaining -= length
    return "".join(pieces)


def _random_word(alphabet: Sequence[str], length: int, rng: np.random.Generator) -> str:
    return "".join(alphabet[i] for i in rng.integers(len(alphabet), size=length))


def _closure_example(index: int, seed: int, params: GenParams, chunks: dict[int, list[str]], feasible: list[bool]) -> Example:
    rng = np.random.default_rng([seed, index])
    want = target_label(index, params.balance)
    h = params.morphism
    for attempt in range(params.retry_budget):
        if want == 1:
            word = _closure_positive(params, rng, chunks, feasible)
        else:
            length = int(rng.integers(params.min_len, params.max_len + 1))
            word = _random_word(h.alphabet, length, rng)
        label = int(closure_decide(ClosureInstance(h, params.accept, params.r, word)))
        if label == want:
            return Example(
                tuple(h.tokens(word)),
                label,
                "closure",
                {"word": word, "monoid": h.target.name, "r": params.r, "accept": sorted(params.accept)},
            )
        logger.debug("example %d: attempt %d drew label %d, want %d", index, attempt, label, want)
    raise BalanceUnreachable(f"example {index}: no label-{want} string in {params.retry_budget} draws")


def _membership_example(index: int, seed: int, params: GenParams) -> Example:
    rng = np.random.default_rng([seed, index])
    want = target_label(index, params.balance)
    h = params.morphism
    separator = len(h.alphabet)
    for attempt in range(params.retry_budget):
        u = _random_word(h.alphabet, int(rng.integers(1, params.max_len + 1)), rng)
        v = _random_word(h.alphabet, int(rng.integers(1, params.max_len + 1)), rng)
        label = int(membership_decide(MembershipInstance(h, params.pairs, u, v)))
        if label == want:
            return Example(
                (*h.tokens(u), separator, *h.tokens(v)),
                label,
                "membership",
                {"u": u, "v": v, "monoid": h.target.name, "pairs": sorted(params.pairs)},
            )
        logger.debug("example %d: attempt %d drew label %d, want %d", index, attempt, label, want)
    raise BalanceUnreachable(f"example {index}: no label-{want} ω-word in {params.retry_budget} draws")


def gen_dataset(task: str, params: GenParams, count: int, seed: int, threads: int | None = None) -> list[Example]:
    """Generate ``count`` labeled examples, deterministic in ``seed``.

    Example i draws from its own generator seeded by (seed, i), so the output
    does not depend on the number of worker threads.

    Raises:
        BalanceUnreachable: If a label cannot be hit within the retry budget
        ConfigError: For an unknown task
    """
    type_check(count, int, "count")
    type_check(seed, int, "seed")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if count == 0:
        return []
    if task == "closure":
        chunks = _chunks_by_length(params)
        feasible = _feasible_lengths(chunks, params.max_len)

        def make(index: int) -> Example:
            return _closure_example(index, seed, params, chunks, feasible)
    else:
        check_pairs(params.morphism.target, params.pairs)

        def make(index: int) -> Example:
            return _membership_example(index, seed, params)

    workers = threads if threads is not None else get_settings().threads
    if workers <= 1:
        examples = [make(index) for index in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            examples = list(pool.map(make, range(count)))
    positive = sum(example.label for example in examples) / count
    if abs(positive - params.balance) > params.tolerance:
        raise BalanceUnreachable(f"positive rate {positive:.3f} outside {params.balance}±{params.tolerance}")
    logger.info("generated %d %s examples, positive rate %.3f", count, task, positive)
    return examples
