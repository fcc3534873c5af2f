"""Vocabulary trees: dotted concept names mapped to prefix-structured 32-bit ids.

Each id holds four 8-bit level fields. A child concept shares every level
field of its parent, so ``report.intrusion.*`` can be expressed as a mask
(``CA:FE/16``) much like an IP prefix. Level value ``0x00`` is reserved and
means "nothing allocated below here".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

LEVELS = 4
LEVEL_BITS = 8
ID_BITS = LEVELS * LEVEL_BITS
MAX_LEVEL_VALUE = (1 << LEVEL_BITS) - 1


class VocabularyError(Exception):
    pass


class DepthExceeded(VocabularyError):
    pass


class LevelExhausted(VocabularyError):
    pass


class UnknownPath(VocabularyError):
    pass


def format_id(value: int, levels: int = LEVELS) -> str:
    """``0xCAFE0102`` -> ``'CA:FE:01:02'``."""
    parts = [(value >> (ID_BITS - LEVEL_BITS * (i + 1))) & MAX_LEVEL_VALUE for i in range(levels)]
    return ":".join(f"{p:02X}" for p in parts)


def parse_id(text: str) -> int:
    """Inverse of :func:`format_id`; missing trailing levels are zero."""
    parts = text.strip().split(":")
    if not 1 <= len(parts) <= LEVELS:
        raise ValueError(f"bad concept id {text!r}")
    value = 0
    for i, p in enumerate(parts):
        b = int(p, 16)
        if not 0 <= b <= MAX_LEVEL_VALUE:
            raise ValueError(f"bad concept id {text!r}")
        value |= b << (ID_BITS - LEVEL_BITS * (i + 1))
    return value


def id_depth(value: int) -> int:
    """Number of allocated (non-zero) leading level fields."""
    depth = 0
    for i in range(LEVELS):
        if (value >> (ID_BITS - LEVEL_BITS * (i + 1))) & MAX_LEVEL_VALUE == 0:
            break
        depth += 1
    return depth


def prefix_mask(prefix_bits: int) -> int:
    if prefix_bits == 0:
        return 0
    return ((1 << prefix_bits) - 1) << (ID_BITS - prefix_bits)


def is_ancestor(ancestor: int, descendant: int) -> bool:
    """True when ``ancestor`` is ``descendant`` or one of its IS-A parents."""
    bits = id_depth(ancestor) * LEVEL_BITS
    if bits == 0:
        return False
    return (descendant & prefix_mask(bits)) == ancestor


@dataclass(frozen=True, order=True)
class ConceptPattern:
    """An id plus a byte-aligned prefix length; ``/32`` is an exact match."""

    id: int
    prefix_bits: int = ID_BITS

    def __post_init__(self):
        if self.prefix_bits not in (8, 16, 24, 32):
            raise ValueError(f"prefix_bits must be one of 8/16/24/32, got {self.prefix_bits}")
        if self.id & ~prefix_mask(self.prefix_bits) & 0xFFFFFFFF:
            raise ValueError("pattern id has bits set below its prefix")

    @classmethod
    def exact(cls, concept_id: int) -> "ConceptPattern":
        return cls(concept_id, ID_BITS)

    def matches(self, concept_id: int) -> bool:
        return matches(self, concept_id)

    def covers(self, other: "ConceptPattern") -> bool:
        """Every id matched by ``other`` is also matched by ``self``."""
        return self.prefix_bits <= other.prefix_bits and matches(self, other.id)

    def __str__(self):
        return f"{format_id(self.id, self.prefix_bits // LEVEL_BITS)}/{self.prefix_bits}"


def matches(pattern: ConceptPattern, concept_id: int) -> bool:
    return (concept_id & prefix_mask(pattern.prefix_bits)) == pattern.id


def common_pattern(patterns: Iterable[ConceptPattern]) -> ConceptPattern:
    """Finest byte-aligned pattern covering all of ``patterns``."""
    patterns = list(patterns)
    if not patterns:
        raise ValueError("need at least one pattern")
    bits = min(p.prefix_bits for p in patterns)
    while bits > 8:
        mask = prefix_mask(bits)
        if len({p.id & mask for p in patterns}) == 1:
            break
        bits -= LEVEL_BITS
    mask = prefix_mask(bits)
    ids = {p.id & mask for p in patterns}
    if len(ids) != 1:
        raise ValueError("patterns share no common top-level concept")
    return ConceptPattern(ids.pop(), bits)


def split_path(path: str | Iterable[str], fold: bool = True) -> tuple[tuple[str, ...], bool]:
    """Normalise a dotted path into level tokens and a wildcard flag.

    ``"event.network.drops*"`` and ``"event.network.drops.*"`` are equivalent.
    Paths deeper than four levels are folded: the fourth token absorbs the
    remaining suffix (``"forwarding.rfc791-ttl-exceeded"``).
    """
    if isinstance(path, str):
        tokens = path.strip().lower().split(".")
    else:
        tokens = [t.lower() for t in path]
    wildcard = False
    if tokens and tokens[-1] == "*":
        wildcard = True
        tokens = tokens[:-1]
    elif tokens and tokens[-1].endswith("*"):
        wildcard = True
        tokens[-1] = tokens[-1][:-1]
    if not tokens or any(not t for t in tokens):
        raise ValueError(f"malformed concept path {path!r}")
    if any("*" in t for t in tokens):
        raise ValueError(f"wildcard only allowed at the end: {path!r}")
    if len(tokens) > LEVELS:
        if not fold:
            raise DepthExceeded(f"{path!r} has {len(tokens)} levels, max is {LEVELS}")
        tokens = tokens[: LEVELS - 1] + [".".join(tokens[LEVELS - 1 :])]
    return tuple(tokens), wildcard


class VocabularyTree:
    """Registry of concepts with deterministic, prefix-preserving id allocation.

    Ids are handed out in registration order, starting at ``0x01`` for each
    level. A bootstrap line may also pin an id (``report.intrusion<TAB>CA:FE``)
    so that well-known families land on agreed prefixes.
    """

    def __init__(self, fold_deep: bool = True):
        self.fold_deep = fold_deep
        self._by_path: dict[tuple[str, ...], int] = {}
        self._by_id: dict[int, tuple[str, ...]] = {}
        # parent id (0 for roots) -> used child level values
        self._used: dict[int, set[int]] = {}
        self._next: dict[int, int] = {}

    def __len__(self):
        return len(self._by_path)

    def __contains__(self, path) -> bool:
        try:
            tokens, wildcard = split_path(path, self.fold_deep)
        except (ValueError, DepthExceeded):
            return False
        return not wildcard and tokens in self._by_path

    def __iter__(self) -> Iterator[tuple[str, int]]:
        for tokens, cid in self._by_path.items():
            yield ".".join(tokens), cid

    def register(self, path: str | Iterable[str], pinned: int | None = None) -> int:
        """Register ``path`` (and any missing ancestors); return its id.

        Idempotent for known paths. ``pinned`` forces the full id of the
        leaf; its ancestors take the corresponding prefixes.
        """
        tokens, wildcard = split_path(path, self.fold_deep)
        if wildcard:
            raise ValueError(f"cannot register a wildcard path: {path!r}")
        if pinned is not None and (pinned & ~prefix_mask(len(tokens) * LEVEL_BITS) & 0xFFFFFFFF):
            raise VocabularyError(f"pinned id {format_id(pinned)} is deeper than {path!r}")
        parent = 0
        for depth in range(1, len(tokens) + 1):
            prefix = tokens[:depth]
            want = None
            if pinned is not None:
                shift = ID_BITS - LEVEL_BITS * depth
                want = (pinned >> shift) & MAX_LEVEL_VALUE
            existing = self._by_path.get(prefix)
            if existing is not None:
                if want is not None and self._level(existing, depth) != want:
                    raise VocabularyError(
                        f"{'.'.join(prefix)} already registered as {format_id(existing)}"
                    )
                parent = existing
                continue
            parent = self._allocate(prefix, parent, depth, want)
        return parent

    def _level(self, cid: int, depth: int) -> int:
        return (cid >> (ID_BITS - LEVEL_BITS * depth)) & MAX_LEVEL_VALUE

    def _allocate(self, tokens, parent: int, depth: int, want: int | None) -> int:
        used = self._used.setdefault(parent, set())
        if want is not None:
            if want == 0:
                raise VocabularyError("level value 0x00 is reserved")
            if want in used:
                raise VocabularyError(f"level value {want:02X} already taken under {format_id(parent)}")
            value = want
        else:
            value = self._next.get(parent, 1)
            while value in used:
                value += 1
            if value > MAX_LEVEL_VALUE:
                raise LevelExhausted(f"no free level value under {format_id(parent)}")
            self._next[parent] = value + 1
        used.add(value)
        cid = parent | (value << (ID_BITS - LEVEL_BITS * depth))
        self._by_path[tokens] = cid
        self._by_id[cid] = tokens
        return cid

    def resolve(self, path: str | Iterable[str]) -> int | ConceptPattern:
        """Exact id for a plain path, :class:`ConceptPattern` for ``prefix.*``."""
        tokens, wildcard = split_path(path, self.fold_deep)
        cid = self._by_path.get(tokens)
        if cid is None:
            raise UnknownPath(".".join(tokens))
        if wildcard:
            return ConceptPattern(cid, len(tokens) * LEVEL_BITS)
        return cid

    def pattern(self, path: str | Iterable[str]) -> ConceptPattern:
        """Like :meth:`resolve` but always returns a pattern (``/32`` when exact)."""
        r = self.resolve(path)
        return r if isinstance(r, ConceptPattern) else ConceptPattern.exact(r)

    def id(self, path: str | Iterable[str]) -> int:
        r = self.resolve(path)
        if isinstance(r, ConceptPattern):
            raise ValueError(f"{path!r} is a wildcard pattern, not a concept")
        return r

    def name(self, concept_id: int) -> str:
        try:
            return ".".join(self._by_id[concept_id])
        except KeyError:
            raise UnknownPath(format_id(concept_id)) from None

    def children(self, path: str | Iterable[str]) -> list[str]:
        tokens, _ = split_path(path, self.fold_deep)
        n = len(tokens)
        return [".".join(t) for t in self._by_path if len(t) == n + 1 and t[:n] == tokens]

    # -- bootstrap file -------------------------------------------------

    @classmethod
    def from_lines(cls, lines: Iterable[str], fold_deep: bool = True) -> "VocabularyTree":
        vocab = cls(fold_deep=fold_deep)
        vocab.load(lines)
        return vocab

    def load(self, lines: Iterable[str]) -> None:
        """Register one dotted path per line; ``#`` starts a comment.

        A second tab-separated column pins the id (the format :meth:`dump`
        writes, so dumps can be reloaded).
        """
        for raw in lines:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            cols = line.split()
            pinned = parse_id(cols[1]) if len(cols) > 1 else None
            self.register(cols[0], pinned=pinned)

    def dump(self, out: TextIO | None = None) -> str:
        """``path<TAB>hex-id`` lines in id order."""
        lines = [
            f"{'.'.join(tokens)}\t{format_id(cid)}"
            for cid, tokens in sorted(self._by_id.items())
        ]
        text = "\n".join(lines) + ("\n" if lines else "")
        if out is not None:
            out.write(text)
        return text
