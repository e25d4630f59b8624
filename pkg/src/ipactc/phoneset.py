"""Universal IPA phone inventory shared across languages.

The inventory is an ordered symbol list with the reserved blank token fixed
at index 0 and a per-language view of which indices each language may emit.
Symbols compare by exact unicode string after NFC normalization; diacritics
and tone marks are not stripped, so distinct strings are distinct phones.
Extension appends new symbols so existing indices never move, which is what
lets adaptation reuse trained output rows.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

BLANK = "<blk>"


class PhoneSetError(ValueError):
    """Invalid inventory construction or query."""


class UnknownSymbolError(LookupError):
    """Symbol not available to the requested language."""


class UnknownLanguageError(LookupError):
    """Language not registered in the phone set."""


def normalize_symbol(symbol: str) -> str:
    if not isinstance(symbol, str) or not symbol:
        raise PhoneSetError(f"phone symbol must be a non-empty string, got {symbol!r}")
    sym = unicodedata.normalize("NFC", symbol)
    if sym != sym.strip() or any(ch.isspace() for ch in sym):
        raise PhoneSetError(f"phone symbol may not contain whitespace: {symbol!r}")
    return sym


@dataclass(frozen=True)
class LanguagePhoneMap:
    """A language's phone inventory, in a fixed order."""

    language_id: str
    phones: tuple[str, ...]

    def __post_init__(self):
        if not self.language_id or any(ch.isspace() for ch in self.language_id):
            raise PhoneSetError(f"bad language id {self.language_id!r}")
        normed = tuple(normalize_symbol(p) for p in self.phones)
        if not normed:
            raise PhoneSetError(f"language {self.language_id!r} has no phones")
        if BLANK in normed:
            raise PhoneSetError(f"language {self.language_id!r} lists the blank token")
        if len(set(normed)) != len(normed):
            raise PhoneSetError(f"duplicate phones in language {self.language_id!r}")
        object.__setattr__(self, "phones", normed)


@dataclass(frozen=True)
class CoverageReport:
    covered: tuple[str, ...]
    unseen: tuple[str, ...]

    @property
    def covered_count(self) -> int:
        return len(self.covered)


@dataclass(frozen=True)
class UniversalPhoneSet:
    """Immutable merged inventory; blank at index 0, version bumped on extend."""

    symbols: tuple[str, ...]
    per_language: dict[str, tuple[int, ...]] = field(default_factory=dict)
    version: int = 1

    def __post_init__(self):
        if not self.symbols or self.symbols[0] != BLANK:
            raise PhoneSetError("index 0 must be the blank token")
        if len(set(self.symbols)) != len(self.symbols):
            raise PhoneSetError("duplicate symbols in universal set")
        for s in self.symbols[1:]:
            if normalize_symbol(s) != s:
                raise PhoneSetError(f"symbol {s!r} is not NFC-normalized")
        n = len(self.symbols)
        for lang, idx in self.per_language.items():
            if 0 not in idx:
                raise PhoneSetError(f"blank missing from language {lang!r} subset")
            if any(i < 0 or i >= n for i in idx):
                raise PhoneSetError(f"out-of-range index in language {lang!r} subset")

    @property
    def num_symbols(self) -> int:
        return len(self.symbols)

    @property
    def languages(self) -> tuple[str, ...]:
        return tuple(self.per_language)

    def index_of(self, symbol: str) -> int:
        sym = normalize_symbol(symbol)
        try:
            return self.symbols.index(sym)
        except ValueError:
            raise UnknownSymbolError(f"symbol {symbol!r} not in universal set") from None

    def __contains__(self, symbol: str) -> bool:
        try:
            return normalize_symbol(symbol) in self.symbols
        except PhoneSetError:
            return False

    def language_symbols(self, language_id: str) -> tuple[str, ...]:
        """Non-blank symbols of a registered language, inventory order."""
        if language_id not in self.per_language:
            raise UnknownLanguageError(f"language {language_id!r} not registered")
        return tuple(self.symbols[i] for i in self.per_language[language_id] if i != 0)


def merge_phone_sets(maps: list[LanguagePhoneMap]) -> UniversalPhoneSet:
    """Union of inventories, blank first, then first-appearance order."""
    if not maps:
        raise PhoneSetError("merge_phone_sets needs at least one language map")
    symbols: list[str] = [BLANK]
    index: dict[str, int] = {BLANK: 0}
    per_language: dict[str, tuple[int, ...]] = {}
    for m in maps:
        if m.language_id in per_language:
            raise PhoneSetError(f"duplicate language id {m.language_id!r}")
        idx = [0]
        for p in m.phones:
            if p not in index:
                index[p] = len(symbols)
                symbols.append(p)
            idx.append(index[p])
        per_language[m.language_id] = tuple(idx)
    return UniversalPhoneSet(tuple(symbols), per_language, version=1)


def coverage(universal: UniversalPhoneSet, target: LanguagePhoneMap) -> CoverageReport:
    """Partition the target inventory by membership in the universal set."""
    covered = tuple(p for p in target.phones if p in universal.symbols)
    unseen = tuple(p for p in target.phones if p not in universal.symbols)
    return CoverageReport(covered, unseen)


def extend(
    universal: UniversalPhoneSet, target: LanguagePhoneMap
) -> tuple[UniversalPhoneSet, dict[int, int]]:
    """Append the target's unseen phones; existing indices are untouched.

    Returns the new set and an old-index -> new-index map (identity here by
    construction; consumers must go through it rather than assume).
    """
    symbols = list(universal.symbols)
    index = {s: i for i, s in enumerate(symbols)}
    for p in target.phones:
        if p not in index:
            index[p] = len(symbols)
            symbols.append(p)
    per_language = dict(universal.per_language)
    per_language[target.language_id] = tuple([0] + [index[p] for p in target.phones])
    index_map = {i: i for i in range(universal.num_symbols)}
    new_set = UniversalPhoneSet(tuple(symbols), per_language, version=universal.version + 1)
    return new_set, index_map


def encode_labels(
    universal: UniversalPhoneSet, language_id: str, phones
) -> tuple[int, ...]:
    """Symbol sequence to label indices, restricted to the language's subset."""
    if language_id not in universal.per_language:
        raise UnknownLanguageError(f"language {language_id!r} not registered")
    allowed = set(universal.per_language[language_id])
    out = []
    for p in phones:
        i = universal.index_of(p)
        if i == 0 or i not in allowed:
            raise UnknownSymbolError(
                f"symbol {p!r} is not in language {language_id!r}'s inventory"
            )
        out.append(i)
    return tuple(out)


def save_phone_set(path, universal: UniversalPhoneSet) -> None:
    """Line-oriented UTF-8 text; round-trips bit-exactly."""
    lines = [f"version {universal.version}"]
    for s in universal.symbols:
        lines.append(f"symbol {s}")
    for lang, idx in universal.per_language.items():
        phones = " ".join(universal.symbols[i] for i in idx if i != 0)
        lines.append(f"lang {lang} {phones}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_phone_set(path) -> UniversalPhoneSet:
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("version "):
        raise PhoneSetError(f"{path}: missing version header")
    version = int(lines[0].split(" ", 1)[1])
    symbols: list[str] = []
    per_language: dict[str, tuple[int, ...]] = {}
    for ln in lines[1:]:
        kind, _, rest = ln.partition(" ")
        if kind == "symbol":
            symbols.append(rest)
        elif kind == "lang":
            lang, _, phones = rest.partition(" ")
            index = {s: i for i, s in enumerate(symbols)}
            idx = [0]
            for p in phones.split():
                if p not in index:
                    raise PhoneSetError(f"{path}: language {lang!r} uses unknown {p!r}")
                idx.append(index[p])
            per_language[lang] = tuple(idx)
        else:
            raise PhoneSetError(f"{path}: unrecognized line {ln!r}")
    return UniversalPhoneSet(tuple(symbols), per_language, version=version)
