"""
Table-driven romanization into the closed CTC alphabet.

Text in any supported script is lowercased, canonically decomposed (NFD) and
mapped through per-script tables onto 26 Latin letters plus the apostrophe.
Words are joined by the separator symbol ``|``. Digits, punctuation and
combining marks with no table entry are removed; letters of unsupported
scripts follow the scheme's fallback policy.

Table files are UTF-8 TSV::

    # comment
    #!range<TAB>0400<TAB>045F          codepoint range the table is total over
    ж<TAB>zh                           source sequence -> target letters
    U+094D<TAB><TAB>vowel-sign         hex codepoints, empty target, flag
"""

import logging
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from config.settings import DEFAULT_FALLBACK_POLICY, SCRIPT_TABLE_DIR
from .exceptions import EmptyInput, IoFailure, TableFormatError

logger = logging.getLogger(__name__)

BLANK = "<blank>"
SEPARATOR = "|"
APOSTROPHE = "'"

# Symbols allowed inside a romanized word
WORD_SYMBOLS = frozenset(string.ascii_lowercase + APOSTROPHE)

FALLBACK_POLICIES = ("drop", "apostrophe")
INHERENT = "inherent"
VOWEL_SIGN = "vowel-sign"
TABLE_FLAGS = (INHERENT, VOWEL_SIGN)

_WORD_BOUNDARY_RE = re.compile(r"[\s|]+")


class CanonicalAlphabet:
    """The fixed, ordered output vocabulary shared by romanizer and acoustic model"""

    def __init__(self):
        self.symbols: Tuple[str, ...] = (
            (BLANK, SEPARATOR, APOSTROPHE) + tuple(string.ascii_lowercase))
        self._index = {symbol: i for i, symbol in enumerate(self.symbols)}

    @property
    def blank_index(self) -> int:
        return 0

    @property
    def separator_index(self) -> int:
        return 1

    @property
    def producible(self) -> frozenset:
        """Every symbol romanization can emit (all but the blank)"""
        return frozenset(self.symbols[1:])

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def __getitem__(self, i: int) -> str:
        return self.symbols[i]

    def __contains__(self, symbol) -> bool:
        return symbol in self._index


ALPHABET = CanonicalAlphabet()


@dataclass(frozen=True)
class TableEntry:
    target: str
    flag: Optional[str] = None


@dataclass(frozen=True, eq=False)
class RomanScheme:
    """Per-script mapping tables plus the policy for unknown letters"""
    script_tables: Mapping[str, Mapping[str, TableEntry]]
    fallback_policy: str = DEFAULT_FALLBACK_POLICY
    declared_ranges: Mapping[str, Tuple[Tuple[int, int], ...]] = field(
        default_factory=dict)

    def __post_init__(self):
        if self.fallback_policy not in FALLBACK_POLICIES:
            raise ValueError(
                f"Unknown fallback policy '{self.fallback_policy}', "
                f"expected one of {', '.join(FALLBACK_POLICIES)}")

        # Later tables override earlier ones on identical keys
        merged: Dict[str, TableEntry] = {}
        for table in self.script_tables.values():
            merged.update(table)
        object.__setattr__(self, "_merged", MappingProxyType(merged))
        object.__setattr__(self, "_max_key_len",
                           max((len(k) for k in merged), default=0))

    @classmethod
    def load(cls, table_dirs: Sequence[Path] = (),
             fallback_policy: str = DEFAULT_FALLBACK_POLICY,
             include_defaults: bool = True) -> "RomanScheme":
        """Load the shipped tables and any *.tsv files from extra directories"""
        dirs = ([SCRIPT_TABLE_DIR] if include_defaults else []) + \
            [Path(d) for d in table_dirs]

        tables: Dict[str, Mapping[str, TableEntry]] = {}
        ranges: Dict[str, Tuple[Tuple[int, int], ...]] = {}
        for directory in dirs:
            if not directory.is_dir():
                raise IoFailure("Table directory does not exist",
                                path=str(directory))
            for table_file in sorted(directory.glob("*.tsv")):
                entries, declared = load_table_file(table_file)
                tables[table_file.stem] = MappingProxyType(entries)
                ranges[table_file.stem] = tuple(declared)
                logger.debug(
                    f"Loaded {len(entries)} entries for script '{table_file.stem}'")

        return cls(script_tables=MappingProxyType(tables),
                   fallback_policy=fallback_policy,
                   declared_ranges=MappingProxyType(ranges))

    def lookup(self, text: str, pos: int) -> Optional[Tuple[int, TableEntry]]:
        """Longest table key starting at text[pos]"""
        longest = min(self._max_key_len, len(text) - pos)
        for length in range(longest, 0, -1):
            entry = self._merged.get(text[pos:pos + length])
            if entry is not None:
                return length, entry
        return None


def load_table_file(path: Path) -> Tuple[Dict[str, TableEntry], List[Tuple[int, int]]]:
    """Parse one script table; errors carry the file and line number"""
    entries: Dict[str, TableEntry] = {}
    ranges: List[Tuple[int, int]] = []

    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read table: {e}", path=str(path))

    for line_number, line in enumerate(lines, 1):
        if line.startswith("#!range"):
            fields = line.split("\t")
            try:
                ranges.append((int(fields[1], 16), int(fields[2], 16)))
            except (IndexError, ValueError):
                raise TableFormatError(
                    "Range directive must be '#!range<TAB>HEX<TAB>HEX'",
                    path=str(path), line=line_number)
            continue
        if not line.strip() or line.startswith("#"):
            continue

        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise TableFormatError(
                "Expected 'source<TAB>target[<TAB>flag]'",
                path=str(path), line=line_number)

        key = _parse_source(fields[0], str(path), line_number)
        target = fields[1]
        flag = fields[2] if len(fields) == 3 and fields[2] else None

        if any(c in WORD_SYMBOLS for c in key):
            raise TableFormatError(
                f"Source '{fields[0]}' contains canonical symbols",
                path=str(path), line=line_number)
        if any(c not in WORD_SYMBOLS for c in target):
            raise TableFormatError(
                f"Target '{target}' is not over a-z and apostrophe",
                path=str(path), line=line_number)
        if flag is not None and flag not in TABLE_FLAGS:
            raise TableFormatError(f"Unknown flag '{flag}'",
                                   path=str(path), line=line_number)
        if flag == INHERENT and not target:
            raise TableFormatError("An inherent-vowel entry needs a target",
                                   path=str(path), line=line_number)
        if key in entries:
            raise TableFormatError(f"Duplicate source '{fields[0]}'",
                                   path=str(path), line=line_number)

        entries[key] = TableEntry(target=target, flag=flag)

    return entries, ranges


def _parse_source(raw: str, path: str, line_number: int) -> str:
    if raw.startswith("U+"):
        try:
            raw = "".join(chr(int(cp[2:], 16)) for cp in raw.split())
        except ValueError:
            raise TableFormatError(f"Bad codepoint list '{raw}'",
                                   path=path, line=line_number)
    key = unicodedata.normalize("NFD", raw.lower())
    if not key:
        raise TableFormatError("Empty source", path=path, line=line_number)
    return key


@lru_cache(maxsize=None)
def default_scheme(fallback_policy: str = DEFAULT_FALLBACK_POLICY) -> RomanScheme:
    return RomanScheme.load(fallback_policy=fallback_policy)


@dataclass
class RomanizationStats:
    """Counters for one romanization run"""
    words: int = 0
    empty_words: int = 0
    unknown_codepoints: int = 0
    unknown_examples: Counter = field(default_factory=Counter)

    def log_summary(self):
        if self.unknown_codepoints:
            common = ", ".join(
                f"U+{ord(c):04X}" for c, _ in self.unknown_examples.most_common(5))
            logger.warning(
                f"{self.unknown_codepoints} codepoints of unsupported scripts "
                f"in {self.words} words (most frequent: {common})")
        if self.empty_words:
            logger.warning(f"{self.empty_words} words romanized to nothing")


@dataclass(frozen=True)
class RomanizedText:
    """Text over the canonical alphabet; words joined by single separators"""
    symbols: Tuple[str, ...]
    source: str = ""

    def __post_init__(self):
        if any(s not in WORD_SYMBOLS and s != SEPARATOR for s in self.symbols):
            raise ValueError(f"Non-canonical symbol in {self.symbols!r}")
        text = "".join(self.symbols)
        if text.startswith(SEPARATOR) or text.endswith(SEPARATOR) or \
                SEPARATOR * 2 in text:
            raise ValueError(f"Bad separator placement in '{text}'")

    @classmethod
    def from_string(cls, text: str, source: str = "") -> "RomanizedText":
        return cls(symbols=tuple(text), source=source)

    @property
    def text(self) -> str:
        return "".join(self.symbols)

    @property
    def words(self) -> List[str]:
        return self.text.split(SEPARATOR) if self.symbols else []

    def __str__(self) -> str:
        return self.text

    def __len__(self) -> int:
        return len(self.symbols)


def romanize_word(word: str, scheme: Optional[RomanScheme] = None,
                  stats: Optional[RomanizationStats] = None) -> Tuple[str, ...]:
    """Romanize a single whitespace-free word into letters and apostrophes"""
    if not word or word.isspace():
        raise EmptyInput("Cannot romanize an empty word")
    scheme = scheme or default_scheme()

    text = unicodedata.normalize("NFD", word.lower())
    out: List[str] = []
    # position in `out` of a consonant's inherent vowel that a vowel sign may replace
    inherent_at: Optional[int] = None
    # text before this index came from a compatibility expansion and is not expanded again
    expanded_until = 0
    pos = 0

    while pos < len(text):
        match = scheme.lookup(text, pos)
        if match is not None:
            length, entry = match
            pos += length
            if entry.flag == VOWEL_SIGN and inherent_at is not None:
                del out[inherent_at]
                inherent_at = None
            out.extend(entry.target)
            if entry.flag == INHERENT:
                inherent_at = len(out) - 1
            elif entry.target or entry.flag == VOWEL_SIGN:
                inherent_at = None
            continue

        char = text[pos]
        pos += 1
        if char in WORD_SYMBOLS:
            out.append(char)
            inherent_at = None
            continue

        category = unicodedata.category(char)
        if category.startswith("M"):
            continue
        if category.startswith("L"):
            compat = unicodedata.normalize("NFKD", char).lower()
            if compat != char and pos > expanded_until:
                # fullwidth forms, ligatures, digraph letters
                text = text[:pos - 1] + compat + text[pos:]
                pos -= 1
                expanded_until = pos + len(compat)
                continue
            if stats is not None:
                stats.unknown_codepoints += 1
                stats.unknown_examples[char] += 1
            if scheme.fallback_policy == "apostrophe":
                out.append(APOSTROPHE)
        # numbers, punctuation, symbols, controls: removed
        inherent_at = None

    if stats is not None:
        stats.words += 1
        if not out:
            stats.empty_words += 1
    return tuple(out)


def romanize_text(text: str, scheme: Optional[RomanScheme] = None,
                  stats: Optional[RomanizationStats] = None) -> RomanizedText:
    """Romanize free text; whitespace runs (and separators) become one `|`"""
    symbols: List[str] = []
    for word in _WORD_BOUNDARY_RE.split(text):
        if not word:
            continue
        romanized = romanize_word(word, scheme, stats)
        if not romanized:
            continue
        if symbols:
            symbols.append(SEPARATOR)
        symbols.extend(romanized)
    return RomanizedText(symbols=tuple(symbols), source=text)


def audit_vocabulary(corpus: Iterable[str], scheme: Optional[RomanScheme] = None,
                     stats: Optional[RomanizationStats] = None) -> Counter:
    """Count every canonical symbol the corpus romanizes to"""
    counts: Counter = Counter()
    try:
        for line in corpus:
            counts.update(romanize_text(line.rstrip("\n"), scheme, stats).symbols)
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read corpus: {e}")
    return counts


class Romanizer:
    """Stateful front end: one scheme, run-level statistics and logging"""

    def __init__(self, scheme: Optional[RomanScheme] = None):
        self.scheme = scheme or default_scheme()
        self.stats = RomanizationStats()
        self.logger = logging.getLogger(__name__)

    @classmethod
    def from_tables(cls, table_dirs: Sequence[Path] = (),
                    fallback_policy: str = DEFAULT_FALLBACK_POLICY) -> "Romanizer":
        if not table_dirs:
            return cls(default_scheme(fallback_policy))
        return cls(RomanScheme.load(table_dirs, fallback_policy))

    def text(self, text: str) -> RomanizedText:
        return romanize_text(text, self.scheme, self.stats)

    def romanize_file(self, input_path: str) -> List[str]:
        """Romanize a UTF-8 file line by line"""
        try:
            with open(input_path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
        except (OSError, UnicodeDecodeError) as e:
            raise IoFailure(f"Cannot read input: {e}", path=input_path)

        romanized = [self.text(line).text for line in lines]
        self.logger.info(f"Romanized {len(lines)} lines from {input_path}")
        self.stats.log_summary()
        return romanized
