"""
Word -> romanized spelling lexicons and their prefix-trie compilation.

A spelling is the romanization of a word followed by the separator symbol,
e.g. ``casa`` -> ``c a s a |``. Distinct words may share one spelling
(``á`` and ``a`` both spell ``a |``); the trie keeps every word id at the
terminal node so the decoder can tell them apart with an LM.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DuplicateWord, EmptyLexicon, IoFailure, ParseError
from .romanizer import (ALPHABET, SEPARATOR, WORD_SYMBOLS, RomanizationStats,
                        RomanScheme, romanize_word)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    spelling: Tuple[str, ...]

    def __post_init__(self):
        if len(self.spelling) < 2 or self.spelling[-1] != SEPARATOR:
            raise ValueError(
                f"Spelling of '{self.word}' must be non-empty and end with '{SEPARATOR}'")
        if any(s not in WORD_SYMBOLS for s in self.spelling[:-1]):
            raise ValueError(
                f"Spelling of '{self.word}' has symbols outside letters/apostrophe")

    @property
    def letters(self) -> str:
        """Spelling without the terminal separator"""
        return "".join(self.spelling[:-1])


@dataclass
class Lexicon:
    """Ordered, duplicate-free list of entries; ids are list positions"""
    entries: List[LexiconEntry] = field(default_factory=list)
    word_index: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_entries(cls, entries: Iterable[LexiconEntry]) -> "Lexicon":
        lexicon = cls()
        for entry in entries:
            lexicon.add(entry)
        return lexicon

    def add(self, entry: LexiconEntry) -> int:
        if entry.word in self.word_index:
            raise DuplicateWord(f"Duplicate word '{entry.word}'")
        self.word_index[entry.word] = len(self.entries)
        self.entries.append(entry)
        return self.word_index[entry.word]

    @property
    def words(self) -> List[str]:
        return [e.word for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[LexiconEntry]:
        return iter(self.entries)

    def __getitem__(self, word_id: int) -> LexiconEntry:
        return self.entries[word_id]

    def __contains__(self, word: str) -> bool:
        return word in self.word_index


def build_lexicon(words: Iterable[str], scheme: Optional[RomanScheme] = None,
                  stats: Optional[RomanizationStats] = None) -> Lexicon:
    """One entry per distinct word (case-sensitive), in first-occurrence order"""
    stats = stats if stats is not None else RomanizationStats()
    lexicon = Lexicon()
    dropped = 0

    for word in dict.fromkeys(w.strip() for w in words):
        if not word:
            continue
        if any(c.isspace() for c in word):
            logger.debug(f"Skipping multi-token entry '{word}'")
            dropped += 1
            continue
        letters = romanize_word(word, scheme, stats)
        if not letters:
            dropped += 1
            continue
        lexicon.add(LexiconEntry(word=word, spelling=letters + (SEPARATOR,)))

    if dropped:
        logger.warning(f"Dropped {dropped} words with an empty romanization")
    if not lexicon.entries:
        raise EmptyLexicon("No word survived romanization")
    logger.info(f"Built lexicon with {len(lexicon)} entries")
    return lexicon


@dataclass(frozen=True, eq=False)
class LexiconTrie:
    """
    Prefix trie over spellings with a fixed 29-way branch per node.

    children[n, s] is the child of node n under symbol index s, or -1.
    word_ids[n] lists the lexicon entries whose spelling ends at node n.
    """
    children: np.ndarray
    word_ids: Tuple[Tuple[int, ...], ...]
    root: int = 0

    def __post_init__(self):
        # (symbol index, child) pairs in ascending symbol order, per node
        arcs = tuple(
            tuple((int(s), int(row[s])) for s in np.flatnonzero(row >= 0))
            for row in self.children)
        object.__setattr__(self, "arcs", arcs)

    @property
    def node_count(self) -> int:
        return self.children.shape[0]


def build_trie(lex: Lexicon) -> LexiconTrie:
    if not lex.entries:
        raise EmptyLexicon("Cannot build a trie from an empty lexicon")

    children: List[List[int]] = [[-1] * len(ALPHABET)]
    word_ids: List[List[int]] = [[]]

    for word_id, entry in enumerate(lex.entries):
        node = 0
        for symbol in entry.spelling:
            s = ALPHABET.index(symbol)
            if children[node][s] < 0:
                children[node][s] = len(children)
                children.append([-1] * len(ALPHABET))
                word_ids.append([])
            node = children[node][s]
        word_ids[node].append(word_id)

    return LexiconTrie(
        children=np.array(children, dtype=np.int32),
        word_ids=tuple(tuple(ids) for ids in word_ids))


def trie_lookup(trie: LexiconTrie, spelling: Sequence[str]) -> List[int]:
    """Word ids whose full spelling equals the query; prefixes give []"""
    node = trie.root
    for symbol in spelling:
        if symbol not in ALPHABET:
            return []
        node = int(trie.children[node, ALPHABET.index(symbol)])
        if node < 0:
            return []
    return list(trie.word_ids[node])


def serialize_lexicon(lex: Lexicon) -> str:
    return "".join(f"{e.word}\t{' '.join(e.spelling)}\n" for e in lex.entries)


def parse_lexicon(text: str, path: Optional[str] = None) -> Lexicon:
    """Parse `word<TAB>s y m b o l s |` lines; blank lines are skipped"""
    lexicon = Lexicon()
    for line_number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise ParseError("Expected 'word<TAB>spelling'",
                             path=path, line=line_number)
        word, spelling = fields
        try:
            entry = LexiconEntry(word=word, spelling=tuple(spelling.split()))
        except ValueError as e:
            raise ParseError(str(e), path=path, line=line_number)
        if word in lexicon:
            raise DuplicateWord(f"Duplicate word '{word}'",
                                path=path, line=line_number)
        lexicon.add(entry)
    return lexicon


def read_lexicon(path: str) -> Lexicon:
    return parse_lexicon(_read_text(path), path=path)


def read_word_list(path: str) -> List[str]:
    """One word per line (Panlex-style)"""
    return [line.strip() for line in _read_text(path).splitlines() if line.strip()]


def read_word_frequencies(path: str, min_count: int = 1) -> List[Tuple[str, int]]:
    """
    Read `word<TAB>count` lines (Crúbadán-style), keeping file order.

    Rows whose first field holds several space-separated tokens are n-gram
    rows and are returned too; callers building lexicons keep unigrams only.
    """
    rows: List[Tuple[str, int]] = []
    skipped = 0
    for line_number, line in enumerate(_read_text(path).splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0].strip():
            raise ParseError("Expected 'word<TAB>count'", path=path, line=line_number)
        try:
            count = int(fields[1])
        except ValueError:
            raise ParseError(f"Count '{fields[1]}' is not an integer",
                             path=path, line=line_number)
        if count <= 0:
            raise ParseError("Counts must be positive", path=path, line=line_number)
        if count < min_count:
            skipped += 1
            continue
        rows.append((fields[0].strip(), count))

    if skipped:
        logger.info(f"Filtered {skipped} rows below count {min_count} from {path}")
    return rows


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read file: {e}", path=path)
