"""
CTC decoding over the canonical alphabet.

Three decoders share one scoring convention:

    total = am + lm_weight * ln(10) * lm + word_score * word_count

where `am` is a natural-log max-over-alignments (Viterbi) path score and
`lm` a log10 language-model score.

- `greedy_decode`: per-frame argmax with CTC collapse, no lexicon.
- `LexiconBeamDecoder` / `beam_decode`: frame-synchronous beam search
  constrained to lexicon spellings, with optional shallow LM fusion.
- `oracle_decode`: exhaustive enumeration of short word sequences, used to
  verify the beam search on small instances.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import (DEFAULT_BEAM_SIZE, DEFAULT_BEAM_THRESHOLD, DEFAULT_LM_WEIGHT,
                             DEFAULT_WORD_SCORE, NEG_INF, ORACLE_MAX_SEQUENCES)
from .emissions import EmissionMatrix
from .exceptions import DimensionMismatch, EmptyLexicon, InvalidConfig, SearchSpaceTooLarge
from .lexicon import Lexicon, LexiconTrie, build_trie
from .ngram_lm import SENTENCE_END, LmState, NGramModel
from .romanizer import ALPHABET, SEPARATOR, RomanizedText

logger = logging.getLogger(__name__)

LN10 = math.log(10.0)
BLANK_INDEX = ALPHABET.blank_index


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = DEFAULT_BEAM_SIZE
    beam_threshold: float = DEFAULT_BEAM_THRESHOLD
    lm_weight: float = DEFAULT_LM_WEIGHT
    word_score: float = DEFAULT_WORD_SCORE
    apply_eos: bool = True

    def __post_init__(self):
        if isinstance(self.beam_size, bool) or not isinstance(self.beam_size, int) \
                or self.beam_size < 1:
            raise InvalidConfig(f"beam_size must be a positive integer, got {self.beam_size}")
        if not self.beam_threshold > 0:
            raise InvalidConfig(f"beam_threshold must be > 0, got {self.beam_threshold}")
        if not self.lm_weight >= 0:
            raise InvalidConfig(f"lm_weight must be >= 0, got {self.lm_weight}")
        if not math.isfinite(self.word_score):
            raise InvalidConfig(f"word_score must be finite, got {self.word_score}")

    def with_weights(self, lm_weight: float, word_score: float) -> "DecodeConfig":
        return replace(self, lm_weight=lm_weight, word_score=word_score)


@dataclass(frozen=True)
class WordLink:
    """Backpointer chain of committed word ids, newest first"""
    word_id: int
    previous: Optional["WordLink"] = None

    def unroll(self) -> Tuple[int, ...]:
        ids: List[int] = []
        link: Optional[WordLink] = self
        while link is not None:
            ids.append(link.word_id)
            link = link.previous
        return tuple(reversed(ids))


@dataclass
class Hypothesis:
    am_score: float
    lm_score: float
    word_count: int
    trie_node: int
    lm_state: Optional[LmState]
    last_symbol: Optional[int]
    words: Optional[WordLink]
    total_score: float

    @property
    def word_ids(self) -> Tuple[int, ...]:
        return self.words.unroll() if self.words is not None else ()


@dataclass
class DecodeResult:
    """
    Best hypothesis of one utterance.

    When `forced_finalization` is set no hypothesis ended on a word boundary:
    `words` holds only the committed words, while `am_score` and
    `total_score` still include the frames spent on the dropped partial word
    and carry no end-of-sentence term. Such scores are not comparable with
    those of regular results.
    """
    words: List[str]
    romanized: str
    total_score: float
    am_score: float
    lm_score: float
    word_count: int
    forced_finalization: bool = False
    word_ids: Tuple[int, ...] = ()
    utterance_id: str = ""
    frames: int = 0

    @property
    def text(self) -> str:
        return " ".join(self.words)


def _result(lex: Lexicon, word_ids: Sequence[int], am: float, lm: float, total: float,
            forced: bool, utterance_id: str) -> DecodeResult:
    entries = [lex[i] for i in word_ids]
    return DecodeResult(
        words=[e.word for e in entries],
        romanized=SEPARATOR.join(e.letters for e in entries),
        total_score=total, am_score=am, lm_score=lm, word_count=len(entries),
        forced_finalization=forced, word_ids=tuple(word_ids), utterance_id=utterance_id)


def _check_vocab(m: EmissionMatrix):
    if m.vocab != ALPHABET.symbols or m.logp.shape[1] != len(ALPHABET):
        raise DimensionMismatch(
            f"Utterance '{m.utterance_id}': emission vocabulary does not match the "
            "canonical alphabet")


def collapse_symbols(frame_symbols: Sequence[int]) -> RomanizedText:
    """CTC collapse: merge repeats, drop blanks, normalize separators"""
    out: List[str] = []
    previous = None
    for s in frame_symbols:
        if s != previous and s != BLANK_INDEX:
            symbol = ALPHABET[s]
            if symbol != SEPARATOR or (out and out[-1] != SEPARATOR):
                out.append(symbol)
        previous = s
    while out and out[-1] == SEPARATOR:
        out.pop()
    return RomanizedText(symbols=tuple(out))


def greedy_decode(m: EmissionMatrix) -> RomanizedText:
    _check_vocab(m)
    return collapse_symbols([int(i) for i in np.argmax(m.logp, axis=1)])


def best_alignment_score(m: EmissionMatrix, symbols: Sequence[str]) -> float:
    """
    Best CTC path score for `symbols`, NEG_INF when no path fits.

    Runs over the blank-interleaved label sequence with stay, advance, and
    skip-over-blank moves; a blank may only be skipped between distinct labels.
    """
    if not symbols:
        raise ValueError("symbols must be non-empty")
    labels = [ALPHABET.index(s) for s in symbols]
    if BLANK_INDEX in labels:
        raise ValueError("symbols must not contain the blank")

    num_frames = m.num_frames
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    if num_frames < len(labels) + repeats:
        return NEG_INF

    extended = [BLANK_INDEX]
    for label in labels:
        extended.extend((label, BLANK_INDEX))
    extended = np.array(extended)
    size = len(extended)

    emit = m.scores()[:, extended]
    can_skip = np.zeros(size, dtype=bool)
    can_skip[2:] = (extended[2:] != BLANK_INDEX) & (extended[2:] != extended[:-2])

    dp = np.full(size, -np.inf)
    dp[0] = emit[0, 0]
    dp[1] = emit[0, 1]
    for t in range(1, num_frames):
        advance = np.concatenate(([-np.inf], dp[:-1]))
        skip = np.where(can_skip, np.concatenate(([-np.inf, -np.inf], dp[:-2])), -np.inf)
        dp = np.maximum(np.maximum(dp, advance), skip) + emit[t]

    best = float(max(dp[-1], dp[-2]))
    return best if best > NEG_INF else NEG_INF


class LexiconBeamDecoder:
    """
    Lexicon-constrained CTC beam search with shallow LM fusion.

    Hypotheses walk the spelling trie one frame at a time. Reaching a
    terminal node (the separator) commits every word id stored there and
    returns the hypothesis to the root. Hypotheses with equal
    (node, LM state, last symbol, has-words) merge, keeping the higher
    score; ties keep the earlier one.
    """

    def __init__(self, lexicon: Lexicon, trie: Optional[LexiconTrie] = None,
                 lm: Optional[NGramModel] = None, config: Optional[DecodeConfig] = None):
        if not len(lexicon):
            raise EmptyLexicon("Cannot decode with an empty lexicon")
        self.lexicon = lexicon
        self.trie = trie if trie is not None else build_trie(lexicon)
        self.lm = lm
        self.config = config or DecodeConfig()
        self.lm_scale = self.config.lm_weight * LN10
        self._word_cache: Dict[Tuple[LmState, int], Tuple[LmState, float]] = {}
        self._eos_cache: Dict[LmState, float] = {}
        self.logger = logging.getLogger(__name__)

    def _score_word(self, state: Optional[LmState], word_id: int) -> Tuple[Optional[LmState], float]:
        if self.lm is None:
            return None, 0.0
        key = (state, word_id)
        cached = self._word_cache.get(key)
        if cached is None:
            cached = self.lm.score_word(state, self.lexicon[word_id].word)
            self._word_cache[key] = cached
        return cached

    def _eos_score(self, state: Optional[LmState]) -> float:
        if self.lm is None or not self.config.apply_eos:
            return 0.0
        if state not in self._eos_cache:
            self._eos_cache[state] = self.lm.score_word(state, SENTENCE_END)[1]
        return self._eos_cache[state]

    def _offer(self, candidates: Dict[Hashable, Hypothesis], am: float, lm: float,
               word_count: int, node: int, lm_state: Optional[LmState],
               last_symbol: Optional[int], words: Optional[WordLink]):
        total = am + self.lm_scale * lm + self.config.word_score * word_count
        # word-free hypotheses never merge with word-bearing ones; only the latter can finish
        key = (node, lm_state, last_symbol, word_count > 0)
        existing = candidates.get(key)
        if existing is None or total > existing.total_score:
            candidates[key] = Hypothesis(am, lm, word_count, node, lm_state,
                                         last_symbol, words, total)

    def _extend(self, hyp: Hypothesis, frame: List[float],
                candidates: Dict[Hashable, Hypothesis]):
        trie = self.trie
        self._offer(candidates, hyp.am_score + frame[BLANK_INDEX], hyp.lm_score,
                    hyp.word_count, hyp.trie_node, hyp.lm_state, None, hyp.words)

        if hyp.last_symbol is not None:
            self._offer(candidates, hyp.am_score + frame[hyp.last_symbol], hyp.lm_score,
                        hyp.word_count, hyp.trie_node, hyp.lm_state, hyp.last_symbol,
                        hyp.words)

        for symbol, child in trie.arcs[hyp.trie_node]:
            if symbol == hyp.last_symbol:
                continue
            am = hyp.am_score + frame[symbol]
            word_ids = trie.word_ids[child]
            if not word_ids:
                self._offer(candidates, am, hyp.lm_score, hyp.word_count, child,
                            hyp.lm_state, symbol, hyp.words)
                continue
            for word_id in word_ids:
                lm_state, score = self._score_word(hyp.lm_state, word_id)
                self._offer(candidates, am, hyp.lm_score + score, hyp.word_count + 1,
                            trie.root, lm_state, symbol, WordLink(word_id, hyp.words))

    def _prune(self, candidates: Dict[Hashable, Hypothesis]) -> List[Hypothesis]:
        best = max(h.total_score for h in candidates.values())
        floor = best - self.config.beam_threshold
        survivors = [h for h in candidates.values() if h.total_score >= floor]
        return heapq.nlargest(self.config.beam_size, survivors, key=lambda h: h.total_score)

    def decode(self, m: EmissionMatrix) -> DecodeResult:
        _check_vocab(m)
        # LM lookups are cached per utterance only
        self._word_cache.clear()
        self._eos_cache.clear()
        start_state = self.lm.start_state() if self.lm is not None else None
        beam = [Hypothesis(0.0, 0.0, 0, self.trie.root, start_state, None, None, 0.0)]

        for frame in m.scores().tolist():
            candidates: Dict[Hashable, Hypothesis] = {}
            for hyp in beam:
                self._extend(hyp, frame, candidates)
            beam = self._prune(candidates)

        result = self._finalize(beam, m.utterance_id)
        result.frames = m.num_frames
        return result

    def _finalize(self, beam: List[Hypothesis], utterance_id: str) -> DecodeResult:
        best: Optional[Tuple[float, float, Hypothesis]] = None
        for hyp in beam:
            if hyp.trie_node != self.trie.root or hyp.word_count == 0:
                continue
            lm = hyp.lm_score + self._eos_score(hyp.lm_state)
            total = hyp.am_score + self.lm_scale * lm + self.config.word_score * hyp.word_count
            if best is None or total > best[0]:
                best = (total, lm, hyp)

        if best is not None:
            total, lm, hyp = best
            return _result(self.lexicon, hyp.word_ids, hyp.am_score, lm, total,
                           False, utterance_id)

        # No hypothesis ended on a word boundary: keep the committed words of
        # the best one and drop its partial word.
        hyp = beam[0]
        self.logger.debug(f"Forced finalization for utterance '{utterance_id}'")
        return _result(self.lexicon, hyp.word_ids, hyp.am_score, hyp.lm_score,
                       hyp.total_score, True, utterance_id)


def beam_decode(m: EmissionMatrix, trie: Optional[LexiconTrie], lex: Lexicon,
                lm: Optional[NGramModel] = None,
                cfg: Optional[DecodeConfig] = None) -> DecodeResult:
    return LexiconBeamDecoder(lex, trie, lm, cfg).decode(m)


@dataclass(order=True)
class RankedSequence:
    """Oracle candidate; sorts best first, then by word-id sequence"""
    sort_key: Tuple[float, Tuple[int, ...]] = field(repr=False)
    total_score: float = field(compare=False)
    am_score: float = field(compare=False)
    lm_score: float = field(compare=False)
    word_ids: Tuple[int, ...] = field(compare=False)


def oracle_ranking(m: EmissionMatrix, lex: Lexicon, lm: Optional[NGramModel] = None,
                   lm_weight: float = 0.0, word_score: float = 0.0, max_words: int = 3,
                   apply_eos: bool = True) -> List[RankedSequence]:
    """Every word sequence of length 1..max_words, best first"""
    _check_vocab(m)
    if not len(lex):
        raise EmptyLexicon("Cannot decode with an empty lexicon")
    if max_words < 1:
        raise InvalidConfig(f"max_words must be >= 1, got {max_words}")
    total_sequences = sum(len(lex) ** n for n in range(1, max_words + 1))
    if total_sequences > ORACLE_MAX_SEQUENCES:
        raise SearchSpaceTooLarge(
            f"{total_sequences} sequences exceed the limit of {ORACLE_MAX_SEQUENCES}")

    lm_scale = lm_weight * LN10
    alignment_cache: Dict[Tuple[str, ...], float] = {}
    ranked: List[RankedSequence] = []
    for n in range(1, max_words + 1):
        for word_ids in itertools.product(range(len(lex)), repeat=n):
            spelling = tuple(s for i in word_ids for s in lex[i].spelling)
            am = alignment_cache.get(spelling)
            if am is None:
                am = alignment_cache[spelling] = best_alignment_score(m, spelling)
            if am <= NEG_INF:
                continue
            lm_score = 0.0
            if lm is not None:
                lm_score = lm.score_sentence([lex[i].word for i in word_ids],
                                             apply_eos=apply_eos)
            total = am + lm_scale * lm_score + word_score * n
            ranked.append(RankedSequence((-total, word_ids), total, am, lm_score, word_ids))
    ranked.sort()
    return ranked


def oracle_decode(m: EmissionMatrix, lex: Lexicon, lm: Optional[NGramModel] = None,
                  lm_weight: float = 0.0, word_score: float = 0.0, max_words: int = 3,
                  apply_eos: bool = True) -> DecodeResult:
    ranked = oracle_ranking(m, lex, lm, lm_weight, word_score, max_words, apply_eos)
    if not ranked:
        return _result(lex, (), NEG_INF, 0.0, NEG_INF, True, m.utterance_id)
    best = ranked[0]
    return _result(lex, best.word_ids, best.am_score, best.lm_score, best.total_score,
                   False, m.utterance_id)
