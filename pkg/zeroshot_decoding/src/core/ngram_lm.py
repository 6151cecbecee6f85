"""
Backoff n-gram language models (orders 1-3) over target-language words.

Training uses absolute discounting with backoff:

    unigrams   p(w) = c(w) / (N + 1),   p(<unk>) = 1 / (N + 1)
    order > 1  p(w|h) = max(c(h w) - D, 0) / c(h) + lambda(h) p(w|h')
               lambda(h) = D * N1+(h) / c(h)

All scores are log10 (ARPA convention). Stored n-gram probabilities are the
interpolated values, and lambda(h) is stored as the ARPA backoff weight, so
plain ARPA backoff evaluation reproduces the trained distribution exactly.
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from config.settings import DEFAULT_DISCOUNT
from .exceptions import (ArpaParseError, CountMismatch, EmptyCorpus, InvalidDiscount,
                         InvalidOrder, IoFailure)
from .lexicon import read_word_frequencies

logger = logging.getLogger(__name__)

SENTENCE_START = "<s>"
SENTENCE_END = "</s>"
UNKNOWN = "<unk>"
MAX_ORDER = 3

# ARPA placeholder probability for <s>, which is never predicted
ARPA_START_LOGPROB = -99.0

NGram = Tuple[str, ...]


@dataclass(frozen=True)
class LmState:
    """The last (order - 1) accepted tokens; equal contexts merge in search"""
    context: Tuple[str, ...] = ()


class NGramModel:
    """Immutable backoff model; probs[k-1] holds k-grams, backoffs[k-1] k-gram contexts"""

    def __init__(self, order: int, probs: List[Dict[NGram, float]],
                 backoffs: List[Dict[NGram, float]], discount: Optional[float] = None):
        if not 1 <= order <= MAX_ORDER:
            raise InvalidOrder(f"Order must be between 1 and {MAX_ORDER}, got {order}")
        self.order = order
        self.probs = probs
        self.backoffs = backoffs
        self.discount = discount
        self.vocab = frozenset(ng[0] for ng in probs[0])
        self.logger = logging.getLogger(__name__)

        if UNKNOWN not in self.vocab:
            self.logger.warning(
                "Model has no <unk> entry; unknown words score as "
                f"{ARPA_START_LOGPROB}")

    @property
    def models_sentence_end(self) -> bool:
        return SENTENCE_END in self.vocab

    def start_state(self) -> LmState:
        return LmState((SENTENCE_START,)) if self.order > 1 else LmState(())

    def map_word(self, word: str) -> str:
        if word in self.vocab and word != SENTENCE_START:
            return word
        return UNKNOWN

    def log10_prob(self, context: Sequence[str], word: str) -> float:
        """Backoff-evaluated log10 p(word | context), unknown words as <unk>"""
        if word == SENTENCE_END and not self.models_sentence_end:
            # count-table models carry no sentence-end event
            return 0.0
        mapped = self.map_word(word)
        if mapped == UNKNOWN and UNKNOWN not in self.vocab:
            return ARPA_START_LOGPROB
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        return _backoff_log10(self.probs, self.backoffs, context, mapped)

    def score_word(self, state: LmState, word: str) -> Tuple[LmState, float]:
        score = self.log10_prob(state.context, word)
        if self.order == 1:
            return state, score
        context = (state.context + (self.map_word(word),))[-(self.order - 1):]
        return LmState(context), score

    def score_sentence(self, words: Sequence[str], apply_eos: bool = True) -> float:
        state = self.start_state()
        total = 0.0
        for word in words:
            state, score = self.score_word(state, word)
            total += score
        if apply_eos:
            total += self.score_word(state, SENTENCE_END)[1]
        return total

    def ngram_counts(self) -> List[int]:
        """Number of entries per order as written to ARPA"""
        counts = [len(table) for table in self.probs]
        if self._writes_start_token():
            counts[0] += 1
        return counts

    def _writes_start_token(self) -> bool:
        return self.order > 1 and (SENTENCE_START,) in self.backoffs[0]


def _backoff_log10(probs: Sequence[Mapping[NGram, float]],
                   backoffs: Sequence[Mapping[NGram, float]],
                   context: NGram, word: str) -> float:
    score = 0.0
    while True:
        ngram = context + (word,)
        if len(ngram) <= len(probs):
            p = probs[len(ngram) - 1].get(ngram)
            if p is not None:
                return score + p
        if not context:
            return score + probs[0].get((UNKNOWN,), ARPA_START_LOGPROB)
        if len(context) <= len(backoffs):
            score += backoffs[len(context) - 1].get(context, 0.0)
        context = context[1:]


def count_ngrams(sentences: Iterable[Sequence[str]], order: int) -> Counter:
    """Counts of all 1..order-grams over <s>/</s> padded sentences; <s> is never a unigram"""
    counts: Counter = Counter()
    for sentence in sentences:
        tokens = [SENTENCE_START] + list(sentence) + [SENTENCE_END]
        for k in range(1, order + 1):
            for i in range(len(tokens) - k + 1):
                ngram = tuple(tokens[i:i + k])
                if ngram == (SENTENCE_START,):
                    continue
                counts[ngram] += 1
    return counts


def train_ngram(sentences: Optional[Iterable[Sequence[str]]] = None,
                counts: Optional[Mapping[NGram, int]] = None,
                order: int = 1, discount: float = DEFAULT_DISCOUNT) -> NGramModel:
    """Train from padded sentences or from a raw n-gram count table"""
    if not 1 <= order <= MAX_ORDER:
        raise InvalidOrder(f"Order must be between 1 and {MAX_ORDER}, got {order}")
    if not 0.0 < discount < 1.0:
        raise InvalidDiscount(f"Discount must lie in (0, 1), got {discount}")

    if sentences is not None:
        table = count_ngrams(sentences, order)
    elif counts is not None:
        table = Counter({tuple(ng): int(c) for ng, c in counts.items()})
    else:
        raise EmptyCorpus("Nothing to train on")

    unigrams = {ng: c for ng, c in table.items()
                if len(ng) == 1 and ng != (SENTENCE_START,)}
    if not unigrams:
        raise EmptyCorpus("Corpus contains no tokens")

    # Unigram layer: N + 1 pseudo-count scheme, one extra count for <unk>
    total = sum(unigrams.values())
    unk_count = unigrams.pop((UNKNOWN,), 0)
    probs: List[Dict[NGram, float]] = [{
        ng: math.log10(c / (total + 1)) for ng, c in unigrams.items()}]
    probs[0][(UNKNOWN,)] = math.log10((unk_count + 1) / (total + 1))
    backoffs: List[Dict[NGram, float]] = []
    vocab = {ng[0] for ng in probs[0]}

    for k in range(2, order + 1):
        kgrams = _admissible_kgrams(table, k, vocab, probs)
        context_totals: Dict[NGram, int] = defaultdict(int)
        continuations: Dict[NGram, int] = defaultdict(int)
        for ngram, c in kgrams.items():
            context_totals[ngram[:-1]] += c
            continuations[ngram[:-1]] += 1

        weights = {h: discount * continuations[h] / context_totals[h]
                   for h in context_totals}
        layer: Dict[NGram, float] = {}
        for ngram, c in kgrams.items():
            h = ngram[:-1]
            lower = 10 ** _backoff_log10(probs, backoffs, h[1:], ngram[-1])
            p = max(c - discount, 0.0) / context_totals[h] + weights[h] * lower
            layer[ngram] = math.log10(p)

        backoffs.append({h: math.log10(w) for h, w in weights.items()})
        probs.append(layer)

    logger.info(
        f"Trained {order}-gram model: "
        + ", ".join(f"{len(t)} {i + 1}-grams" for i, t in enumerate(probs)))
    return NGramModel(order=order, probs=probs, backoffs=backoffs, discount=discount)


def _admissible_kgrams(table: Mapping[NGram, int], k: int, vocab: set,
                       probs: List[Dict[NGram, float]]) -> Dict[NGram, int]:
    """k-grams whose tokens are known and whose context is itself stored"""
    kept: Dict[NGram, int] = {}
    skipped = 0
    for ngram, c in table.items():
        if len(ngram) != k:
            continue
        context, word = ngram[:-1], ngram[-1]
        context_known = (context == (SENTENCE_START,) or context in probs[k - 2])
        if word in vocab and word != UNKNOWN and context_known:
            kept[ngram] = c
        else:
            skipped += 1
    if skipped:
        logger.warning(f"Skipped {skipped} {k}-grams with unknown tokens or contexts")
    return kept


def write_arpa(model: NGramModel) -> str:
    lines = ["\\data\\"]
    for k, count in enumerate(model.ngram_counts(), 1):
        lines.append(f"ngram {k}={count}")

    for k in range(1, model.order + 1):
        lines.append("")
        lines.append(f"\\{k}-grams:")
        backoffs = model.backoffs[k - 1] if k < model.order else {}
        if k == 1 and model._writes_start_token():
            lines.append(
                f"{ARPA_START_LOGPROB:.0f}\t{SENTENCE_START}"
                f"\t{backoffs[(SENTENCE_START,)]:.7f}")
        for ngram, logprob in model.probs[k - 1].items():
            line = f"{logprob:.7f}\t{' '.join(ngram)}"
            if ngram in backoffs:
                line += f"\t{backoffs[ngram]:.7f}"
            lines.append(line)

    lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def read_arpa(text: str, path: Optional[str] = None) -> NGramModel:
    lines = text.splitlines()
    declared: Dict[int, int] = {}
    probs: Dict[int, Dict[NGram, float]] = {}
    backoffs: Dict[int, Dict[NGram, float]] = {}
    section_sizes: Dict[int, int] = {}

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        i += 1
    if i == len(lines):
        raise ArpaParseError("Missing \\data\\ header", path=path, line=1)
    i += 1

    # header: ngram k=n
    while i < len(lines) and lines[i].strip().startswith("ngram "):
        try:
            k, n = lines[i].strip()[len("ngram "):].split("=")
            declared[int(k)] = int(n)
        except ValueError:
            raise ArpaParseError(f"Bad count line '{lines[i]}'", path=path, line=i + 1)
        i += 1
    if not declared:
        raise ArpaParseError("No n-gram counts declared", path=path, line=i + 1)
    order = max(declared)
    if sorted(declared) != list(range(1, order + 1)) or order > MAX_ORDER:
        raise ArpaParseError(f"Unsupported orders {sorted(declared)}", path=path, line=i)

    current: Optional[int] = None
    ended = False
    for line_index in range(i, len(lines)):
        line = lines[line_index].strip()
        line_number = line_index + 1
        if not line:
            continue
        if line == "\\end\\":
            ended = True
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-len("-grams:")])
            except ValueError:
                raise ArpaParseError(f"Bad section header '{line}'",
                                     path=path, line=line_number)
            if current not in declared:
                raise ArpaParseError(f"Undeclared section {current}-grams",
                                     path=path, line=line_number)
            probs.setdefault(current, {})
            backoffs.setdefault(current, {})
            section_sizes.setdefault(current, 0)
            continue
        if current is None:
            raise ArpaParseError("Entry outside of any section",
                                 path=path, line=line_number)

        fields = line.split()
        if len(fields) not in (current + 1, current + 2):
            raise ArpaParseError(f"Expected {current}-gram entry", path=path, line=line_number)
        try:
            logprob = float(fields[0])
            backoff = float(fields[-1]) if len(fields) == current + 2 else None
        except ValueError:
            raise ArpaParseError("Non-numeric score", path=path, line=line_number)
        if not math.isfinite(logprob) or logprob > 0 or \
                (backoff is not None and not math.isfinite(backoff)):
            raise ArpaParseError("Scores must be finite, probabilities <= 0",
                                 path=path, line=line_number)

        ngram = tuple(fields[1:current + 1])
        section_sizes[current] += 1
        if ngram != (SENTENCE_START,):
            probs[current][ngram] = logprob
        if backoff is not None:
            backoffs[current][ngram] = backoff

    if not ended:
        raise ArpaParseError("Missing \\end\\ marker", path=path, line=len(lines))
    for k, n in declared.items():
        if section_sizes.get(k, 0) != n:
            raise CountMismatch(
                f"Declared {n} {k}-grams but found {section_sizes.get(k, 0)}",
                path=path)

    return NGramModel(order=order,
                      probs=[probs.get(k, {}) for k in range(1, order + 1)],
                      backoffs=[backoffs.get(k, {}) for k in range(1, order)])


def load_arpa(path: str) -> NGramModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read ARPA file: {e}", path=path)
    return read_arpa(text, path=path)


def read_ngram_counts(path: str, min_count: int = 1) -> Counter:
    """`ngram-words-space-separated<TAB>count` rows; repeated rows add up"""
    counts: Counter = Counter()
    for ngram, count in read_word_frequencies(path, min_count=min_count):
        counts[tuple(ngram.split())] += count
    if not counts:
        raise EmptyCorpus("Count file is empty", path=path)
    return counts


def read_sentences(path: str) -> List[List[str]]:
    """Whitespace-tokenized sentences, one per non-blank line"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [line.split() for line in f.read().splitlines() if line.strip()]
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read corpus: {e}", path=path)
