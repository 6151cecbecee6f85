"""End-to-end properties of the decoding stack on synthetic emissions"""

import random

import numpy as np
import pytest

from helpers import lexicon_from_spellings, synthetic_dev
from src.core.ctc_decoder import DecodeConfig, beam_decode, greedy_decode
from src.core.evaluation import (cer, decode_dev_set, edit_distance, grid_search,
                                 text_amount_sweep)
from src.core.lexicon import build_lexicon, build_trie
from src.core.ngram_lm import read_arpa, train_ngram, write_arpa
from src.core.romanizer import ALPHABET, BLANK, audit_vocabulary, romanize_text

# Code point blocks mixed into fuzz strings
FUZZ_BLOCKS = [
    (0x20, 0x7E), (0xA0, 0x24F), (0x300, 0x36F), (0x370, 0x3FF), (0x400, 0x4FF),
    (0x530, 0x58F), (0x5D0, 0x5EA), (0x600, 0x6FF), (0x900, 0x97F), (0xE00, 0xE7F),
    (0x1E00, 0x1EFF), (0x2000, 0x206F), (0x3040, 0x30FF), (0x4E00, 0x4FFF),
    (0xAC00, 0xAD00), (0xFB00, 0xFB4F), (0x1F300, 0x1F64F),
]


def fuzz_string(rng: random.Random) -> str:
    chars = []
    for _ in range(rng.randint(0, 12)):
        lo, hi = rng.choice(FUZZ_BLOCKS)
        chars.append(chr(rng.randint(lo, hi)))
    return "".join(chars)


def check_romanizer_closure(count: int, seed: int):
    rng = random.Random(seed)
    samples = [fuzz_string(rng) for _ in range(count)]
    counts = audit_vocabulary(samples)
    assert set(counts) <= set(ALPHABET.producible)
    assert len(counts) <= 28
    for sample in samples:
        once = romanize_text(sample)
        assert romanize_text(once.text).symbols == once.symbols


def test_romanizer_closure_sample():
    check_romanizer_closure(2000, seed=0)


@pytest.mark.slow
def test_romanizer_closure_fuzz():
    check_romanizer_closure(100_000, seed=1)


def test_perfect_emissions_are_recovered():
    words = ["casa", "perro", "gato", "la", "el", "Привет", "καλημέρα", "नमस्ते", "mundo",
             "don't"]
    lexicon = build_lexicon(words)
    assert len({e.spelling for e in lexicon}) == len(words)
    trie = build_trie(lexicon)
    rng = random.Random(5)
    for i in range(50):
        sentence = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        [utterance] = synthetic_dev(lexicon, [(f"p{i}", "xx", " ".join(sentence))],
                                    frames_per_symbol=rng.randint(1, 3))
        result = beam_decode(utterance.emissions, trie, lexicon)
        assert result.words == sentence
        assert cer(utterance.reference, result.text) == 0.0
        romanized = "|".join(lexicon[lexicon.word_index[w]].letters for w in sentence)
        assert greedy_decode(utterance.emissions).text == romanized


def test_edit_distance_on_random_pairs():
    rng = random.Random(2)

    def table(a, b):
        d = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
        d[:, 0] = np.arange(len(a) + 1)
        d[0, :] = np.arange(len(b) + 1)
        for i in range(1, len(a) + 1):
            for j in range(1, len(b) + 1):
                d[i, j] = min(d[i - 1, j] + 1, d[i, j - 1] + 1,
                              d[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
        return int(d[-1, -1])

    for _ in range(10_000):
        a = "".join(rng.choice("ab|c") for _ in range(rng.randint(0, 7)))
        b = "".join(rng.choice("ab|c") for _ in range(rng.randint(0, 7)))
        assert edit_distance(a, b) == table(a, b)


def test_arpa_round_trip_preserves_sentence_scores():
    rng = random.Random(9)
    corpus = [[rng.choice("abcde") for _ in range(rng.randint(1, 6))] for _ in range(30)]
    model = train_ngram(sentences=corpus, order=3)
    loaded = read_arpa(write_arpa(model))
    for sentence in corpus + [["z", "a"], []]:
        assert loaded.score_sentence(sentence) == pytest.approx(
            model.score_sentence(sentence), abs=1e-6)


def homophone_benchmark(seed: int = 0):
    """
    Ten unique words plus five homophone pairs split 90/10 by frequency.

    Even pairs list the rare spelling first, so the lexicon-only tie-break
    picks it; odd pairs list the frequent one first.
    """
    letters = "bdfgklmnprstvz"
    vowels = "aeiou"
    rng = random.Random(seed)
    spellings = set()
    while len(spellings) < 15:
        spellings.add(rng.choice(letters) + rng.choice(vowels) + rng.choice(letters))

    spellings = sorted(spellings)
    unique = [(s, s) for s in spellings[:10]]
    pairs = []
    for k, s in enumerate(spellings[10:]):
        frequent, rare = (s.upper(), s)
        pairs.append(((rare, s), (frequent, s)) if k % 2 == 0 else ((frequent, s), (rare, s)))
    lexicon = lexicon_from_spellings(unique + [w for pair in pairs for w in pair])

    counts = {(w,): 50 for w, _ in unique}
    for pair in pairs:
        for word, _ in pair:
            counts[(word,)] = 90 if word.isupper() else 10
    lm = train_ngram(counts=counts, order=1)

    rows = []
    for i in range(200):
        sentence = []
        for _ in range(3):
            if rng.random() < 0.5:
                _, spelling = rng.choice(pairs)[0]
                sentence.append(spelling.upper() if rng.random() < 0.9 else spelling)
            else:
                sentence.append(rng.choice(unique)[0])
        rows.append((f"h{i:03d}", f"lang{i % 2}", " ".join(sentence)))
    dev = synthetic_dev(lexicon, rows, frames_per_symbol=3, noise=0.2, seed=seed)
    return lexicon, lm, dev


@pytest.mark.slow
def test_unigram_lm_beats_lexicon_only():
    lexicon, lm, dev = homophone_benchmark()
    trie = build_trie(lexicon)
    cfg = DecodeConfig(beam_size=200)

    lex_report, _ = decode_dev_set(dev, lexicon, None, cfg, trie=trie)
    tuned = grid_search(dev, trie, lexicon, lm, [0.0, 0.5, 1.0, 2.0], [-1.0, 0.0, 1.0],
                        cfg_base=cfg, show_progress=False)
    assert lex_report.average_cer > 0.0
    assert tuned.best.lm_weight > 0.0
    assert tuned.best.average_cer <= 0.8 * lex_report.average_cer


def test_sweep_coverage_trend():
    words = ["ka", "mo", "ti", "pu", "se", "dy"]
    full = build_lexicon(words)
    dev = synthetic_dev(full, [(f"u{i}", f"l{i % 2}", w) for i, w in enumerate(words)])
    corpus = [[w] for w in words]
    rows = text_amount_sweep(corpus, [1, 2, 3, 6], dev, cfg=DecodeConfig(lm_weight=1.0),
                             show_progress=False)
    lex = [r.lex_cer for r in rows]
    assert lex == sorted(lex, reverse=True)
    assert lex[-1] == 0.0
    assert all(r.unigram_cer <= r.lex_cer for r in rows)


def test_blank_is_never_a_lexicon_symbol():
    lexicon = build_lexicon(["casa", "Привет"])
    assert all(BLANK not in e.spelling for e in lexicon)
