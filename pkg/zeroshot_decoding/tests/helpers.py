from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.core.emissions import EmissionMatrix, synthesize_emissions, utterance_seed
from src.core.evaluation import DevUtterance
from src.core.lexicon import Lexicon, LexiconEntry, LexiconTrie
from src.core.romanizer import ALPHABET, SEPARATOR


def random_emissions(rng: np.random.Generator, num_frames: int,
                     utterance_id: str = "rand", scale: float = 3.0) -> EmissionMatrix:
    """Random log-softmax rows; larger scale gives peakier frames"""
    logits = rng.normal(scale=scale, size=(num_frames, len(ALPHABET)))
    logits -= logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return EmissionMatrix(utterance_id=utterance_id, logp=logp)


def frame_argmax(m: EmissionMatrix) -> List[str]:
    """Argmax symbol per frame, ties to the lowest index"""
    return [ALPHABET[int(i)] for i in np.argmax(m.logp, axis=1)]


def terminal_nodes(trie: LexiconTrie) -> List[int]:
    return [n for n, ids in enumerate(trie.word_ids) if ids]


def lexicon_from_spellings(pairs: Iterable[Tuple[str, str]]) -> Lexicon:
    """(word, letters) pairs; the terminal separator is appended"""
    return Lexicon.from_entries(
        LexiconEntry(word=w, spelling=tuple(s) + (SEPARATOR,)) for w, s in pairs)


def sentence_emissions(lexicon: Lexicon, words: Sequence[str], frames_per_symbol: int = 1,
                       noise: float = 0.0, seed: int = 0, jitter: bool = False,
                       utterance_id: str = "utt") -> EmissionMatrix:
    """Emissions for the spellings of `words`, each ending in the separator"""
    symbols: List[str] = []
    for word in words:
        symbols.extend(lexicon[lexicon.word_index[word]].spelling)
    return synthesize_emissions(symbols, frames_per_symbol=frames_per_symbol, noise=noise,
                                seed=seed, jitter=jitter, utterance_id=utterance_id)


def synthetic_dev(lexicon: Lexicon, utterances: Sequence[Tuple[str, str, str]],
                  frames_per_symbol: int = 1, noise: float = 0.0, seed: int = 0):
    """(utterance_id, language, reference text) rows with emissions for their words"""
    dev = []
    for utterance_id, language, text in utterances:
        m = sentence_emissions(lexicon, text.split(), frames_per_symbol=frames_per_symbol,
                               noise=noise, seed=utterance_seed(seed, utterance_id),
                               jitter=noise > 0, utterance_id=utterance_id)
        dev.append(DevUtterance(utterance_id, language, text, m))
    return dev
