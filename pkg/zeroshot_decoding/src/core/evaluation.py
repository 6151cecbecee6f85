"""
Error rates, per-language reports, weight tuning and text-amount sweeps.

Per-language CER is micro-averaged (total edits over total reference
characters); the cross-language average weights every language equally.
"""

import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import editdistance
from tqdm import tqdm

from config.settings import DEFAULT_DISCOUNT, PROGRESS_BAR_FORMAT
from .batch_decoding import BatchDecoder
from .ctc_decoder import DecodeConfig, DecodeResult
from .emissions import EmissionMatrix, ManifestEntry, load_emissions, read_manifest
from .exceptions import (EmptyLanguage, EmptyReference, InvalidConfig, IoFailure,
                         ParseError, SizeExceedsCorpus)
from .lexicon import Lexicon, LexiconTrie, build_lexicon, build_trie
from .ngram_lm import NGramModel, train_ngram
from .romanizer import RomanScheme

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["size", "lex_cer", "1gram_cer"]


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends"""
    return " ".join(text.split())


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    return int(editdistance.eval(list(ref), list(hyp)))


def cer(ref: str, hyp: str) -> float:
    ref, hyp = normalize_text(ref), normalize_text(hyp)
    if not ref:
        raise EmptyReference("Reference is empty after normalization")
    return edit_distance(ref, hyp) / len(ref)


def wer(ref: str, hyp: str) -> float:
    ref_words, hyp_words = ref.split(), hyp.split()
    if not ref_words:
        raise EmptyReference("Reference has no words")
    return edit_distance(ref_words, hyp_words) / len(ref_words)


class ErrorRateAccumulator:
    """Running character and word edit totals over many utterances"""

    def __init__(self):
        self.reset()

    def update(self, ref: str, hyp: str):
        ref, hyp = normalize_text(ref), normalize_text(hyp)
        if not ref:
            raise EmptyReference("Reference is empty after normalization")
        self.char_edits += edit_distance(ref, hyp)
        self.ref_chars += len(ref)
        self.word_edits += edit_distance(ref.split(), hyp.split())
        self.ref_words += len(ref.split())
        self.utterances += 1

    @property
    def cer(self) -> float:
        return self.char_edits / self.ref_chars if self.ref_chars else 0.0

    @property
    def wer(self) -> float:
        return self.word_edits / self.ref_words if self.ref_words else 0.0

    def reset(self):
        self.char_edits = 0
        self.ref_chars = 0
        self.word_edits = 0
        self.ref_words = 0
        self.utterances = 0


@dataclass
class LanguageScore:
    edit_distance_total: int
    ref_char_total: int
    cer: float
    utterance_count: int
    word_edit_total: int = 0
    ref_word_total: int = 0
    wer: float = 0.0


@dataclass
class EvalReport:
    per_language: Dict[str, LanguageScore]
    average_cer: float
    average_wer: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "average_cer": self.average_cer,
            "average_wer": self.average_wer,
            "per_language": {lang: asdict(s) for lang, s in self.per_language.items()},
        }

    def format_table(self, title: str = "Evaluation") -> str:
        lines = ["=" * 70, title, "=" * 70,
                 f"{'language':<20}{'utts':>8}{'edits':>10}{'chars':>10}{'CER':>10}{'WER':>10}",
                 "-" * 70]
        for lang, s in self.per_language.items():
            lines.append(f"{lang:<20}{s.utterance_count:>8}{s.edit_distance_total:>10}"
                         f"{s.ref_char_total:>10}{s.cer * 100:>9.2f}%{s.wer * 100:>9.2f}%")
        lines.append("-" * 70)
        lines.append(f"{'average (unweighted)':<48}"
                     f"{self.average_cer * 100:>9.2f}%{self.average_wer * 100:>9.2f}%")
        lines.append("=" * 70)
        return "\n".join(lines)


def evaluate_corpus(pairs: Mapping[str, Sequence[Tuple[str, str]]]) -> EvalReport:
    """Score (ref, hyp) pairs grouped by language; languages are reported sorted"""
    if not pairs:
        raise EmptyLanguage("No languages to evaluate")

    per_language: Dict[str, LanguageScore] = OrderedDict()
    for language in sorted(pairs):
        language_pairs = pairs[language]
        if not language_pairs:
            raise EmptyLanguage(f"Language '{language}' has no utterances")
        acc = ErrorRateAccumulator()
        for ref, hyp in language_pairs:
            acc.update(ref, hyp)
        per_language[language] = LanguageScore(
            edit_distance_total=acc.char_edits, ref_char_total=acc.ref_chars,
            cer=acc.cer, utterance_count=acc.utterances,
            word_edit_total=acc.word_edits, ref_word_total=acc.ref_words, wer=acc.wer)

    scores = list(per_language.values())
    return EvalReport(
        per_language=per_language,
        average_cer=sum(s.cer for s in scores) / len(scores),
        average_wer=sum(s.wer for s in scores) / len(scores))


@dataclass(frozen=True)
class Reference:
    utterance_id: str
    language: str
    text: str


def read_references(filepath: Union[str, Path]) -> List[Reference]:
    """`utterance_id<TAB>language<TAB>text` rows"""
    path = str(filepath)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read references: {e}", path=path)

    references: List[Reference] = []
    seen = set()
    for line_number, line in enumerate(lines, 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3 or not fields[0] or not fields[1]:
            raise ParseError("Expected 'utterance_id<TAB>language<TAB>text'",
                             path=path, line=line_number)
        if fields[0] in seen:
            raise ParseError(f"Duplicate utterance '{fields[0]}'", path=path, line=line_number)
        if not normalize_text(fields[2]):
            raise EmptyReference(f"Utterance '{fields[0]}' has an empty reference",
                                 path=path, line=line_number)
        seen.add(fields[0])
        references.append(Reference(*fields))
    return references


def evaluate_hypotheses(references: Sequence[Reference],
                        hypotheses: Mapping[str, str]) -> EvalReport:
    """Missing hypotheses count as empty output"""
    pairs: Dict[str, List[Tuple[str, str]]] = {}
    missing = 0
    for ref in references:
        hyp = hypotheses.get(ref.utterance_id)
        if hyp is None:
            missing += 1
            hyp = ""
        pairs.setdefault(ref.language, []).append((ref.text, hyp))
    if missing:
        logger.warning(f"{missing} references have no hypothesis; scored as empty")
    return evaluate_corpus(pairs)


@dataclass
class DevUtterance:
    utterance_id: str
    language: str
    reference: str
    emissions: Union[EmissionMatrix, ManifestEntry]


def load_dev_set(manifest_path: Union[str, Path], refs_path: Union[str, Path],
                 preload: bool = True) -> List[DevUtterance]:
    """Join manifest entries with reference rows; preload reads every matrix once"""
    references = {r.utterance_id: r for r in read_references(refs_path)}
    dev: List[DevUtterance] = []
    for entry in read_manifest(manifest_path):
        ref = references.get(entry.utterance_id)
        if ref is None:
            raise ParseError(f"Utterance '{entry.utterance_id}' has no reference",
                             path=str(refs_path))
        emissions = load_emissions(entry.path, entry.utterance_id) if preload else entry
        dev.append(DevUtterance(entry.utterance_id, ref.language, ref.text, emissions))

    unused = len(references) - len(dev)
    if unused:
        logger.warning(f"{unused} references have no emissions in {manifest_path}")
    return dev


def decode_dev_set(dev: Sequence[DevUtterance], lexicon: Lexicon, lm: Optional[NGramModel],
                   config: DecodeConfig, trie: Optional[LexiconTrie] = None, jobs: int = 1,
                   show_progress: bool = False) -> Tuple[EvalReport, List[DecodeResult]]:
    decoder = BatchDecoder(lexicon, lm, config, trie=trie, jobs=jobs,
                           show_progress=show_progress)
    results = decoder.decode([u.emissions for u in dev])
    pairs: Dict[str, List[Tuple[str, str]]] = {}
    for utterance, result in zip(dev, results):
        pairs.setdefault(utterance.language, []).append((utterance.reference, result.text))
    return evaluate_corpus(pairs), results


@dataclass(frozen=True)
class GridPoint:
    lm_weight: float
    word_score: float
    average_cer: float


@dataclass
class TuneResult:
    grid: List[GridPoint]
    best: GridPoint

    def to_dict(self) -> Dict:
        # best uses the decode flag names so tuned weights transfer directly
        return {
            "best": {"lm_weight": self.best.lm_weight, "word_score": self.best.word_score,
                     "average_cer": self.best.average_cer},
            "grid": [asdict(p) for p in self.grid],
        }


def grid_search(dev: Sequence[DevUtterance], trie: Optional[LexiconTrie], lex: Lexicon,
                lm: Optional[NGramModel], lm_weights: Sequence[float],
                word_scores: Sequence[float], cfg_base: Optional[DecodeConfig] = None,
                jobs: int = 1, show_progress: bool = True) -> TuneResult:
    """Decode the dev set at every (lm_weight, word_score); ties go to smaller weights"""
    if not lm_weights or not word_scores:
        raise InvalidConfig("Tuning grids must be non-empty")
    if not dev:
        raise EmptyLanguage("Dev set is empty")

    cfg_base = cfg_base or DecodeConfig()
    trie = trie if trie is not None else build_trie(lex)
    points = [(a, b) for a in lm_weights for b in word_scores]
    grid: List[GridPoint] = []

    for lm_weight, word_score in tqdm(points, desc="Tuning", bar_format=PROGRESS_BAR_FORMAT,
                                      disable=not show_progress):
        report, _ = decode_dev_set(dev, lex, lm, cfg_base.with_weights(lm_weight, word_score),
                                   trie=trie, jobs=jobs)
        grid.append(GridPoint(lm_weight, word_score, report.average_cer))
        logger.debug(f"lm_weight={lm_weight} word_score={word_score} "
                     f"cer={report.average_cer:.4f}")

    best = min(grid, key=lambda p: (p.average_cer, p.lm_weight, p.word_score))
    logger.info(f"Best weights: lm_weight={best.lm_weight}, word_score={best.word_score} "
                f"(average CER {best.average_cer:.4f})")
    return TuneResult(grid=grid, best=best)


@dataclass
class SweepRow:
    size: int
    lex_cer: float
    unigram_cer: float

    def to_row(self) -> Dict:
        return {"size": self.size, "lex_cer": self.lex_cer, "1gram_cer": self.unigram_cer}


def _corpus_slice_resources(corpus: Sequence, corpus_format: str,
                            scheme: Optional[RomanScheme],
                            discount: float) -> Tuple[Lexicon, NGramModel]:
    if corpus_format == "sentences":
        words = [w for sentence in corpus for w in sentence]
        lm = train_ngram(sentences=corpus, order=1, discount=discount)
    elif corpus_format == "counts":
        unigrams = [(w, c) for w, c in corpus if len(w.split()) == 1]
        words = [w for w, _ in unigrams]
        lm = train_ngram(counts={(w,): c for w, c in unigrams}, order=1, discount=discount)
    else:
        raise InvalidConfig(f"Unknown corpus format '{corpus_format}'")
    return build_lexicon(words, scheme), lm


def text_amount_sweep(corpus: Sequence, sizes: Sequence[int], dev: Sequence[DevUtterance],
                      cfg: Optional[DecodeConfig] = None, corpus_format: str = "sentences",
                      scheme: Optional[RomanScheme] = None,
                      discount: float = DEFAULT_DISCOUNT, jobs: int = 1,
                      show_progress: bool = True) -> List[SweepRow]:
    """
    Lexicon-only and unigram-LM CER for growing prefixes of a text corpus.

    `corpus` holds word sequences (`sentences`) or `(word, count)` rows
    (`counts`). The lexicon-only run decodes with lm_weight 0; the unigram run
    uses `cfg` as given.
    """
    if not sizes:
        raise InvalidConfig("No sweep sizes given")
    if any(s < 1 for s in sizes) or any(a >= b for a, b in zip(sizes, sizes[1:])):
        raise InvalidConfig(f"Sweep sizes must be positive and ascending, got {list(sizes)}")
    if sizes[-1] > len(corpus):
        raise SizeExceedsCorpus(
            f"Size {sizes[-1]} exceeds the corpus of {len(corpus)} entries")

    cfg = cfg or DecodeConfig()
    rows: List[SweepRow] = []
    for size in tqdm(sizes, desc="Sweep", bar_format=PROGRESS_BAR_FORMAT,
                     disable=not show_progress):
        lexicon, lm = _corpus_slice_resources(corpus[:size], corpus_format, scheme, discount)
        trie = build_trie(lexicon)
        lex_report, _ = decode_dev_set(dev, lexicon, None, cfg.with_weights(0.0, cfg.word_score),
                                       trie=trie, jobs=jobs)
        lm_report, _ = decode_dev_set(dev, lexicon, lm, cfg, trie=trie, jobs=jobs)
        rows.append(SweepRow(size, lex_report.average_cer, lm_report.average_cer))
        logger.info(f"size={size}: {len(lexicon)} words, lex CER {lex_report.average_cer:.4f}, "
                    f"1-gram CER {lm_report.average_cer:.4f}")
    return rows


@dataclass
class DecodingSetting:
    lm: Optional[NGramModel]
    config: DecodeConfig = field(default_factory=DecodeConfig)


def compare_settings(dev: Sequence[DevUtterance], lexicon: Lexicon,
                     settings: Mapping[str, DecodingSetting], jobs: int = 1,
                     show_progress: bool = True) -> Dict[str, EvalReport]:
    """One report per named setting, e.g. lexicon-only vs unigram vs trigram"""
    trie = build_trie(lexicon)
    reports: Dict[str, EvalReport] = OrderedDict()
    for name, setting in tqdm(list(settings.items()), desc="Comparing",
                              bar_format=PROGRESS_BAR_FORMAT, disable=not show_progress):
        reports[name], _ = decode_dev_set(dev, lexicon, setting.lm, setting.config,
                                          trie=trie, jobs=jobs)
    return reports
