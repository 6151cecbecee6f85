import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from config.settings import PROGRESS_BAR_FORMAT
from .ctc_decoder import DecodeConfig, DecodeResult, LexiconBeamDecoder
from .emissions import EmissionMatrix, ManifestEntry, load_emissions
from .exceptions import IoFailure, ParseError
from .file_exporter import FileExporter
from .lexicon import Lexicon, LexiconTrie, build_trie
from .ngram_lm import NGramModel

logger = logging.getLogger(__name__)

DecodeItem = Union[EmissionMatrix, ManifestEntry]

# one decoder per worker process, built by the pool initializer
_worker_decoder: Optional[LexiconBeamDecoder] = None


@dataclass
class DecodeStats:
    """Statistics for one batch decoding run"""
    utterances: int = 0
    frames: int = 0
    forced_finalizations: int = 0
    elapsed: float = 0.0

    def log_summary(self):
        logger.info(
            f"Decoded {self.utterances} utterances ({self.frames} frames) "
            f"in {self.elapsed:.1f}s")
        if self.forced_finalizations:
            logger.warning(
                f"{self.forced_finalizations} utterances ended without a word "
                "boundary and were force-finalized")


def _decode_item(decoder: LexiconBeamDecoder, item: DecodeItem) -> DecodeResult:
    if isinstance(item, ManifestEntry):
        item = load_emissions(item.path, item.utterance_id)
    return decoder.decode(item)


def _init_worker(lexicon: Lexicon, lm: Optional[NGramModel], config: DecodeConfig):
    global _worker_decoder
    _worker_decoder = LexiconBeamDecoder(lexicon, None, lm, config)


def _decode_in_worker(item: DecodeItem) -> DecodeResult:
    return _decode_item(_worker_decoder, item)


class BatchDecoder:
    """Decodes many utterances with one shared lexicon, trie and LM"""

    def __init__(self, lexicon: Lexicon, lm: Optional[NGramModel] = None,
                 config: Optional[DecodeConfig] = None, trie: Optional[LexiconTrie] = None,
                 jobs: int = 1, show_progress: bool = True):
        self.lexicon = lexicon
        self.trie = trie if trie is not None else build_trie(lexicon)
        self.lm = lm
        self.config = config or DecodeConfig()
        self.jobs = max(1, jobs)
        self.show_progress = show_progress
        self.stats = DecodeStats()
        self.logger = logging.getLogger(__name__)

    def decode(self, items: Sequence[DecodeItem], desc: str = "Decoding") -> List[DecodeResult]:
        """Results come back in input order regardless of `jobs`"""
        start = time.perf_counter()
        progress = dict(total=len(items), desc=desc, bar_format=PROGRESS_BAR_FORMAT,
                        disable=not self.show_progress)

        if self.jobs == 1 or len(items) < 2:
            decoder = LexiconBeamDecoder(self.lexicon, self.trie, self.lm, self.config)
            results = [_decode_item(decoder, item) for item in tqdm(items, **progress)]
        else:
            chunksize = max(1, len(items) // (self.jobs * 4))
            with ProcessPoolExecutor(max_workers=self.jobs, initializer=_init_worker,
                                     initargs=(self.lexicon, self.lm, self.config)) as pool:
                results = list(tqdm(pool.map(_decode_in_worker, items, chunksize=chunksize),
                                    **progress))

        self.stats.utterances += len(results)
        self.stats.frames += sum(r.frames for r in results)
        self.stats.forced_finalizations += sum(r.forced_finalization for r in results)
        self.stats.elapsed += time.perf_counter() - start
        return results


def hypothesis_rows(results: Sequence[DecodeResult]) -> List[Tuple[str, str, str, str]]:
    """`utterance_id<TAB>words<TAB>total_score<TAB>forced_finalization` rows"""
    return [(r.utterance_id, r.text, f"{r.total_score:.6f}",
             "true" if r.forced_finalization else "false") for r in results]


def write_hypotheses(results: Sequence[DecodeResult], filepath: Union[str, Path]):
    FileExporter.export_tsv(hypothesis_rows(results), filepath)


def read_hypotheses(filepath: Union[str, Path]) -> Dict[str, str]:
    """Map utterance id to decoded text"""
    path = str(filepath)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailure(f"Cannot read hypotheses: {e}", path=path)

    hypotheses: Dict[str, str] = {}
    for line_number, line in enumerate(lines, 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4 or not fields[0] or fields[3] not in ("true", "false"):
            raise ParseError("Expected 'utterance_id<TAB>words<TAB>score<TAB>true|false'",
                             path=path, line=line_number)
        try:
            float(fields[2])
        except ValueError:
            raise ParseError(f"Score '{fields[2]}' is not a number", path=path, line=line_number)
        if fields[0] in hypotheses:
            raise ParseError(f"Duplicate utterance '{fields[0]}'", path=path, line=line_number)
        hypotheses[fields[0]] = fields[1]
    return hypotheses
