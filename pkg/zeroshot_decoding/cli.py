"""
Command-line pipeline for zero-shot decoding with word lists and n-gram LMs.

    romanize -> build-lexicon -> train-lm -> synth -> decode -> eval -> tune/sweep/compare

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from tqdm import tqdm

from config.settings import (DEFAULT_BEAM_SIZE, DEFAULT_BEAM_THRESHOLD, DEFAULT_DISCOUNT,
                             DEFAULT_FALLBACK_POLICY, DEFAULT_LM_ORDER, DEFAULT_LM_WEIGHT,
                             DEFAULT_LM_WEIGHT_GRID, DEFAULT_WORD_SCORE,
                             DEFAULT_WORD_SCORE_GRID, EMISSION_SUFFIX, LOG_FORMAT,
                             MANIFEST_NAME, PROGRESS_BAR_FORMAT)
from src.core.batch_decoding import BatchDecoder, read_hypotheses, write_hypotheses
from src.core.ctc_decoder import DecodeConfig
from src.core.emissions import (ManifestEntry, read_manifest, save_emissions,
                                synthesize_emissions, utterance_seed, write_manifest)
from src.core.evaluation import (SWEEP_COLUMNS, DecodingSetting, compare_settings,
                                 evaluate_hypotheses, grid_search, load_dev_set,
                                 read_references, text_amount_sweep)
from src.core.exceptions import (EmptyReference, InvalidConfig, InvalidDiscount,
                                 InvalidOrder, ParseError, UsageError, ZeroShotError)
from src.core.file_exporter import FileExporter
from src.core.lexicon import (build_lexicon, read_lexicon, read_word_frequencies,
                              read_word_list, serialize_lexicon)
from src.core.ngram_lm import (load_arpa, read_ngram_counts, read_sentences, train_ngram,
                               write_arpa)
from src.core.romanizer import FALLBACK_POLICIES, SEPARATOR, Romanizer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

logger = logging.getLogger("zeroshot_decoding")

FORMATS_HELP = """\
file formats (UTF-8, one record per line, TAB-separated):
  word list        casa
  frequency list   casa<TAB>42            (bigram rows: "la casa<TAB>7")
  sentence corpus  la casa es grande
  lexicon          casa<TAB>c a s a |
  references       utt001<TAB>es<TAB>la casa
  manifest         utt001<TAB>utt001.ctce<TAB>la casa
  hypotheses       utt001<TAB>la casa<TAB>-12.345678<TAB>false
  ARPA LM          -0.2218487<TAB>the[<TAB>backoff]   (\\data\\, \\1-grams:, ..., \\end\\)
  script table     ж<TAB>zh   (optional flag column: inherent | vowel-sign;
                   "#!range<TAB>0400<TAB>04FF" declares the covered codepoints)
  emissions .ctce  little-endian binary: "CTCE" u32 version=1 u32 frames u32 vocab,
                   vocab x (u16 length + UTF-8 symbol), frames x vocab float32 log-probs
  sweep CSV        size,lex_cer,1gram_cer
  grid             LO:HI:STEP, e.g. 0:5:0.25 (inclusive), or a single value
"""


class CliParser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting on bad usage"""

    def error(self, message):
        raise UsageError(message)


def positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{value}'")
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def finite_float(value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{value}'")
    if not math.isfinite(number):
        raise argparse.ArgumentTypeError(f"must be finite, got {value}")
    return number


def non_negative_float(value: str) -> float:
    number = finite_float(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {number}")
    return number


def positive_float(value: str) -> float:
    number = finite_float(value)
    if number <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {number}")
    return number


def unit_interval(value: str) -> float:
    """[0, 1)"""
    number = finite_float(value)
    if not 0 <= number < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {number}")
    return number


def open_unit_interval(value: str) -> float:
    number = finite_float(value)
    if not 0 < number < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {number}")
    return number


def parse_grid(value: str) -> List[float]:
    """`LO:HI:STEP`, inclusive of HI when HI - LO is a multiple of STEP"""
    parts = value.split(":")
    if len(parts) == 1:
        return [finite_float(parts[0])]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEP, got '{value}'")
    lo, hi, step = (finite_float(p) for p in parts)
    if step <= 0:
        raise argparse.ArgumentTypeError(f"STEP must be > 0 in '{value}'")
    if hi < lo:
        raise argparse.ArgumentTypeError(f"HI must be >= LO in '{value}'")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(count)]


def parse_sizes(value: str) -> List[int]:
    try:
        return [positive_int(s.strip()) for s in value.split(",") if s.strip()]
    except argparse.ArgumentTypeError as e:
        raise argparse.ArgumentTypeError(f"bad size list '{value}': {e}")


def add_romanizer_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--tables", action="append", default=[], metavar="DIR",
                        help="extra directory of romanization tables (repeatable)")
    parser.add_argument("--fallback", choices=FALLBACK_POLICIES,
                        default=DEFAULT_FALLBACK_POLICY,
                        help="letters of unsupported scripts: drop or map to apostrophe")


def add_decode_flags(parser: argparse.ArgumentParser, weights: bool = True):
    if weights:
        parser.add_argument("--lm-weight", type=non_negative_float,
                            default=DEFAULT_LM_WEIGHT, help="LM weight (alpha)")
        parser.add_argument("--word-score", type=finite_float,
                            default=DEFAULT_WORD_SCORE, help="per-word score (beta)")
    parser.add_argument("--beam", type=positive_int, default=DEFAULT_BEAM_SIZE,
                        help=f"beam size (default {DEFAULT_BEAM_SIZE})")
    parser.add_argument("--beam-threshold", type=positive_float,
                        default=DEFAULT_BEAM_THRESHOLD, help="pruning margin, natural log")
    parser.add_argument("--no-eos", action="store_true",
                        help="do not add the end-of-sentence LM score")
    parser.add_argument("--jobs", type=positive_int, default=1,
                        help="worker processes for decoding")


def decode_config(args: argparse.Namespace) -> DecodeConfig:
    return DecodeConfig(beam_size=args.beam, beam_threshold=args.beam_threshold,
                        lm_weight=getattr(args, "lm_weight", DEFAULT_LM_WEIGHT),
                        word_score=getattr(args, "word_score", DEFAULT_WORD_SCORE),
                        apply_eos=not args.no_eos)


def make_romanizer(args: argparse.Namespace) -> Romanizer:
    return Romanizer.from_tables([Path(d) for d in args.tables], args.fallback)


def cmd_romanize(args: argparse.Namespace) -> int:
    romanizer = make_romanizer(args)
    lines = romanizer.romanize_file(args.input)
    FileExporter.write_text("".join(line + "\n" for line in lines), args.out)
    return EXIT_OK


def cmd_build_lexicon(args: argparse.Namespace) -> int:
    if args.min_count != 1 and not args.freq:
        raise UsageError("--min-count requires --freq")
    romanizer = make_romanizer(args)

    if args.freq:
        rows = read_word_frequencies(args.freq, min_count=args.min_count)
        words = [w for w, _ in rows if len(w.split()) == 1]
    else:
        words = read_word_list(args.words)

    lexicon = build_lexicon(words, romanizer.scheme, romanizer.stats)
    romanizer.stats.log_summary()
    FileExporter.write_text(serialize_lexicon(lexicon), args.out)
    logger.info(f"Wrote {len(lexicon)} entries to {args.out}")
    return EXIT_OK


def cmd_train_lm(args: argparse.Namespace) -> int:
    if args.min_count != 1 and not args.counts:
        raise UsageError("--min-count requires --counts")
    if args.corpus:
        model = train_ngram(sentences=read_sentences(args.corpus), order=args.order,
                            discount=args.discount)
    else:
        model = train_ngram(counts=read_ngram_counts(args.counts, args.min_count),
                            order=args.order, discount=args.discount)
    FileExporter.write_text(write_arpa(model), args.out)
    return EXIT_OK


def _check_utterance_id(utterance_id: str, path: str):
    if "/" in utterance_id or "\\" in utterance_id or utterance_id.startswith("."):
        raise ParseError(f"Utterance id '{utterance_id}' cannot be used as a file name",
                         path=path)


def cmd_synth(args: argparse.Namespace) -> int:
    romanizer = make_romanizer(args)
    references = read_references(args.refs)
    out_dir = Path(FileExporter.create_output_directory(args.out))

    entries: List[ManifestEntry] = []
    for ref in tqdm(references, desc="Synthesizing", bar_format=PROGRESS_BAR_FORMAT):
        _check_utterance_id(ref.utterance_id, args.refs)
        romanized = romanizer.text(ref.text)
        if not romanized.symbols:
            raise EmptyReference(
                f"Utterance '{ref.utterance_id}' romanizes to nothing", path=args.refs)
        m = synthesize_emissions(
            romanized.symbols + (SEPARATOR,), frames_per_symbol=args.frames_per_symbol,
            noise=args.noise, seed=utterance_seed(args.seed, ref.utterance_id),
            jitter=args.jitter, utterance_id=ref.utterance_id)
        path = out_dir / f"{ref.utterance_id}{EMISSION_SUFFIX}"
        save_emissions(m, path)
        entries.append(ManifestEntry(ref.utterance_id, path, ref.text))

    write_manifest(entries, out_dir / MANIFEST_NAME)
    romanizer.stats.log_summary()
    logger.info(f"Wrote {len(entries)} emission files to {out_dir}")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    config = decode_config(args)
    lexicon = read_lexicon(args.lexicon)
    lm = load_arpa(args.lm) if args.lm else None
    entries = read_manifest(args.manifest)

    decoder = BatchDecoder(lexicon, lm, config, jobs=args.jobs)
    results = decoder.decode(entries)
    decoder.stats.log_summary()
    write_hypotheses(results, args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_hypotheses(read_references(args.refs), read_hypotheses(args.hyps))
    print(report.format_table())
    FileExporter.export_json(report.to_dict(), args.out)
    return EXIT_OK


def cmd_tune(args: argparse.Namespace) -> int:
    config = decode_config(args)
    lexicon = read_lexicon(args.lexicon)
    lm = load_arpa(args.lm) if args.lm else None
    dev = load_dev_set(args.manifest, args.refs)

    result = grid_search(dev, None, lexicon, lm, args.lm_weight_grid, args.word_score_grid,
                         config, jobs=args.jobs)
    print("=" * 70)
    print(f"Best: --lm-weight {result.best.lm_weight} --word-score {result.best.word_score} "
          f"(average CER {result.best.average_cer * 100:.2f}%)")
    print("=" * 70)
    FileExporter.export_json(result.to_dict(), args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = decode_config(args)
    romanizer = make_romanizer(args)
    if args.corpus_format == "sentences":
        corpus = read_sentences(args.corpus)
    else:
        corpus = read_word_frequencies(args.corpus)
    dev = load_dev_set(args.manifest, args.refs)

    rows = text_amount_sweep(corpus, args.sizes, dev, config,
                             corpus_format=args.corpus_format, scheme=romanizer.scheme,
                             discount=args.discount, jobs=args.jobs)
    FileExporter.export_csv([r.to_row() for r in rows], SWEEP_COLUMNS, args.out)
    return EXIT_OK


def _parse_named_lm(value: str):
    name, sep, path = value.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=FILE, got '{value}'")
    return name, path


def cmd_compare(args: argparse.Namespace) -> int:
    config = decode_config(args)
    names = [name for name, _ in args.lm]
    if "lex" in names or len(set(names)) != len(names):
        raise UsageError("--lm names must be unique and differ from 'lex'")
    lexicon = read_lexicon(args.lexicon)
    dev = load_dev_set(args.manifest, args.refs)

    settings = {"lex": DecodingSetting(None, config.with_weights(0.0, config.word_score))}
    for name, path in args.lm:
        settings[name] = DecodingSetting(load_arpa(path), config)
    reports = compare_settings(dev, lexicon, settings, jobs=args.jobs)

    for name, report in reports.items():
        print(report.format_table(title=f"Setting: {name}"))
    FileExporter.export_json({name: r.to_dict() for name, r in reports.items()}, args.out)
    return EXIT_OK


def build_parser() -> CliParser:
    parser = CliParser(prog="zeroshot_decoding", description=__doc__,
                       epilog=FORMATS_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    def subcommand(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text, description=help_text,
                                    epilog=FORMATS_HELP,
                                    formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.set_defaults(handler=handler)
        return sub

    sub = subcommand("romanize", cmd_romanize, "romanize a text file line by line")
    sub.add_argument("--in", dest="input", required=True, metavar="FILE")
    sub.add_argument("--out", required=True, metavar="FILE")
    add_romanizer_flags(sub)

    sub = subcommand("build-lexicon", cmd_build_lexicon,
                     "build a word -> spelling lexicon from a word or frequency list")
    source = sub.add_mutually_exclusive_group(required=True)
    source.add_argument("--words", metavar="FILE", help="one word per line")
    source.add_argument("--freq", metavar="FILE", help="word<TAB>count rows")
    sub.add_argument("--min-count", type=positive_int, default=1,
                     help="drop frequency rows below this count")
    sub.add_argument("--out", required=True, metavar="FILE")
    add_romanizer_flags(sub)

    sub = subcommand("train-lm", cmd_train_lm, "train a backoff n-gram LM, written as ARPA")
    source = sub.add_mutually_exclusive_group(required=True)
    source.add_argument("--corpus", metavar="FILE", help="one sentence per line")
    source.add_argument("--counts", metavar="FILE", help="ngram<TAB>count rows")
    sub.add_argument("--order", type=int, choices=(1, 2, 3), default=DEFAULT_LM_ORDER)
    sub.add_argument("--discount", type=open_unit_interval, default=DEFAULT_DISCOUNT)
    sub.add_argument("--min-count", type=positive_int, default=1)
    sub.add_argument("--out", required=True, metavar="FILE")

    sub = subcommand("synth", cmd_synth, "synthesize emission files from references")
    sub.add_argument("--refs", required=True, metavar="FILE")
    sub.add_argument("--out", required=True, metavar="DIR")
    sub.add_argument("--frames-per-symbol", type=positive_int, default=1)
    sub.add_argument("--noise", type=unit_interval, default=0.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--jitter", action="store_true",
                     help="perturb non-target probabilities by up to 10%%")
    add_romanizer_flags(sub)

    sub = subcommand("decode", cmd_decode, "lexicon-constrained beam search decoding")
    sub.add_argument("--manifest", required=True, metavar="FILE")
    sub.add_argument("--lexicon", required=True, metavar="FILE")
    sub.add_argument("--lm", metavar="FILE", help="ARPA language model")
    sub.add_argument("--out", required=True, metavar="FILE")
    add_decode_flags(sub)

    sub = subcommand("eval", cmd_eval, "score hypotheses against references")
    sub.add_argument("--refs", required=True, metavar="FILE")
    sub.add_argument("--hyps", required=True, metavar="FILE")
    sub.add_argument("--out", required=True, metavar="FILE")

    sub = subcommand("tune", cmd_tune, "grid-search LM weight and word score on a dev set")
    sub.add_argument("--manifest", required=True, metavar="FILE")
    sub.add_argument("--refs", required=True, metavar="FILE")
    sub.add_argument("--lexicon", required=True, metavar="FILE")
    sub.add_argument("--lm", metavar="FILE")
    sub.add_argument("--lm-weight-grid", type=parse_grid,
                     default=parse_grid(DEFAULT_LM_WEIGHT_GRID), metavar="LO:HI:STEP")
    sub.add_argument("--word-score-grid", type=parse_grid,
                     default=parse_grid(DEFAULT_WORD_SCORE_GRID), metavar="LO:HI:STEP")
    sub.add_argument("--out", required=True, metavar="FILE")
    add_decode_flags(sub, weights=False)

    sub = subcommand("sweep", cmd_sweep,
                     "lexicon-only vs unigram CER for growing amounts of text")
    sub.add_argument("--corpus", required=True, metavar="FILE")
    sub.add_argument("--corpus-format", choices=("sentences", "counts"), default="sentences")
    sub.add_argument("--sizes", required=True, type=parse_sizes, metavar="N1,N2,...")
    sub.add_argument("--manifest", required=True, metavar="FILE")
    sub.add_argument("--refs", required=True, metavar="FILE")
    sub.add_argument("--discount", type=open_unit_interval, default=DEFAULT_DISCOUNT)
    sub.add_argument("--out", required=True, metavar="FILE")
    add_decode_flags(sub)
    add_romanizer_flags(sub)

    sub = subcommand("compare", cmd_compare,
                     "compare lexicon-only decoding with one or more LMs")
    sub.add_argument("--manifest", required=True, metavar="FILE")
    sub.add_argument("--refs", required=True, metavar="FILE")
    sub.add_argument("--lexicon", required=True, metavar="FILE")
    sub.add_argument("--lm", type=_parse_named_lm, action="append", default=[],
                     metavar="NAME=FILE")
    sub.add_argument("--out", required=True, metavar="FILE")
    add_decode_flags(sub)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "sizes", None) == []:
            raise UsageError("argument --sizes: no sizes given")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format=LOG_FORMAT)
        if args.command in ("decode", "tune", "sweep", "compare"):
            decode_config(args)
        return args.handler(args)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    except (UsageError, InvalidConfig, InvalidDiscount, InvalidOrder) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ZeroShotError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
