import json

import pytest

from cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, parse_grid, parse_sizes, run
from src.core.emissions import load_emissions, read_manifest
from src.core.ngram_lm import load_arpa

REFS = "u1\tes\tla casa\nu2\tes\tel perro\nu3\tpt\tel gato\nu4\tpt\tla casa el gato\n"
WORDS = "la\ncasa\nel\nperro\ngato\n"
CORPUS = "la casa\nel perro\nel gato\nla casa\nel gato\n"


@pytest.fixture
def inputs(tmp_path):
    (tmp_path / "refs.tsv").write_text(REFS, encoding="utf-8")
    (tmp_path / "words.txt").write_text(WORDS, encoding="utf-8")
    (tmp_path / "corpus.txt").write_text(CORPUS, encoding="utf-8")
    return tmp_path


def run_pipeline(base, out):
    out.mkdir()
    steps = [
        ["build-lexicon", "--words", base / "words.txt", "--out", out / "lexicon.tsv"],
        ["train-lm", "--corpus", base / "corpus.txt", "--order", "2", "--out", out / "lm.arpa"],
        ["synth", "--refs", base / "refs.tsv", "--out", out / "emissions",
         "--frames-per-symbol", "2", "--noise", "0.3", "--seed", "11", "--jitter"],
        ["decode", "--manifest", out / "emissions" / "manifest.tsv",
         "--lexicon", out / "lexicon.tsv", "--lm", out / "lm.arpa", "--lm-weight", "0.5",
         "--beam", "500", "--out", out / "hyps.tsv"],
        ["eval", "--refs", base / "refs.tsv", "--hyps", out / "hyps.tsv",
         "--out", out / "report.json"],
    ]
    for step in steps:
        assert run([str(a) for a in step]) == EXIT_OK, step


class TestPipeline:
    def test_end_to_end(self, inputs, capsys):
        out = inputs / "run"
        run_pipeline(inputs, out)

        lexicon_lines = (out / "lexicon.tsv").read_text(encoding="utf-8").splitlines()
        assert lexicon_lines[1] == "casa\tc a s a |"
        assert load_arpa(str(out / "lm.arpa")).order == 2

        entries = read_manifest(out / "emissions" / "manifest.tsv")
        assert [e.utterance_id for e in entries] == ["u1", "u2", "u3", "u4"]
        # "la casa" -> l a | c a s a |, two frames per symbol
        assert load_emissions(entries[0].path).num_frames == 16

        hyps = (out / "hyps.tsv").read_text(encoding="utf-8").splitlines()
        assert hyps[0].split("\t")[0:2] == ["u1", "la casa"]
        assert hyps[0].split("\t")[3] == "false"

        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["average_cer"] == 0.0
        assert sorted(report["per_language"]) == ["es", "pt"]
        assert "average (unweighted)" in capsys.readouterr().out

    def test_double_run_is_byte_identical(self, inputs):
        run_pipeline(inputs, inputs / "first")
        run_pipeline(inputs, inputs / "second")
        first = sorted(p for p in (inputs / "first").rglob("*") if p.is_file())
        for path in first:
            twin = inputs / "second" / path.relative_to(inputs / "first")
            assert twin.read_bytes() == path.read_bytes(), path.name

    def test_parallel_decode_matches_serial(self, inputs):
        out = inputs / "run"
        run_pipeline(inputs, out)
        assert run(["decode", "--manifest", str(out / "emissions" / "manifest.tsv"),
                    "--lexicon", str(out / "lexicon.tsv"), "--lm", str(out / "lm.arpa"),
                    "--lm-weight", "0.5", "--beam", "500", "--jobs", "2",
                    "--out", str(out / "hyps2.tsv")]) == EXIT_OK
        assert (out / "hyps2.tsv").read_bytes() == (out / "hyps.tsv").read_bytes()

    def test_tune_sweep_compare(self, inputs, capsys):
        out = inputs / "run"
        run_pipeline(inputs, out)
        dev = ["--manifest", str(out / "emissions" / "manifest.tsv"),
               "--refs", str(inputs / "refs.tsv")]

        assert run(["tune", *dev, "--lexicon", str(out / "lexicon.tsv"),
                    "--lm", str(out / "lm.arpa"), "--lm-weight-grid", "0:1:0.5",
                    "--word-score-grid", "0", "--beam", "200",
                    "--out", str(out / "tune.json")]) == EXIT_OK
        tuned = json.loads((out / "tune.json").read_text(encoding="utf-8"))
        assert len(tuned["grid"]) == 3
        assert set(tuned["best"]) == {"lm_weight", "word_score", "average_cer"}
        assert "Best: --lm-weight" in capsys.readouterr().out

        assert run(["sweep", *dev, "--corpus", str(inputs / "corpus.txt"),
                    "--sizes", "1,3,5", "--lm-weight", "1", "--beam", "200",
                    "--out", str(out / "sweep.csv")]) == EXIT_OK
        lines = (out / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "size,lex_cer,1gram_cer"
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "3", "5"]

        assert run(["compare", *dev, "--lexicon", str(out / "lexicon.tsv"),
                    "--lm", f"bigram={out / 'lm.arpa'}", "--lm-weight", "0.5",
                    "--out", str(out / "compare.json")]) == EXIT_OK
        compared = json.loads((out / "compare.json").read_text(encoding="utf-8"))
        assert list(compared) == ["lex", "bigram"]


class TestCommands:
    def test_romanize_folds_diacritics(self, tmp_path):
        (tmp_path / "in.txt").write_text("á\nÉl corre\n", encoding="utf-8")
        assert run(["romanize", "--in", str(tmp_path / "in.txt"),
                    "--out", str(tmp_path / "out.txt")]) == EXIT_OK
        assert (tmp_path / "out.txt").read_text(encoding="utf-8") == "a\nel|corre\n"

    def test_build_lexicon_from_frequencies(self, tmp_path):
        (tmp_path / "freq.tsv").write_text("casa\t5\nla casa\t3\nperro\t1\n", encoding="utf-8")
        assert run(["build-lexicon", "--freq", str(tmp_path / "freq.tsv"), "--min-count", "2",
                    "--out", str(tmp_path / "lex.tsv")]) == EXIT_OK
        assert (tmp_path / "lex.tsv").read_text(encoding="utf-8") == "casa\tc a s a |\n"

    def test_train_lm_from_counts(self, tmp_path):
        (tmp_path / "counts.tsv").write_text("the\t3\ncat\t1\n", encoding="utf-8")
        assert run(["train-lm", "--counts", str(tmp_path / "counts.tsv"),
                    "--out", str(tmp_path / "lm.arpa")]) == EXIT_OK
        text = (tmp_path / "lm.arpa").read_text(encoding="utf-8")
        assert "ngram 1=3" in text and "-0.2218487\tthe" in text

    def test_decode_defaults_to_beam_2000(self):
        args = build_parser().parse_args(["decode", "--manifest", "m", "--lexicon", "l",
                                          "--out", "o"])
        assert args.beam == 2000
        assert args.beam_threshold == 25.0
        assert not args.no_eos


class TestExitCodes:
    def test_help(self, capsys):
        assert run(["--help"]) == EXIT_OK
        assert "lexicon" in capsys.readouterr().out

    def test_subcommand_help_lists_formats(self, capsys):
        assert run(["decode", "--help"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "utt001<TAB>la casa<TAB>-12.345678<TAB>false" in out
        assert "-0.2218487<TAB>the" in out and "\\data\\" in out and "\\end\\" in out
        assert "ж<TAB>zh" in out and "#!range<TAB>0400<TAB>04FF" in out
        assert '"CTCE" u32 version=1' in out and "float32" in out

    @pytest.mark.parametrize("argv", [
        ["decode", "--manifest", "m", "--lexicon", "l", "--out", "o", "--beam", "0"],
        ["decode", "--manifest", "m", "--lexicon", "l", "--out", "o", "--bogus"],
        ["train-lm", "--corpus", "c", "--out", "o", "--order", "4"],
        ["train-lm", "--corpus", "c", "--out", "o", "--discount", "1.0"],
        ["build-lexicon", "--words", "w", "--min-count", "2", "--out", "o"],
        ["tune", "--manifest", "m", "--refs", "r", "--lexicon", "l", "--out", "o",
         "--lm-weight-grid", "1:0:0.5"],
        ["sweep", "--corpus", "c", "--sizes", "3,x", "--manifest", "m", "--refs", "r",
         "--out", "o"],
        [],
    ])
    def test_usage_errors(self, argv, capsys):
        assert run(argv) == EXIT_USAGE
        assert "usage error" in capsys.readouterr().err

    def test_beam_error_names_the_flag(self, capsys):
        run(["decode", "--manifest", "m", "--lexicon", "l", "--out", "o", "--beam", "0"])
        assert "--beam" in capsys.readouterr().err

    def test_missing_input_is_a_data_error(self, tmp_path, capsys):
        assert run(["romanize", "--in", str(tmp_path / "nope.txt"),
                    "--out", str(tmp_path / "out.txt")]) == EXIT_DATA
        assert "nope.txt" in capsys.readouterr().err

    def test_parse_error_reports_file_and_line(self, tmp_path, capsys):
        refs = tmp_path / "refs.tsv"
        refs.write_text("u1\tes\tla\nbroken line\n", encoding="utf-8")
        (tmp_path / "hyps.tsv").write_text("u1\tla\t0.0\tfalse\n", encoding="utf-8")
        assert run(["eval", "--refs", str(refs), "--hyps", str(tmp_path / "hyps.tsv"),
                    "--out", str(tmp_path / "r.json")]) == EXIT_DATA
        assert f"{refs}:2:" in capsys.readouterr().err
        assert not (tmp_path / "r.json").exists()


class TestFlagParsers:
    def test_grid(self):
        assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert parse_grid("-5:5:0.5")[0] == -5.0 and parse_grid("-5:5:0.5")[-1] == 5.0
        assert len(parse_grid("-5:5:0.5")) == 21
        assert parse_grid("0:1:0.3") == [0.0, 0.3, 0.6, 0.9]
        assert parse_grid("2") == [2.0]

    def test_sizes(self):
        assert parse_sizes("1, 10,100") == [1, 10, 100]
