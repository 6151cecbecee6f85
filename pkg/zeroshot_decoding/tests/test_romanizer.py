from collections import Counter

import pytest

from src.core.exceptions import EmptyInput, IoFailure, TableFormatError
from src.core.lexicon import build_lexicon
from src.core.romanizer import (ALPHABET, BLANK, SEPARATOR, RomanizationStats, RomanizedText,
                                RomanScheme, Romanizer, audit_vocabulary, default_scheme,
                                load_table_file, romanize_text, romanize_word)


def word(text, scheme=None):
    return "".join(romanize_word(text, scheme))


class TestAlphabet:
    def test_layout(self):
        assert len(ALPHABET) == 29
        assert ALPHABET[0] == BLANK
        assert ALPHABET[1] == SEPARATOR
        assert ALPHABET[2] == "'"
        assert ALPHABET[3] == "a" and ALPHABET[28] == "z"
        assert len(set(ALPHABET)) == 29

    def test_blank_is_not_producible(self):
        assert BLANK not in ALPHABET.producible
        assert len(ALPHABET.producible) == 28


class TestRomanizeWord:
    def test_diacritics_fold_to_base_letter(self):
        assert word("á") == "a"
        assert word("Ñandú") == "nandu"
        assert word("ǒ") == "o"

    def test_ascii_is_fixed_point(self):
        assert word("abc") == "abc"
        assert word("don't") == "don't"

    def test_cyrillic(self):
        assert word("Привет") == "privet"
        assert word("щи") == "shchi"
        # soft sign has no romanization
        assert word("мать") == "mat"

    def test_greek_digraph_and_accent(self):
        assert word("καλημέρα") == "kalimera"
        assert word("ουρανός") == "ouranos"

    def test_devanagari_inherent_vowel(self):
        assert word("नमस्ते") == "namaste"
        assert word("राम") == "raama"

    def test_digits_and_punctuation_removed(self):
        assert word("abc123") == "abc"
        assert word("…") == ""
        assert word("a.b") == "ab"

    def test_unknown_script_fallback(self):
        stats = RomanizationStats()
        assert romanize_word("日本", default_scheme("drop"), stats) == ()
        assert stats.unknown_codepoints == 2
        assert word("a日", default_scheme("apostrophe")) == "a'"

    def test_compatibility_letters_fold_to_latin(self):
        stats = RomanizationStats()
        assert romanize_word("ＣＡＳＡ", stats=stats) == tuple("casa")
        assert word("ﬂor") == "flor"
        assert word("ﬁn") == "fin"
        assert word("ǅep") == "dzep"
        assert stats.unknown_codepoints == 0
        assert romanize_text("ＣＡＳＡ ǅep ﬂor").text == "casa|dzep|flor"
        assert build_lexicon(["ＣＡＳＡ"])[0].letters == "casa"

    def test_empty_word_rejected(self):
        with pytest.raises(EmptyInput):
            romanize_word("")
        with pytest.raises(EmptyInput):
            romanize_word("   ")

    def test_uppercase_special_letters(self):
        assert word("STRASSE") == "strasse"
        assert word("Straße") == "strasse"
        assert word("Œuvre") == "oeuvre"


class TestRomanizeText:
    def test_whitespace_and_punctuation(self):
        assert romanize_text("Él  corre.").text == "el|corre"

    def test_empty(self):
        result = romanize_text("")
        assert result.symbols == ()
        assert result.text == ""

    def test_apostrophe_kept(self):
        assert romanize_text("don't").text == "don't"

    def test_words_dropping_to_nothing_leave_no_separator(self):
        assert romanize_text("a 123 b").text == "a|b"
        assert romanize_text("... a ...").text == "a"

    def test_idempotent(self):
        once = romanize_text("Привет, мир! Ça va?")
        assert romanize_text(once.text) == romanize_text(once.text)
        assert romanize_text(once.text).symbols == once.symbols

    def test_source_retained(self):
        assert romanize_text("Hola").source == "Hola"


class TestRomanizedText:
    def test_rejects_bad_separators(self):
        with pytest.raises(ValueError):
            RomanizedText.from_string("|a")
        with pytest.raises(ValueError):
            RomanizedText.from_string("a||b")
        with pytest.raises(ValueError):
            RomanizedText.from_string("a|")

    def test_rejects_blank(self):
        with pytest.raises(ValueError):
            RomanizedText(symbols=("a", BLANK))

    def test_words(self):
        assert RomanizedText.from_string("la|casa").words == ["la", "casa"]
        assert RomanizedText.from_string("").words == []


class TestAuditVocabulary:
    def test_counts(self):
        assert audit_vocabulary(["ab", "ba"]) == Counter({"a": 2, "b": 2})
        assert audit_vocabulary(["a b"]) == Counter({"a": 1, "b": 1, "|": 1})

    def test_unreadable_stream(self):
        def broken():
            yield "a"
            raise OSError("disk gone")

        with pytest.raises(IoFailure):
            audit_vocabulary(broken())


class TestTables:
    def test_custom_table_overrides(self, tmp_path):
        (tmp_path / "extra.tsv").write_text(
            "# test table\n#!range\t00F8\t00F8\nU+00F8\toe\n", encoding="utf-8")
        scheme = RomanScheme.load([tmp_path])
        assert scheme.declared_ranges["extra"] == ((0xF8, 0xF8),)
        assert word("ø", scheme) == "oe"
        assert word("ø") == "o"

    def test_table_errors_carry_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("ж\tzh\nщ\tSHCH\n", encoding="utf-8")
        with pytest.raises(TableFormatError) as info:
            load_table_file(path)
        assert info.value.line == 2

    def test_keys_must_not_contain_canonical_symbols(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\n", encoding="utf-8")
        with pytest.raises(TableFormatError):
            load_table_file(path)

    def test_unknown_flag(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("ж\tzh\tloud\n", encoding="utf-8")
        with pytest.raises(TableFormatError):
            load_table_file(path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(IoFailure):
            RomanScheme.load([tmp_path / "nope"])

    def test_shipped_tables_are_total_over_declared_ranges(self):
        scheme = default_scheme()
        stats = RomanizationStats()
        for ranges in scheme.declared_ranges.values():
            for lo, hi in ranges:
                for cp in range(lo, hi + 1):
                    if chr(cp).isalpha():
                        romanize_word(chr(cp), scheme, stats)
        assert stats.words > 300
        assert stats.unknown_codepoints == 0


class TestRomanizer:
    def test_romanize_file(self, tmp_path):
        path = tmp_path / "in.txt"
        path.write_text("Él corre\nПривет\n", encoding="utf-8")
        romanizer = Romanizer.from_tables()
        assert romanizer.romanize_file(str(path)) == ["el|corre", "privet"]
        assert romanizer.stats.words == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            Romanizer().romanize_file(str(tmp_path / "missing.txt"))
