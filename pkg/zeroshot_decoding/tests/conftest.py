import os
import sys

import pytest

# Same layout as the cli entry point: tool directory on sys.path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.core.lexicon import build_lexicon, build_trie  # noqa: E402
from helpers import lexicon_from_spellings  # noqa: E402


@pytest.fixture
def casa_lexicon():
    return build_lexicon(["casa", "perro", "gato", "la", "el"])


@pytest.fixture
def casa_trie(casa_lexicon):
    return build_trie(casa_lexicon)


@pytest.fixture
def homophone_lexicon():
    # á is inserted first and gets the lower word id
    return lexicon_from_spellings([("á", "a"), ("a", "a")])
