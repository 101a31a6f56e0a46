"""Rule-based token normalization for embedding training.

A deliberately small, deterministic replacement for a full lemmatizer:
lowercase, strip punctuation, drop stop words, and fold the common
inflection suffixes (-s, -ing, -ed) using the rule table below. The rules
are intentionally crude (e.g. "taking" becomes "tak"); they only need to
map inflected forms of the same word to the same key, not to a dictionary
lemma.
"""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")

# Consonants that English doubles before -ing/-ed (chatting, logged).
_UNDOUBLE = {"bb", "dd", "gg", "mm", "nn", "pp", "rr", "tt"}

DEFAULT_STOP_WORDS = frozenset(
    """
    a an the and or but if then than so nor as at by for from in into of off
    on onto out over to under up with within without about after before
    during until while is am are was were be been being do does did done
    have has had having will would shall should can could may might must
    he she it they them him her his hers its their theirs this that these
    those i me my we us our you your yours who whom whose which what when
    where why how not no yes
    """.split()
)


def _strip_plural(word: str) -> str:
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("ss") or word.endswith("us") or word.endswith("is"):
        return word
    if word.endswith("s") and len(word) > 3:
        return word[:-1]
    return word


def _undouble(stem: str) -> str:
    if len(stem) >= 4 and stem[-2:] in _UNDOUBLE:
        return stem[:-1]
    return stem


def _strip_inflection(word: str) -> str:
    if word.endswith("ing") and len(word) >= 6:
        return _undouble(word[:-3])
    if word.endswith("ied") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("ed") and len(word) >= 5:
        return _undouble(word[:-2])
    if word.endswith("ed") and len(word) == 4:
        # short forms like "used": drop only the trailing d
        return word[:-1]
    return word


def normalize_word(word: str) -> str:
    """Apply the suffix rule table to one lowercase word."""
    word = _strip_plural(word)
    return _strip_inflection(word)


def normalize_tokens(text: str, stop_words: frozenset = DEFAULT_STOP_WORDS) -> list:
    """Lowercased, punctuation-stripped, stop-word-free, suffix-folded tokens."""
    tokens = []
    for match in _WORD_RE.finditer(text.lower()):
        word = match.group(0)
        if word.endswith("'s"):
            word = word[:-2]
        word = word.replace("'", "")
        if not word or word in stop_words:
            continue
        norm = normalize_word(word)
        if norm and norm not in stop_words:
            tokens.append(norm)
    return tokens


def words_of(text: str) -> list:
    """Raw lowercase words (no stop-word removal, no suffix folding)."""
    out = []
    for match in _WORD_RE.finditer(text.lower()):
        word = match.group(0)
        if word.endswith("'s"):
            word = word[:-2]
        out.append(word.replace("'", ""))
    return out
