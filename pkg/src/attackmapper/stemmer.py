"""Porter stemmer (classic English suffix-stripping algorithm).

Table-driven implementation of the original five-step algorithm. Within a
step, the rule with the longest matching suffix is selected first and only
that rule's condition is tested; if the condition fails, the step leaves the
word unchanged (this is what keeps "caress" from losing its final "s").
"""

from __future__ import annotations

from typing import Callable

_VOWELS = frozenset("aeiou")

Condition = Callable[[str], bool]


def _is_consonant(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return True if i == 0 else not _is_consonant(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count of vowel-consonant run pairs: [C](VC)^m[V]."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        vowel = not _is_consonant(stem, i)
        if prev_vowel and not vowel:
            m += 1
        prev_vowel = vowel
    return m


def _contains_vowel(stem: str) -> bool:
    return any(not _is_consonant(stem, i) for i in range(len(stem)))


def _ends_double_consonant(stem: str) -> bool:
    return (
        len(stem) >= 2
        and stem[-1] == stem[-2]
        and _is_consonant(stem, len(stem) - 1)
    )


def _ends_cvc(stem: str) -> bool:
    """*o: ends consonant-vowel-consonant with final letter not w, x or y."""
    if len(stem) < 3:
        return False
    return (
        _is_consonant(stem, len(stem) - 3)
        and not _is_consonant(stem, len(stem) - 2)
        and _is_consonant(stem, len(stem) - 1)
        and stem[-1] not in "wxy"
    )


def _m_gt(n: int) -> Condition:
    return lambda stem: _measure(stem) > n


_ALWAYS: Condition = lambda stem: True

# (suffix, replacement, condition on the stem left after removing suffix);
# longest suffix match wins within each table.
_STEP_1A = (
    ("sses", "ss", _ALWAYS),
    ("ies", "i", _ALWAYS),
    ("ss", "ss", _ALWAYS),
    ("s", "", _ALWAYS),
)

_STEP_2 = (
    ("ational", "ate", _m_gt(0)),
    ("tional", "tion", _m_gt(0)),
    ("enci", "ence", _m_gt(0)),
    ("anci", "ance", _m_gt(0)),
    ("izer", "ize", _m_gt(0)),
    ("abli", "able", _m_gt(0)),
    ("alli", "al", _m_gt(0)),
    ("entli", "ent", _m_gt(0)),
    ("eli", "e", _m_gt(0)),
    ("ousli", "ous", _m_gt(0)),
    ("ization", "ize", _m_gt(0)),
    ("ation", "ate", _m_gt(0)),
    ("ator", "ate", _m_gt(0)),
    ("alism", "al", _m_gt(0)),
    ("iveness", "ive", _m_gt(0)),
    ("fulness", "ful", _m_gt(0)),
    ("ousness", "ous", _m_gt(0)),
    ("aliti", "al", _m_gt(0)),
    ("iviti", "ive", _m_gt(0)),
    ("biliti", "ble", _m_gt(0)),
)

_STEP_3 = (
    ("icate", "ic", _m_gt(0)),
    ("ative", "", _m_gt(0)),
    ("alize", "al", _m_gt(0)),
    ("iciti", "ic", _m_gt(0)),
    ("ical", "ic", _m_gt(0)),
    ("ful", "", _m_gt(0)),
    ("ness", "", _m_gt(0)),
)

_STEP_4 = (
    ("al", "", _m_gt(1)),
    ("ance", "", _m_gt(1)),
    ("ence", "", _m_gt(1)),
    ("er", "", _m_gt(1)),
    ("ic", "", _m_gt(1)),
    ("able", "", _m_gt(1)),
    ("ible", "", _m_gt(1)),
    ("ant", "", _m_gt(1)),
    ("ement", "", _m_gt(1)),
    ("ment", "", _m_gt(1)),
    ("ent", "", _m_gt(1)),
    ("ion", "", lambda stem: _measure(stem) > 1 and stem[-1:] in ("s", "t")),
    ("ou", "", _m_gt(1)),
    ("ism", "", _m_gt(1)),
    ("ate", "", _m_gt(1)),
    ("iti", "", _m_gt(1)),
    ("ous", "", _m_gt(1)),
    ("ive", "", _m_gt(1)),
    ("ize", "", _m_gt(1)),
)


def _apply_table(word: str, table) -> str:
    best = None
    for suffix, replacement, condition in table:
        if word.endswith(suffix) and (best is None or len(suffix) > len(best[0])):
            best = (suffix, replacement, condition)
    if best is None:
        return word
    suffix, replacement, condition = best
    stem = word[: len(word) - len(suffix)]
    if condition(stem):
        return stem + replacement
    return word


def _step_1b(word: str) -> str:
    if word.endswith("eed"):
        stem = word[:-3]
        return stem + "ee" if _measure(stem) > 0 else word
    fired = False
    if word.endswith("ed"):
        stem = word[:-2]
        if _contains_vowel(stem):
            word, fired = stem, True
    elif word.endswith("ing"):
        stem = word[:-3]
        if _contains_vowel(stem):
            word, fired = stem, True
    if not fired:
        return word
    if word.endswith(("at", "bl", "iz")):
        return word + "e"
    if _ends_double_consonant(word) and word[-1] not in "lsz":
        return word[:-1]
    if _measure(word) == 1 and _ends_cvc(word):
        return word + "e"
    return word


def _step_1c(word: str) -> str:
    if word.endswith("y") and _contains_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


def _step_5a(word: str) -> str:
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return word


def _step_5b(word: str) -> str:
    if _measure(word) > 1 and _ends_double_consonant(word) and word.endswith("l"):
        return word[:-1]
    return word


def stem_word(word: str) -> str:
    """Stem a single lowercase token."""
    if len(word) <= 2:
        return word
    word = _apply_table(word, _STEP_1A)
    word = _step_1b(word)
    word = _step_1c(word)
    word = _apply_table(word, _STEP_2)
    word = _apply_table(word, _STEP_3)
    word = _apply_table(word, _STEP_4)
    word = _step_5a(word)
    word = _step_5b(word)
    return word
