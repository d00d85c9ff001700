"""Text-token to phoneme conversion and pre-phonemized corpus parsing.

The grapheme-to-phoneme contract is a single callable: text token ->
list[Phoneme].  The built-in converter uses a tiny exception dictionary with
a letter-by-letter fallback (vowel letters become syllable nuclei), which is
enough for demos and latency experiments; tests use pre-phonemized input.
"""

from __future__ import annotations

from typing import Callable, Iterable

from .alignment import Phoneme

G2P = Callable[[str], list[Phoneme]]

UNK_SYMBOL = 0

# Symbol space: 0 reserved for UNK, 1-26 letters, punctuation above.
_LETTER_BASE = 1
_PUNCT_SYMBOLS = {".": 27, ",": 28, "?": 29, "!": 30, ";": 31, ":": 32}
_VOWELS = set("aeiouy")

# Small exception lexicon: word -> (symbols as letters, nucleus positions).
_LEXICON: dict[str, tuple[str, tuple[int, ...]]] = {
    "the": ("dhe", (2,)),
    "a": ("a", (0,)),
    "and": ("and", (0,)),
    "to": ("tu", (1,)),
    "of": ("ov", (0,)),
    "hello": ("helo", (1, 3)),
    "world": ("werld", (1,)),
}

PHONEME_VOCAB_SIZE = 64


def _letter_symbol(ch: str) -> int:
    return _LETTER_BASE + (ord(ch) - ord("a"))


def builtin_g2p(token: str) -> list[Phoneme]:
    """Dictionary + letter-fallback conversion of one text token."""
    phonemes: list[Phoneme] = []
    word = token.strip().lower()
    if not word:
        return phonemes
    # trailing punctuation becomes its own phoneme token
    trailing: list[Phoneme] = []
    while word and word[-1] in _PUNCT_SYMBOLS:
        trailing.insert(0, Phoneme(_PUNCT_SYMBOLS[word[-1]], is_punctuation=True))
        word = word[:-1]
    if word in _LEXICON:
        letters, nuclei = _LEXICON[word]
        for i, ch in enumerate(letters):
            phonemes.append(Phoneme(_letter_symbol(ch), is_syllable_nucleus=i in nuclei))
    else:
        for ch in word:
            if "a" <= ch <= "z":
                phonemes.append(Phoneme(_letter_symbol(ch), is_syllable_nucleus=ch in _VOWELS))
    return phonemes + trailing


def parse_phoneme_line(line: str) -> Phoneme:
    """One phoneme per line: `symbol_id, is_punct(0|1), is_nucleus(0|1)`."""
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected 3 comma-separated fields, got {line!r}")
    symbol, punct, nucleus = (int(p) for p in parts)
    if punct not in (0, 1) or nucleus not in (0, 1):
        raise ValueError(f"flags must be 0 or 1 in {line!r}")
    return Phoneme(symbol, is_punctuation=bool(punct), is_syllable_nucleus=bool(nucleus))


def load_phoneme_file(path) -> list[Phoneme]:
    phonemes = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            phonemes.append(parse_phoneme_line(line))
    return phonemes


def dump_phonemes(phonemes: Iterable[Phoneme]) -> str:
    return "\n".join(
        f"{p.symbol}, {int(p.is_punctuation)}, {int(p.is_syllable_nucleus)}" for p in phonemes
    )
