"""Deterministic tokenization policies shared by filters and metrics.

Two policies are provided:

``cjk_char``
    Character-level tokenization suited for Chinese text: every CJK (or
    other non-ASCII) codepoint is its own token, maximal runs of ASCII
    alphanumerics form a single token, punctuation codepoints are single
    tokens, and whitespace only separates.  This makes n-gram metrics
    independent of whether the source text carries spaces.

``whitespace``
    Split on Unicode whitespace only.

All input is normalized to NFC and the full-width ASCII alphanumerics
(Ａ-Ｚ, ａ-ｚ, ０-９) are folded to their half-width forms before
tokenizing, so canonically-equivalent and width-variant spellings
produce identical token sequences.
"""
from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass

DEFAULT_POLICY = "cjk_char"
POLICIES = ("cjk_char", "whitespace")

# one token = a maximal ASCII-alphanumeric run, else a single non-space codepoint
_CJK_CHAR_TOKEN = re.compile(r"[0-9A-Za-z]+|\S")

_WIDTH_FOLD = str.maketrans(
    {code: code - 0xFEE0 for code in
     [*range(0xFF10, 0xFF1A), *range(0xFF21, 0xFF3B), *range(0xFF41, 0xFF5B)]}
)

_ASCII_ALNUM = frozenset("0123456789"
                         "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
                         "abcdefghijklmnopqrstuvwxyz")


@dataclass(frozen=True)
class TokenSequence:
    """An ordered token tuple together with the policy that produced it."""
    tokens: tuple[str, ...]
    policy: str

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def normalize_text(text: str) -> str:
    """NFC-normalize and fold full-width ASCII alphanumerics to half-width."""
    return unicodedata.normalize("NFC", text).translate(_WIDTH_FOLD)


def tokenize(text: str, policy: str = DEFAULT_POLICY) -> TokenSequence:
    """Tokenize ``text`` under the named policy.

    Deterministic and pure: the same text under the same policy yields a
    bit-identical sequence on every run and platform.  Empty text yields
    an empty sequence.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown tokenization policy {policy!r}")
    text = normalize_text(text)
    if policy == "cjk_char":
        tokens = tuple(_CJK_CHAR_TOKEN.findall(text))
    else:
        tokens = tuple(text.split())
    return TokenSequence(tokens, policy)


def detokenize(seq: TokenSequence) -> str:
    """Rejoin a token sequence into text.

    Under ``cjk_char`` a single space is inserted between two adjacent
    ASCII-alphanumeric tokens (they would otherwise merge on a
    re-tokenize); everything else concatenates directly.  Under
    ``whitespace`` tokens are joined with single spaces.
    """
    if seq.policy == "whitespace":
        return " ".join(seq.tokens)
    parts: list[str] = []
    for token in seq.tokens:
        if parts and parts[-1][-1] in _ASCII_ALNUM and token[0] in _ASCII_ALNUM:
            parts.append(" ")
        parts.append(token)
    return "".join(parts)


def ngrams(seq: TokenSequence, n: int) -> Counter:
    """Multiset of all contiguous n-grams of ``seq`` as a Counter of tuples.

    Empty when the sequence is shorter than ``n``.
    """
    if n < 1:
        raise ValueError("n-gram order must be >= 1")
    tokens = seq.tokens
    return Counter(tokens[i:i + n] for i in range(len(tokens) - n + 1))


def token_count(text: str, policy: str = DEFAULT_POLICY) -> int:
    return len(tokenize(text, policy))
