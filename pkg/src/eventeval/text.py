"""Text normalization and segmentation shared by every scoring stage."""

from __future__ import annotations

import re

_FULLWIDTH_OFFSET = 0xFEE0
_WS_RE = re.compile(r"\s+")

# 。！？； plus their ASCII counterparts once width is folded
_TERMINALS = "。！？；!?;"
_CLOSERS = "”’」』）)\"'》"
_SENTENCE_RE = re.compile(rf"[^{_TERMINALS}]*[{_TERMINALS}]+[{re.escape(_CLOSERS)}]*|[^{_TERMINALS}]+$")


def fold_width(text: str) -> str:
    """Map full-width ASCII forms (U+FF01..U+FF5E) and the ideographic space
    to their half-width equivalents. CJK punctuation such as 。 is untouched."""
    out = []
    for ch in text:
        code = ord(ch)
        if 0xFF01 <= code <= 0xFF5E:
            out.append(chr(code - _FULLWIDTH_OFFSET))
        elif code == 0x3000:
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def collapse_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def normalize_for_match(text: str) -> str:
    """Width-fold and drop all whitespace; used by scoring and containment."""
    return _WS_RE.sub("", fold_width(text))


def normalize_for_dedup(text: str) -> str:
    return collapse_whitespace(fold_width(text))


def tokenize(text: str, unit: str = "char") -> list[str]:
    """Split normalized text into scoring units.

    ``unit="char"`` yields one token per character (the default for Chinese);
    ``unit="word"`` splits on whitespace and is meant for pre-segmented text.
    """
    if unit == "char":
        return list(normalize_for_match(text))
    if unit == "word":
        return fold_width(text).split()
    raise ValueError(f"unknown token unit {unit!r}")


def split_sentences(text: str) -> list[str]:
    """Split on Chinese terminal punctuation, keeping trailing closing quotes
    attached to the sentence they close."""
    sentences = []
    for match in _SENTENCE_RE.finditer(text):
        piece = match.group(0).strip()
        if piece:
            sentences.append(piece)
    return sentences
