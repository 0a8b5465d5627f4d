"""Bit-string index helpers.

Convention used throughout the package: position 0 of a settings/outcomes
string is party 1 and maps to the most significant bit of the integer index.
"""

from __future__ import annotations


def bits_to_index(bits) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(index: int, width: int) -> tuple[int, ...]:
    return tuple((index >> (width - 1 - i)) & 1 for i in range(width))


def settings_to_index(settings: str) -> int:
    return bits_to_index(0 if c == "a" else 1 for c in settings)


def outcomes_to_index(outcomes: str) -> int:
    return bits_to_index(outcomes)


def index_to_settings(index: int, width: int) -> str:
    return "".join("ab"[b] for b in index_to_bits(index, width))


def index_to_outcomes(index: int, width: int) -> str:
    return "".join("01"[b] for b in index_to_bits(index, width))
