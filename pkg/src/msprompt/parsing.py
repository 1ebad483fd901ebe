"""Parse model answers written in the ``(k),(j),...`` option grammar."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

STRICT = "strict"
LENIENT = "lenient"

# ASCII digits only: str.isdigit/int() also accept other Unicode digits
_TOKEN = r"\(([0-9]+)\)"
_STRICT = re.compile(rf"\s*{_TOKEN}\s*(?:,\s*{_TOKEN}\s*)*")
_ANY_TOKEN = re.compile(_TOKEN)
_MAX_DIGITS = 9


class ParseFailure(ValueError):
    """No in-range option number could be recovered from the answer."""

    def __init__(self, message: str, warnings: list[str] | None = None):
        super().__init__(message)
        self.warnings = list(warnings or [])


@dataclass(frozen=True)
class ParsedAnswer:
    indices: tuple[int, ...]  # first-appearance order, deduplicated
    parse_mode: str
    warnings: tuple[str, ...] = field(default=())

    @property
    def index_set(self) -> frozenset[int]:
        return frozenset(self.indices)


def format_answer(indices) -> str:
    """Render indices in the canonical grammar, e.g. ``{3, 1}`` -> ``"(1),(3)"``."""
    return ",".join(f"({k})" for k in sorted(indices))


def _collect(tokens: list[str], n_classes: int, warnings: list[str]) -> list[int]:
    seen: list[int] = []
    for tok in tokens:
        k = int(tok) if len(tok) <= _MAX_DIGITS else None
        if k is None or not 1 <= k <= n_classes:
            warnings.append(f"option ({tok if len(tok) <= 12 else tok[:12] + '...'}) is outside 1..{n_classes}; dropped")
            continue
        if k not in seen:
            seen.append(k)
    return seen


def parse_answer(text: str, n_classes: int, multi_label: bool = True) -> ParsedAnswer:
    """Parse ``text`` strictly, falling back to extracting every ``(k)`` anywhere.

    Out-of-range options are dropped with a warning. For single-label tasks
    only the first surviving option is kept. Raises :class:`ParseFailure`
    when nothing usable remains.
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    warnings: list[str] = []
    if _STRICT.fullmatch(text):
        mode = STRICT
        tokens = _ANY_TOKEN.findall(text)
    else:
        mode = LENIENT
        tokens = _ANY_TOKEN.findall(text)
        if tokens:
            warnings.append("answer does not follow the (k),(j) format; extracted options leniently")
    indices = _collect(tokens, n_classes, warnings)
    if not indices:
        if not tokens:
            warnings.append("no (k) option found in answer")
        raise ParseFailure(f"no valid option in answer {text[:80]!r}", warnings)
    if not multi_label and len(indices) > 1:
        warnings.append(f"single-label task got {len(indices)} options; kept the first ({indices[0]})")
        indices = indices[:1]
    return ParsedAnswer(tuple(indices), mode, tuple(warnings))
