"""Text renderings of numerical sequences and their inverses.

Two renderings exist: the plain one joins every number with a single
delimiter; the segmented one swaps the delimiter after every k-th number for
a separator symbol, cutting the sequence into segments of k values. The swap
is substitution-only: number bytes and their order are untouched, and exactly
ceil(n/k) - 1 delimiter slots change.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import ParseError, UsageError

# Characters reserved for number tokens; separators and delimiters must not
# contain any of them, otherwise parsing becomes ambiguous.
NUMBER_CHARS = frozenset("0123456789+-.")

_INT_RE = re.compile(r"-?(?:0|[1-9][0-9]*)")
_TOKEN_RE = re.compile(r"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?")


class NumberKind(Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"


class FormatMode(Enum):
    VANILLA = "vanilla"
    SEPSEQ = "sepseq"


def render_int(value: int) -> str:
    return str(int(value))


def render_decimal(value: float, precision: int = 3) -> str:
    """Render with exactly `precision` fractional digits, never as "-0.000"."""
    text = f"{value:.{precision}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def is_canonical(rendered: str, kind: NumberKind, precision: int = 0) -> bool:
    """True when text is the unique canonical rendering of its value."""
    if kind is NumberKind.INTEGER:
        if _INT_RE.fullmatch(rendered) is None:
            return False
        return rendered != "-0"
    match = _TOKEN_RE.fullmatch(rendered)
    if match is None or "." not in rendered:
        return False
    frac = rendered.split(".", 1)[1]
    if len(frac) != precision:
        return False
    # reject "-0.000": sign on a zero value is not canonical
    return not (rendered.startswith("-") and float(rendered) == 0.0)


@dataclass(frozen=True)
class NumericalSequence:
    """An ordered, non-empty sequence of canonically rendered numbers.

    All values share one kind; decimals carry exactly `precision` fractional
    digits. The canonical text is the source of truth so that rendering and
    parsing are exact inverses.
    """

    values: tuple[str, ...]
    kind: NumberKind = NumberKind.INTEGER
    precision: int = 0

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise UsageError("sequence must contain at least one number")
        if self.kind is NumberKind.DECIMAL and self.precision < 1:
            raise UsageError("decimal sequences need precision >= 1")
        if self.kind is NumberKind.INTEGER and self.precision != 0:
            raise UsageError("integer sequences have no precision")
        for value in self.values:
            if not is_canonical(value, self.kind, self.precision):
                raise UsageError(f"non-canonical number rendering: {value!r}")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    @classmethod
    def from_ints(cls, values: Iterable[int]) -> "NumericalSequence":
        return cls(tuple(render_int(v) for v in values))

    @classmethod
    def from_floats(cls, values: Iterable[float], precision: int = 3) -> "NumericalSequence":
        rendered = tuple(render_decimal(v, precision) for v in values)
        return cls(rendered, NumberKind.DECIMAL, precision)

    def as_numbers(self) -> list[int] | list[float]:
        if self.kind is NumberKind.INTEGER:
            return [int(v) for v in self.values]
        return [float(v) for v in self.values]


_NAMED_SEPARATORS = {
    "LF": "\n",
    "CR": "\r",
    "CRLF": "\r\n",
    "BACKSLASH": "\\",
}


@dataclass(frozen=True)
class SeparatorSymbol:
    """A segment-boundary symbol: a name plus its literal text."""

    name: str
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise UsageError("separator text must be non-empty")
        if set(self.text) & NUMBER_CHARS:
            raise UsageError(f"separator {self.text!r} collides with number characters")

    @classmethod
    def from_name(cls, name: str) -> "SeparatorSymbol":
        key = name.strip().upper()
        if key not in _NAMED_SEPARATORS:
            raise UsageError(f"unknown separator name {name!r}; known: {sorted(_NAMED_SEPARATORS)}")
        return cls(key, _NAMED_SEPARATORS[key])

    @classmethod
    def custom(cls, text: str) -> "SeparatorSymbol":
        return cls("custom", text)


LF = SeparatorSymbol("LF", "\n")
CR = SeparatorSymbol("CR", "\r")
CRLF = SeparatorSymbol("CRLF", "\r\n")
BACKSLASH = SeparatorSymbol("BACKSLASH", "\\")


@dataclass(frozen=True)
class FormatConfig:
    """How a sequence is rendered: delimiter, separator, segment size, mode."""

    delimiter: str = " "
    separator: SeparatorSymbol = LF
    segment_size: int = 16
    mode: FormatMode = FormatMode.VANILLA

    def __post_init__(self) -> None:
        if self.segment_size < 1:
            raise UsageError("segment_size must be >= 1")
        if not self.delimiter:
            raise UsageError("delimiter must be non-empty")
        if set(self.delimiter) & NUMBER_CHARS:
            raise UsageError(f"delimiter {self.delimiter!r} collides with number characters")
        if self.delimiter == self.separator.text:
            raise UsageError("delimiter and separator texts must be distinct")

    def replace(self, **changes) -> "FormatConfig":
        from dataclasses import replace

        return replace(self, **changes)


def separator_count(n: int, k: int) -> int:
    """Number of boundary slots that get a separator: ceil(n/k) - 1."""
    return math.ceil(n / k) - 1


def boundary_positions(n: int, k: int) -> list[int]:
    """1-based number positions after which a separator goes (k, 2k, ... < n)."""
    return list(range(k, n, k))


def format_vanilla(seq: NumericalSequence, delimiter: str = " ") -> str:
    """Join all numbers with the delimiter: x1 d x2 d ... d xn."""
    if len(seq) < 1:
        raise UsageError("cannot format an empty sequence")
    return delimiter.join(seq.values)


def format_sepseq(seq: NumericalSequence, cfg: FormatConfig) -> str:
    """Like format_vanilla, but the delimiter after every k-th number becomes
    the separator. No trailing separator is emitted even when n % k == 0."""
    if len(seq) < 1:
        raise UsageError("cannot format an empty sequence")
    if cfg.mode is not FormatMode.SEPSEQ:
        raise UsageError("format_sepseq requires cfg.mode == sepseq")
    k = cfg.segment_size
    parts: list[str] = []
    last = len(seq) - 1
    for i, value in enumerate(seq.values):
        parts.append(value)
        if i < last:
            parts.append(cfg.separator.text if (i + 1) % k == 0 else cfg.delimiter)
    return "".join(parts)


def render(seq: NumericalSequence, cfg: FormatConfig) -> str:
    if cfg.mode is FormatMode.VANILLA:
        return format_vanilla(seq, cfg.delimiter)
    return format_sepseq(seq, cfg)


def join_segmented(items: list[str], cfg: FormatConfig) -> str:
    """Join arbitrary pre-rendered items under the same boundary rule.

    Used for structured payloads (records, mixed-type lists) that cannot be
    represented as a NumericalSequence but should still be segmented.
    """
    if not items:
        raise UsageError("cannot join an empty item list")
    k = cfg.segment_size
    parts: list[str] = []
    last = len(items) - 1
    for i, item in enumerate(items):
        parts.append(item)
        if i < last:
            use_sep = cfg.mode is FormatMode.SEPSEQ and (i + 1) % k == 0
            parts.append(cfg.separator.text if use_sep else cfg.delimiter)
    return "".join(parts)


def _boundary_alternation(cfg: FormatConfig) -> re.Pattern[str]:
    # longest alternative first so a boundary that is a prefix of the other
    # (e.g. CR vs CRLF) cannot shadow it
    alts = sorted({cfg.delimiter, cfg.separator.text}, key=len, reverse=True)
    return re.compile("(" + "|".join(re.escape(a) for a in alts) + ")")


def parse_formatted(text: str, cfg: FormatConfig) -> NumericalSequence:
    """Inverse of render(): recover the exact sequence from formatted text.

    Raises ParseError with a byte offset on malformed number tokens or on
    boundary runs that are neither the delimiter nor the separator.
    """
    if not text:
        raise ParseError("empty input", 0)
    pieces = _boundary_alternation(cfg).split(text)
    # pieces alternate token, boundary, token, boundary, ..., token
    tokens = pieces[0::2]
    offset = 0
    values: list[str] = []
    fractions: set[int] = set()
    for i, piece in enumerate(pieces):
        if i % 2 == 1:  # boundary piece, length known to match
            offset += len(piece)
            continue
        if _TOKEN_RE.fullmatch(piece) is None:
            head = _TOKEN_RE.match(piece)
            if head is not None and head.end() > 0:
                at = offset + head.end()
                raise ParseError(f"unknown delimiter run {piece[head.end():head.end() + 8]!r}", at)
            raise ParseError(f"malformed number token {piece[:8]!r}", offset)
        if piece.startswith("-") and float(piece) == 0.0:
            raise ParseError(f"non-canonical number token {piece!r}", offset)
        if "." in piece:
            fractions.add(len(piece.split(".", 1)[1]))
        values.append(piece)
        offset += len(piece)
    if fractions:
        if len(fractions) > 1 or any("." not in v for v in values):
            raise ParseError("inconsistent decimal precision", 0)
        precision = fractions.pop()
        return NumericalSequence(tuple(values), NumberKind.DECIMAL, precision)
    return NumericalSequence(tuple(values))
