"""Pause-annotated transcript codec.

Consumes word-timestamped ASR JSON, measures silences between consecutive
words (within a segment) and between adjacent segments, bins them into
short / medium / long, and rewrites the normalized word stream with the
markers "," / "." / "..." standing in for the three bins.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScbError


class PauseError(ScbError):
    pass


class BadJson(PauseError):
    pass


class SchemaViolation(PauseError):
    def __init__(self, pathexpr: str, reason: str):
        self.pathexpr = pathexpr
        super().__init__(f"{pathexpr}: {reason}")


class NonMonotonicTimestamps(PauseError):
    pass


@dataclass(frozen=True)
class Word:
    word: str
    start: float
    end: float


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    text: str
    words: tuple[Word, ...]


@dataclass(frozen=True)
class AsrTranscript:
    language: str
    segments: tuple[Segment, ...]


@dataclass(frozen=True)
class PauseConfig:
    detect_threshold: float = 0.05
    short_max: float = 0.5
    medium_max: float = 2.0
    marker_short: str = ","
    marker_medium: str = "."
    marker_long: str = "..."

    def __post_init__(self):
        if not (0.0 < self.detect_threshold < self.short_max < self.medium_max):
            raise PauseError("need 0 < detect_threshold < short_max < medium_max")

    @property
    def markers(self) -> tuple[str, str, str]:
        return (self.marker_short, self.marker_medium, self.marker_long)


@dataclass
class PauseStats:
    n_short: int = 0
    n_medium: int = 0
    n_long: int = 0
    total_pause_s: float = 0.0


@dataclass
class AnnotatedTranscript:
    tokens: list[str] = field(default_factory=list)
    pause_stats: PauseStats = field(default_factory=PauseStats)


def _require(obj, key, pathexpr, kind):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaViolation(f"{pathexpr}.{key}", "missing")
    value = obj[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaViolation(f"{pathexpr}.{key}", f"expected number, got {type(value).__name__}")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaViolation(f"{pathexpr}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def parse_asr(path: str | Path) -> AsrTranscript:
    """Parse and validate a word-timestamp ASR JSON document.

    Expected shape: {"language": str, "segments": [{"start", "end", "text",
    "words": [{"word", "start", "end"}]}]}. Word intervals within a segment
    must be ordered and non-overlapping; segments must be ordered by start.
    Segments with no words are allowed.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BadJson(f"{path}: {e}") from None

    language = _require(doc, "language", "$", str)
    raw_segments = _require(doc, "segments", "$", list)
    segments = []
    prev_seg_start = None
    for i, rs in enumerate(raw_segments):
        pathexpr = f"$.segments[{i}]"
        start = _require(rs, "start", pathexpr, float)
        end = _require(rs, "end", pathexpr, float)
        text = _require(rs, "text", pathexpr, str)
        raw_words = _require(rs, "words", pathexpr, list)
        if end < start:
            raise NonMonotonicTimestamps(f"{pathexpr}: end {end} < start {start}")
        if prev_seg_start is not None and start < prev_seg_start:
            raise NonMonotonicTimestamps(f"{pathexpr}: segments not ordered by start")
        prev_seg_start = start

        words = []
        prev_end = None
        for j, rw in enumerate(raw_words):
            wpath = f"{pathexpr}.words[{j}]"
            w = Word(
                word=_require(rw, "word", wpath, str),
                start=_require(rw, "start", wpath, float),
                end=_require(rw, "end", wpath, float),
            )
            if w.end < w.start:
                raise NonMonotonicTimestamps(f"{wpath}: end {w.end} < start {w.start}")
            if prev_end is not None and w.start < prev_end:
                raise NonMonotonicTimestamps(f"{wpath}: overlaps previous word")
            prev_end = w.end
            words.append(w)
        if words:
            if words[0].start < start or words[-1].end > end:
                raise NonMonotonicTimestamps(f"{pathexpr}: words outside segment bounds")
        segments.append(Segment(start=start, end=end, text=text, words=tuple(words)))
    return AsrTranscript(language=language, segments=tuple(segments))


def _strip_punct(word: str) -> str:
    chars = list(word)
    while chars and unicodedata.category(chars[0]).startswith("P"):
        chars.pop(0)
    while chars and unicodedata.category(chars[-1]).startswith("P"):
        chars.pop()
    return "".join(chars)


def normalize_text(words: list[str], casing: str = "lower") -> list[str]:
    """Strip leading/trailing punctuation per word; drop words that empty out."""
    out = []
    for w in words:
        w = _strip_punct(w)
        if casing == "lower":
            w = w.lower()
        if w:
            out.append(w)
    return out


def bin_pause(gap: float, cfg: PauseConfig) -> str | None:
    """Map a silence duration to a marker, or None below the detection threshold.

    Detection is strict exceedance; 0.5 s and 2.0 s both fall in the medium
    bin.
    """
    if gap <= cfg.detect_threshold:
        return None
    if gap < cfg.short_max:
        return cfg.marker_short
    if gap <= cfg.medium_max:
        return cfg.marker_medium
    return cfg.marker_long


def annotate(t: AsrTranscript, cfg: PauseConfig | None = None, casing: str = "lower") -> AnnotatedTranscript:
    """Insert pause markers between words and between segments.

    Word gaps are next.start - prev.end within a segment; segment gaps are
    measured between consecutive word-bearing segments' own start/end
    timestamps. Negative gaps (ASR jitter) clamp to zero. Words that
    normalize to empty are dropped along with their timestamps.
    """
    cfg = cfg or PauseConfig()
    out = AnnotatedTranscript()
    stats = out.pause_stats

    def emit_gap(gap: float):
        marker = bin_pause(max(0.0, gap), cfg)
        if marker is None:
            return
        out.tokens.append(marker)
        stats.total_pause_s += gap
        if marker == cfg.marker_short:
            stats.n_short += 1
        elif marker == cfg.marker_medium:
            stats.n_medium += 1
        else:
            stats.n_long += 1

    prev_segment = None
    for segment in t.segments:
        kept = []
        for w in segment.words:
            norm = normalize_text([w.word], casing=casing)
            if norm:
                kept.append((norm[0], w))
        if not kept:
            continue
        if prev_segment is not None:
            emit_gap(segment.start - prev_segment.end)
        prev_word = None
        for norm, w in kept:
            if prev_word is not None:
                emit_gap(w.start - prev_word.end)
            out.tokens.append(norm)
            prev_word = w
        prev_segment = segment
    return out


def strip_markers(a: AnnotatedTranscript, cfg: PauseConfig | None = None) -> list[str]:
    cfg = cfg or PauseConfig()
    return [tok for tok in a.tokens if tok not in cfg.markers]


def render(a: AnnotatedTranscript, max_tokens: int = 512) -> tuple[str, bool]:
    """Space-join tokens, truncated to the first max_tokens; flags truncation."""
    truncated = len(a.tokens) > max_tokens
    return " ".join(a.tokens[:max_tokens]), truncated
