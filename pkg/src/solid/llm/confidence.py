"""Seven-level confidence vocabulary, response parsing and weight mapping."""

from __future__ import annotations

import enum
import re

import numpy as np


class ConfidenceLevel(enum.Enum):
    """Ordered confidence labels; ``score`` is the pre-normalization weight."""

    VERY_LOW = 0
    LOW = 1
    SOMEWHAT_LOW = 2
    NEUTRAL = 3
    SOMEWHAT_HIGH = 4
    HIGH = 5
    VERY_HIGH = 6

    @property
    def score(self):
        return _SCORES[self]

    @property
    def label(self):
        return _LABELS[self]

    def __lt__(self, other):
        if not isinstance(other, ConfidenceLevel):
            return NotImplemented
        return self.value < other.value

    def __le__(self, other):
        if not isinstance(other, ConfidenceLevel):
            return NotImplemented
        return self.value <= other.value

    def __gt__(self, other):
        if not isinstance(other, ConfidenceLevel):
            return NotImplemented
        return self.value > other.value

    def __ge__(self, other):
        if not isinstance(other, ConfidenceLevel):
            return NotImplemented
        return self.value >= other.value

    @classmethod
    def parse(cls, token):
        """Level for a phrase such as ``"somewhat high"`` or ``"High Confidence"``."""
        key = " ".join(token.strip().strip(".").lower().split())
        if key.endswith(" confidence"):
            key = key[: -len(" confidence")]
        try:
            return _BY_PHRASE[key]
        except KeyError:
            raise ParseError(f"unrecognized confidence level {token.strip()!r}", token=token.strip()) from None


_SCORES = {
    ConfidenceLevel.VERY_LOW: 0.0,
    ConfidenceLevel.LOW: 0.1,
    ConfidenceLevel.SOMEWHAT_LOW: 0.2,
    ConfidenceLevel.NEUTRAL: 0.3,
    ConfidenceLevel.SOMEWHAT_HIGH: 0.4,
    ConfidenceLevel.HIGH: 0.5,
    ConfidenceLevel.VERY_HIGH: 0.6,
}

_LABELS = {
    ConfidenceLevel.VERY_LOW: "Very Low Confidence",
    ConfidenceLevel.LOW: "Low Confidence",
    ConfidenceLevel.SOMEWHAT_LOW: "Somewhat Low Confidence",
    ConfidenceLevel.NEUTRAL: "Neutral",
    ConfidenceLevel.SOMEWHAT_HIGH: "Somewhat High Confidence",
    ConfidenceLevel.HIGH: "High Confidence",
    ConfidenceLevel.VERY_HIGH: "Very High Confidence",
}

_BY_PHRASE = {
    "very low": ConfidenceLevel.VERY_LOW,
    "low": ConfidenceLevel.LOW,
    "somewhat low": ConfidenceLevel.SOMEWHAT_LOW,
    "neutral": ConfidenceLevel.NEUTRAL,
    "somewhat high": ConfidenceLevel.SOMEWHAT_HIGH,
    "high": ConfidenceLevel.HIGH,
    "very high": ConfidenceLevel.VERY_HIGH,
}

# levels at or below this are dropped in sparse mode
SPARSE_CUTOFF = ConfidenceLevel.LOW


class ParseError(ValueError):
    """The response's final recommendation line could not be parsed."""

    def __init__(self, message, missing=None, token=None):
        super().__init__(message)
        self.missing = list(missing or [])
        self.token = token


_PAIR = r"[A-Za-z0-9.\-^]+\s*:\s*[^,:]+"
_LINE_RE = re.compile(rf"^\s*{_PAIR}(?:\s*,\s*{_PAIR})*\s*\.?\s*$")
_DECOR = str.maketrans({c: " " for c in "*`[]"})


def render_levels(levels, tickers=None):
    """Canonical one-line form, e.g. ``"NVDA: High Confidence, AMD: Neutral"``."""
    tickers = list(levels) if tickers is None else tickers
    return ", ".join(f"{t}: {levels[t].label}" for t in tickers)


def parse_response(text, tickers):
    """Map each ticker to its level using the last recommendation line in ``text``.

    A recommendation line is a comma-separated list of ``TICKER: level`` pairs
    naming at least one known ticker. Markdown emphasis and brackets are ignored.
    """
    tickers = list(tickers)
    if not tickers:
        raise ValueError("tickers must be nonempty")
    known = {t.upper(): t for t in tickers}
    for raw in reversed(text.splitlines()):
        line = raw.translate(_DECOR).strip()
        if line.startswith("- "):
            line = line[2:]
        if not _LINE_RE.match(line):
            continue
        pairs = [part.split(":", 1) for part in line.rstrip(". ").split(",")]
        keys = [k.strip().upper() for k, _ in pairs]
        if not any(k in known for k in keys):
            continue
        return _assign(pairs, known, tickers)
    raise ParseError("no recommendation line found", missing=tickers)


def _assign(pairs, known, tickers):
    out = {}
    for key, token in pairs:
        ticker = known.get(key.strip().upper())
        if ticker is None:
            raise ParseError(f"unknown ticker {key.strip()!r} in recommendation", token=key.strip())
        if ticker in out:
            raise ParseError(f"ticker {ticker!r} assigned more than once", token=key.strip())
        out[ticker] = ConfidenceLevel.parse(token)
    missing = [t for t in tickers if t not in out]
    if missing:
        raise ParseError(f"missing tickers: {', '.join(missing)}", missing=missing)
    return out


def levels_to_proposal(levels, tickers=None, sparse=False):
    """Normalize level scores into weights on the probability simplex.

    In sparse mode levels at or below ``LOW`` are zeroed first. If every score
    is zero the uniform vector is returned.
    """
    tickers = list(levels) if tickers is None else list(tickers)
    missing = [t for t in tickers if t not in levels]
    if missing:
        raise ValueError(f"levels missing for tickers {missing}")
    scores = np.array(
        [0.0 if sparse and levels[t] <= SPARSE_CUTOFF else levels[t].score for t in tickers]
    )
    total = scores.sum()
    if total == 0.0:
        return np.full(len(tickers), 1.0 / len(tickers))
    return scores / total
