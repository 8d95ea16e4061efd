"""Extraction of decision vectors from LLM replies."""

from __future__ import annotations

import math
import re
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

START_TAG = "<start>"
END_TAG = "<end>"

_SEPARATORS = re.compile(r"[\s,;]+")


class ParseError(ValueError):
    variant = "parse_error"


class MissingTags(ParseError):
    variant = "missing_tags"


class WrongCount(ParseError):
    variant = "wrong_count"


class NonNumeric(ParseError):
    variant = "non_numeric"


class NonFinite(ParseError):
    variant = "non_finite"


@dataclass(frozen=True)
class ParsedVector:
    decs: np.ndarray
    repaired: bool


def _tagged_bodies(text: str) -> list[str]:
    bodies = []
    pos = 0
    while True:
        i = text.find(START_TAG, pos)
        if i < 0:
            break
        j = text.find(END_TAG, i + len(START_TAG))
        if j < 0:
            break
        bodies.append(text[i + len(START_TAG) : j])
        pos = j + len(END_TAG)
    return bodies


def _parse_body(body: str, n: int, lower: np.ndarray, upper: np.ndarray) -> ParsedVector:
    body = body.strip().strip("[](){}").strip()
    tokens = [tok for tok in _SEPARATORS.split(body) if tok]
    values = []
    for tok in tokens:
        try:
            v = float(tok)
        except ValueError:
            raise NonNumeric(f"token {tok!r} is not a number") from None
        if not math.isfinite(v):
            raise NonFinite(f"token {tok!r} is not finite")
        values.append(v)
    if len(values) != n:
        raise WrongCount(f"expected {n} values, got {len(values)}")
    decs = np.array(values)
    clipped = np.clip(decs, lower, upper)
    return ParsedVector(clipped, repaired=bool(np.any(clipped != decs)))


def parse_response(text: str, n: int, bounds: tuple[Sequence[float], Sequence[float]]) -> ParsedVector:
    """Decision vector between the first ``<start>`` and the following ``<end>``.

    Values may be separated by commas and/or whitespace; out-of-bounds values
    are clamped and the result is flagged ``repaired``.

    Raises:
        MissingTags, WrongCount, NonNumeric, NonFinite
    """
    lower = np.asarray(bounds[0], dtype=float)
    upper = np.asarray(bounds[1], dtype=float)
    bodies = _tagged_bodies(text or "")
    if not bodies:
        raise MissingTags("no <start>...<end> block in response")
    return _parse_body(bodies[0], n, lower, upper)


def parse_all(text: str, n: int, bounds: tuple[Sequence[float], Sequence[float]]) -> list[ParsedVector | ParseError]:
    """Parse every tagged block; malformed blocks are returned as their error."""
    lower = np.asarray(bounds[0], dtype=float)
    upper = np.asarray(bounds[1], dtype=float)
    out: list[ParsedVector | ParseError] = []
    for body in _tagged_bodies(text or ""):
        try:
            out.append(_parse_body(body, n, lower, upper))
        except ParseError as exc:
            out.append(exc)
    return out
