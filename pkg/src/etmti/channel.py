"""Bit-tracking superposition of simultaneous tag replies and segment timing.

Received messages are plain strings over ``'0'``, ``'1'`` and ``'x'``: a
position where every contributor sent 0 reads ``'0'``, where every contributor
sent 1 reads ``'1'``, and anything mixed reads ``'x'``.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from .model import T_ID_MS, segments

ZERO, ONE, X = "0", "1", "x"


class ContractError(ValueError):
    """A caller broke a length or shape precondition."""


def one_hot(position: int, length: int) -> str:
    """Response string of ``length`` bits with bit ``position`` (0-based) set."""
    if not 0 <= position < length:
        raise ContractError(f"position {position} outside response of length {length}")
    return ZERO * position + ONE + ZERO * (length - position - 1)


def superpose(responses: Sequence[str], length: int | None = None) -> str:
    if not responses:
        if length is None:
            raise ContractError("length is required when there are no responses")
        return ZERO * length
    n = len(responses[0])
    if any(len(r) != n for r in responses) or (length is not None and length != n):
        raise ContractError("all responses must have the same length")
    out = []
    for column in zip(*responses):
        ones = column.count(ONE)
        out.append(ZERO if ones == 0 else ONE if ones == len(column) else X)
    return "".join(out)


def superpose_one_hot(positions: Iterable[int], length: int) -> np.ndarray:
    """Fast path of :func:`superpose` for one-hot replies given by their set-bit positions.

    Returns an int8 array holding 0 (Zero), 1 (One) or 2 (X) per position.
    """
    pos = np.asarray(positions if isinstance(positions, np.ndarray) else list(positions), dtype=np.int64)
    out = np.zeros(length, dtype=np.int8)
    if pos.size == 0:
        return out
    if pos.min() < 0 or pos.max() >= length:
        raise ContractError("reply position outside the response window")
    hits = np.bincount(pos, minlength=length)
    # a lit position is a clean '1' only if every replier lit it
    out[hits > 0] = 2
    out[hits == pos.size] = 1
    return out


def symbols_to_str(symbols: np.ndarray) -> str:
    return "".join("01x"[s] for s in symbols.tolist())


def count_active(msg: str | np.ndarray) -> int:
    """Positions carrying energy: a lone ``'1'`` counts the same as an ``'x'``."""
    if isinstance(msg, np.ndarray):
        return int(np.count_nonzero(msg))
    return sum(1 for c in msg if c != ZERO)


def transmission_time(bits: float, t_id: float = T_ID_MS) -> float:
    return segments(bits) * t_id
