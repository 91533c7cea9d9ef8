"""Framed-Aloha missing-tag check used as a comparator for Phase II.

Every still-unverified known tag hashes into a frame sized to the remaining
population and, if present, answers with a single bit in its slot.  The
reader looks only at slots it expects to hold exactly one known tag: a reply
there confirms the owner, silence marks it missing.  Tags in expected
collision slots try again in the next frame.  Unknown tags are never switched
off, so they keep answering in whatever slot they land on, and a hit on a
missing tag's singleton slot reports that tag present.
"""
from __future__ import annotations

import numpy as np

from .ebud import Hasher, draw_seed
from .model import HEADER_BITS, Population, TimeLedger, Verified, hash_slots, round_half_up
from .tsmti import RoundReport

# the report has the same fields as a Phase II round
BaselineReport = RoundReport

SLOT_ACCOUNTING = ("slot", "frame")


def baseline_frame_size(remaining: int, frame_factor: float) -> int:
    return max(1, round_half_up(frame_factor * remaining))


def run_aloha_baseline(pop: Population, frame_factor: float = 1.0, rng=None, hasher: Hasher = hash_slots,
                       slot_accounting: str = "slot", max_frames: int = 10_000) -> BaselineReport:
    """Verify every known tag with 1-bit Aloha slots.

    With ``slot_accounting="slot"`` every reply slot is its own transmission
    and costs a whole segment.  ``"frame"`` packs a frame's reply bits
    together before rounding to segments, which is far kinder to this
    protocol.
    """
    if frame_factor <= 0:
        raise ValueError("frame_factor must be positive")
    if slot_accounting not in SLOT_ACCOUNTING:
        raise ValueError(f"slot_accounting must be one of {SLOT_ACCOUNTING}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    K = pop.K
    klo, khi = pop.words("known")
    ulo, uhi = pop.words("unknown")
    present = np.fromiter((t.present for t in pop.known), dtype=bool, count=K)
    uidx = np.flatnonzero(np.fromiter((t.active for t in pop.unknown), dtype=bool, count=pop.U))
    pending = np.ones(K, dtype=bool)
    status = np.zeros(K, dtype=np.int8)
    ledger = TimeLedger()
    frames = 0
    while pending.any() and frames < max_frames:
        kidx = np.flatnonzero(pending)
        f = baseline_frame_size(kidx.size, frame_factor)
        seed = draw_seed(rng)
        kslots = hasher(klo[kidx], khi[kidx], seed, f)
        counts = np.bincount(kslots - 1, minlength=f)
        energy = np.bincount(kslots[present[kidx]] - 1, minlength=f)
        if uidx.size:
            energy += np.bincount(hasher(ulo[uidx], uhi[uidx], seed, f) - 1, minlength=f)

        single = counts[kslots - 1] == 1
        owners = kidx[single]
        heard = energy[kslots[single] - 1] > 0
        status[owners[heard]] = 1
        status[owners[~heard]] = 2
        pending[owners] = False
        frames += 1

        ledger.charge("r", HEADER_BITS)
        if slot_accounting == "slot":
            for _ in range(f):
                ledger.charge("t", 1)
        else:
            ledger.charge("t", f)

    # only reachable through max_frames; settle leftovers the same way Phase II does
    capped = bool(pending.any())
    status[pending] = 1

    for j, t in enumerate(pop.known):
        t.verified = Verified.PRESENT if status[j] == 1 else Verified.MISSING
    ids = [t.id for t in pop.known]
    return BaselineReport(
        verified_present={ids[j] for j in np.flatnonzero((status == 1) & present).tolist()},
        identified_missing={ids[j] for j in np.flatnonzero(status == 2).tolist()},
        falsely_present={ids[j] for j in np.flatnonzero((status == 1) & ~present).tolist()},
        unknown_deactivated_p2=0,
        unknown_replied_p2=int(uidx.size),
        frames_used=frames,
        ledger=ledger,
        depth_capped=capped,
    )
