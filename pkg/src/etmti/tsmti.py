"""Phase II: B-ary tree-splitting missing-tag identification with bit-tracking replies.

Frame 1 hashes every known tag into ``round(beta*K)`` slots and broadcasts the
slot states as BV (``0`` empty, ``10`` singleton, ``11`` collision).  Each
collision slot becomes a group of ``B`` slots in the next frame; a tag finds
its group through its counter Ac, which is the 1-based rank of its collision
slot among all ``11`` segments of the frame.  Tags in singleton slots answer
with a one-hot string over the singleton positions, unknown tags in empty
slots switch off, and the round ends after the first frame without collisions.
"""
from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .channel import ContractError, one_hot, superpose_one_hot, symbols_to_str
from .ebud import Hasher, _words, draw_seed
from .model import HEADER_BITS, Population, TagRecord, TimeLedger, Verified, hash_slots, round_half_up

MAX_DEPTH = 32


class SlotState(enum.IntEnum):
    EMPTY = 0
    SINGLETON = 1
    COLLISION = 2

    @property
    def code(self) -> str:
        return ("0", "10", "11")[self]


@dataclass
class BroadcastVector:
    states: np.ndarray

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> BroadcastVector:
        return cls(np.minimum(counts, 2).astype(np.int8))

    @classmethod
    def parse(cls, text: str) -> BroadcastVector:
        """Decode a concatenated 0/10/11 bit string (spaces ignored)."""
        bits = text.replace(" ", "")
        states, i = [], 0
        while i < len(bits):
            if bits[i] == "0":
                states.append(0)
                i += 1
            elif i + 1 < len(bits):
                states.append(1 if bits[i + 1] == "0" else 2)
                i += 2
            else:
                raise ValueError(f"truncated slot code in {text!r}")
        return cls(np.array(states, dtype=np.int8))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n_empty(self) -> int:
        return int(np.count_nonzero(self.states == SlotState.EMPTY))

    @property
    def n_singleton(self) -> int:
        return int(np.count_nonzero(self.states == SlotState.SINGLETON))

    @property
    def n_collision(self) -> int:
        return int(np.count_nonzero(self.states == SlotState.COLLISION))

    @property
    def bit_length(self) -> int:
        return self.n_empty + 2 * (self.n_singleton + self.n_collision)

    def singleton_rank(self) -> np.ndarray:
        """0-based rank of each slot among the ``10`` slots (meaningful on singleton slots)."""
        return np.cumsum(self.states == SlotState.SINGLETON) - 1

    def collision_rank(self) -> np.ndarray:
        """Ac for a tag in each slot: number of ``11`` segments up to and including it."""
        return np.cumsum(self.states == SlotState.COLLISION)

    def to_bits(self) -> str:
        return "".join(SlotState(s).code for s in self.states.tolist())

    def __str__(self) -> str:
        return " ".join(SlotState(s).code for s in self.states.tolist())


def first_frame_size(K: int, beta: float) -> int:
    return max(1, round_half_up(beta * K))


def counters_for(bv: BroadcastVector, slots: np.ndarray) -> np.ndarray:
    """Counter value implied by each 1-based slot: 0 singleton, X11+1 collision, -1 empty."""
    states = bv.states[slots - 1]
    ac = bv.collision_rank()[slots - 1]
    return np.where(states == SlotState.COLLISION, ac, np.where(states == SlotState.SINGLETON, 0, -1))


def _bv_for_slots(slots: np.ndarray, f: int) -> BroadcastVector:
    counts = np.bincount(slots - 1, minlength=f) if len(slots) else np.zeros(f, dtype=np.int64)
    return BroadcastVector.from_counts(counts)


def build_bv_first(known: Sequence[TagRecord], beta: float, seed: int, hasher: Hasher = hash_slots):
    """First-frame BV over all known tags and the counter each tag is given."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    f = first_frame_size(len(known), beta)
    lo, hi = _words(known)
    slots = hasher(lo, hi, seed, f) if len(known) else np.empty(0, dtype=np.int64)
    bv = _bv_for_slots(slots, f)
    return bv, counters_for(bv, slots)


def group_slots(counters: np.ndarray, lo: np.ndarray, hi: np.ndarray, B: int, seed: int, hasher: Hasher = hash_slots):
    return (counters - 1) * B + hasher(lo, hi, seed, B)


def build_bv_group(pending: Sequence[TagRecord], B: int, seed: int, hasher: Hasher = hash_slots):
    """Split every pending collision group (tags with Ac > 0) into ``B`` slots.

    Groups are laid out in ascending Ac and the returned counters are ranked
    across the whole frame, not within each group.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    if not pending:
        raise ValueError("no pending tags to split")
    ac = np.array([t.counter for t in pending], dtype=np.int64)
    if ac.min() < 1:
        raise ValueError("pending tags must carry a counter >= 1")
    f = int(ac.max()) * B
    lo, hi = _words(pending)
    slots = group_slots(ac, lo, hi, B, seed, hasher)
    bv = _bv_for_slots(slots, f)
    return bv, counters_for(bv, slots)


@dataclass(frozen=True)
class Reply:
    response: str


@dataclass(frozen=True)
class UpdateCounter:
    counter: int


@dataclass(frozen=True)
class Deactivate:
    pass


@dataclass(frozen=True)
class Silent:
    pass


def tag_step(tag: TagRecord, bv: BroadcastVector, seed: int, group_size: int | None = None,
             hasher: Hasher = hash_slots):
    """What one tag does on hearing Querym; ``group_size`` is None for the first frame, else B.

    Does not mutate the tag; the caller applies the returned action.
    """
    if not (tag.present and tag.active) or tag.silenced:
        return Silent()
    lo, hi = _words([tag])
    if group_size is None:
        slot = int(hasher(lo, hi, seed, len(bv))[0])
    else:
        if tag.counter < 1:
            return Silent()
        slot = (tag.counter - 1) * group_size + int(hasher(lo, hi, seed, group_size)[0])
        if slot > len(bv):
            return Silent()
    state = bv.states[slot - 1]
    if state == SlotState.SINGLETON:
        return Reply(one_hot(int(bv.singleton_rank()[slot - 1]), bv.n_singleton))
    if state == SlotState.COLLISION:
        return UpdateCounter(int(bv.collision_rank()[slot - 1]))
    return Deactivate()


def reader_decode(bv: BroadcastVector, received, owners: Sequence[int]) -> tuple[set[int], set[int]]:
    """Split singleton owners into (present, missing) from the received tri-state string.

    ``owners`` lists the owner ID of each singleton slot in BV order; any
    energy at a position (a clean 1 or an x) marks its owner present.
    """
    if len(received) != bv.n_singleton or len(owners) != bv.n_singleton:
        raise ContractError(
            f"received {len(received)} symbols and {len(owners)} owners for {bv.n_singleton} singletons")
    if isinstance(received, str):
        lit = [c != "0" for c in received]
    else:
        lit = (np.asarray(received) != 0).tolist()
    present = {o for o, on in zip(owners, lit) if on}
    missing = {o for o, on in zip(owners, lit) if not on}
    return present, missing


@dataclass
class FrameTrace:
    bv: BroadcastVector
    received: str
    owners: list[int]


@dataclass
class RoundReport:
    verified_present: set[int]
    identified_missing: set[int]
    falsely_present: set[int]
    unknown_deactivated_p2: int
    unknown_replied_p2: int
    frames_used: int
    ledger: TimeLedger = field(default_factory=TimeLedger)
    depth_capped: bool = False
    trace: list[FrameTrace] = field(default_factory=list)

    @property
    def missing_total(self) -> int:
        return len(self.identified_missing) + len(self.falsely_present)

    @property
    def r_fn(self) -> float:
        m = self.missing_total
        return len(self.falsely_present) / m if m else 0.0


def run_phase2(pop: Population, beta: float, B: int, rng, hasher: Hasher = hash_slots,
               max_depth: int = MAX_DEPTH, keep_trace: bool = False) -> RoundReport:
    """Run tree-splitting frames until a frame has no expected collision slot."""
    if B < 2:
        raise ValueError("B must be >= 2")
    K, U = pop.K, pop.U
    klo, khi = pop.words("known")
    ulo, uhi = pop.words("unknown")
    present = np.fromiter((t.present for t in pop.known), dtype=bool, count=K)
    kac = np.zeros(K, dtype=np.int64)
    kpending = np.ones(K, dtype=bool)
    status = np.zeros(K, dtype=np.int8)  # 0 unverified, 1 marked present, 2 marked missing
    ulive = np.fromiter((t.active and not t.silenced for t in pop.unknown), dtype=bool, count=U)
    uac = np.zeros(U, dtype=np.int64)
    u_deact = np.zeros(U, dtype=bool)
    u_replied = np.zeros(U, dtype=bool)

    ledger = TimeLedger()
    trace: list[FrameTrace] = []
    frames = 0
    capped = False
    groups = 0
    while kpending.any():
        seed = draw_seed(rng)
        kidx = np.flatnonzero(kpending)
        uidx = np.flatnonzero(ulive)
        if frames == 0:
            f = first_frame_size(K, beta)
            kslots = hasher(klo[kidx], khi[kidx], seed, f)
            uslots = hasher(ulo[uidx], uhi[uidx], seed, f) if uidx.size else np.empty(0, dtype=np.int64)
        else:
            f = groups * B
            kslots = group_slots(kac[kidx], klo[kidx], khi[kidx], B, seed, hasher)
            uslots = (group_slots(uac[uidx], ulo[uidx], uhi[uidx], B, seed, hasher)
                      if uidx.size else np.empty(0, dtype=np.int64))
        frames += 1
        bv = _bv_for_slots(kslots, f)
        sing_rank = bv.singleton_rank()

        kstate = bv.states[kslots - 1]
        ustate = bv.states[uslots - 1] if uidx.size else np.empty(0, dtype=np.int8)
        owner_mask = kstate == SlotState.SINGLETON
        owners = kidx[owner_mask]
        owner_pos = sing_rank[kslots[owner_mask] - 1]
        order = np.argsort(owner_pos)
        owners, owner_pos = owners[order], owner_pos[order]

        k_reply_pos = owner_pos[present[owners]]
        u_sing = ustate == SlotState.SINGLETON
        u_reply_pos = sing_rank[uslots[u_sing] - 1]
        received = superpose_one_hot(np.concatenate([k_reply_pos, u_reply_pos]), bv.n_singleton)

        lit = received[owner_pos] != 0
        status[owners[lit]] = 1
        status[owners[~lit]] = 2
        kpending[owners] = False
        kac[owners] = 0

        coll = bv.collision_rank()
        kc = kstate == SlotState.COLLISION
        kac[kidx[kc]] = coll[kslots[kc] - 1]
        uc = ustate == SlotState.COLLISION
        uac[uidx[uc]] = coll[uslots[uc] - 1]
        u_replied[uidx[u_sing]] = True
        u_empty = ustate == SlotState.EMPTY
        u_deact[uidx[u_empty]] = True
        ulive[uidx[u_sing | u_empty]] = False

        ledger.charge("r", bv.bit_length + HEADER_BITS)
        ledger.charge("t", bv.n_singleton)
        if keep_trace:
            trace.append(FrameTrace(bv, symbols_to_str(received), [pop.known[j].id for j in owners.tolist()]))
        groups = bv.n_collision
        if groups == 0:
            break
        if frames >= max_depth:
            # pathological hash: settle the stuck owners conservatively and stop
            stuck = np.flatnonzero(kpending)
            status[stuck] = 1
            kpending[stuck] = False
            capped = True
            break

    for j, t in enumerate(pop.known):
        t.counter = int(kac[j])
        t.verified = Verified.PRESENT if status[j] == 1 else Verified.MISSING
        t.silenced = t.present
    for j, t in enumerate(pop.unknown):
        if u_deact[j]:
            t.active = False
        if u_replied[j]:
            t.silenced = True
        t.counter = int(uac[j])

    ids = [t.id for t in pop.known]
    verified_present = {ids[j] for j in np.flatnonzero((status == 1) & present).tolist()}
    falsely_present = {ids[j] for j in np.flatnonzero((status == 1) & ~present).tolist()}
    identified_missing = {ids[j] for j in np.flatnonzero(status == 2).tolist()}
    return RoundReport(
        verified_present=verified_present,
        identified_missing=identified_missing,
        falsely_present=falsely_present,
        unknown_deactivated_p2=int(u_deact.sum()),
        unknown_replied_p2=int(u_replied.sum()),
        frames_used=frames,
        ledger=ledger,
        depth_capped=capped,
        trace=trace,
    )
