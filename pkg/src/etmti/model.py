"""Tag populations, scenario parameters, the shared slot hash and the time ledger."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

ID_BITS = 96
SEGMENT_BITS = 96
T_ID_MS = 2.4
# 4-bit command type followed by three 16-bit fields (seed, frame size, auxiliary)
HEADER_BITS = 52

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB


class TagClass(enum.Enum):
    KNOWN = "known"
    UNKNOWN = "unknown"


class Verified(enum.Enum):
    UNVERIFIED = "unverified"
    PRESENT = "present"
    MISSING = "missing"


@dataclass(slots=True)
class TagRecord:
    id: int
    tag_class: TagClass
    present: bool = True
    active: bool = True
    counter: int = 0
    verified: Verified = Verified.UNVERIFIED
    # replied in an expected singleton slot; quiet for the rest of the round
    silenced: bool = False

    @property
    def is_known(self) -> bool:
        return self.tag_class is TagClass.KNOWN


def split_id(tag_id: int) -> tuple[int, int]:
    """Return the (low 64 bits, high 32 bits) words of a 96-bit ID."""
    return tag_id & _M64, (tag_id >> 64) & 0xFFFFFFFF


def _fmix(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * _C1) & _M64
    z = ((z ^ (z >> 27)) * _C2) & _M64
    return z ^ (z >> 31)


def hash_slot(tag_id: int, seed: int, f: int) -> int:
    """Map a tag to a slot in ``[1, f]`` for the given 16-bit seed.

    The 96-bit ID and the seed are folded through two rounds of the
    splitmix64 finalizer; :func:`hash_slots` is the vectorized twin and the
    two must agree bit for bit.
    """
    if f < 1:
        raise ValueError(f"frame size must be >= 1, got {f}")
    lo, hi = split_id(tag_id)
    key = (hi << 16) | (seed & 0xFFFF)
    return _fmix(lo ^ _fmix(key ^ _GOLDEN)) % f + 1


_U = np.uint64


def _fmix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _U(_C1)
    z = (z ^ (z >> _U(27))) * _U(_C2)
    return z ^ (z >> _U(31))


def hash_slots(lo: np.ndarray, hi: np.ndarray, seed: int, f: int) -> np.ndarray:
    """Vectorized :func:`hash_slot` over ID word arrays; returns int64 slots in ``[1, f]``."""
    if f < 1:
        raise ValueError(f"frame size must be >= 1, got {f}")
    lo = np.asarray(lo, dtype=np.uint64)
    hi = np.asarray(hi, dtype=np.uint64)
    key = (hi << _U(16)) | _U(seed & 0xFFFF)
    h = _fmix_array(lo ^ _fmix_array(key ^ _U(_GOLDEN)))
    return (h % _U(f)).astype(np.int64) + 1


def segments(bits: float) -> int:
    """Number of 96-bit segments needed to carry ``bits`` bits."""
    if bits <= 0:
        return 0
    return math.ceil(bits / SEGMENT_BITS)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class ScenarioParams:
    K: int
    r_m: float = 0.0
    r_u: float = 0.0
    alpha: float = 0.95
    gamma: float = 0.25
    beta: float = 0.95
    B: int = 3
    trials: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"K must be non-negative, got {self.K}")
        if not 0.0 <= self.r_m <= 1.0:
            raise ValueError(f"r_m must lie in [0, 1], got {self.r_m}")
        if self.r_u < 0.0:
            raise ValueError(f"r_u must be non-negative, got {self.r_u}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.B < 2:
            raise ValueError(f"B must be >= 2, got {self.B}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    @property
    def M(self) -> int:
        return round_half_up(self.r_m * self.K)

    @property
    def U(self) -> int:
        return round_half_up(self.r_u * self.K)


@dataclass
class Population:
    known: list[TagRecord]
    unknown: list[TagRecord]
    _words: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def K(self) -> int:
        return len(self.known)

    @property
    def U(self) -> int:
        return len(self.unknown)

    @property
    def missing_count(self) -> int:
        return sum(1 for t in self.known if not t.present)

    def missing_ids(self) -> set[int]:
        return {t.id for t in self.known if not t.present}

    def words(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """Cached (lo, hi) ID word arrays for ``"known"`` or ``"unknown"`` tags."""
        if which not in self._words:
            tags = self.known if which == "known" else self.unknown
            lo = np.fromiter((t.id & _M64 for t in tags), dtype=np.uint64, count=len(tags))
            hi = np.fromiter(((t.id >> 64) & 0xFFFFFFFF for t in tags), dtype=np.uint64, count=len(tags))
            self._words[which] = (lo, hi)
        return self._words[which]

    def reset(self) -> None:
        """Return every tag to its start-of-round protocol state."""
        for t in self.known + self.unknown:
            t.active = True
            t.counter = 0
            t.verified = Verified.UNVERIFIED
            t.silenced = False


def _draw_ids(rng: np.random.Generator, n: int) -> list[int]:
    ids: list[int] = []
    seen: set[int] = set()
    while len(ids) < n:
        need = n - len(ids)
        lo = rng.integers(0, 1 << 64, size=need, dtype=np.uint64, endpoint=False)
        hi = rng.integers(0, 1 << 32, size=need, dtype=np.uint64, endpoint=False)
        for a, b in zip(lo.tolist(), hi.tolist()):
            tag_id = (b << 64) | a
            if tag_id not in seen:
                seen.add(tag_id)
                ids.append(tag_id)
    return ids


def generate_population(params: ScenarioParams, rng_seed) -> Population:
    """Draw K known tags (M of them missing) and U unknown tags with distinct 96-bit IDs.

    ``rng_seed`` may be an int, a :class:`numpy.random.SeedSequence` or a
    ``Generator``; the same seed always yields the same population.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    K, M, U = params.K, params.M, params.U
    ids = _draw_ids(rng, K + U)
    missing = set(rng.choice(K, size=M, replace=False).tolist()) if M else set()
    known = [TagRecord(ids[j], TagClass.KNOWN, present=j not in missing) for j in range(K)]
    unknown = [TagRecord(i, TagClass.UNKNOWN) for i in ids[K:]]
    return Population(known, unknown)


@dataclass
class TimeLedger:
    """Transmission time split by phase, kept as exact 96-bit segment counts."""

    est_segments: int = 0
    dea_segments: int = 0
    r_segments: int = 0
    t_segments: int = 0
    t_id: float = T_ID_MS

    def charge(self, part: str, bits: float) -> int:
        n = segments(bits)
        name = f"{part}_segments"
        setattr(self, name, getattr(self, name) + n)
        return n

    @property
    def t_est(self) -> float:
        return self.est_segments * self.t_id

    @property
    def t_dea(self) -> float:
        return self.dea_segments * self.t_id

    @property
    def t_r(self) -> float:
        return self.r_segments * self.t_id

    @property
    def t_t(self) -> float:
        return self.t_segments * self.t_id

    @property
    def phase1_total(self) -> float:
        return (self.est_segments + self.dea_segments) * self.t_id

    @property
    def phase2_total(self) -> float:
        return (self.r_segments + self.t_segments) * self.t_id

    @property
    def total(self) -> float:
        return self.phase1_total + self.phase2_total
