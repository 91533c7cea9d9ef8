"""Phase I: early-breaking estimation of the unknown-tag count, then deactivation.

The reader hashes every known tag (present or not, it cannot tell) into a
frame of K slots and broadcasts the occupancy vector PV.  The estimation frame
carries only the first ``ceil(gamma * K)`` bits of it (the EV prefix); unknown
tags landing on a 0 of EV answer with a one-hot string over the EV zeros and
switch themselves off.  The number of lit positions drives the estimate of U,
which in turn fixes how many full-PV deactivation frames are needed to push
the surviving unknown population under the reliability budget.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .channel import count_active, superpose_one_hot, transmission_time
from .model import HEADER_BITS, Population, ScenarioParams, TagRecord, TimeLedger, hash_slots

Hasher = Callable[[np.ndarray, np.ndarray, int, int], np.ndarray]

E_INV = math.exp(-1.0)
# per-frame survival factor of an unknown tag under a K-slot deactivation frame
SURVIVAL = 1.0 - E_INV


class UnsupportedReliability(ValueError):
    pass


def draw_seed(rng) -> int:
    return int(rng.integers(0, 1 << 16))


def _words(tags: Sequence[TagRecord]) -> tuple[np.ndarray, np.ndarray]:
    mask = (1 << 64) - 1
    lo = np.fromiter((t.id & mask for t in tags), dtype=np.uint64, count=len(tags))
    hi = np.fromiter((t.id >> 64 for t in tags), dtype=np.uint64, count=len(tags))
    return lo, hi


def pv_from_slots(slots: np.ndarray, f: int) -> np.ndarray:
    pv = np.zeros(f, dtype=np.uint8)
    if len(slots):
        pv[np.asarray(slots) - 1] = 1
    return pv


def build_pv(known: Sequence[TagRecord], f: int, seed: int, hasher: Hasher = hash_slots) -> np.ndarray:
    """Occupancy vector of the known tags: bit ``s-1`` is 1 iff some known tag hashes to slot ``s``."""
    if not known:
        return np.zeros(f, dtype=np.uint8)
    lo, hi = _words(known)
    return pv_from_slots(hasher(lo, hi, seed, f), f)


def ev_length(f: int, gamma: float) -> int:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    # round() first so that e.g. gamma=1/3, f=3 does not ceil to 2
    return min(f, math.ceil(round(gamma * f, 9)))


def extract_ev(pv: np.ndarray, gamma: float) -> np.ndarray:
    return pv[: ev_length(len(pv), gamma)]


def bits_to_str(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits.tolist())


def estimator_cap(K: int, gamma: float) -> float:
    """Largest n_x for which the estimator's logarithm is defined (exclusive)."""
    return gamma * K * E_INV


def estimator_saturated(n_x: int, K: int, gamma: float) -> bool:
    return n_x >= estimator_cap(K, gamma)


def estimate_unknown(n_x: int, K: int, gamma: float) -> float:
    """Estimate U from the number of lit EV-zero positions.

    Counts at or above ``gamma*K/e`` make the logarithm undefined; they are
    clamped to one below that cap (see :func:`estimator_saturated`).
    """
    if n_x < 0:
        raise ValueError("n_x must be non-negative")
    if n_x == 0 or K == 0:
        return 0.0
    cap = estimator_cap(K, gamma)
    if n_x >= cap:
        n_x = max(cap - 1.0, 0.0)
    return -K * math.log1p(-n_x / cap)


def residual_unknown_budget(alpha: float, K: int) -> int:
    """Maximum unknown tags allowed to survive into Phase II (never below 1)."""
    if not 0.0 < alpha <= 0.99:
        raise UnsupportedReliability(f"reliability {alpha} outside (0, 0.99]")
    if alpha <= 0.90:
        percent = 10
    elif alpha <= 0.95:
        percent = 5
    else:
        percent = 1
    return max(1, K * percent // 100)


def deactivation_frames_needed(u_est: float, u_d_max: int) -> int:
    if u_d_max < 1:
        raise ValueError("u_d_max must be >= 1")
    if u_est <= u_d_max:
        return 0
    frames = math.log(u_d_max / u_est) / math.log(SURVIVAL)
    return max(0, math.ceil(round(frames, 9)))


@dataclass
class EstimationFrame:
    n_x: int
    responders: int
    time_ms: float
    ev: np.ndarray
    received: np.ndarray
    seed: int


def run_estimation_frame(pop: Population, gamma: float, seed: int, hasher: Hasher = hash_slots) -> EstimationFrame:
    """Broadcast Querye with the EV prefix; responders reply one-hot and deactivate."""
    f = max(1, pop.K)
    klo, khi = pop.words("known")
    pv = pv_from_slots(hasher(klo, khi, seed, f), f) if pop.K else np.zeros(f, dtype=np.uint8)
    ev = extract_ev(pv, gamma)
    zeros = ev == 0
    n_zero = int(zeros.sum())
    zero_rank = np.cumsum(zeros) - 1

    active = np.fromiter((t.active for t in pop.unknown), dtype=bool, count=pop.U)
    idx = np.flatnonzero(active)
    positions = np.empty(0, dtype=np.int64)
    responders = np.empty(0, dtype=np.int64)
    if idx.size:
        ulo, uhi = pop.words("unknown")
        slots = hasher(ulo[idx], uhi[idx], seed, f)
        inside = slots <= len(ev)
        hit = np.zeros(idx.size, dtype=bool)
        hit[inside] = zeros[slots[inside] - 1]
        responders = idx[hit]
        positions = zero_rank[slots[hit] - 1]
    received = superpose_one_hot(positions, n_zero)
    for j in responders.tolist():
        pop.unknown[j].active = False
    time_ms = transmission_time(len(ev) + HEADER_BITS) + transmission_time(n_zero)
    return EstimationFrame(count_active(received), int(responders.size), time_ms, ev, received, seed)


def run_deactivation_frame(pop: Population, seed: int, hasher: Hasher = hash_slots) -> tuple[int, float]:
    """Broadcast Queryd with the full PV; unknown tags on a 0 bit deactivate silently."""
    f = max(1, pop.K)
    klo, khi = pop.words("known")
    pv = pv_from_slots(hasher(klo, khi, seed, f), f) if pop.K else np.zeros(f, dtype=np.uint8)
    active = np.fromiter((t.active for t in pop.unknown), dtype=bool, count=pop.U)
    idx = np.flatnonzero(active)
    off = np.empty(0, dtype=np.int64)
    if idx.size:
        ulo, uhi = pop.words("unknown")
        slots = hasher(ulo[idx], uhi[idx], seed, f)
        off = idx[pv[slots - 1] == 0]
    for j in off.tolist():
        pop.unknown[j].active = False
    return int(off.size), transmission_time(f + HEADER_BITS)


@dataclass
class PhaseOneResult:
    u_est: float
    saturated: bool
    f_d: int
    u_d_max: int
    n_x: int
    est_deactivated: int
    deactivated: int
    remaining_unknown: int
    ledger: TimeLedger = field(default_factory=TimeLedger)
    frame_deactivations: list[int] = field(default_factory=list)


def run_phase1(pop: Population, params: ScenarioParams, rng, hasher: Hasher = hash_slots) -> PhaseOneResult:
    """Estimation frame, frame budgeting, then ``F_d`` deactivation frames with fresh seeds."""
    ledger = TimeLedger()
    est = run_estimation_frame(pop, params.gamma, draw_seed(rng), hasher)
    ledger.charge("est", len(est.ev) + HEADER_BITS)
    ledger.charge("est", len(est.received))
    u_est = estimate_unknown(est.n_x, pop.K, params.gamma)
    saturated = estimator_saturated(est.n_x, pop.K, params.gamma)
    u_d_max = residual_unknown_budget(params.alpha, pop.K)
    f_d = deactivation_frames_needed(u_est, u_d_max)

    per_frame = []
    for _ in range(f_d):
        n, _ = run_deactivation_frame(pop, draw_seed(rng), hasher)
        per_frame.append(n)
        ledger.charge("dea", max(1, pop.K) + HEADER_BITS)
    remaining = sum(1 for t in pop.unknown if t.active)
    return PhaseOneResult(
        u_est=u_est,
        saturated=saturated,
        f_d=f_d,
        u_d_max=u_d_max,
        n_x=est.n_x,
        est_deactivated=est.responders,
        deactivated=pop.U - remaining,
        remaining_unknown=remaining,
        ledger=ledger,
        frame_deactivations=per_frame,
    )
