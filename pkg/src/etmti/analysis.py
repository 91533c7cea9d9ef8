"""Closed-form time, frame-count and false-negative evaluators.

Phase II is modelled as one search tree whose level 0 has ``beta*K`` slots
and whose every later node has ``B`` children, so a given tag lands in a given
level-``i`` slot with probability ``p_i = 1 / (beta*K*B**i)``.  Occupancy uses
exact binomials (via :mod:`scipy.stats`), which stay accurate in the far
tail where ``1 - P0 - P1`` would otherwise cancel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy.stats import binom

from .ebud import SURVIVAL, deactivation_frames_needed, residual_unknown_budget
from .model import HEADER_BITS, SEGMENT_BITS, T_ID_MS, segments

MAX_LEVELS = 64


class AnalysisError(RuntimeError):
    """The tree model did not resolve every tag within ``MAX_LEVELS`` levels."""


@dataclass(frozen=True)
class LevelProfile:
    i: int
    p: float
    P_empt: float
    P_sing: float
    P_coll: float
    q: float
    S: float
    K_star: float


def _level0_slots(K: int, beta: float) -> float:
    return max(1.0, beta * K)


def _slot_prob(K: int, beta: float, B: int, i: int) -> float:
    return 1.0 / (_level0_slots(K, beta) * B ** i)


def _occupancy(K: int, p: float) -> tuple[float, float, float]:
    p0 = float(binom.pmf(0, K, p))
    p1 = float(binom.pmf(1, K, p))
    pc = float(binom.sf(1, K, p))
    return p0, p1, pc


def level_profile(K: int, beta: float, B: int, i: int) -> LevelProfile:
    if K < 1 or beta <= 0 or B < 2 or i < 0:
        raise ValueError("need K >= 1, beta > 0, B >= 2, i >= 0")
    p = _slot_prob(K, beta, B, i)
    p0, p1, pc = _occupancy(K, p)
    slots = _level0_slots(K, beta) * B ** i
    if i == 0:
        q = 1.0
        k_star = slots * p1
    else:
        prev = _slot_prob(K, beta, B, i - 1)
        _, prev_p1, prev_pc = _occupancy(K, prev)
        q = prev_pc
        # tags first isolated at level i: singletons at i minus singletons at i-1
        k_star = slots * p1 - (slots / B) * prev_p1
    return LevelProfile(i, p, p0, p1, pc, q, slots * q, k_star)


def profiles(K: int, beta: float, B: int, levels: int = MAX_LEVELS) -> list[LevelProfile]:
    return [level_profile(K, beta, B, i) for i in range(levels)]


def frames_needed(K: int, beta: float, B: int) -> tuple[int, list[LevelProfile]]:
    """Smallest F_m with ``ceil(sum of K*_i over i < F_m) == K``, plus the profiles used."""
    out: list[LevelProfile] = []
    for i in range(MAX_LEVELS):
        prof = level_profile(K, beta, B, i)
        out.append(prof)
        # the running sum telescopes to the level's singleton count
        resolved = _level0_slots(K, beta) * B ** i * prof.P_sing
        if math.ceil(round(resolved, 9)) >= K:
            return i + 1, out
    raise AnalysisError(f"no convergence within {MAX_LEVELS} levels for K={K}, beta={beta}, B={B}")


class Phase2Prediction(NamedTuple):
    T_r: float
    T_t: float
    F_m: int

    @property
    def T2(self) -> float:
        return self.T_r + self.T_t


def expected_empty_visited(K: int, beta: float, B: int, i: int) -> float:
    """Expected number of expected-empty slots among the visited slots of level ``i``.

    Past level 0 a child slot is only visited when its parent collided, so an
    empty child needs two or more tags in its ``B - 1`` siblings.
    """
    slots = _level0_slots(K, beta) * B ** i
    a = 1.0 / slots
    if i == 0:
        return slots * (1 - a) ** K
    parent = B * a
    return slots * ((1 - a) ** K - (1 - parent) ** K - K * (parent - a) * (1 - parent) ** (K - 1))


def bv_bits(K: int, beta: float, B: int, prof: LevelProfile, encoding: str = "exact") -> float:
    """Expected BV payload of one frame: 2 bits per visited slot, 1 for expected-empty ones."""
    if encoding == "flat":
        return 2 * prof.S
    if encoding == "exact":
        return 2 * prof.S - expected_empty_visited(K, beta, B, prof.i)
    raise ValueError(f"unknown encoding {encoding!r}")


def predict_phase2_time(K: int, beta: float, B: int, *, encoding: str = "exact", segmented: bool = True,
                        t_id: float = T_ID_MS) -> Phase2Prediction:
    """Expected reader-command and tag-reply time of Phase II.

    ``encoding="flat"`` charges every visited slot 2 bits, the common
    shortcut; ``"exact"`` charges expected-empty slots their real 1 bit.
    ``segmented=False`` drops the per-frame rounding up to whole 96-bit
    segments and returns the expected on-air time.
    """
    F_m, profs = frames_needed(K, beta, B)
    T_r = T_t = 0.0
    for prof in profs[:F_m]:
        bits = bv_bits(K, beta, B, prof, encoding)
        if segmented:
            T_r += segments(bits + HEADER_BITS) * t_id
            T_t += segments(prof.K_star) * t_id
        else:
            T_r += (bits + HEADER_BITS) / SEGMENT_BITS * t_id
            T_t += prof.K_star / SEGMENT_BITS * t_id
    return Phase2Prediction(T_r, T_t, F_m)


def predict_phase1_time(K: int, gamma: float, F_d: int, t_id: float = T_ID_MS) -> tuple[float, float]:
    """(T_est, T_dea) with a K-slot first frame and ``F_d`` K-slot deactivation frames."""
    f1 = K
    ev_bits = gamma * f1
    expected_empty = ev_bits * (1 - 1 / f1) ** K if K else 0.0
    t_est = (segments(ev_bits + HEADER_BITS) + segments(expected_empty)) * t_id
    t_dea = F_d * segments(f1 + HEADER_BITS) * t_id
    return t_est, t_dea


# Exact occupancy expressions next to the e^-x forms they are usually replaced by.

def p_empty(K: int, f: float, exact: bool = True) -> float:
    """Probability that no known tag lands in a given slot of an ``f``-slot frame."""
    return (1 - 1 / f) ** K if exact else math.exp(-K / f)


def p_unknown_hit(U: int, f: float, exact: bool = True) -> float:
    return 1 - (1 - 1 / f) ** U if exact else 1 - math.exp(-U / f)


def p_lit(K: int, U: int, f: float, exact: bool = True) -> float:
    """Probability an EV position is expected-empty yet lit by an unknown tag."""
    return p_empty(K, f, exact) * p_unknown_hit(U, f, exact)


def expected_nx(K: int, U: int, gamma: float, exact: bool = True) -> float:
    return gamma * K * p_lit(K, U, K, exact)


def deactivated_fraction(K: int, f: float, exact: bool = True) -> float:
    """Share of active unknown tags switched off by one ``f``-slot Queryd frame."""
    return p_empty(K, f, exact)


def remaining_unknown(U: float, F_d: int, K: int | None = None, exact: bool = False) -> float:
    """Unknown tags expected to survive ``F_d`` deactivation frames."""
    survive = 1 - p_empty(K, K, True) if exact and K else SURVIVAL
    return U * survive ** F_d


def fnr_bound(K: int, M_ratio: float, U_d: float, beta: float = 0.95, B: int = 3, form: str = "expected") -> float:
    """False-negative rate of Phase II with ``U_d`` unknown tags left after Phase I.

    A missing tag isolated at level ``i`` is reported present when an unknown
    tag shares its slot.  ``form="expected"`` spreads the ``U_d * q_i``
    unknowns reaching level ``i`` over the ``S_i`` visited slots, which makes
    the per-slot hit probability ``1 - (1 - p_i)**U_d``.  ``form="collision"``
    applies ``p_i`` directly to ``U_d * P_coll`` and ``form="recursive"``
    to ``U_d`` times the product of earlier collision probabilities.  Under the
    even-spread assumption the missing ratio cancels; it only matters at 0.
    """
    if U_d < 0:
        raise ValueError("U_d must be non-negative")
    if U_d == 0 or M_ratio == 0 or K == 0:
        return 0.0
    F_m, profs = frames_needed(K, beta, B)
    total = 0.0
    carried = float(U_d)
    for prof in profs[:F_m]:
        if form == "expected":
            exponent = U_d
        elif form == "collision":
            exponent = U_d * prof.P_coll
        elif form == "recursive":
            exponent = carried
            carried *= prof.P_coll
        else:
            raise ValueError(f"unknown form {form!r}")
        total += prof.K_star / K * -math.expm1(exponent * math.log1p(-prof.p))
    return min(1.0, max(0.0, total))


class PlanResult(NamedTuple):
    T1_pred: float
    T2_pred: float
    F_m_pred: int
    F_d_pred: int
    r_fn_bound: float
    u_d_pred: float
    u_d_max: int
    beta: float
    B: int
    gamma: float


def plan(K: int, alpha: float, u_est: float, *, gamma: float = 0.25, beta: float = 0.95, B: int = 3,
         M_ratio: float = 0.3) -> PlanResult:
    u_d_max = residual_unknown_budget(alpha, K)
    F_d = deactivation_frames_needed(u_est, u_d_max)
    t_est, t_dea = predict_phase1_time(K, gamma, F_d)
    p2 = predict_phase2_time(K, beta, B)
    u_d = remaining_unknown(u_est, F_d)
    bound = fnr_bound(K, M_ratio, u_d, beta, B)
    return PlanResult(t_est + t_dea, p2.T2, p2.F_m, F_d, bound, u_d, u_d_max, beta, B, gamma)


def beta_grid() -> list[float]:
    return [round(0.1 + 0.05 * j, 2) for j in range(23)]


def sweep_beta_b(K: int, betas: list[float] | None = None, branches=range(2, 7), *,
                 encoding: str = "flat", segmented: bool = True) -> list[tuple[float, int, float]]:
    """T2 over a (beta, B) grid as ``(beta, B, T2_ms)`` rows.

    Defaults to the flat 2-bits-per-visited-slot model with per-frame
    segment rounding; pass ``encoding="exact"`` for the model that tracks
    the simulator.
    """
    betas = beta_grid() if betas is None else betas
    return [(b, B, predict_phase2_time(K, b, B, encoding=encoding, segmented=segmented).T2)
            for B in branches for b in betas]


def sweep_argmin(rows: list[tuple[float, int, float]]) -> tuple[float, int, float]:
    return min(rows, key=lambda r: r[2])

