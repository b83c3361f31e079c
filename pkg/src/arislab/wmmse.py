"""Beamforming block: rate <-> MSE reformulation with closed-form updates.

Alternates MMSE equalizers, MSE weights, and beamformers.  Each beam's
quadratic normal matrix keeps only the co-user terms its own interference
model induces (positions >= the decoding stage under SIC; every co-user
under SDMA), so the beam step is the exact constrained minimizer of the
weighted sum-MSE objective and the objective is non-increasing per round.
The shared power multiplier is found by bisection on the eigenvalue form
of the per-beam solutions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

from .channel import (ChannelSet, eff_sat_sat, eff_sat_tbs, eff_terr_sat,
                      eff_terr_tbs)
from .ratemodel import SicOrder, slot_powers
from .scene import Scenario
from .state import NetworkState

BISECT_STEPS = 60
MAX_BRACKET_DOUBLINGS = 60
GAIN_EPS = 1e-7  # bits/s/Hz; line searches ignore float-noise improvements


@dataclass
class WmmseState:
    """Auxiliary WMMSE variables, indexed (slot, user id)."""

    u_t: np.ndarray
    u_s: np.ndarray
    w_t: np.ndarray
    w_s: np.ndarray
    e_t: np.ndarray
    e_s: np.ndarray
    T_t: np.ndarray
    T_s: np.ndarray
    lam_b: np.ndarray = field(default=None)
    lam_s: np.ndarray = field(default=None)


def interference_T(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                   sic: SicOrder, sdma: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Total received power at each user's equalizer (desired + interference
    + forwarded ARIS noise + receiver noise); indexed by user id."""
    p = slot_powers(scn, ch, st, n)
    t_order, s_order = sic.t_order[n], sic.s_order[n]
    T_t = np.zeros(scn.k_users)
    for kp in range(scn.k_users):
        uid = t_order[kp]
        row = p.g_t[uid][t_order]
        intra = float(row.sum()) if sdma else float(row[kp:].sum())
        T_t[uid] = intra + float(p.x_t[uid].sum()) + float(p.an_t[uid]) + scn.noise_terr
    T_s = np.zeros(scn.l_users)
    for lp in range(scn.l_users):
        uid = s_order[lp]
        row = p.g_s[uid][s_order]
        intra = float(row.sum()) if sdma else float(row[lp:].sum())
        T_s[uid] = intra + float(p.x_s[uid].sum()) + float(p.an_s[uid]) + scn.noise_sat
    return T_t, T_s


def mse(u: complex, big_t: float, hv: complex) -> float:
    """e = |u|^2 T - 2 Re{conj(u) * hv} + 1 (estimate u^H y of the unit symbol)."""
    return float(abs(u) ** 2 * big_t - 2.0 * (np.conj(u) * hv).real + 1.0)


def update_equalizers(hv: np.ndarray, big_t: np.ndarray) -> np.ndarray:
    """MMSE equalizers u* = hv / T."""
    return hv / big_t


def update_weights(e: np.ndarray) -> np.ndarray:
    """Optimal MSE weights w* = 1/e."""
    e = np.asarray(e)
    if np.any(e <= 0.0):
        raise FloatingPointError("MSE must be positive; internal fault")
    return 1.0 / e


def p2_objective(w: np.ndarray, e: np.ndarray) -> float:
    """Weighted sum-MSE objective contribution sum(w*e - ln w)."""
    return float(np.sum(w * e - np.log(w)))


def _desired_products(scn, ch, st, n):
    eb = eff_terr_tbs(ch, st.phi_u(n))
    fs = eff_sat_sat(ch, st.phi_h(n))
    hv_t = np.einsum("km,km->k", eb, st.v_b[n])
    hv_s = np.einsum("lm,lm->l", fs, st.v_s[n])
    return eb, fs, hv_t, hv_s


def refresh_uw(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
               sic: SicOrder, sdma: bool = False) -> WmmseState:
    """Closed-form (u, w) at the current beams/coefficients for all slots."""
    n_slots = scn.n_slots
    wm = WmmseState(
        u_t=np.zeros((n_slots, scn.k_users), dtype=complex),
        u_s=np.zeros((n_slots, scn.l_users), dtype=complex),
        w_t=np.ones((n_slots, scn.k_users)), w_s=np.ones((n_slots, scn.l_users)),
        e_t=np.ones((n_slots, scn.k_users)), e_s=np.ones((n_slots, scn.l_users)),
        T_t=np.zeros((n_slots, scn.k_users)), T_s=np.zeros((n_slots, scn.l_users)),
        lam_b=np.zeros(n_slots), lam_s=np.zeros(n_slots))
    for n, ch in enumerate(frame):
        _, _, hv_t, hv_s = _desired_products(scn, ch, st, n)
        T_t, T_s = interference_T(scn, ch, st, n, sic, sdma)
        u_t = update_equalizers(hv_t, T_t)
        u_s = update_equalizers(hv_s, T_s)
        e_t = np.array([mse(u_t[k], T_t[k], hv_t[k]) for k in range(scn.k_users)])
        e_s = np.array([mse(u_s[l], T_s[l], hv_s[l]) for l in range(scn.l_users)])
        wm.u_t[n], wm.u_s[n] = u_t, u_s
        wm.e_t[n], wm.e_s[n] = e_t, e_s
        wm.w_t[n], wm.w_s[n] = update_weights(e_t), update_weights(e_s)
        wm.T_t[n], wm.T_s[n] = T_t, T_s
    return wm


def update_beams(a_mats: list[np.ndarray], b_vecs: list[np.ndarray],
                 p_budget: float) -> tuple[np.ndarray, float]:
    """Solve v_m = (A_m + lam I)^-1 b_m with the shared multiplier chosen by
    bisection so the total power meets the budget (lam = 0 when slack).

    Returns (stacked beams, lam).  Power is evaluated through the eigen
    decomposition of each A_m, which makes p(lam) exactly monotone.
    """
    m_dim = a_mats[0].shape[0]
    eigvals, coefs, bases = [], [], []
    for a, b in zip(a_mats, b_vecs):
        a = 0.5 * (a + a.conj().T)
        lam_j, basis = np.linalg.eigh(a)
        ridge = 1e-12 * max(float(np.trace(a).real), 0.0) / m_dim
        lam_j = np.maximum(lam_j, ridge)
        eigvals.append(lam_j)
        bases.append(basis)
        coefs.append(basis.conj().T @ b)
    lam_all = np.concatenate(eigvals)
    c2_all = np.abs(np.concatenate(coefs)) ** 2

    def power(lam: float) -> float:
        return float(np.sum(c2_all / (lam_all + lam) ** 2))

    if not np.any(c2_all):
        return np.zeros((len(a_mats), m_dim), dtype=complex), 0.0

    with np.errstate(divide="ignore", over="ignore"):
        p0 = power(0.0)
    if p0 <= p_budget:
        lam = 0.0
    else:
        hi = 1.0
        doublings = 0
        while power(hi) > p_budget:
            hi *= 2.0
            doublings += 1
            if doublings > MAX_BRACKET_DOUBLINGS:
                raise FloatingPointError("power bisection failed to bracket the multiplier")
        lo = 0.0
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            p_mid = power(mid)
            if p_mid > p_budget:
                lo = mid
            else:
                hi = mid
                if p_budget - p_mid <= 1e-11 * p_budget:
                    break
        lam = hi  # the feasible side of the bracket

    beams = np.stack([basis @ (c / (lj + lam))
                      for basis, c, lj in zip(bases, coefs, eigvals)])
    return beams, lam


def _beam_systems(heff_own: np.ndarray, heff_cross: np.ndarray,
                  w_own: np.ndarray, u_own: np.ndarray,
                  w_cross: np.ndarray, u_cross: np.ndarray,
                  order: np.ndarray, sdma: bool):
    """Per-beam (A, b) lists in SIC-position order for one base station."""
    m_dim = heff_own.shape[1]
    cross = np.zeros((m_dim, m_dim), dtype=complex)
    for i in range(heff_cross.shape[0]):
        cross += w_cross[i] * abs(u_cross[i]) ** 2 * np.outer(
            np.conj(heff_cross[i]), heff_cross[i])
    own_terms = [w_own[uid] * abs(u_own[uid]) ** 2 * np.outer(
        np.conj(heff_own[uid]), heff_own[uid]) for uid in order]
    a_list, b_list = [], []
    if sdma:
        full = cross + sum(own_terms)
        a_list = [full] * len(order)
    else:
        prefix = cross
        for term in own_terms:
            prefix = prefix + term
            a_list.append(prefix)
    for uid in order:
        b_list.append(w_own[uid] * u_own[uid] * np.conj(heff_own[uid]))
    return a_list, b_list


def _slot_sum_rate(scn, ch, st, n, sic, sdma) -> float:
    from .ratemodel import slot_sum_rate
    return slot_sum_rate(scn, ch, st, n, sic.t_order[n], sic.s_order[n], sdma)


def _scale_search(scn, ch, st, n, sic, sdma) -> bool:
    """Line searches along the slow WMMSE power modes of one slot.

    The closed-form rounds climb transmit-power directions additively,
    which is painfully slow at high SNR.  Two families of monotone jumps
    fix that: a common scale factor per station, and pairwise power
    transfers between a station's users (directions fixed, budget kept).
    Every search includes the no-op candidate, so the slot sum rate never
    decreases, and the next (u, w) refresh re-anchors the MSE objective
    to the improved rate, keeping the per-round objective trace
    non-increasing.
    """
    improved = False

    def rate_now():
        return _slot_sum_rate(scn, ch, st, n, sic, sdma)

    for _ in range(2):
        for v, budget in ((st.v_b[n], scn.p_tbs), (st.v_s[n], scn.p_sat)):
            p_cur = float(np.sum(np.abs(v) ** 2))
            if p_cur <= 0.0:
                continue
            # common scale
            c_max = math.sqrt(budget / p_cur)
            base_v = v.copy()
            best_c, best_rate = 1.0, rate_now()
            grid = np.unique(np.concatenate([np.geomspace(0.02, c_max, 17), [1.0, c_max]]))
            for _refine in range(2):
                for c in grid:
                    v[:] = c * base_v
                    rate = rate_now()
                    if rate > best_rate + GAIN_EPS:
                        best_c, best_rate = float(c), rate
                grid = np.linspace(max(0.8 * best_c, 1e-3), min(1.25 * best_c, c_max), 7)
            v[:] = best_c * base_v
            improved |= best_c != 1.0
            # pairwise power transfers
            n_users = v.shape[0]
            for i in range(n_users):
                for j in range(n_users):
                    if i == j:
                        continue
                    p_i = float(np.sum(np.abs(v[i]) ** 2))
                    p_j = float(np.sum(np.abs(v[j]) ** 2))
                    if p_i <= 0.0:
                        continue
                    dead_j = p_j < 1e-30 * (p_i + budget)
                    base_i, base_j = v[i].copy(), v[j].copy()

                    def apply(t):
                        v[i] = math.sqrt(1.0 - t) * base_i
                        if dead_j:  # revive along the donor's direction
                            v[j] = math.sqrt(t * p_i) * base_i / math.sqrt(p_i)
                        else:
                            v[j] = math.sqrt((p_j + t * p_i) / p_j) * base_j
                        if t == 0.0:
                            v[j] = base_j

                    best_t, best_rate = 0.0, rate_now()
                    for t in (0.03, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0):
                        apply(t)
                        rate = rate_now()
                        if rate > best_rate + GAIN_EPS:
                            best_t, best_rate = t, rate
                    apply(best_t)
                    improved |= best_t != 0.0
    return improved


def wmmse_solve(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
                sic: SicOrder, sdma: bool = False, tol: float = 1e-7,
                max_iter: int = 60) -> tuple[WmmseState, list[list[float]]]:
    """Alternate u -> w -> v per slot until the objective change is below tol.

    Updates st.v_b / st.v_s in place and returns the final auxiliary state
    plus the per-slot objective traces (one value per full round).  Between
    round chunks a beam-scaling line search accelerates the power climb.
    """
    n_slots = scn.n_slots
    wm = refresh_uw(scn, frame, st, sic, sdma)
    traces: list[list[float]] = [[] for _ in range(n_slots)]
    for n, ch in enumerate(frame):
        t_order, s_order = sic.t_order[n], sic.s_order[n]
        budgets = [max_iter, 15, 10]
        for chunk, budget in enumerate(budgets):
            _run_rounds(scn, ch, st, wm, sic, n, t_order, s_order,
                        sdma, tol, budget, traces[n])
            if chunk < len(budgets) - 1:
                if not _scale_search(scn, ch, st, n, sic, sdma):
                    break
        logger.debug("wmmse slot %d: %d rounds, objective %.9g -> %.9g",
                     n, len(traces[n]), traces[n][0], traces[n][-1])
    return wm, traces


def _run_rounds(scn, ch, st, wm, sic, n, t_order, s_order, sdma, tol, max_rounds,
                trace) -> bool:
    prev_obj = None
    for _ in range(max_rounds):
        eb, fs, hv_t, hv_s = _desired_products(scn, ch, st, n)
        ecross_k = eff_terr_sat(ch, st.phi_h(n))  # (K, M_s) used by SAT beams
        fcross_l = eff_sat_tbs(ch, st.phi_u(n))   # (L, M_b) used by TBS beams
        T_t, T_s = interference_T(scn, ch, st, n, sic, sdma)
        u_t = update_equalizers(hv_t, T_t)
        u_s = update_equalizers(hv_s, T_s)
        e_t = np.array([mse(u_t[k], T_t[k], hv_t[k]) for k in range(scn.k_users)])
        e_s = np.array([mse(u_s[l], T_s[l], hv_s[l]) for l in range(scn.l_users)])
        w_t, w_s = update_weights(e_t), update_weights(e_s)
        obj = p2_objective(w_t, e_t) + p2_objective(w_s, e_s)
        trace.append(obj)

        a_b, b_b = _beam_systems(eb, fcross_l, w_t, u_t, w_s, u_s, t_order, sdma)
        v_b_pos, lam_b = update_beams(a_b, b_b, scn.p_tbs)
        st.v_b[n][t_order] = v_b_pos
        a_s, b_s = _beam_systems(fs, ecross_k, w_s, u_s, w_t, u_t, s_order, sdma)
        v_s_pos, lam_s = update_beams(a_s, b_s, scn.p_sat)
        st.v_s[n][s_order] = v_s_pos

        wm.u_t[n], wm.u_s[n] = u_t, u_s
        wm.w_t[n], wm.w_s[n] = w_t, w_s
        wm.e_t[n], wm.e_s[n] = e_t, e_s
        wm.T_t[n], wm.T_s[n] = T_t, T_s
        wm.lam_b[n], wm.lam_s[n] = lam_b, lam_s

        if prev_obj is not None and abs(prev_obj - obj) <= tol * (1.0 + abs(obj)):
            return True
        prev_obj = obj
    return False
