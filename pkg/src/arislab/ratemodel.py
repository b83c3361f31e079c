"""SIC ordering, SINRs, per-user rates, and ARIS output power.

Users within a tier are decoded in ascending order of effective channel
gain; the order is computed once per run from the initial state and then
frozen, so all rate expressions index users by their SIC position.  The
SDMA variant keeps every co-user term in every denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (ChannelSet, eff_sat_sat, eff_sat_tbs, eff_terr_sat,
                      eff_terr_tbs)
from .scene import Scenario
from .state import NetworkState

LOG2 = math.log(2.0)


def sic_order(gains: np.ndarray) -> np.ndarray:
    """Stable ascending-gain permutation (weakest user decoded first)."""
    gains = np.asarray(gains)
    if not np.all(np.isfinite(gains)) or np.any(gains < 0):
        raise ValueError("gains must be finite and non-negative")
    return np.argsort(gains, kind="stable")


@dataclass(frozen=True)
class SicOrder:
    """Frozen per-slot decode orders (arrays of user ids, weakest first)."""

    t_order: np.ndarray  # (N, K)
    s_order: np.ndarray  # (N, L)


def freeze_sic(scn: Scenario, frame: list[ChannelSet], st: NetworkState) -> SicOrder:
    t_order = np.zeros((scn.n_slots, scn.k_users), dtype=int)
    s_order = np.zeros((scn.n_slots, scn.l_users), dtype=int)
    for n, ch in enumerate(frame):
        eb = eff_terr_tbs(ch, st.phi_u(n))
        fs = eff_sat_sat(ch, st.phi_h(n))
        t_order[n] = sic_order(np.sum(np.abs(eb) ** 2, axis=1))
        s_order[n] = sic_order(np.sum(np.abs(fs) ** 2, axis=1))
    return SicOrder(t_order=t_order, s_order=s_order)


def aris_noise_at_user(h_ris_user: np.ndarray, theta: np.ndarray, sigma2: float) -> float:
    """Forwarded ARIS thermal noise power sum_r |h_r|^2 |phi_r|^2 sigma2."""
    return float(np.sum(np.abs(h_ris_user) ** 2 * np.abs(theta) ** 2) * sigma2)


def aris_output_power(theta: np.ndarray, bs_ris: np.ndarray, beams: np.ndarray,
                      sigma2: float) -> float:
    """Left side of the ARIS power constraint:
    sum_k ||diag(theta) H v_k||^2 + sigma2 * ||diag(theta)||_F^2."""
    through = np.sum(np.abs(bs_ris @ beams.T) ** 2, axis=1)  # per element
    mag2 = np.abs(theta) ** 2
    return float(np.sum(mag2 * through) + sigma2 * np.sum(mag2))


@dataclass
class SlotPowers:
    """Per-slot received-power tables used by every SINR expression.

    g_t[i, m] = |heff_t[i] . v_b[m]|^2 (both indexed by user id), x_t[i, l]
    the cross-tier powers, an_t[i] the forwarded ARIS noise at user i.
    """

    g_t: np.ndarray
    x_t: np.ndarray
    an_t: np.ndarray
    g_s: np.ndarray
    x_s: np.ndarray
    an_s: np.ndarray


def slot_powers(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int) -> SlotPowers:
    phi_u, phi_h = st.phi_u(n), st.phi_h(n)
    eb = eff_terr_tbs(ch, phi_u)        # (K, M_b)
    ek_cross = eff_terr_sat(ch, phi_h)  # (K, M_s)
    fs = eff_sat_sat(ch, phi_h)         # (L, M_s)
    fl_cross = eff_sat_tbs(ch, phi_u)   # (L, M_b)
    g_t = np.abs(eb @ st.v_b[n].T) ** 2
    x_t = np.abs(ek_cross @ st.v_s[n].T) ** 2
    g_s = np.abs(fs @ st.v_s[n].T) ** 2
    x_s = np.abs(fl_cross @ st.v_b[n].T) ** 2
    an_t = st.sigma_u2 * (np.abs(ch.h_Uk.T) ** 2 @ np.abs(phi_u) ** 2)
    an_s = st.sigma_h2 * (np.abs(ch.h_Hl.T) ** 2 @ np.abs(phi_h) ** 2)
    return SlotPowers(g_t=g_t, x_t=x_t, an_t=an_t, g_s=g_s, x_s=x_s, an_s=an_s)


def _stage_sinr(g: np.ndarray, cross_row: float, an: float, noise: float,
                order: np.ndarray, k_pos: int, i_pos: int, sdma: bool) -> float:
    """SINR at the user in SIC position k_pos decoding position i_pos's signal."""
    uid = order[k_pos]
    row = g[uid][order]  # powers of every beam at this user, in SIC position order
    if sdma:
        intra = float(row.sum() - row[i_pos])
    else:
        intra = float(row[i_pos + 1:].sum())
    den = intra + cross_row + an + noise
    return float(row[i_pos]) / den


def sinr_terrestrial(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                     k_pos: int, i_pos: int, order: np.ndarray,
                     sdma: bool = False, powers: SlotPowers | None = None) -> float:
    """SINR of terrestrial user at SIC position k_pos for stage i_pos <= k_pos."""
    if i_pos > k_pos:
        raise ValueError("stage index must not exceed the user's SIC position")
    p = powers if powers is not None else slot_powers(scn, ch, st, n)
    uid = order[k_pos]
    return _stage_sinr(p.g_t, float(p.x_t[uid].sum()), float(p.an_t[uid]),
                       scn.noise_terr, order, k_pos, i_pos, sdma)


def sinr_satellite(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                   l_pos: int, j_pos: int, order: np.ndarray,
                   sdma: bool = False, powers: SlotPowers | None = None) -> float:
    """Satellite-tier mirror of :func:`sinr_terrestrial`."""
    if j_pos > l_pos:
        raise ValueError("stage index must not exceed the user's SIC position")
    p = powers if powers is not None else slot_powers(scn, ch, st, n)
    uid = order[l_pos]
    return _stage_sinr(p.g_s, float(p.x_s[uid].sum()), float(p.an_s[uid]),
                       scn.noise_sat, order, l_pos, j_pos, sdma)


@dataclass
class RateReport:
    """Per-slot per-user SINRs and rates plus SIC-stage diagnostics.

    gamma/rate arrays are indexed by user id; stage arrays by SIC position
    (entry [n, k, i] is the position-k user decoding position i's signal,
    NaN above the diagonal).
    """

    gamma_t: np.ndarray  # (N, K)
    rate_t: np.ndarray
    gamma_s: np.ndarray  # (N, L)
    rate_s: np.ndarray
    stage_t: np.ndarray  # (N, K, K)
    stage_s: np.ndarray  # (N, L, L)

    @property
    def avg_sum_rate(self) -> float:
        return float((self.rate_t.sum() + self.rate_s.sum()) / self.rate_t.shape[0])

    @property
    def terr_avg(self) -> float:
        return float(self.rate_t.sum() / self.rate_t.shape[0])

    @property
    def sat_avg(self) -> float:
        return float(self.rate_s.sum() / self.rate_s.shape[0])


def slot_rates(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
               t_order: np.ndarray, s_order: np.ndarray, sdma: bool = False):
    """All SINRs/rates of one slot; returns (gamma_t, gamma_s, stage_t, stage_s)."""
    p = slot_powers(scn, ch, st, n)
    k_users, l_users = scn.k_users, scn.l_users
    gamma_t = np.zeros(k_users)
    gamma_s = np.zeros(l_users)
    stage_t = np.full((k_users, k_users), np.nan)
    stage_s = np.full((l_users, l_users), np.nan)
    for kp in range(k_users):
        for ip in range(kp + 1):
            g = sinr_terrestrial(scn, ch, st, n, kp, ip, t_order, sdma, p)
            stage_t[kp, ip] = g
            if ip == kp:
                gamma_t[t_order[kp]] = g
    for lp in range(l_users):
        for jp in range(lp + 1):
            g = sinr_satellite(scn, ch, st, n, lp, jp, s_order, sdma, p)
            stage_s[lp, jp] = g
            if jp == lp:
                gamma_s[s_order[lp]] = g
    return gamma_t, gamma_s, stage_t, stage_s


def frame_rates(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
                sic: SicOrder, sdma: bool = False) -> RateReport:
    n_slots = scn.n_slots
    gamma_t = np.zeros((n_slots, scn.k_users))
    gamma_s = np.zeros((n_slots, scn.l_users))
    stage_t = np.zeros((n_slots, scn.k_users, scn.k_users))
    stage_s = np.zeros((n_slots, scn.l_users, scn.l_users))
    for n, ch in enumerate(frame):
        gamma_t[n], gamma_s[n], stage_t[n], stage_s[n] = slot_rates(
            scn, ch, st, n, sic.t_order[n], sic.s_order[n], sdma)
    return RateReport(gamma_t=gamma_t, rate_t=np.log2(1.0 + gamma_t),
                      gamma_s=gamma_s, rate_s=np.log2(1.0 + gamma_s),
                      stage_t=stage_t, stage_s=stage_s)


def average_sum_rate(per_slot_sums: np.ndarray) -> float:
    """Frame average of per-slot sum rates (bits/s/Hz)."""
    sums = np.asarray(per_slot_sums, dtype=float)
    if sums.size < 1:
        raise ValueError("need at least one slot")
    return float(sums.mean())


def slot_sum_rate(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                  t_order: np.ndarray, s_order: np.ndarray, sdma: bool = False,
                  powers: SlotPowers | None = None) -> float:
    """Own-stage sum rate of one slot (fast path: no SIC-stage diagnostics)."""
    p = powers if powers is not None else slot_powers(scn, ch, st, n)
    total = 0.0
    g_t = p.g_t[t_order][:, t_order]  # position space
    for kp in range(scn.k_users):
        row = g_t[kp]
        intra = float(row.sum() - row[kp]) if sdma else float(row[kp + 1:].sum())
        uid = t_order[kp]
        den = intra + float(p.x_t[uid].sum()) + float(p.an_t[uid]) + scn.noise_terr
        total += math.log2(1.0 + float(row[kp]) / den)
    g_s = p.g_s[s_order][:, s_order]
    for lp in range(scn.l_users):
        row = g_s[lp]
        intra = float(row.sum() - row[lp]) if sdma else float(row[lp + 1:].sum())
        uid = s_order[lp]
        den = intra + float(p.x_s[uid].sum()) + float(p.an_s[uid]) + scn.noise_sat
        total += math.log2(1.0 + float(row[lp]) / den)
    return total


def avg_rate(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
             sic: SicOrder, sdma: bool = False) -> float:
    """True objective: frame-average sum rate at the current state."""
    total = sum(slot_sum_rate(scn, ch, st, n, sic.t_order[n], sic.s_order[n], sdma)
                for n, ch in enumerate(frame))
    return total / scn.n_slots


def sdma_rates(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
               sic: SicOrder) -> RateReport:
    """Benchmark rates with no SIC: every co-user term stays in every denominator."""
    return frame_rates(scn, frame, st, sic, sdma=True)


def desired_and_interference(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                             sic: SicOrder, sdma: bool = False):
    """Own-stage numerator and denominator per user (used to freeze the
    trajectory surrogate's interference-plus-noise terms).

    Returns (num_t, den_t, num_s, den_s), all indexed by user id.
    """
    p = slot_powers(scn, ch, st, n)
    t_order, s_order = sic.t_order[n], sic.s_order[n]
    num_t = np.zeros(scn.k_users)
    den_t = np.zeros(scn.k_users)
    for kp in range(scn.k_users):
        uid = t_order[kp]
        row = p.g_t[uid][t_order]
        intra = float(row.sum() - row[kp]) if sdma else float(row[kp + 1:].sum())
        num_t[uid] = float(row[kp])
        den_t[uid] = intra + float(p.x_t[uid].sum()) + float(p.an_t[uid]) + scn.noise_terr
    num_s = np.zeros(scn.l_users)
    den_s = np.zeros(scn.l_users)
    for lp in range(scn.l_users):
        uid = s_order[lp]
        row = p.g_s[uid][s_order]
        intra = float(row.sum() - row[lp]) if sdma else float(row[lp + 1:].sum())
        num_s[uid] = float(row[lp])
        den_s[uid] = intra + float(p.x_s[uid].sum()) + float(p.an_s[uid]) + scn.noise_sat
    return num_t, den_t, num_s, den_s


def report_rows(report: RateReport, run: int, scheme: str, seed: int, iteration: int):
    """CSV rows (run, scheme, seed, iter, slot, user, tier, sinr, rate)."""
    rows = []
    for n in range(report.gamma_t.shape[0]):
        for k in range(report.gamma_t.shape[1]):
            rows.append((run, scheme, seed, iteration, n, k, "terrestrial",
                         report.gamma_t[n, k], report.rate_t[n, k]))
        for l in range(report.gamma_s.shape[1]):
            rows.append((run, scheme, seed, iteration, n, l, "satellite",
                         report.gamma_s[n, l], report.rate_s[n, l]))
    return rows
