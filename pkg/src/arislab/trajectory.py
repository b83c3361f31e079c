"""Trajectory block: affine cascade-power surrogates and safeguarded ascent.

Per user and slot, the reflected-link received power is written as
C * d1^-eta1 * d2^-eta2 with C frozen from the current state; the convex
d^-eta map is linearized jointly with supporting-hyperplane lower bounds of
the two distances, giving a surrogate that is affine in the platform
position.  The per-iteration subproblem is solved by projected gradient
ascent, and every move is re-evaluated against the true average sum rate
(channels reassembled, amplitude budgets repaired) before acceptance, so
the true objective never decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, FadingRealization, assemble_frame
from .ratemodel import SicOrder, aris_output_power, avg_rate, desired_and_interference
from .scene import Path, Scenario
from .state import NetworkState

LOG2 = math.log(2.0)
POWER_CLAMP = 1e-30  # floor for surrogate powers inside logs


@dataclass(frozen=True)
class TrajectorySurrogate:
    """Affine lower-bound model of one user's cascade power at one slot."""

    platform: str
    user: int
    slot: int
    enabled: bool
    c_const: float = 0.0
    eta1: float = 2.0
    eta2: float = 2.0
    anchor1: np.ndarray | None = None  # serving station
    anchor2: np.ndarray | None = None  # user position
    q_t: np.ndarray | None = None      # expansion point
    d1_t: float = 0.0
    d2_t: float = 0.0
    h_t: float = 0.0
    grad1: float = 0.0
    grad2: float = 0.0
    interference: float = 1.0
    p_cur: float = 0.0
    # cached affine forms of the two distance bounds: d_hat = coef . q + const
    c1: np.ndarray | None = None
    b1: float = 0.0
    c2: np.ndarray | None = None
    b2: float = 0.0


def cascade_power(ch: ChannelSet, st: NetworkState, n: int, platform: str,
                  user: int) -> float:
    """|reflected desired-signal amplitude|^2 through the given platform."""
    if platform == "uav":
        row = (np.conj(ch.h_Uk[:, user]) * st.phi_u(n)) @ (ch.H_bU @ st.v_b[n, user])
    else:
        row = (np.conj(ch.h_Hl[:, user]) * st.phi_h(n)) @ (ch.H_sH @ st.v_s[n, user])
    return float(abs(row) ** 2)


def cascade_constant(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                     platform: str, user: int) -> tuple[float, bool]:
    """Distance-independent cascade factor C = p_cur * d1^eta1 * d2^eta2.

    Returns (C, enabled); a vanishing cascade (e.g. no RIS) disables the
    surrogate for this user and round.
    """
    p_cur = cascade_power(ch, st, n, platform, user)
    if not np.isfinite(p_cur) or p_cur <= 0.0:
        return 0.0, False
    if platform == "uav":
        d1, d2 = float(ch.dists["bU"]), float(ch.dists["Uk"][user])
        eta1, eta2 = scn.eta_bu, scn.eta_uk
    else:
        d1, d2 = float(ch.dists["sH"]), float(ch.dists["Hl"][user])
        eta1, eta2 = 2.0, 2.0
    return p_cur * d1 ** eta1 * d2 ** eta2, True


def linear_distance_bound(anchor: np.ndarray, q_t: np.ndarray) -> tuple[np.ndarray, float]:
    """Affine global lower bound of ||q - anchor||, tight at q = q_t.

    Returns (coef, const) with bound(q) = coef . q + const.
    """
    diff = np.asarray(q_t, dtype=float) - np.asarray(anchor, dtype=float)
    d_t = float(np.linalg.norm(diff))
    if d_t <= 0.0:
        raise ValueError("expansion point coincides with the anchor")
    coef = diff / d_t
    return coef, d_t - float(coef @ q_t)


def build_surrogate(scn: Scenario, ch: ChannelSet, st: NetworkState, n: int,
                    platform: str, user: int, interference: float) -> TrajectorySurrogate:
    c_const, enabled = cascade_constant(scn, ch, st, n, platform, user)
    if not enabled:
        return TrajectorySurrogate(platform=platform, user=user, slot=n, enabled=False)
    if platform == "uav":
        anchor1 = scn.tbs_pos
        anchor2 = scn.users_t[user]
        q_t = st.uav_path.positions[n]
        d1, d2 = float(ch.dists["bU"]), float(ch.dists["Uk"][user])
        eta1, eta2 = scn.eta_bu, scn.eta_uk
    else:
        anchor1 = scn.sat_pos
        anchor2 = scn.users_s[user]
        q_t = st.hap_path.positions[n]
        d1, d2 = float(ch.dists["sH"]), float(ch.dists["Hl"][user])
        eta1, eta2 = 2.0, 2.0
    h_t = d1 ** (-eta1) * d2 ** (-eta2)
    grad1 = -eta1 * d1 ** (-eta1 - 1.0) * d2 ** (-eta2)
    grad2 = -eta2 * d1 ** (-eta1) * d2 ** (-eta2 - 1.0)
    c1, b1 = linear_distance_bound(anchor1, q_t)
    c2, b2 = linear_distance_bound(anchor2, q_t)
    return TrajectorySurrogate(
        platform=platform, user=user, slot=n, enabled=True, c_const=c_const,
        eta1=eta1, eta2=eta2, anchor1=anchor1, anchor2=anchor2, q_t=q_t.copy(),
        d1_t=d1, d2_t=d2, h_t=h_t, grad1=grad1, grad2=grad2,
        interference=interference, p_cur=cascade_power(ch, st, n, platform, user),
        c1=c1, b1=b1, c2=c2, b2=b2)


def build_surrogates(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
                     sic: SicOrder, sdma: bool = False) -> list[TrajectorySurrogate]:
    out = []
    for n, ch in enumerate(frame):
        _, den_t, _, den_s = desired_and_interference(scn, ch, st, n, sic, sdma)
        for k in range(scn.k_users):
            out.append(build_surrogate(scn, ch, st, n, "uav", k, float(den_t[k])))
        for l in range(scn.l_users):
            out.append(build_surrogate(scn, ch, st, n, "hap", l, float(den_s[l])))
    return out


def power_surrogate(q: np.ndarray, ts: TrajectorySurrogate) -> float:
    """Affine surrogate of the cascade power at position q (may be negative;
    callers clamp before taking logs)."""
    if not ts.enabled:
        return ts.p_cur
    d1_hat = float(ts.c1 @ q) + ts.b1
    d2_hat = float(ts.c2 @ q) + ts.b2
    return ts.c_const * (ts.h_t + ts.grad1 * (d1_hat - ts.d1_t)
                         + ts.grad2 * (d2_hat - ts.d2_t))


def _platform_terms(surrogates, platform):
    terms = [ts for ts in surrogates if ts.platform == platform and ts.enabled]
    by_slot: dict[int, list[TrajectorySurrogate]] = {}
    for ts in terms:
        by_slot.setdefault(ts.slot, []).append(ts)
    return by_slot


def surrogate_objective(uav_positions: np.ndarray, hap_positions: np.ndarray,
                        surrogates: list[TrajectorySurrogate]) -> float:
    """Frame-average of log2(1 + clamp(p_hat)/I) over the enabled surrogates."""
    n_slots = uav_positions.shape[0]
    total = 0.0
    for ts in surrogates:
        if not ts.enabled:
            continue
        q = uav_positions[ts.slot] if ts.platform == "uav" else hap_positions[ts.slot]
        p_hat = max(power_surrogate(q, ts), POWER_CLAMP)
        total += math.log2(1.0 + p_hat / ts.interference)
    return total / n_slots


def _platform_objective_and_grad(positions: np.ndarray, by_slot) -> tuple[float, np.ndarray]:
    total = 0.0
    grad = np.zeros_like(positions)
    for slot, terms in by_slot.items():
        q = positions[slot]
        for ts in terms:
            p_hat = ts.c_const * (ts.h_t + ts.grad1 * (float(ts.c1 @ q) + ts.b1 - ts.d1_t)
                                  + ts.grad2 * (float(ts.c2 @ q) + ts.b2 - ts.d2_t))
            if p_hat <= POWER_CLAMP:
                total += math.log2(1.0 + POWER_CLAMP / ts.interference)
                continue
            total += math.log2(1.0 + p_hat / ts.interference)
            dp = ts.c_const * (ts.grad1 * ts.c1 + ts.grad2 * ts.c2)
            grad[slot] += dp / (LOG2 * (ts.interference + p_hat))
    return total, grad


def project_path(positions: np.ndarray, scn: Scenario, platform: str,
                 sweeps: int = 10) -> np.ndarray:
    """Repair a candidate path: clamp altitudes, pin endpoints, and pull
    consecutive points inside the speed ball with forward/backward sweeps.
    Falls back to blending toward the straight line (always feasible)."""
    if platform == "uav":
        z_lo, z_hi = scn.z_uav_min, scn.z_uav_max
        cap = scn.v_max_uav * scn.slot_seconds
        q0, q1 = scn.uav_init, scn.uav_final
    else:
        z_lo, z_hi = scn.z_hap_min, scn.z_hap_max
        cap = scn.v_max_hap * scn.slot_seconds
        q0, q1 = scn.hap_init, scn.hap_final
    pos = np.array(positions, dtype=float)
    n = pos.shape[0]
    pos[0], pos[-1] = q0, q1
    if n <= 2:
        return pos

    def feasible(p):
        steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
        return (steps.max() <= cap * (1 + 1e-12)
                and p[:, 2].min() >= z_lo - 1e-9 and p[:, 2].max() <= z_hi + 1e-9)

    for _ in range(sweeps):
        pos[:, 2] = np.clip(pos[:, 2], z_lo, z_hi)
        pos[0], pos[-1] = q0, q1
        for i in range(1, n - 1):  # forward, endpoints fixed
            delta = pos[i] - pos[i - 1]
            dist = np.linalg.norm(delta)
            if dist > cap:
                pos[i] = pos[i - 1] + delta * (cap / dist)
        for i in range(n - 2, 0, -1):  # backward
            delta = pos[i] - pos[i + 1]
            dist = np.linalg.norm(delta)
            if dist > cap:
                pos[i] = pos[i + 1] + delta * (cap / dist)
        if feasible(pos):
            return pos
    # fall back: blend toward the straight line between the endpoints
    t_axis = np.linspace(0.0, 1.0, n)[:, None]
    line = (1 - t_axis) * q0[None, :] + t_axis * q1[None, :]
    for t in (0.25, 0.5, 0.75, 1.0):
        cand = (1 - t) * pos + t * line
        if feasible(cand):
            return cand
    raise FloatingPointError("path projection failed; endpoints infeasible")


def solve_trajectory_subproblem(uav_path: Path, hap_path: Path,
                                surrogates: list[TrajectorySurrogate],
                                scn: Scenario, step_iters: int = 40) -> tuple[Path, Path]:
    """Projected gradient ascent on the surrogate objective, per platform."""
    results = []
    for platform, path in (("uav", uav_path), ("hap", hap_path)):
        by_slot = _platform_terms(surrogates, platform)
        pos = path.positions.copy()
        if not by_slot or pos.shape[0] <= 2:
            results.append(Path(pos))
            continue
        cap = (scn.v_max_uav if platform == "uav" else scn.v_max_hap) * scn.slot_seconds
        obj, _ = _platform_objective_and_grad(pos, by_slot)
        for _ in range(step_iters):
            _, grad = _platform_objective_and_grad(pos, by_slot)
            grad[0] = 0.0
            grad[-1] = 0.0
            gmax = float(np.linalg.norm(grad, axis=1).max())
            if gmax <= 0.0:
                break
            eta = 0.5 * cap / gmax
            improved = False
            for _halve in range(30):
                cand = project_path(pos + eta * grad, scn, platform)
                cand_obj, _ = _platform_objective_and_grad(cand, by_slot)
                if cand_obj > obj + 1e-15:
                    pos, obj = cand, cand_obj
                    improved = True
                    break
                eta *= 0.5
            if not improved:
                break
        results.append(Path(pos))
    return results[0], results[1]


@dataclass
class TrajectoryDiag:
    accepted: list = field(default_factory=list)  # (rate_before, rate_after)
    rejected: int = 0


@dataclass
class TrajectoryOptions:
    sca_iters: int = 6
    step_iters: int = 40
    max_halvings: int = 6


def repair_amplitudes(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
                      enforce_uav: bool, enforce_hap: bool) -> None:
    """Scale amplitudes down where the ARIS output power exceeds its budget
    (the power form is linear in rho, so one scale restores feasibility)."""
    for n, ch in enumerate(frame):
        if enforce_uav:
            pu = aris_output_power(st.phi_u(n), ch.H_bU, st.v_b[n], st.sigma_u2)
            if pu > scn.p_uav:
                st.rho_u[n] *= (scn.p_uav / pu) * (1.0 - 1e-12)
        if enforce_hap:
            ph = aris_output_power(st.phi_h(n), ch.H_sH, st.v_s[n], st.sigma_h2)
            if ph > scn.p_hap:
                st.rho_h[n] *= (scn.p_hap / ph) * (1.0 - 1e-12)


def optimize_trajectories(scn: Scenario, frame: list[ChannelSet], st: NetworkState,
                          real: FadingRealization, sic: SicOrder, sdma: bool = False,
                          enforce_uav: bool = True, enforce_hap: bool = True,
                          opts: TrajectoryOptions = TrajectoryOptions(),
                          ) -> tuple[list[ChannelSet], TrajectoryDiag]:
    """SCA loop with safeguarded acceptance on the true average sum rate.

    Mutates st (paths and, when a move is accepted, possibly amplitudes via
    the budget repair) and returns the channels at the accepted paths.
    """
    diag = TrajectoryDiag()
    current_rate = avg_rate(scn, frame, st, sic, sdma)
    for _ in range(opts.sca_iters):
        surrogates = build_surrogates(scn, frame, st, sic, sdma)
        if not any(ts.enabled for ts in surrogates):
            break
        cand_uav, cand_hap = solve_trajectory_subproblem(
            st.uav_path, st.hap_path, surrogates, scn, opts.step_iters)
        move = max(float(np.abs(cand_uav.positions - st.uav_path.positions).max()),
                   float(np.abs(cand_hap.positions - st.hap_path.positions).max()))
        if move <= 1e-9:
            break
        blend = 1.0
        accepted = False
        for _trial in range(opts.max_halvings + 1):
            trial_uav = Path((1 - blend) * st.uav_path.positions + blend * cand_uav.positions)
            trial_hap = Path((1 - blend) * st.hap_path.positions + blend * cand_hap.positions)
            trial_st = st.copy()
            trial_st.uav_path, trial_st.hap_path = trial_uav, trial_hap
            trial_frame = assemble_frame(scn, trial_uav, trial_hap, real)
            repair_amplitudes(scn, trial_frame, trial_st, enforce_uav, enforce_hap)
            rate = avg_rate(scn, trial_frame, trial_st, sic, sdma)
            if rate >= current_rate - 1e-12:
                st.uav_path, st.hap_path = trial_uav, trial_hap
                st.rho_u, st.rho_h = trial_st.rho_u, trial_st.rho_h
                frame = trial_frame
                diag.accepted.append((current_rate, rate))
                current_rate = rate
                accepted = True
                break
            blend *= 0.5
        if not accepted:
            diag.rejected += 1
            break
    return frame, diag
