"""ARIS coefficient optimization: quadratic data assembly plus the
alternating phase (manifold RCG) / amplitude (SCA over a linearized
problem) loop, one instance per (platform, slot).

The quadratic is assembled so that f(phi) = phi^H Q phi - 2 Re{phi^H q}
equals the phi-dependent part of the weighted sum-MSE objective exactly
(including the direct-channel cross terms), which makes every descent step
on f a descent step on the network objective.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

from .channel import ChannelSet
from .manifold import QuadraticObjective, rcg_minimize
from .ratemodel import SicOrder
from .scene import Scenario
from .state import NetworkState, compose_phi
from .wmmse import WmmseState

RHO_GRAD_FLOOR = 1e-8


@dataclass
class ArisOptions:
    rcg_max_iter: int = 150
    rcg_grad_tol: float | None = None
    rcg_starts: int = 1
    sca_tol: float = 1e-9
    sca_max_iter: int = 60
    outer_tol: float = 1e-7
    outer_max_iter: int = 12


@dataclass(frozen=True)
class ArisQuadratic:
    """Quadratic data (Q, q, diagonal Upsilon) of one (platform, slot)."""

    q_mat: np.ndarray    # (N, N) Hermitian PSD
    q_vec: np.ndarray    # (N,)
    upsilon: np.ndarray  # (N,) real diagonal of the power-constraint form
    p_budget: float
    rho_max: float
    sigma2: float

    def f_phi(self, phi: np.ndarray) -> float:
        return float((np.vdot(phi, self.q_mat @ phi) - 2.0 * np.vdot(phi, self.q_vec)).real)

    def g_rho(self, rho: np.ndarray) -> float:
        return float(np.dot(self.upsilon, rho))

    def validate(self) -> None:
        QuadraticObjective(self.q_mat, self.q_vec).validate()
        if self.sigma2 > 0 and np.any(self.upsilon < self.sigma2 * (1 - 1e-12)):
            raise ValueError("power-form diagonal below the ARIS noise floor")


@dataclass(frozen=True)
class ArisVector:
    """Phases, amplitudes, and the composed coefficient vector."""

    theta: np.ndarray  # (N,) radians
    rho: np.ndarray    # (N,) non-negative

    @property
    def phi(self) -> np.ndarray:
        return compose_phi(self.rho, self.theta)


def build_quadratic(scn: Scenario, ch: ChannelSet, st: NetworkState, wm: WmmseState,
                    platform: str, slot: int, sic: SicOrder,
                    sdma: bool = False) -> ArisQuadratic:
    """Collect Q, q, Upsilon for one platform and slot from the current
    beams and WMMSE weights.

    Cascade vectors use g = diag(h_ris_user) conj(H v); q carries both the
    desired-signal term and the direct-channel interference cross terms so
    that f matches the MSE objective restriction exactly.
    """
    n = slot
    if platform == "uav":
        h_ru_own, h_ru_cross = ch.h_Uk, ch.h_Ul        # ris->user columns
        big_h = ch.H_bU
        v_own, v_cross = st.v_b[n], st.v_s[n]           # own-tier beams reflect
        d_own, d_cross = ch.h_bk, ch.h_bl               # direct rows of the SAME bs
        order_own, order_cross = sic.t_order[n], sic.s_order[n]
        u_own, w_own = wm.u_t[n], wm.w_t[n]
        u_cross, w_cross = wm.u_s[n], wm.w_s[n]
        sigma2 = st.sigma_u2
        p_budget, rho_max = scn.p_uav, scn.rho_max_uav
    elif platform == "hap":
        h_ru_own, h_ru_cross = ch.h_Hl, ch.h_Hk
        big_h = ch.H_sH
        v_own, v_cross = st.v_s[n], st.v_b[n]
        d_own, d_cross = ch.h_sl, ch.h_sk
        order_own, order_cross = sic.s_order[n], sic.t_order[n]
        u_own, w_own = wm.u_s[n], wm.w_s[n]
        u_cross, w_cross = wm.u_t[n], wm.w_t[n]
        sigma2 = st.sigma_h2
        p_budget, rho_max = scn.p_hap, scn.rho_max_hap
    else:
        raise ValueError(f"unknown platform {platform!r}")

    n_elems = big_h.shape[0]
    hv = big_h @ v_own.T  # (N_elems, n_own) element-wise throughput of each beam
    q_mat = np.zeros((n_elems, n_elems), dtype=complex)
    q_vec = np.zeros(n_elems, dtype=complex)

    n_own = v_own.shape[0]
    for pos in range(n_own):
        uid = order_own[pos]
        wk = float(w_own[uid])
        uk = complex(u_own[uid])
        wu2 = wk * abs(uk) ** 2
        interferers = range(n_own) if sdma else range(pos, n_own)
        for mp in interferers:
            mid = order_own[mp]
            g = h_ru_own[:, uid] * np.conj(hv[:, mid])
            q_mat += wu2 * np.outer(g, np.conj(g))
            q_vec -= wu2 * (d_own[uid] @ v_own[mid]) * g
        q_mat += wu2 * sigma2 * np.diag(np.abs(h_ru_own[:, uid]) ** 2)
        g_kk = h_ru_own[:, uid] * np.conj(hv[:, uid])
        q_vec += wk * uk * g_kk

    n_cross = d_cross.shape[0]
    for cid in range(n_cross):
        wu2 = float(w_cross[cid]) * abs(complex(u_cross[cid])) ** 2
        for mid in range(n_own):
            g = h_ru_cross[:, cid] * np.conj(hv[:, mid])
            q_mat += wu2 * np.outer(g, np.conj(g))
            q_vec -= wu2 * (d_cross[cid] @ v_own[mid]) * g

    q_mat = 0.5 * (q_mat + q_mat.conj().T)
    upsilon = np.sum(np.abs(hv) ** 2, axis=1) + sigma2
    return ArisQuadratic(q_mat=q_mat, q_vec=q_vec, upsilon=upsilon,
                         p_budget=p_budget, rho_max=rho_max, sigma2=sigma2)


def optimize_phases(quad: ArisQuadratic, rho: np.ndarray, theta0: np.ndarray,
                    opts: ArisOptions = ArisOptions()) -> np.ndarray:
    """Phase-only stage: minimize over unit-modulus t with amplitudes fixed."""
    s = np.sqrt(rho)
    obj = QuadraticObjective(q_mat=np.outer(s, s) * quad.q_mat, q_vec=s * quad.q_vec)
    t, _ = rcg_minimize(obj, np.exp(1j * theta0), grad_tol=opts.rcg_grad_tol,
                        max_iter=opts.rcg_max_iter, n_starts=opts.rcg_starts)
    return np.mod(np.angle(t), 2.0 * np.pi)


def amp_gradients(quad: ArisQuadratic, theta: np.ndarray, rho_t: np.ndarray):
    """Gradients of f and g in the amplitudes at rho_t (phases fixed).

    1/sqrt(rho) factors are floored at RHO_GRAD_FLOOR; g is linear in rho,
    so its exact gradient is the Upsilon diagonal.
    """
    t = np.exp(1j * theta)
    vart = t * np.sqrt(rho_t)
    resid = quad.q_mat @ vart - quad.q_vec
    root = np.sqrt(np.maximum(rho_t, RHO_GRAD_FLOOR))
    grad_f = (np.conj(t) * resid).real / root
    grad_g = quad.upsilon.astype(float).copy()
    f_t = float((np.vdot(vart, quad.q_mat @ vart) - 2.0 * np.vdot(vart, quad.q_vec)).real)
    g_t = quad.g_rho(rho_t)
    return grad_f, grad_g, f_t, g_t


def solve_amp_lp(grad_f: np.ndarray, grad_g: np.ndarray, rho_t: np.ndarray,
                 rho_max: float, p_budget: float, g_t: float):
    """Exact solution of the linearized amplitude problem (a one-constraint
    continuous knapsack over the box [0, rho_max]^N).

    Returns (rho, feasible_flag).
    """
    n = grad_f.shape[0]
    budget = p_budget - g_t + float(np.dot(grad_g, rho_t))
    if budget < 0.0:
        return np.zeros(n), False
    rho = np.zeros(n)
    helpful = np.where(grad_f < 0.0)[0]
    free = helpful[grad_g[helpful] <= 0.0]
    rho[free] = rho_max
    paying = helpful[grad_g[helpful] > 0.0]
    ratio = grad_f[paying] / grad_g[paying]
    remaining = budget
    for idx in paying[np.argsort(ratio, kind="stable")]:
        if remaining <= 0.0:
            break
        take = min(rho_max, remaining / grad_g[idx])
        rho[idx] = take
        remaining -= grad_g[idx] * take
    return rho, True


@dataclass
class ScaDiag:
    accepted: list = field(default_factory=list)  # (f_before, f_after, g_after)
    stagnated: bool = False
    infeasible_lp: bool = False


def optimize_amplitudes(quad: ArisQuadratic, theta: np.ndarray, rho0: np.ndarray,
                        opts: ArisOptions = ArisOptions()) -> tuple[np.ndarray, ScaDiag]:
    """SCA on the amplitudes with a damped, safeguarded acceptance: the step
    toward the LP solution is halved until the true f does not increase and
    the true power form stays within budget."""
    diag = ScaDiag()
    rho = np.asarray(rho0, dtype=float).copy()

    def f_at(r):
        vart = np.exp(1j * theta) * np.sqrt(r)
        return float((np.vdot(vart, quad.q_mat @ vart)
                      - 2.0 * np.vdot(vart, quad.q_vec)).real)

    f_cur = f_at(rho)
    for _ in range(opts.sca_max_iter):
        grad_f, grad_g, f_t, g_t = amp_gradients(quad, theta, rho)
        rho_lp, feasible = solve_amp_lp(grad_f, grad_g, rho, quad.rho_max,
                                        quad.p_budget, g_t)
        if not feasible:
            diag.infeasible_lp = True
            return np.zeros_like(rho), diag
        step = rho_lp - rho
        if not np.any(step):
            break
        alpha = 1.0
        accepted = False
        while alpha >= 1e-6:
            cand = rho + alpha * step
            f_cand = f_at(cand)
            if f_cand <= f_cur + 1e-14 * (1.0 + abs(f_cur)) and \
                    quad.g_rho(cand) <= quad.p_budget * (1.0 + 1e-12):
                diag.accepted.append((f_cur, f_cand, quad.g_rho(cand)))
                rho, f_prev, f_cur = cand, f_cur, f_cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            diag.stagnated = True
            break
        if abs(f_prev - f_cur) <= opts.sca_tol * (1.0 + abs(f_prev)):
            break
    return rho, diag


@dataclass
class ArisDiag:
    f_trace: list = field(default_factory=list)
    sca: list = field(default_factory=list)
    f_entry: float = float("nan")  # f at the block's incoming coefficients


def _alternate(quad, theta0, rho0, opts, do_phase, do_amp) -> tuple[ArisVector, ArisDiag]:
    theta = np.asarray(theta0, dtype=float).copy()
    rho = np.asarray(rho0, dtype=float).copy()
    diag = ArisDiag()
    f_prev = quad.f_phi(compose_phi(rho, theta))
    diag.f_trace.append(f_prev)
    for _ in range(opts.outer_max_iter):
        if do_phase:
            theta = optimize_phases(quad, rho, theta, opts)
        if do_amp:
            rho, sca_diag = optimize_amplitudes(quad, theta, rho, opts)
            diag.sca.append(sca_diag)
        f_new = quad.f_phi(compose_phi(rho, theta))
        diag.f_trace.append(f_new)
        if abs(f_prev - f_new) <= opts.outer_tol * (1.0 + abs(f_prev)):
            break
        f_prev = f_new
    return ArisVector(theta=theta, rho=rho), diag


def optimize_aris(quad: ArisQuadratic, theta0: np.ndarray, rho0: np.ndarray,
                  opts: ArisOptions = ArisOptions(), do_phase: bool = True,
                  do_amp: bool = True) -> tuple[ArisVector, ArisDiag]:
    """Alternate phase and amplitude stages until f(phi) stops improving.

    Beam and phase blocks co-adapt, which can leave the incumbent phases at
    a poor joint optimum where the alternation has no gradient, so a second
    start aligned with the linear term's phases is also tried; the result
    with the lower f wins (the incumbent is always a candidate, so f never
    increases across the block).
    """
    f_entry = quad.f_phi(compose_phi(rho0, theta0))
    best = _alternate(quad, theta0, rho0, opts, do_phase, do_amp)
    if do_phase:
        mag = np.abs(quad.q_vec)
        theta_aligned = np.where(mag > 0.0, np.angle(quad.q_vec), theta0)
        alt = _alternate(quad, theta_aligned, rho0, opts, do_phase, do_amp)
        if quad.f_phi(alt[0].phi) < quad.f_phi(best[0].phi):
            best = alt
    vec, diag = best
    diag.f_entry = f_entry
    if quad.f_phi(vec.phi) > f_entry:  # incumbent always wins ties upward
        vec = ArisVector(theta=np.asarray(theta0, dtype=float).copy(),
                         rho=np.asarray(rho0, dtype=float).copy())
        diag.f_trace = [f_entry]
    logger.debug("aris block: f %.9g -> %.9g over %d outer iterations",
                 f_entry, diag.f_trace[-1], len(diag.f_trace) - 1)
    return vec, diag


def optimize_aris_slot(scn: Scenario, ch: ChannelSet, st: NetworkState, wm: WmmseState,
                       platform: str, slot: int, sic: SicOrder, sdma: bool = False,
                       opts: ArisOptions = ArisOptions(), do_phase: bool = True,
                       do_amp: bool = True) -> tuple[ArisVector, ArisDiag]:
    """Build the slot quadratic from the current state and run Algorithm 1."""
    quad = build_quadratic(scn, ch, st, wm, platform, slot, sic, sdma)
    if platform == "uav":
        theta0, rho0 = st.theta_u[slot], st.rho_u[slot]
    else:
        theta0, rho0 = st.theta_h[slot], st.rho_h[slot]
    return optimize_aris(quad, theta0, rho0, opts, do_phase=do_phase, do_amp=do_amp)
