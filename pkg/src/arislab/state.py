"""Decision variables of one optimizer iterate and their initialization."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .scene import Path, Scenario


def compose_phi(rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """ARIS coefficient vector sqrt(rho) * exp(i*theta)."""
    return np.sqrt(rho) * np.exp(1j * theta)


@dataclass
class NetworkState:
    """One BCD iterate: beamformers, ARIS coefficients, aerial paths.

    Amplitudes and phases are stored separately; sigma_u2/sigma_h2 are the
    effective ARIS noise powers (zero when the surface is passive or absent).
    """

    v_b: np.ndarray      # (N, K, M_b)
    v_s: np.ndarray      # (N, L, M_s)
    rho_u: np.ndarray    # (N, N_U)
    theta_u: np.ndarray  # (N, N_U) radians
    rho_h: np.ndarray    # (N, N_H)
    theta_h: np.ndarray  # (N, N_H)
    uav_path: Path
    hap_path: Path
    sigma_u2: float
    sigma_h2: float

    def phi_u(self, n: int) -> np.ndarray:
        return compose_phi(self.rho_u[n], self.theta_u[n])

    def phi_h(self, n: int) -> np.ndarray:
        return compose_phi(self.rho_h[n], self.theta_h[n])

    def copy(self) -> "NetworkState":
        return copy.deepcopy(self)


def max_uniform_amplitude(beam_power_sum: float, sigma2: float, n_elems: int,
                          p_budget: float, rho_max: float) -> float:
    """Largest uniform rho with rho*(sum_k ||H v_k||^2 + sigma2*N) <= budget."""
    through = beam_power_sum + sigma2 * n_elems
    if through <= 0.0:
        return rho_max
    return min(rho_max, p_budget / through)


def matched_filter_beams(h_rows: np.ndarray, p_budget: float) -> np.ndarray:
    """Matched filters on the given row channels with a uniform power split."""
    n_users = h_rows.shape[0]
    per_user = p_budget / n_users
    norms = np.linalg.norm(h_rows, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return np.sqrt(per_user) * np.conj(h_rows) / norms[:, None]


def init_state(scn: Scenario, channels: list[ChannelSet], rng: np.random.Generator,
               uav_path: Path, hap_path: Path, *,
               use_uav_ris: bool = True, use_hap_ris: bool = True,
               active: bool = True, rho_pinned: float | None = None) -> NetworkState:
    """Feasible starting point: matched-filter beams at full budget, uniform
    random phases, and the largest uniform amplitude the ARIS budget allows.

    Phase draws are consumed identically for every scheme so that runs with
    the same seed stay paired across schemes.
    """
    n = scn.n_slots
    v_b = np.zeros((n, scn.k_users, scn.m_tbs), dtype=complex)
    v_s = np.zeros((n, scn.l_users, scn.m_sat), dtype=complex)
    theta_u = rng.uniform(0.0, 2.0 * np.pi, size=(n, scn.n_uav))
    theta_h = rng.uniform(0.0, 2.0 * np.pi, size=(n, scn.n_hap))
    rho_u = np.zeros((n, scn.n_uav))
    rho_h = np.zeros((n, scn.n_hap))

    sigma_u2 = scn.noise_uav if (use_uav_ris and active) else 0.0
    sigma_h2 = scn.noise_hap if (use_hap_ris and active) else 0.0

    for sl, ch in enumerate(channels):
        v_b[sl] = matched_filter_beams(ch.h_bk, scn.p_tbs)
        v_s[sl] = matched_filter_beams(ch.h_sl, scn.p_sat)
        if use_uav_ris:
            if rho_pinned is not None:
                rho_u[sl] = rho_pinned
            else:
                through = float(np.sum(np.abs(ch.H_bU @ v_b[sl].T) ** 2))
                rho_u[sl] = max_uniform_amplitude(through, sigma_u2, scn.n_uav,
                                                  scn.p_uav, scn.rho_max_uav)
        if use_hap_ris:
            if rho_pinned is not None:
                rho_h[sl] = rho_pinned
            else:
                through = float(np.sum(np.abs(ch.H_sH @ v_s[sl].T) ** 2))
                rho_h[sl] = max_uniform_amplitude(through, sigma_h2, scn.n_hap,
                                                  scn.p_hap, scn.rho_max_hap)

    return NetworkState(v_b=v_b, v_s=v_s, rho_u=rho_u, theta_u=theta_u,
                        rho_h=rho_h, theta_h=theta_h,
                        uav_path=uav_path, hap_path=hap_path,
                        sigma_u2=sigma_u2, sigma_h2=sigma_h2)
