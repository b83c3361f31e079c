"""Channel synthesis: steering vectors, Rician fading, link budgets.

Every link is a Rician mix of a geometric line-of-sight component and an
i.i.d. CN(0,1) draw, scaled by a large-scale gain.  Terrestrial-tier links
use the beta0 * d^-eta model; satellite-tier links use the free-space
budget (lambda/4*pi*d)^2 * G_tx * G_rx with a rain attenuation factor on
legs that cross the atmosphere (rain is omitted on the SAT->HAP leg).

Conventions, used consistently everywhere:
  * azimuth  psi = atan2(dy, dx), elevation phi = atan2(dz, hypot(dx, dy)),
    measured at a node along the straight line toward the other endpoint;
  * steering vectors have unit Euclidean norm;
  * small-scale fading is unit power: the LoS factor is scaled by
    sqrt(#entries) so E||fading||_F^2 equals the entry count for any kappa.

Fading is drawn once per (seed, slot) and held fixed while the optimizer
moves the aerial platforms; only geometry-dependent factors are rebuilt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import SPACING_OVER_LAMBDA, Scenario

FORMAT_VERSION = 1

# stable substream ids, one per fading family (order must never change)
_FAMILIES = ["bk", "bU", "Uk", "bl", "Ul", "sl", "sH", "Hl", "sk", "Hk", "rain"]


def angles(p_from: np.ndarray, p_to: np.ndarray) -> tuple[float, float]:
    """Azimuth/elevation of the line from p_from toward p_to."""
    d = np.asarray(p_to, dtype=float) - np.asarray(p_from, dtype=float)
    psi = math.atan2(d[1], d[0])
    phi = math.atan2(d[2], math.hypot(d[0], d[1]))
    return psi, phi


def ula_steering(m: int, spacing_over_lambda: float, psi: float, phi: float) -> np.ndarray:
    """Unit-norm ULA response; entry j has phase -2*pi*(d/lambda)*j*cos(phi)*cos(psi)."""
    if m < 1:
        raise ValueError("array size must be >= 1")
    j = np.arange(m)
    phase = -2.0 * np.pi * spacing_over_lambda * j * math.cos(phi) * math.cos(psi)
    return np.exp(1j * phase) / math.sqrt(m)


def upa_steering(nx: int, ny: int, spacing_x_over_lambda: float,
                 spacing_y_over_lambda: float, psi: float, phi: float) -> np.ndarray:
    """Unit-norm UPA response: Kronecker of the x factor (cos psi phase ramp)
    and the y factor (sin psi phase ramp), normalized by sqrt(nx*ny)."""
    if nx < 1 or ny < 1:
        raise ValueError("array size must be >= 1")
    jx = np.arange(nx)
    jy = np.arange(ny)
    ax = np.exp(-2j * np.pi * spacing_x_over_lambda * jx * math.cos(phi) * math.cos(psi))
    ay = np.exp(-2j * np.pi * spacing_y_over_lambda * jy * math.cos(phi) * math.sin(psi))
    return np.kron(ax, ay) / math.sqrt(nx * ny)


def rician(los: np.ndarray, kappa: float, gain: float, nlos_draw: np.ndarray) -> np.ndarray:
    """sqrt(gain) * (sqrt(kappa/(1+kappa)) * los + sqrt(1/(1+kappa)) * nlos)."""
    los = np.asarray(los)
    nlos_draw = np.asarray(nlos_draw)
    if los.shape != nlos_draw.shape:
        raise ValueError(f"los shape {los.shape} != nlos shape {nlos_draw.shape}")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if not gain > 0:
        raise ValueError("gain must be > 0")
    c_los = math.sqrt(kappa / (1.0 + kappa))
    c_nlos = math.sqrt(1.0 / (1.0 + kappa))
    return math.sqrt(gain) * (c_los * los + c_nlos * nlos_draw)


def terrestrial_gain(beta0: float, d: float, eta: float) -> float:
    """Reference-anchored power-law path gain beta0 * d^-eta."""
    if d <= 0:
        raise ValueError("distance must be > 0")
    return beta0 * d ** (-eta)


def satellite_gain(lam: float, d: float, g_tx: float, g_rx: float, rain: float) -> float:
    """Free-space budget (lam/(4*pi*d))^2 * g_tx * g_rx * rain."""
    if d <= 0:
        raise ValueError("distance must be > 0")
    return (lam / (4.0 * np.pi * d)) ** 2 * g_tx * g_rx * rain


def sample_rain(mu: float, var: float, rng: np.random.Generator,
                model: str = "log_of_db") -> float:
    """Draw a rain attenuation as a linear power ratio in (0, 1].

    log_of_db (literal model): attenuation_dB = exp(x), x ~ N(mu, var).
    normal_db (alternative):   attenuation_dB = max(x, 0), x ~ N(mu, var).
    """
    if var < 0:
        raise ValueError("variance must be >= 0")
    x = mu + math.sqrt(var) * rng.standard_normal()
    if model == "log_of_db":
        atten_db = math.exp(x)
    elif model == "normal_db":
        atten_db = max(x, 0.0)
    else:
        raise ValueError(f"unknown rain model {model!r}")
    return 10.0 ** (-atten_db / 10.0)


def effective(direct: np.ndarray, ris_user: np.ndarray, theta: np.ndarray,
              bs_ris: np.ndarray) -> np.ndarray:
    """Effective row channel: direct + ris_user^H diag(theta) bs_ris."""
    direct = np.asarray(direct)
    ris_user = np.asarray(ris_user)
    theta = np.asarray(theta)
    bs_ris = np.asarray(bs_ris)
    n = ris_user.shape[0]
    if theta.shape != (n,) or bs_ris.shape[0] != n or direct.shape != (bs_ris.shape[1],):
        raise ValueError("effective-channel shape mismatch")
    return direct + (np.conj(ris_user) * theta) @ bs_ris


@dataclass(frozen=True)
class FadingRealization:
    """All random draws for one run: per-slot NLoS matrices plus rain gains.

    Regenerating with the same seed and scenario shapes is bit-exact.
    """

    seed: int
    draws: dict[str, np.ndarray]  # family -> (N, rows, cols) complex
    rain: np.ndarray              # (N,) linear gains in (0, 1]


def _cn01(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def draw_fading(scn: Scenario, seed: int) -> FadingRealization:
    """Draw every NLoS matrix and rain gain for a run.

    Each link family uses its own child stream of the seed, so changing one
    array size (e.g. the HAP element count) leaves all other families'
    draws untouched -- this keeps parameter sweeps seed-paired.
    """
    n = scn.n_slots
    shapes = {
        "bk": (n, scn.k_users, scn.m_tbs),
        "bU": (n, scn.n_uav, scn.m_tbs),
        "Uk": (n, scn.n_uav, scn.k_users),
        "bl": (n, scn.l_users, scn.m_tbs),
        "Ul": (n, scn.n_uav, scn.l_users),
        "sl": (n, scn.l_users, scn.m_sat),
        "sH": (n, scn.n_hap, scn.m_sat),
        "Hl": (n, scn.n_hap, scn.l_users),
        "sk": (n, scn.k_users, scn.m_sat),
        "Hk": (n, scn.n_hap, scn.k_users),
    }
    children = np.random.SeedSequence(seed).spawn(len(_FAMILIES))
    draws = {}
    for fam, child in zip(_FAMILIES, children):
        if fam == "rain":
            rng = np.random.default_rng(child)
            rain = np.array([sample_rain(scn.rain_mu, scn.rain_var, rng, scn.rain_model)
                             for _ in range(n)])
        else:
            draws[fam] = _cn01(np.random.default_rng(child), shapes[fam])
    return FadingRealization(seed=seed, draws=draws, rain=rain)


def save_fading(real: FadingRealization, path: str) -> None:
    """Binary dump for replay (format version + seed + per-family arrays)."""
    np.savez_compressed(
        path, format_version=FORMAT_VERSION, seed=real.seed, rain=real.rain,
        **{f"draw_{k}": v for k, v in real.draws.items()})


def load_fading(path: str) -> FadingRealization:
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported fading dump version {version}")
        draws = {k[len("draw_"):]: data[k] for k in data.files if k.startswith("draw_")}
        return FadingRealization(seed=int(data["seed"]), draws=draws, rain=data["rain"])


@dataclass(frozen=True)
class ChannelSet:
    """Every channel matrix for one slot under one fading realization.

    Row channels are stored one user per row (h_bk[k] is the 1 x M_b row of
    terrestrial user k); RIS-to-user channels are columns of (N_ris, users).
    """

    slot: int
    h_bk: np.ndarray   # (K, M_b) TBS -> terrestrial users
    H_bU: np.ndarray   # (N_U, M_b) TBS -> UAV-ARIS
    h_Uk: np.ndarray   # (N_U, K) UAV-ARIS -> terrestrial users
    h_bl: np.ndarray   # (L, M_b) TBS -> satellite users (cross tier)
    h_Ul: np.ndarray   # (N_U, L) UAV-ARIS -> satellite users (cross tier)
    h_sl: np.ndarray   # (L, M_s) SAT -> satellite users
    H_sH: np.ndarray   # (N_H, M_s) SAT -> HAP-ARIS
    h_Hl: np.ndarray   # (N_H, L) HAP-ARIS -> satellite users
    h_sk: np.ndarray   # (K, M_s) SAT -> terrestrial users (cross tier)
    h_Hk: np.ndarray   # (N_H, K) HAP-ARIS -> terrestrial users (cross tier)
    dists: dict[str, np.ndarray | float]
    rain: float


def _los_row(node_pos, targets, m, scale):
    """Rows a^H(angles to each target) * sqrt(m) for a ULA/UPA at node_pos."""
    rows = [np.conj(scale(*angles(node_pos, t))) for t in targets]
    return np.sqrt(m) * np.stack(rows, axis=0)


def assemble(scn: Scenario, q_u: np.ndarray, q_h: np.ndarray, slot: int,
             real: FadingRealization) -> ChannelSet:
    """Compose steering, Rician mixing, and large-scale gains for one slot."""
    if scn.users_t is None or scn.users_s is None:
        raise ValueError("scenario users not materialized; call place_users first")
    sp = SPACING_OVER_LAMBDA
    tbs, sat = scn.tbs_pos, scn.sat_pos
    users_t, users_s = scn.users_t, scn.users_s
    rain = float(real.rain[slot])

    def a_tbs(psi, phi):
        return ula_steering(scn.m_tbs, sp, psi, phi)

    def a_sat(psi, phi):
        return upa_steering(scn.m_sat_x, scn.m_sat_y, sp, sp, psi, phi)

    def a_uav(psi, phi):
        return upa_steering(scn.n_uav_x, scn.n_uav_y, sp, sp, psi, phi)

    def a_hap(psi, phi):
        return upa_steering(scn.n_hap_x, scn.n_hap_y, sp, sp, psi, phi)

    def dist(a, b):
        d = float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
        if d <= 0:
            raise ValueError("coincident endpoints make the link geometry singular")
        return d

    d_bk = np.array([dist(tbs, u) for u in users_t])
    d_bl = np.array([dist(tbs, u) for u in users_s])
    d_bu = dist(tbs, q_u)
    d_uk = np.array([dist(q_u, u) for u in users_t])
    d_ul = np.array([dist(q_u, u) for u in users_s])
    d_sl = np.array([dist(sat, u) for u in users_s])
    d_sk = np.array([dist(sat, u) for u in users_t])
    d_sh = dist(sat, q_h)
    d_hl = np.array([dist(q_h, u) for u in users_s])
    d_hk = np.array([dist(q_h, u) for u in users_t])

    draws = {k: v[slot] for k, v in real.draws.items()}

    def mix_rows(node, targets, a_fn, m, dists_, kappa, gain_fn, draw):
        los = _los_row(node, targets, m, a_fn)
        rows = [rician(los[i], kappa, gain_fn(dists_[i]), draw[i])
                for i in range(len(targets))]
        return np.stack(rows, axis=0)

    def mix_cols(node, targets, a_fn, n, dists_, kappa, gain_fn, draw):
        cols = [rician(np.sqrt(n) * a_fn(*angles(node, t)), kappa,
                       gain_fn(dists_[i]), draw[:, i])
                for i, t in enumerate(targets)]
        return np.stack(cols, axis=1)

    def tgain(eta):
        return lambda d: terrestrial_gain(scn.beta0, d, eta)

    def sgain(g_tx, g_rx, with_rain=True):
        r = rain if with_rain else 1.0
        return lambda d: satellite_gain(scn.lambda_s, d, g_tx, g_rx, r)

    h_bk = mix_rows(tbs, users_t, a_tbs, scn.m_tbs, d_bk, scn.kappa_bk, tgain(scn.eta_bk), draws["bk"])
    h_bl = mix_rows(tbs, users_s, a_tbs, scn.m_tbs, d_bl, scn.kappa_bl, tgain(scn.eta_bk), draws["bl"])
    h_sl = mix_rows(sat, users_s, a_sat, scn.m_sat, d_sl, scn.kappa_sl,
                    sgain(scn.gain_sat, scn.gain_user), draws["sl"])
    h_sk = mix_rows(sat, users_t, a_sat, scn.m_sat, d_sk, scn.kappa_sk,
                    sgain(scn.gain_sat, scn.gain_user), draws["sk"])

    # BS -> RIS matrices: LoS is the outer product of the two steering vectors
    los_bu = np.sqrt(scn.n_uav * scn.m_tbs) * np.outer(
        a_uav(*angles(q_u, tbs)), np.conj(a_tbs(*angles(tbs, q_u))))
    H_bU = rician(los_bu, scn.kappa_bu, terrestrial_gain(scn.beta0, d_bu, scn.eta_bu), draws["bU"])
    los_sh = np.sqrt(scn.n_hap * scn.m_sat) * np.outer(
        a_hap(*angles(q_h, sat)), np.conj(a_sat(*angles(sat, q_h))))
    H_sH = rician(los_sh, scn.kappa_sh,
                  satellite_gain(scn.lambda_s, d_sh, scn.gain_sat, scn.gain_hap, 1.0),
                  draws["sH"])

    h_Uk = mix_cols(q_u, users_t, a_uav, scn.n_uav, d_uk, scn.kappa_uk, tgain(scn.eta_uk), draws["Uk"])
    h_Ul = mix_cols(q_u, users_s, a_uav, scn.n_uav, d_ul, scn.kappa_ul, tgain(scn.eta_uk), draws["Ul"])
    h_Hl = mix_cols(q_h, users_s, a_hap, scn.n_hap, d_hl, scn.kappa_hl,
                    sgain(scn.gain_hap, scn.gain_user), draws["Hl"])
    h_Hk = mix_cols(q_h, users_t, a_hap, scn.n_hap, d_hk, scn.kappa_hk,
                    sgain(scn.gain_hap, scn.gain_user), draws["Hk"])

    dists = {"bk": d_bk, "bU": d_bu, "Uk": d_uk, "bl": d_bl, "Ul": d_ul,
             "sl": d_sl, "sH": d_sh, "Hl": d_hl, "sk": d_sk, "Hk": d_hk}
    return ChannelSet(slot=slot, h_bk=h_bk, H_bU=H_bU, h_Uk=h_Uk, h_bl=h_bl,
                      h_Ul=h_Ul, h_sl=h_sl, H_sH=H_sH, h_Hl=h_Hl, h_sk=h_sk,
                      h_Hk=h_Hk, dists=dists, rain=rain)


def assemble_frame(scn: Scenario, uav_path, hap_path,
                   real: FadingRealization) -> list[ChannelSet]:
    """One ChannelSet per slot along the given aerial paths."""
    return [assemble(scn, uav_path.positions[n], hap_path.positions[n], n, real)
            for n in range(scn.n_slots)]


# effective channels of a whole slot, one user per row
def eff_terr_tbs(ch: ChannelSet, phi_u: np.ndarray) -> np.ndarray:
    """h_eff for TBS -> terrestrial users: direct + UAV cascade. (K, M_b)"""
    return ch.h_bk + (np.conj(ch.h_Uk.T) * phi_u[None, :]) @ ch.H_bU


def eff_sat_tbs(ch: ChannelSet, phi_u: np.ndarray) -> np.ndarray:
    """h_eff for TBS -> satellite users (cross tier). (L, M_b)"""
    return ch.h_bl + (np.conj(ch.h_Ul.T) * phi_u[None, :]) @ ch.H_bU


def eff_sat_sat(ch: ChannelSet, phi_h: np.ndarray) -> np.ndarray:
    """h_eff for SAT -> satellite users: direct + HAP cascade. (L, M_s)"""
    return ch.h_sl + (np.conj(ch.h_Hl.T) * phi_h[None, :]) @ ch.H_sH


def eff_terr_sat(ch: ChannelSet, phi_h: np.ndarray) -> np.ndarray:
    """h_eff for SAT -> terrestrial users (cross tier). (K, M_s)"""
    return ch.h_sk + (np.conj(ch.h_Hk.T) * phi_h[None, :]) @ ch.H_sH
