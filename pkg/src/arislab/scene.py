"""Static scenario description, unit conversions, and run initialization.

A scenario is loaded from a flat key/value config document with dotted keys
(e.g. ``power.tbs_dbm``).  Keys ending in ``_dbm`` / ``_db`` / ``_dbi`` are
converted to linear units on load; everything downstream works in W, linear
gain ratios, meters, seconds and Hz.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

C_LIGHT = 299792458.0

# Element spacing is half a wavelength for every array (ULA and UPA alike).
SPACING_OVER_LAMBDA = 0.5


class ConfigError(ValueError):
    """Raised when a config document is missing keys or fails validation."""


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a dBm power level to watts."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if p_w <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(p_w) + 30.0


def db_to_linear(g_db: float) -> float:
    """Convert a dB (or dBi) value to a linear ratio."""
    return 10.0 ** (g_db / 10.0)


def linear_to_db(g: float) -> float:
    if g <= 0.0:
        raise ValueError("ratio must be positive to express in dB")
    return 10.0 * math.log10(g)


@dataclass(frozen=True)
class Scenario:
    """All static configuration for one experiment, in linear/SI units.

    User positions and aerial endpoints may be None in a freshly loaded
    scenario; :func:`place_users` materializes them per run seed.
    """

    # frame
    n_slots: int
    slot_seconds: float
    # array sizes
    m_tbs: int
    m_sat_x: int
    m_sat_y: int
    n_uav_x: int
    n_uav_y: int
    n_hap_x: int
    n_hap_y: int
    # user counts
    k_users: int
    l_users: int
    # fixed node geometry (m)
    tbs_pos: np.ndarray
    sat_pos: np.ndarray
    # user placement discs
    terr_disc_radius: float
    sat_disc_center: np.ndarray  # (x, y)
    sat_disc_radius: float
    # carriers
    carrier_hz: float
    sat_carrier_hz: float
    # terrestrial path loss
    beta0: float
    eta_bk: float
    eta_bu: float
    eta_uk: float
    # Rician factors per link class
    kappa_bk: float
    kappa_bu: float
    kappa_uk: float
    kappa_bl: float
    kappa_ul: float
    kappa_sl: float
    kappa_sh: float
    kappa_hl: float
    kappa_sk: float
    kappa_hk: float
    # antenna gains (linear)
    gain_sat: float
    gain_user: float
    gain_hap: float
    # rain attenuation model parameters
    rain_mu: float
    rain_var: float
    rain_model: str  # "log_of_db" (literal) or "normal_db"
    # budgets and noise (W)
    p_tbs: float
    p_sat: float
    p_uav: float
    p_hap: float
    noise_terr: float
    noise_sat: float
    noise_uav: float
    noise_hap: float
    # amplification caps
    rho_max_uav: float
    rho_max_hap: float
    # mobility
    v_max_uav: float
    v_max_hap: float
    z_uav_min: float
    z_uav_max: float
    z_hap_min: float
    z_hap_max: float
    uav_cruise_alt: float
    hap_cruise_alt: float
    # per-run geometry (None until materialized)
    users_t: np.ndarray | None = None  # (K, 3)
    users_s: np.ndarray | None = None  # (L, 3)
    uav_init: np.ndarray | None = None
    uav_final: np.ndarray | None = None
    hap_init: np.ndarray | None = None
    hap_final: np.ndarray | None = None

    @property
    def m_sat(self) -> int:
        return self.m_sat_x * self.m_sat_y

    @property
    def n_uav(self) -> int:
        return self.n_uav_x * self.n_uav_y

    @property
    def n_hap(self) -> int:
        return self.n_hap_x * self.n_hap_y

    @property
    def lambda_t(self) -> float:
        return C_LIGHT / self.carrier_hz

    @property
    def lambda_s(self) -> float:
        return C_LIGHT / self.sat_carrier_hz

    def max_travel(self, v_max: float) -> float:
        """Largest endpoint displacement a feasible path can cover."""
        return v_max * self.slot_seconds * max(self.n_slots - 1, 0)


@dataclass(frozen=True)
class Path:
    """Sequence of per-slot 3D positions for one aerial platform."""

    positions: np.ndarray  # (N, 3)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("path positions must have shape (N, 3)")
        object.__setattr__(self, "positions", pos)

    def steps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)


def validate_path(path: Path, scn: Scenario, platform: str, tol: float = 1e-9) -> None:
    """Check speed, altitude-box, and endpoint constraints; raise on violation."""
    if platform == "uav":
        v_max, z_lo, z_hi = scn.v_max_uav, scn.z_uav_min, scn.z_uav_max
        q_init, q_final = scn.uav_init, scn.uav_final
    elif platform == "hap":
        v_max, z_lo, z_hi = scn.v_max_hap, scn.z_hap_min, scn.z_hap_max
        q_init, q_final = scn.hap_init, scn.hap_final
    else:
        raise ValueError(f"unknown platform {platform!r}")
    pos = path.positions
    if pos.shape[0] != scn.n_slots:
        raise ValueError(f"{platform} path has {pos.shape[0]} slots, expected {scn.n_slots}")
    step_cap = v_max * scn.slot_seconds
    steps = path.steps()
    if steps.size and steps.max() > step_cap * (1.0 + tol):
        raise ValueError(f"{platform} path violates speed cap: step {steps.max():.6g} > {step_cap:.6g}")
    z = pos[:, 2]
    if z.min() < z_lo - tol * max(1.0, abs(z_lo)) or z.max() > z_hi + tol * max(1.0, abs(z_hi)):
        raise ValueError(f"{platform} path altitude outside [{z_lo}, {z_hi}]")
    if q_init is not None and not np.allclose(pos[0], q_init, rtol=0, atol=1e-9):
        raise ValueError(f"{platform} path does not start at the declared initial position")
    if q_final is not None and not np.allclose(pos[-1], q_final, rtol=0, atol=1e-9):
        raise ValueError(f"{platform} path does not end at the declared final position")


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(value: str) -> list[float]:
    parts = value.replace(",", " ").split()
    return [float(p) for p in parts]


_REQUIRED_KEYS = [
    "frame.n_slots", "frame.slot_seconds",
    "tbs.antennas", "sat.antennas_x", "sat.antennas_y",
    "users.terrestrial", "users.satellite",
    "ris.uav_nx", "ris.uav_ny", "ris.hap_nx", "ris.hap_ny",
    "ris.rho_max_uav", "ris.rho_max_hap",
    "geometry.tbs_m", "geometry.sat_m",
    "geometry.terrestrial_disc_radius_m",
    "geometry.satellite_disc_center_m", "geometry.satellite_disc_radius_m",
    "carrier.terrestrial_hz", "carrier.satellite_hz",
    "pathloss.reference_db",
    "pathloss.exp_tbs_user", "pathloss.exp_tbs_uav", "pathloss.exp_uav_user",
    "rician.tbs_user", "rician.tbs_uav", "rician.uav_user",
    "rician.tbs_satuser", "rician.uav_satuser",
    "rician.sat_user", "rician.sat_hap", "rician.hap_user",
    "rician.sat_terruser", "rician.hap_terruser",
    "gain.sat_dbi", "gain.user_dbi", "gain.hap_dbi",
    "rain.attenuation_mu", "rain.attenuation_var",
    "power.tbs_dbm", "power.sat_dbm", "power.uav_aris_dbm", "power.hap_aris_dbm",
    "noise.terrestrial_dbm", "noise.satellite_dbm", "noise.uav_dbm", "noise.hap_dbm",
    "mobility.uav_vmax_ms", "mobility.hap_vmax_ms",
    "mobility.uav_alt_m", "mobility.hap_alt_m",
    "mobility.uav_cruise_alt_m", "mobility.hap_cruise_alt_m",
]

# keys accepted beyond the required set
_OPTIONAL_KEYS = [
    "frame.duration_s", "ris.n_uav", "ris.n_hap", "rain.model",
    "mobility.uav_init_m", "mobility.uav_final_m",
    "mobility.hap_init_m", "mobility.hap_final_m",
]


def _balanced_factors(n: int) -> tuple[int, int]:
    nx = int(round(math.sqrt(n)))
    while nx > 1 and n % nx:
        nx -= 1
    return nx, n // nx


def sweepable_keys() -> list[str]:
    return sorted(set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS))


def load_scenario(config_text: str) -> Scenario:
    """Build a validated Scenario from a config document. See module docs."""
    cfg = parse_config(config_text)
    return scenario_from_mapping(cfg)


def scenario_from_mapping(cfg: dict[str, str]) -> Scenario:
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in cfg:
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
    for key in _REQUIRED_KEYS:
        if key not in cfg:
            raise ConfigError(f"missing config key '{key}'")

    def num(key: str) -> float:
        vals = _floats(cfg[key])
        if len(vals) != 1:
            raise ConfigError(f"'{key}' must be a single number")
        if not math.isfinite(vals[0]):
            raise ConfigError(f"'{key}' must be finite")
        return vals[0]

    def count(key: str) -> int:
        v = num(key)
        if v != int(v) or v < 1:
            raise ConfigError(f"'{key}' must be >= 1")
        return int(v)

    def vec(key: str, dim: int) -> np.ndarray:
        vals = _floats(cfg[key])
        if len(vals) != dim:
            raise ConfigError(f"'{key}' must have {dim} components")
        return np.array(vals, dtype=float)

    def opt_vec(key: str, dim: int) -> np.ndarray | None:
        return vec(key, dim) if key in cfg else None

    n_slots = count("frame.n_slots")
    slot_seconds = num("frame.slot_seconds")
    if "frame.duration_s" in cfg:
        duration = num("frame.duration_s")
        if duration <= 0:
            raise ConfigError("'frame.duration_s' must be > 0")
        slot_seconds = duration / n_slots
    if slot_seconds <= 0:
        raise ConfigError("'frame.slot_seconds' must be > 0")

    if "ris.n_uav" in cfg:
        nux, nuy = _balanced_factors(count("ris.n_uav"))
    else:
        nux, nuy = count("ris.uav_nx"), count("ris.uav_ny")
    if "ris.n_hap" in cfg:
        nhx, nhy = _balanced_factors(count("ris.n_hap"))
    else:
        nhx, nhy = count("ris.hap_nx"), count("ris.hap_ny")

    uav_alt = vec("mobility.uav_alt_m", 2)
    hap_alt = vec("mobility.hap_alt_m", 2)

    scn = Scenario(
        n_slots=n_slots,
        slot_seconds=slot_seconds,
        m_tbs=count("tbs.antennas"),
        m_sat_x=count("sat.antennas_x"),
        m_sat_y=count("sat.antennas_y"),
        n_uav_x=nux, n_uav_y=nuy, n_hap_x=nhx, n_hap_y=nhy,
        k_users=count("users.terrestrial"),
        l_users=count("users.satellite"),
        tbs_pos=vec("geometry.tbs_m", 3),
        sat_pos=vec("geometry.sat_m", 3),
        terr_disc_radius=num("geometry.terrestrial_disc_radius_m"),
        sat_disc_center=vec("geometry.satellite_disc_center_m", 2),
        sat_disc_radius=num("geometry.satellite_disc_radius_m"),
        carrier_hz=num("carrier.terrestrial_hz"),
        sat_carrier_hz=num("carrier.satellite_hz"),
        beta0=db_to_linear(num("pathloss.reference_db")),
        eta_bk=num("pathloss.exp_tbs_user"),
        eta_bu=num("pathloss.exp_tbs_uav"),
        eta_uk=num("pathloss.exp_uav_user"),
        kappa_bk=num("rician.tbs_user"),
        kappa_bu=num("rician.tbs_uav"),
        kappa_uk=num("rician.uav_user"),
        kappa_bl=num("rician.tbs_satuser"),
        kappa_ul=num("rician.uav_satuser"),
        kappa_sl=num("rician.sat_user"),
        kappa_sh=num("rician.sat_hap"),
        kappa_hl=num("rician.hap_user"),
        kappa_sk=num("rician.sat_terruser"),
        kappa_hk=num("rician.hap_terruser"),
        gain_sat=db_to_linear(num("gain.sat_dbi")),
        gain_user=db_to_linear(num("gain.user_dbi")),
        gain_hap=db_to_linear(num("gain.hap_dbi")),
        rain_mu=num("rain.attenuation_mu"),
        rain_var=num("rain.attenuation_var"),
        rain_model=cfg.get("rain.model", "log_of_db"),
        p_tbs=dbm_to_watts(num("power.tbs_dbm")),
        p_sat=dbm_to_watts(num("power.sat_dbm")),
        p_uav=dbm_to_watts(num("power.uav_aris_dbm")),
        p_hap=dbm_to_watts(num("power.hap_aris_dbm")),
        noise_terr=dbm_to_watts(num("noise.terrestrial_dbm")),
        noise_sat=dbm_to_watts(num("noise.satellite_dbm")),
        noise_uav=dbm_to_watts(num("noise.uav_dbm")),
        noise_hap=dbm_to_watts(num("noise.hap_dbm")),
        rho_max_uav=num("ris.rho_max_uav"),
        rho_max_hap=num("ris.rho_max_hap"),
        v_max_uav=num("mobility.uav_vmax_ms"),
        v_max_hap=num("mobility.hap_vmax_ms"),
        z_uav_min=uav_alt[0], z_uav_max=uav_alt[1],
        z_hap_min=hap_alt[0], z_hap_max=hap_alt[1],
        uav_cruise_alt=num("mobility.uav_cruise_alt_m"),
        hap_cruise_alt=num("mobility.hap_cruise_alt_m"),
        uav_init=opt_vec("mobility.uav_init_m", 3),
        uav_final=opt_vec("mobility.uav_final_m", 3),
        hap_init=opt_vec("mobility.hap_init_m", 3),
        hap_final=opt_vec("mobility.hap_final_m", 3),
    )
    validate_scenario(scn)
    return scn


def validate_scenario(scn: Scenario) -> None:
    if scn.k_users < 1:
        raise ConfigError("'users.terrestrial' must be >= 1")
    if scn.l_users < 1:
        raise ConfigError("'users.satellite' must be >= 1")
    positives = {
        "power.tbs_dbm": scn.p_tbs, "power.sat_dbm": scn.p_sat,
        "power.uav_aris_dbm": scn.p_uav, "power.hap_aris_dbm": scn.p_hap,
        "noise.terrestrial_dbm": scn.noise_terr, "noise.satellite_dbm": scn.noise_sat,
        "noise.uav_dbm": scn.noise_uav, "noise.hap_dbm": scn.noise_hap,
        "ris.rho_max_uav": scn.rho_max_uav, "ris.rho_max_hap": scn.rho_max_hap,
        "mobility.uav_vmax_ms": scn.v_max_uav, "mobility.hap_vmax_ms": scn.v_max_hap,
        "carrier.terrestrial_hz": scn.carrier_hz, "carrier.satellite_hz": scn.sat_carrier_hz,
        "geometry.terrestrial_disc_radius_m": scn.terr_disc_radius,
        "geometry.satellite_disc_radius_m": scn.sat_disc_radius,
        "pathloss.reference_db (linear)": scn.beta0,
    }
    for key, value in positives.items():
        if not (value > 0) or not math.isfinite(value):
            raise ConfigError(f"'{key}' must be a positive finite quantity")
    for key, kappa in [
        ("rician.tbs_user", scn.kappa_bk), ("rician.tbs_uav", scn.kappa_bu),
        ("rician.uav_user", scn.kappa_uk), ("rician.tbs_satuser", scn.kappa_bl),
        ("rician.uav_satuser", scn.kappa_ul), ("rician.sat_user", scn.kappa_sl),
        ("rician.sat_hap", scn.kappa_sh), ("rician.hap_user", scn.kappa_hl),
        ("rician.sat_terruser", scn.kappa_sk), ("rician.hap_terruser", scn.kappa_hk),
    ]:
        if kappa < 0:
            raise ConfigError(f"'{key}' must be >= 0")
    for key, eta in [
        ("pathloss.exp_tbs_user", scn.eta_bk),
        ("pathloss.exp_tbs_uav", scn.eta_bu),
        ("pathloss.exp_uav_user", scn.eta_uk),
    ]:
        if eta < 2.0:
            raise ConfigError(f"'{key}' must be >= 2 for terrestrial links")
    if scn.rain_var < 0:
        raise ConfigError("'rain.attenuation_var' must be >= 0")
    if scn.rain_model not in ("log_of_db", "normal_db"):
        raise ConfigError("'rain.model' must be 'log_of_db' or 'normal_db'")
    if not (scn.z_uav_min < scn.z_uav_max and scn.z_uav_min > 0):
        raise ConfigError("'mobility.uav_alt_m' must be an increasing positive pair")
    if not (scn.z_hap_min < scn.z_hap_max and scn.z_hap_min > 0):
        raise ConfigError("'mobility.hap_alt_m' must be an increasing positive pair")
    _check_endpoints(scn)


def _check_endpoints(scn: Scenario) -> None:
    for name, q0, q1, z_lo, z_hi, v in [
        ("uav", scn.uav_init, scn.uav_final, scn.z_uav_min, scn.z_uav_max, scn.v_max_uav),
        ("hap", scn.hap_init, scn.hap_final, scn.z_hap_min, scn.z_hap_max, scn.v_max_hap),
    ]:
        if q0 is None or q1 is None:
            continue
        for tag, q in [("init", q0), ("final", q1)]:
            if not (z_lo <= q[2] <= z_hi):
                raise ConfigError(
                    f"'mobility.{name}_{tag}_m' altitude {q[2]:g} outside [{z_lo:g}, {z_hi:g}]")
        reach = scn.max_travel(v)
        dist = float(np.linalg.norm(q1 - q0))
        if dist > reach * (1 + 1e-12):
            raise ConfigError(
                f"'mobility.{name}_final_m' endpoints unreachable: "
                f"{dist:g} m apart but at most {reach:g} m can be covered")


# --------------------------------------------------------------------------
# per-run geometry
# --------------------------------------------------------------------------

def _disc_points(rng: np.random.Generator, n: int, center_xy: np.ndarray, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    ang = 2.0 * np.pi * rng.random(n)
    pts = np.zeros((n, 3))
    pts[:, 0] = center_xy[0] + r * np.cos(ang)
    pts[:, 1] = center_xy[1] + r * np.sin(ang)
    return pts


def place_users(scn: Scenario, rng: np.random.Generator) -> Scenario:
    """Draw user positions and derive aerial endpoints; returns a new Scenario.

    Terrestrial users are uniform in a disc around the TBS; satellite users
    uniform in their own disc.  UAV endpoints: above the TBS -> above the
    terrestrial-user centroid; HAP: a straight segment centered over the
    satellite users.  Explicit endpoints in the config take precedence.
    """
    users_t = _disc_points(rng, scn.k_users, scn.tbs_pos[:2], scn.terr_disc_radius)
    users_s = _disc_points(rng, scn.l_users, scn.sat_disc_center, scn.sat_disc_radius)

    uav_init, uav_final = scn.uav_init, scn.uav_final
    if uav_init is None or uav_final is None:
        reach = scn.max_travel(scn.v_max_uav)
        start = np.array([scn.tbs_pos[0], scn.tbs_pos[1], scn.uav_cruise_alt])
        goal_xy = users_t[:, :2].mean(axis=0)
        goal = np.array([goal_xy[0], goal_xy[1], scn.uav_cruise_alt])
        span = np.linalg.norm(goal - start)
        if span > 0.95 * reach:  # pull the goal inside the reachable ball
            goal = start + (goal - start) * (0.95 * reach / span)
        uav_init = uav_init if uav_init is not None else start
        uav_final = uav_final if uav_final is not None else goal

    hap_init, hap_final = scn.hap_init, scn.hap_final
    if hap_init is None or hap_final is None:
        reach = scn.max_travel(scn.v_max_hap)
        center_xy = users_s[:, :2].mean(axis=0)
        # fixed segment length once the frame is long enough, so sweeping the
        # frame duration relaxes constraints without moving the endpoints
        half = min(100.0, 0.45 * reach)
        lo = np.array([center_xy[0] - half, center_xy[1], scn.hap_cruise_alt])
        hi = np.array([center_xy[0] + half, center_xy[1], scn.hap_cruise_alt])
        hap_init = hap_init if hap_init is not None else lo
        hap_final = hap_final if hap_final is not None else hi

    placed = dataclasses.replace(
        scn, users_t=users_t, users_s=users_s,
        uav_init=uav_init, uav_final=uav_final,
        hap_init=hap_init, hap_final=hap_final,
    )
    _check_endpoints(placed)
    return placed


def init_paths(scn: Scenario) -> tuple[Path, Path]:
    """Straight-line paths between the declared endpoints, one point per slot."""
    if scn.uav_init is None or scn.hap_init is None:
        raise ValueError("scenario endpoints not materialized; call place_users first")
    paths = []
    for platform, q0, q1 in [("uav", scn.uav_init, scn.uav_final),
                             ("hap", scn.hap_init, scn.hap_final)]:
        if scn.n_slots == 1:
            pos = np.array([q0], dtype=float)
        else:
            t = np.linspace(0.0, 1.0, scn.n_slots)[:, None]
            pos = (1.0 - t) * q0[None, :] + t * q1[None, :]
        path = Path(pos)
        validate_path(path, scn, platform)
        paths.append(path)
    return paths[0], paths[1]
