"""Block-coordinate orchestrator, benchmark schemes, Monte Carlo harness.

One outer iteration runs the beamforming, UAV-ARIS, HAP-ARIS and trajectory
blocks in order.  Each block is safeguarded so the canonical per-iteration
objective trace is non-decreasing: the beam block reverts on a net loss
(possible only through the amplitude-budget repair), the ARIS blocks descend
an exact restriction of the MSE objective, and trajectory moves are taken
tentatively under a trust radius and committed only if the next iteration's
re-tuned rate improves (rolled back to the snapshot otherwise).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import aris, channel, ratemodel, scene, state, trajectory, wmmse
from .ratemodel import RateReport, SicOrder
from .scene import Path, Scenario
from .state import NetworkState


@dataclass(frozen=True)
class Scheme:
    """Benchmark scheme: per-tag block toggles."""

    tag: str
    use_ris: bool = True
    active: bool = True       # amplification + ARIS noise; False = passive surface
    phase_opt: bool = True
    amp_opt: bool = True
    trajectory_opt: bool = True
    sic: bool = True
    rho_pinned: float | None = None


SCHEMES = {
    "proposed_active": Scheme(tag="proposed_active"),
    "passive_ris": Scheme(tag="passive_ris", active=False, amp_opt=False, rho_pinned=1.0),
    "random_ris": Scheme(tag="random_ris", active=False, phase_opt=False,
                         amp_opt=False, rho_pinned=1.0),
    "no_ris": Scheme(tag="no_ris", use_ris=False, active=False, phase_opt=False,
                     amp_opt=False, trajectory_opt=False),
    "fixed_trajectory": Scheme(tag="fixed_trajectory", trajectory_opt=False),
    "sdma_active": Scheme(tag="sdma_active", sic=False),
}


@dataclass
class SolverOptions:
    wmmse_tol: float = 1e-7
    wmmse_max_iter: int = 40
    aris: aris.ArisOptions = field(default_factory=aris.ArisOptions)
    traj: trajectory.TrajectoryOptions = field(default_factory=trajectory.TrajectoryOptions)
    explore_radius_frac: float = 0.3   # of V*delta, per platform
    explore_radius_cap: float = 60.0   # meters; keeps move sizes duration-independent
    explore_rollbacks: int = 3
    explore_radius_floor: float = 1.0  # meters


@dataclass
class RunResult:
    scheme: str
    seed: int
    trace: list
    terr_trace: list
    sat_trace: list
    converged: bool
    n_iters: int
    final_rate: float
    report: RateReport
    net_state: NetworkState
    scenario: Scenario
    block_seconds: dict
    paths_history: list  # (iteration, uav positions, hap positions)
    failure: str | None = None


def _scheme_of(scheme) -> Scheme:
    if isinstance(scheme, Scheme):
        return scheme
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme '{scheme}'") from None


def _snapshot(st: NetworkState, frame):
    return st.copy(), [ch for ch in frame]


def _aris_block(scn, frame, st, sic, sch, platform, opts):
    """Run Algorithm 1 per slot with fresh (u, w); never raises the MSE objective."""
    wm = wmmse.refresh_uw(scn, frame, st, sic, sdma=not sch.sic)
    do_amp = sch.amp_opt and sch.active
    for n in range(scn.n_slots):
        vec, _ = aris.optimize_aris_slot(scn, frame[n], st, wm, platform, n, sic,
                                         sdma=not sch.sic, opts=opts.aris,
                                         do_phase=sch.phase_opt, do_amp=do_amp)
        if platform == "uav":
            st.theta_u[n], st.rho_u[n] = vec.theta, vec.rho
        else:
            st.theta_h[n], st.rho_h[n] = vec.theta, vec.rho


def bcd_solve(scn: Scenario, scheme, seed: int, eps: float = 1e-3, t_max: int = 30,
              opts: SolverOptions | None = None) -> RunResult:
    """Run the full optimizer for one scheme on one seeded realization."""
    sch = _scheme_of(scheme)
    opts = opts or SolverOptions()
    timers: dict[str, float] = {}

    def timed(key, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        timers[key] = timers.get(key, 0.0) + time.perf_counter() - t0
        return out

    ss = np.random.SeedSequence(seed)
    rng_place, rng_init = [np.random.default_rng(c) for c in ss.spawn(2)]
    scn_run = scene.place_users(scn, rng_place)
    real = channel.draw_fading(scn_run, seed)
    uav_path, hap_path = scene.init_paths(scn_run)
    frame = channel.assemble_frame(scn_run, uav_path, hap_path, real)
    st = state.init_state(scn_run, frame, rng_init, uav_path, hap_path,
                          use_uav_ris=sch.use_ris, use_hap_ris=sch.use_ris,
                          active=sch.active, rho_pinned=sch.rho_pinned)
    sic = ratemodel.freeze_sic(scn_run, frame, st)
    sdma = not sch.sic
    enforce_u = sch.use_ris and sch.active
    enforce_h = sch.use_ris and sch.active

    def rate():
        return ratemodel.avg_rate(scn_run, frame, st, sic, sdma)

    trace = [rate()]
    rep = ratemodel.frame_rates(scn_run, frame, st, sic, sdma)
    terr_trace, sat_trace = [rep.terr_avg], [rep.sat_avg]
    paths_history = [(0, st.uav_path.positions.copy(), st.hap_path.positions.copy())]

    explore_on = sch.trajectory_opt and sch.use_ris
    radius = {"uav": min(opts.explore_radius_frac * scn.v_max_uav * scn.slot_seconds,
                         opts.explore_radius_cap),
              "hap": min(opts.explore_radius_frac * scn.v_max_hap * scn.slot_seconds,
                         opts.explore_radius_cap)}
    rollbacks_left = opts.explore_rollbacks
    pending = None  # (snapshot_state, snapshot_frame, base_rate)

    converged = False
    n_iters = 0
    for t in range(1, t_max + 1):
        n_iters = t
        # beamforming block; the amplitude repair can in principle cost rate,
        # so the whole block reverts on a net decrease
        before = trace[-1] if pending is None else rate()
        snap_b = (st.v_b.copy(), st.rho_u.copy(), st.rho_h.copy())
        snap_s = st.v_s.copy()
        timed("wmmse", wmmse.wmmse_solve, scn_run, frame, st, sic, sdma,
              opts.wmmse_tol, opts.wmmse_max_iter)
        trajectory.repair_amplitudes(scn_run, frame, st, enforce_u, enforce_h)
        if rate() < before - 1e-12:
            st.v_b, st.rho_u, st.rho_h = snap_b
            st.v_s = snap_s

        if sch.use_ris and (sch.phase_opt or (sch.amp_opt and sch.active)):
            timed("uav_aris", _aris_block, scn_run, frame, st, sic, sch, "uav", opts)
            timed("hap_aris", _aris_block, scn_run, frame, st, sic, sch, "hap", opts)

        r_tuned = rate()
        if pending is not None:
            snap_st, snap_frame, base_rate = pending
            if r_tuned < base_rate - 1e-12:
                st, frame = snap_st, snap_frame
                r_tuned = base_rate
                radius = {k: 0.5 * v for k, v in radius.items()}
                rollbacks_left -= 1
                if rollbacks_left <= 0 or radius["uav"] < opts.explore_radius_floor:
                    explore_on = False
            elif r_tuned - base_rate <= 0.5 * eps:
                explore_on = False  # exploration no longer pays
            pending = None

        # in-block safeguarded trajectory update (fixed-state acceptance)
        if sch.trajectory_opt:
            frame, _tdiag = timed("trajectory", trajectory.optimize_trajectories,
                                  scn_run, frame, st, real, sic, sdma,
                                  enforce_u, enforce_h, opts.traj)
            r_tuned = rate()

        trace.append(r_tuned)
        rep = ratemodel.frame_rates(scn_run, frame, st, sic, sdma)
        terr_trace.append(rep.terr_avg)
        sat_trace.append(rep.sat_avg)
        paths_history.append((t, st.uav_path.positions.copy(),
                              st.hap_path.positions.copy()))

        # tentative exploration move, judged after the next iteration's re-tune
        if explore_on and sch.trajectory_opt and t < t_max:
            surr = trajectory.build_surrogates(scn_run, frame, st, sic, sdma)
            if any(ts.enabled for ts in surr):
                cand_u, cand_h = trajectory.solve_trajectory_subproblem(
                    st.uav_path, st.hap_path, surr, scn_run, opts.traj.step_iters)
                new_u = _cap_move(st.uav_path.positions, cand_u.positions, radius["uav"])
                new_h = _cap_move(st.hap_path.positions, cand_h.positions, radius["hap"])
                move = max(np.abs(new_u - st.uav_path.positions).max(),
                           np.abs(new_h - st.hap_path.positions).max())
                if move > 1e-9:
                    pending = (*_snapshot(st, frame), trace[-1])
                    st.uav_path = Path(trajectory.project_path(new_u, scn_run, "uav"))
                    st.hap_path = Path(trajectory.project_path(new_h, scn_run, "hap"))
                    frame = channel.assemble_frame(scn_run, st.uav_path, st.hap_path, real)
                    trajectory.repair_amplitudes(scn_run, frame, st, enforce_u, enforce_h)

        if pending is None and abs(trace[-1] - trace[-2]) <= eps:
            converged = True
            break

    if pending is not None:  # never leave an unjudged move in the final state
        st, frame, base_rate = pending
        trace[-1] = max(trace[-1], base_rate)

    report = ratemodel.frame_rates(scn_run, frame, st, sic, sdma)
    return RunResult(scheme=sch.tag, seed=seed, trace=trace, terr_trace=terr_trace,
                     sat_trace=sat_trace, converged=converged, n_iters=n_iters,
                     final_rate=trace[-1], report=report, net_state=st,
                     scenario=scn_run, block_seconds=timers,
                     paths_history=paths_history)


def _cap_move(base: np.ndarray, cand: np.ndarray, radius: float) -> np.ndarray:
    """Blend the candidate toward the base so no slot moves farther than radius."""
    delta = cand - base
    dist = np.linalg.norm(delta, axis=1)
    worst = float(dist.max()) if dist.size else 0.0
    if worst <= radius:
        return cand.copy()
    return base + delta * (radius / worst)


def audit_constraints(result: RunResult, tol: float = 1e-9) -> list[str]:
    """Check the final state against every problem constraint; returns a
    list of violation descriptions (empty when clean)."""
    scn = result.scenario
    st = result.net_state
    sch = SCHEMES[result.scheme]
    bad: list[str] = []
    real = channel.draw_fading(scn, result.seed)
    frame = channel.assemble_frame(scn, st.uav_path, st.hap_path, real)
    for n, ch in enumerate(frame):
        p_b = float(np.sum(np.abs(st.v_b[n]) ** 2))
        if p_b > scn.p_tbs * (1 + tol):
            bad.append(f"slot {n}: TBS power {p_b:.6g} > {scn.p_tbs:.6g}")
        p_s = float(np.sum(np.abs(st.v_s[n]) ** 2))
        if p_s > scn.p_sat * (1 + tol):
            bad.append(f"slot {n}: SAT power {p_s:.6g} > {scn.p_sat:.6g}")
        if np.any(st.rho_u[n] < -tol) or np.any(st.rho_u[n] > scn.rho_max_uav * (1 + tol)):
            bad.append(f"slot {n}: UAV amplitude outside [0, rho_max]")
        if np.any(st.rho_h[n] < -tol) or np.any(st.rho_h[n] > scn.rho_max_hap * (1 + tol)):
            bad.append(f"slot {n}: HAP amplitude outside [0, rho_max]")
        if np.any(st.theta_u[n] < 0) or np.any(st.theta_u[n] >= 2 * np.pi):
            bad.append(f"slot {n}: UAV phase outside [0, 2pi)")
        if np.any(st.theta_h[n] < 0) or np.any(st.theta_h[n] >= 2 * np.pi):
            bad.append(f"slot {n}: HAP phase outside [0, 2pi)")
        if sch.use_ris and sch.active:
            pu = ratemodel.aris_output_power(st.phi_u(n), ch.H_bU, st.v_b[n], st.sigma_u2)
            if pu > scn.p_uav * (1 + tol):
                bad.append(f"slot {n}: UAV ARIS power {pu:.6g} > {scn.p_uav:.6g}")
            ph = ratemodel.aris_output_power(st.phi_h(n), ch.H_sH, st.v_s[n], st.sigma_h2)
            if ph > scn.p_hap * (1 + tol):
                bad.append(f"slot {n}: HAP ARIS power {ph:.6g} > {scn.p_hap:.6g}")
    for platform, path in (("uav", st.uav_path), ("hap", st.hap_path)):
        try:
            scene.validate_path(path, scn, platform, tol=tol)
        except ValueError as exc:
            bad.append(str(exc))
    return bad


def run_scheme_suite(scn: Scenario, schemes, seed: int, eps: float = 1e-3,
                     t_max: int = 30, opts: SolverOptions | None = None) -> list[RunResult]:
    """One run per scheme on the identical seeded realization."""
    return [bcd_solve(scn, sch, seed, eps=eps, t_max=t_max, opts=opts)
            for sch in schemes]


def _mc_worker(payload):
    idx, scn, schemes, seed, eps, t_max, opts = payload
    try:
        results = run_scheme_suite(scn, schemes, seed, eps=eps, t_max=t_max, opts=opts)
        return idx, [(r.scheme, r.final_rate, r.converged) for r in results], None
    except Exception as exc:  # run marked failed, aggregation continues
        return idx, None, f"{type(exc).__name__}: {exc}"


def monte_carlo(scn: Scenario, schemes, n_runs: int, base_seed: int = 0,
                workers: int = 1, eps: float = 1e-3, t_max: int = 30,
                opts: SolverOptions | None = None) -> dict:
    """Seeded Monte Carlo over `n_runs` paired realizations.

    Returns {"rows": [...], "failures": [...], "per_run": {...}}; rows hold
    (scheme, mean, stderr, n_ok, n_failed).  Aggregation order is fixed by
    the run index, so results do not depend on the worker count.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    payloads = [(idx, scn, list(schemes), base_seed + idx, eps, t_max, opts)
                for idx in range(n_runs)]
    outcomes: dict[int, tuple] = {}
    if workers <= 1:
        for payload in payloads:
            idx, vals, err = _mc_worker(payload)
            outcomes[idx] = (vals, err)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, vals, err in pool.map(_mc_worker, payloads):
                outcomes[idx] = (vals, err)

    per_scheme: dict[str, list[float]] = {_scheme_of(s).tag: [] for s in schemes}
    per_run: dict[int, dict[str, float]] = {}
    failures = []
    for idx in range(n_runs):
        vals, err = outcomes[idx]
        if err is not None:
            failures.append((idx, err))
            continue
        per_run[idx] = {tag: final for tag, final, _ in vals}
        for tag, final, _ in vals:
            per_scheme[tag].append(final)
    rows = []
    for tag, finals in per_scheme.items():
        arr = np.asarray(finals)
        mean = float(arr.mean()) if arr.size else float("nan")
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        rows.append({"scheme": tag, "mean": mean, "stderr": stderr,
                     "n_ok": int(arr.size), "n_failed": len(failures)})
    return {"rows": rows, "failures": failures, "per_run": per_run}
