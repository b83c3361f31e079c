"""Shared fixtures: config texts, materialized scenarios, seeded run setups."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from arislab import channel, ratemodel, scene, state

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def desk_text(**overrides) -> str:
    """Desk config text with optional `key=value` overrides appended."""
    text = (CONFIG_DIR / "desk.cfg").read_text()
    for key, value in overrides.items():
        text += f"\n{key} = {value}\n"
    return text


# micro scenario: tiny everything, for fast unit tests
MICRO_OVERRIDES = {
    "frame.n_slots": "2",
    "frame.slot_seconds": "30",
    "tbs.antennas": "2",
    "sat.antennas_x": "2",
    "sat.antennas_y": "1",
    "users.terrestrial": "2",
    "users.satellite": "1",
    "ris.uav_nx": "2",
    "ris.uav_ny": "2",
    "ris.hap_nx": "2",
    "ris.hap_ny": "2",
}


def micro_text(**overrides) -> str:
    merged = dict(MICRO_OVERRIDES)
    merged.update({k: str(v) for k, v in overrides.items()})
    return desk_text(**merged)


@pytest.fixture(scope="session")
def desk_scenario() -> scene.Scenario:
    return scene.load_scenario(desk_text())


@pytest.fixture(scope="session")
def micro_scenario() -> scene.Scenario:
    return scene.load_scenario(micro_text())


def make_run(scn: scene.Scenario, seed: int, **init_kwargs):
    """Materialize geometry, draw fading, build channels and an initial state."""
    ss = np.random.SeedSequence(seed)
    rng_place, rng_init = [np.random.default_rng(c) for c in ss.spawn(2)]
    placed = scene.place_users(scn, rng_place)
    real = channel.draw_fading(placed, seed)
    uav_path, hap_path = scene.init_paths(placed)
    frame = channel.assemble_frame(placed, uav_path, hap_path, real)
    st = state.init_state(placed, frame, rng_init, uav_path, hap_path, **init_kwargs)
    sic = ratemodel.freeze_sic(placed, frame, st)
    return placed, real, frame, st, sic


@pytest.fixture()
def micro_run(micro_scenario):
    return make_run(micro_scenario, seed=7)


@pytest.fixture()
def desk_run(desk_scenario):
    return make_run(desk_scenario, seed=11)
