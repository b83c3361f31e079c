"""Simulation and optimization lab for dual-aerial active-RIS NOMA networks."""

from . import aris, bcd, channel, cli, manifold, ratemodel, scene, state, trajectory, wmmse

__version__ = "0.1.0"

__all__ = ["aris", "bcd", "channel", "cli", "manifold", "ratemodel", "scene",
           "state", "trajectory", "wmmse", "__version__"]
