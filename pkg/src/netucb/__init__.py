"""Networked contextual bandits with shared common features."""

from .core import ConfigError, Context, Dimensions, InvalidSample, Topology
from .environment import Environment, InstanceConfig, preset, preset_names
from .harness import PolicyParams, RegretTrace, RunConfig, run_replication, sweep
from .netlinucb import NetLinUCB
from .netsgducb import NetSGDUCB, SgdHyperparams
from .ridge import DisjointLinUCB, RidgeState, SharedLinUCB

__all__ = [
    "ConfigError",
    "Context",
    "Dimensions",
    "DisjointLinUCB",
    "Environment",
    "InstanceConfig",
    "InvalidSample",
    "NetLinUCB",
    "NetSGDUCB",
    "PolicyParams",
    "RegretTrace",
    "RidgeState",
    "RunConfig",
    "SgdHyperparams",
    "SharedLinUCB",
    "Topology",
    "preset",
    "preset_names",
    "run_replication",
    "sweep",
]
