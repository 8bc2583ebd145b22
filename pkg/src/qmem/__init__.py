"""Passive linear quantum-optical networks and a two-cavity memory."""

from .builder import MemorySpec, StorageState, make_cavity, module_rotation, qudit_config, qubit_config
from .linear import StateSpace, dfs_decompose, is_hurwitz, to_state_space
from .netdsl import NetDslError, compile_network, parse, parse_file
from .pulses import Pulse, read_pulses, write_pulses
from .sim import coherent_run, mismatch_sweep, propagate, run_protocol
from .slh import AdjacencyMap, AlgebraicLoopError, SlhModel, feedback_reduce, parallel_sum, series

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMap",
    "AlgebraicLoopError",
    "MemorySpec",
    "NetDslError",
    "Pulse",
    "SlhModel",
    "StateSpace",
    "StorageState",
    "coherent_run",
    "compile_network",
    "dfs_decompose",
    "feedback_reduce",
    "is_hurwitz",
    "make_cavity",
    "mismatch_sweep",
    "module_rotation",
    "parallel_sum",
    "parse",
    "parse_file",
    "propagate",
    "qubit_config",
    "qudit_config",
    "read_pulses",
    "run_protocol",
    "series",
    "to_state_space",
    "write_pulses",
]
