"""Effective dynamics of qubits linked by optomechanical transducers."""
from . import (cascade, config, interface, numerics, om_node, onchip, oracle,  # noqa: F401
               protocols, qubit_dynamics)
from .errors import (ConfigError, NumericsError, OmtError,  # noqa: F401
                     PhysicsRegimeError)

__version__ = "0.1.0"
