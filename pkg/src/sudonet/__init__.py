"""Small dense networks with straight-through discretized activations, and the
experiment harness that compares them against tanh and relu."""

from .activations import RELU, TANH, ActivationKind, rsudo, sudo
from .network import Network, NetworkSpec, forward, init, load, mlp, save

__all__ = [
    "ActivationKind",
    "Network",
    "NetworkSpec",
    "RELU",
    "TANH",
    "forward",
    "init",
    "load",
    "mlp",
    "rsudo",
    "save",
    "sudo",
]
