"""Small numpy neural network engine with explicit backward passes."""

from .layers import LayerSpec, conv, dense, reshape, tconv
from .network import ForwardCache, Network, backward, build, forward
from .optim import AdamState, adam_step

__all__ = ["LayerSpec", "dense", "conv", "tconv", "reshape", "Network", "ForwardCache",
           "build", "forward", "backward", "AdamState", "adam_step"]
