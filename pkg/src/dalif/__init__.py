"""DA-LIF spiking networks: neuron dynamics, STBP training and synaptic-op energy accounting."""

from .neuron import (
    DecayParams, NeuronConfig, charge_dalif, charge_vanilla, charge_variable,
    effective_decay, euler_reference_step, fire, reset,
)
from .network import (
    ForwardTape, LayerSpec, Network, build_network, layer_forward, network_forward,
    readout_rate, reference_network, softmax_cross_entropy,
)
from .stbp import Gradients, backward, grad_check, surrogate_grad

__version__ = "0.1.0"
