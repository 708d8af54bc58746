"""
Checking hand-written STBP gradients
====================================

The backward pass is compared against central differences of a forward
pass whose spike is a unit ramp, so its exact derivative is the
rectangular surrogate used in training.
"""

import time

from dalif.data import stack_batch, synth_task
from dalif.network import reference_network
from dalif.stbp import grad_check

net = reference_network(seed=7, T=4)
x, y = stack_batch(synth_task(7, 2, 4, 0.1))
print("layers:", [(l.kind, l.weight.shape) for l in net.layers], "readout", net.readout.shape)

t0 = time.perf_counter()
report = grad_check(net, x, y, epsilon=1e-5)
print(f"max relative error {report.max_rel_error:.2e} on {report.checked} coordinates "
      f"({time.perf_counter() - t0:.1f}s)")

# the decay parameters on their own
decays = grad_check(net, x, y, params=["layers[0].rho", "layers[1].rho"])
print(f"decay parameters only: {decays.max_rel_error:.2e} ({decays.checked} coordinates)")

# a deliberately broken backward is caught and the worst coordinate named
bad = grad_check(net, x, y, corrupt=True, params=["readout"])
print(f"corrupted: {bad.max_rel_error:.2e}, worst {bad.worst_param}")
