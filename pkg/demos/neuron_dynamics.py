"""
Membrane traces of a single neuron
==================================

Drive one neuron with a constant current and compare the fixed-leak LIF
against the learnable-decay variant at a few (alpha, beta) settings.
"""

import math

import numpy as np

from dalif.neuron import (
    NeuronConfig, charge_dalif, charge_vanilla, effective_decay, fire, reset, vanilla_decays,
)

cfg = NeuronConfig(tau_m=2.0)
T = 12
current = np.full(T, 0.7)


def trace(charge):
    h, rows = np.zeros(1), []
    for t in range(T):
        v = charge(h, current[t:t + 1])
        s = fire(v, cfg.v_th)
        h = reset(v, s, cfg)
        rows.append((float(v[0]), int(s[0])))
    return rows


# the vanilla neuron leaks half its potential each step at tau_m = 2
gain, leak = vanilla_decays(cfg)
print(f"vanilla gain={gain:.3f} leak={leak:.3f}")
lif = trace(lambda h, x: charge_vanilla(h, x, cfg))
print("vanilla spikes:", "".join(str(s) for _, s in lif))

# the decay-aware neuron at the same constants reproduces it exactly
same = trace(lambda h, x: charge_dalif(h, x, gain, leak))
print("matches vanilla:", same == lif)

# raw decay parameters go through tanh; rho = 1 gives about 0.76
for rho_a, rho_b in [(1.0, 1.0), (1.0, 0.2), (0.4, 2.0)]:
    a, b = effective_decay(rho_a), effective_decay(rho_b)
    rows = trace(lambda h, x: charge_dalif(h, x, a, b))
    print(f"alpha={a:.3f} beta={b:.3f} spikes:", "".join(str(s) for _, s in rows))

# with beta = 0 there is no memory: a sub-threshold drive never fires
quiet = trace(lambda h, x: charge_dalif(h, x, math.tanh(1.0), 0.0))
print("memoryless spikes:", sum(s for _, s in quiet))
