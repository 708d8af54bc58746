"""
Synaptic operations and energy
==============================

Count multiply-accumulates in the encoding layer and spike-driven
accumulates everywhere else, then convert them to joules with per-op
constants fitted to published (ACs, MACs, energy) rows.
"""

from dalif.data import stack_batch, synth_task
from dalif.energy import (
    PUBLISHED_ROWS, SynOpCount, count_synops, energy, energy_report, solve_energy_model,
)
from dalif.network import network_forward, reference_network

model = solve_energy_model(PUBLISHED_ROWS)
print(f"E_MAC = {model.e_mac:.3e} J, E_AC = {model.e_ac:.3e} J, "
      f"ratio {model.e_mac / model.e_ac:.2f}")
for acs, macs, published in PUBLISHED_ROWS:
    pred = energy(SynOpCount(acs=acs, macs=macs), model)
    print(f"  {acs:.4g} ACs + {macs:.4g} MACs -> {pred * 1e3:.4f} mJ (row: {published * 1e3} mJ)")

net = reference_network(seed=7, T=4)
x, _ = stack_batch(synth_task(7, 8, 4, 0.1))
_, tape = network_forward(net, x)
count = count_synops(net, tape).scaled(1 / 8)
rates = [float(lt.s.mean()) for lt in tape.layers]
print("firing rates per layer:", [round(r, 3) for r in rates])
print(energy_report(count, model, timesteps=4))
