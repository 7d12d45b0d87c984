"""Runtime latency calibration under resource pressure.

Shows the two expansion factors (compute: processes + thermal clock;
memory: cache-hit rate), how a layer's compute-to-memory ratio blends
them, and a full profile calibrated to each bundled resource condition.
"""

import numpy as np

from ttasched import (
    ExpansionFactors,
    build_profile,
    eta,
    pi1,
    pi2,
    predict_layer_latency,
)
from ttasched.presets import (
    demo_edge_device,
    offline_from_costs,
    resource_conditions,
    synthetic_network,
)

device = demo_edge_device()
conditions = resource_conditions()

print("expansion factors per condition:")
print(f"  {'condition':<12} {'pi1':>6} {'pi2':>6}")
for name, state in conditions.items():
    print(f"  {name:<12} {pi1(device, state):6.2f} {pi2(device, state):6.2f}")

# eta decides which factor dominates a layer: compute-heavy layers follow
# pi1, memory-heavy layers follow pi2
print("\nblending a 10 ms layer under pi1=4.3, pi2=2.4:")
factors = ExpansionFactors(4.3, 2.4)
for e in (0.0, 0.5, 1.0, 4.0, 100.0):
    t = predict_layer_latency(10.0, e, factors)
    print(f"  eta={e:6.1f}  ->  {t:5.1f} ms")
print("every prediction stays inside [min(pi), max(pi)] x offline.")

network = synthetic_network(12)
offline = offline_from_costs(network, device)
print(f"\nper-layer ratios for {network.name!r}:")
for b in (1, 2, 3, 4):
    layer = network.layer_by_backward(b)
    print(f"  backward {b} ({layer.kind:<10}) eta = {eta(layer, device):8.3f}")

print("\ncalibrated backward totals (offline "
      f"{np.sum(offline.t_b):.2f} ms):")
for name, state in conditions.items():
    profile = build_profile(network, offline, device, state)
    print(f"  {name:<12} {profile.t_b_total:8.2f} ms")
print("the offline condition reproduces the offline profile exactly.")
