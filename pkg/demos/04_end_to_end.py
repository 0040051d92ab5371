# Full alternating optimization vs fixed-weight baselines.
#
# Runs the three-stage loop (scheduling -> SCA power/weight control ->
# concave bandwidth allocation) and compares the final sum rate against
# two arms that keep their combining weights fixed (equal weights, and
# weights proportional to estimate magnitudes) while still optimizing
# power.  All arms replay the same estimation randomness.

import numpy as np

from dmimo.config import SystemConfig
from dmimo.optimizer import alternating_optimize, benchmark_allocation
from dmimo.scenario import build_scenario

cfg = SystemConfig(num_users=6, num_satellites=4, cluster_size=3,
                   num_subbands=4, subband_capacity=3, pilot_length=4)
sc = build_scenario(cfg, np.random.default_rng(5))

ss = np.random.SeedSequence(77)

res = alternating_optimize(sc, np.random.default_rng(ss))
print("proposed (joint weights + power + bandwidth)")
print("  round sum rates:", [f"{r:.0f}" for r in res.round_rates])
print(f"  final sum rate: {res.sum_rate:.0f} bit/s")
print(f"  bandwidths: {[f'{b / 1e3:.0f} kHz' for b in res.allocation.bandwidths]}")
print()

for mode, label in (("equal", "benchmark 1: equal weights"),
                    ("estimate", "benchmark 2: estimate-norm weights")):
    _, rate = benchmark_allocation(sc, np.random.default_rng(ss), mode)
    print(f"{label}: {rate:.0f} bit/s")

print()
print("Optimizing the combining weights jointly with power and bandwidth")
print("recovers the extra rate the fixed-weight arms leave on the table.")
