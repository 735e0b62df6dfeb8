"""
Closed-form costs, simulated costs and the NOR-only baseline
============================================================
"""

import numpy as np

from sotpim import FP32, FloatLayout, analytic_add_cost, analytic_mul_cost, load_calibration
from sotpim.cost import mac_ratios, reconcile, sampled_summary

cal = load_calibration()
pc = cal.primitive_costs()
print(pc)

###############################################################################
# Closed forms across layouts
# ---------------------------

for widths in [(5, 10), (8, 7), (8, 23), (11, 52)]:
    L = FloatLayout(*widths)
    add, mul = analytic_add_cost(L, pc), analytic_mul_cost(L, pc)
    print(f"{widths}: add {add.latency:8.1f} ns {add.energy / 1e3:7.2f} pJ | "
          f"mul {mul.latency:8.1f} ns {mul.energy / 1e3:7.2f} pJ")

###############################################################################
# What the simulator actually spends
# ----------------------------------
# Averaged over random operands, the event log lands close to the closed form.

rng = np.random.default_rng(1)
for op in ("add", "mul"):
    r = reconcile(sampled_summary(op, FP32, 32, rng), FP32, pc, op, n_ops=32)
    print(op, {k: f"{v:+.1%}" for k, v in r["deviation"].items()})

###############################################################################
# Against the baseline (calibrated, not measured)
# -----------------------------------------------

r = mac_ratios(cal)
print(f"MAC: {r['energy']:.2f}x less energy, {r['latency']:.2f}x lower latency")
fast = mac_ratios(cal, fast=True)["proposed"]
print(f"fast-switching cell cuts MAC latency by {1 - fast.latency / r['proposed'].latency:.1%}")
