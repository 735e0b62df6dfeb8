"""Latency/energy/area pricing of micro-ops, float operations and MACs.

The closed-form add and multiply costs are evaluated exactly (coefficients are
kept as Fractions). The FloatPIM-style baseline is an analytical count model
whose per-operation latency and energy are calibration inputs.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .softfloat import FP32
from .subarray import LogSummary


class ConfigError(ValueError):
    pass


def _positive(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not v > 0:
            raise ConfigError(f"{type(obj).__name__}.{name} must be positive, got {v!r}")


@dataclass(frozen=True)
class CellParams:
    """SOT-MRAM cell parameters in SI units."""

    r_on: float = 50e3
    r_off: float = 100e3
    v_b: float = 0.6
    i_write: float = 65e-6
    t_switch: float = 2.0e-9
    e_switch: float = 12.0e-15

    def __post_init__(self):
        _positive(self, ("r_on", "r_off", "v_b", "i_write", "t_switch", "e_switch"))
        if self.r_off <= self.r_on:
            raise ConfigError("r_off must exceed r_on")


@dataclass(frozen=True)
class Peripheral:
    """Per-event sense/search costs and write-driver overheads (ns, fJ)."""

    t_read: float = 0.5
    e_read: float = 4.0
    t_search: float = 0.5
    e_search: float = 20.0
    write_overhead_ns: float = 0.0
    write_overhead_fj: float = 0.0

    def __post_init__(self):
        _positive(self, ("t_read", "e_read", "t_search", "e_search"))
        if self.write_overhead_ns < 0 or self.write_overhead_fj < 0:
            raise ConfigError("write overheads must be nonnegative")


@dataclass(frozen=True)
class PrimitiveCosts:
    """t_* in ns per event; e_read/e_write in fJ per bit, e_search in fJ per search."""

    t_read: float
    t_write: float
    t_search: float
    e_read: float
    e_write: float
    e_search: float


def derive_primitive_costs(cp, peripheral=Peripheral()):
    return PrimitiveCosts(
        t_read=peripheral.t_read,
        t_write=cp.t_switch * 1e9 + peripheral.write_overhead_ns,
        t_search=peripheral.t_search,
        e_read=peripheral.e_read,
        e_write=cp.e_switch * 1e15 + peripheral.write_overhead_fj,
        e_search=peripheral.e_search,
    )


@dataclass
class CostReport:
    latency: float = 0.0  # ns
    energy: float = 0.0  # fJ
    area: float = 0.0  # mm^2
    breakdown: dict = field(default_factory=dict)

    @classmethod
    def from_breakdown(cls, breakdown, area=0.0):
        lat = sum(float(t) for t, _ in breakdown.values())
        en = sum(float(e) for _, e in breakdown.values())
        return cls(lat, en, area, {k: (float(t), float(e)) for k, (t, e) in breakdown.items()})

    def __add__(self, other):
        bd = dict(self.breakdown)
        for k, (t, e) in other.breakdown.items():
            t0, e0 = bd.get(k, (0.0, 0.0))
            bd[k] = (t0 + t, e0 + e)
        return CostReport(self.latency + other.latency, self.energy + other.energy,
                          self.area + other.area, bd)

    def scaled(self, k):
        return CostReport(self.latency * k, self.energy * k, self.area,
                          {p: (t * k, e * k) for p, (t, e) in self.breakdown.items()})

    def to_dict(self):
        return {
            "latency_ns": self.latency,
            "energy_fj": self.energy,
            "area_mm2": self.area,
            "breakdown": {k: {"latency_ns": t, "energy_fj": e} for k, (t, e) in self.breakdown.items()},
        }


# -- closed-form costs of the proposed design -----------------------------------


def _widths(layout):
    # accepts a FloatLayout or a bare (n_e, n_m) pair, so degenerate widths evaluate too
    if isinstance(layout, tuple):
        return layout
    return layout.n_e, layout.n_m


def add_coefficients(layout):
    """Event/bit multipliers of (read, write, search) for one float add."""
    ne, nm = _widths(layout)
    return {
        "t_read": 1 + 7 * ne + 7 * nm,
        "t_write": 7 * ne + 7 * nm,
        "t_search": 2 * (nm + 2),
        "e_read": 1 + 14 * ne + 12 * nm,
        "e_write": 14 * ne + 12 * nm,
        "e_search": 2 * (nm + 2),
    }


def mul_coefficients(layout):
    """Common multiplier of (read + write) for one float multiply."""
    ne, nm = _widths(layout)
    return {
        "t": 2 * nm**2 + Fraction(13, 2) * nm + 6 * ne + 3,
        "e": Fraction(9, 2) * nm**2 + Fraction(23, 2) * nm + Fraction(27, 2) * ne + Fraction(13, 2),
    }


def analytic_add_cost(layout, pc):
    c = add_coefficients(layout)
    return CostReport.from_breakdown({
        "read": (c["t_read"] * pc.t_read, c["e_read"] * pc.e_read),
        "write": (c["t_write"] * pc.t_write, c["e_write"] * pc.e_write),
        "search": (c["t_search"] * pc.t_search, c["e_search"] * pc.e_search),
    })


def analytic_mul_cost(layout, pc):
    c = mul_coefficients(layout)
    return CostReport.from_breakdown({
        "read": (c["t"] * pc.t_read, c["e"] * pc.e_read),
        "write": (c["t"] * pc.t_write, c["e"] * pc.e_write),
    })


def analytic_mac_cost(layout, pc):
    return analytic_mul_cost(layout, pc) + analytic_add_cost(layout, pc)


# -- FloatPIM-style baseline ----------------------------------------------------


@dataclass(frozen=True)
class BaselineParams:
    """Count model of a NOR-only digital PIM.

    ``t_nor``/``e_nor`` price one NOR step; a cell initialization costs
    ``t_init`` and ``write_vs_nor_energy_ratio * e_nor``.
    """

    fa_steps: int = 13
    fa_cells: int = 12
    mul_write_cells: int = 455
    write_vs_nor_energy_ratio: float = 100.0
    t_nor: float = 1.0  # ns
    t_init: float = 1.0  # ns
    e_nor: float = 1.0  # fJ
    shift_nor_per_bit: int = 2

    def __post_init__(self):
        _positive(self, ("fa_steps", "fa_cells", "mul_write_cells", "write_vs_nor_energy_ratio",
                         "t_nor", "t_init", "e_nor", "shift_nor_per_bit"))


def baseline_counts(layout, bp):
    """(NOR steps, cell initializations) per phase of one baseline MAC.

    Exponent alignment shifts one bit position per round, so it costs
    (N_m + 2) rounds of (N_m + 2) bit moves. Significand products are ripple
    adds over every partial product; the intermediate-cell count is quoted for
    binary32 and scaled with the square of the significand width elsewhere.
    """
    ne, nm = layout.n_e, layout.n_m
    n = nm + 1
    fa, cells = bp.fa_steps, bp.fa_cells
    mul_cells = bp.mul_write_cells * Fraction(n * n, 24 * 24)
    return {
        "add_exponent": (fa * (ne + 1), cells * (ne + 1)),
        "add_align": (bp.shift_nor_per_bit * (nm + 2) ** 2, (nm + 2) ** 2),
        "add_mantissa": (fa * (nm + 3), cells * (nm + 3)),
        "add_normalize": (fa * (ne + 1) + bp.shift_nor_per_bit * (nm + 2), cells * (ne + 1) + (nm + 2)),
        "mul_exponent": (2 * fa * (ne + 1), 2 * cells * (ne + 1)),
        "mul_mantissa": (fa * n * n, mul_cells),
    }


def baseline_mac_cost(layout, bp):
    bd = {}
    for phase, (nor, init) in baseline_counts(layout, bp).items():
        bd[phase] = (nor * bp.t_nor + init * bp.t_init,
                     (nor + init * bp.write_vs_nor_energy_ratio) * bp.e_nor)
    return CostReport.from_breakdown(bd)


def calibrate_baseline(layout, pc, bp, latency_ratio, energy_ratio):
    """Solve t_nor (= t_init) and e_nor so the baseline MAC is the given
    multiple of the proposed MAC. Both costs are linear in the solved value."""
    target = analytic_mac_cost(layout, pc)
    unit = baseline_mac_cost(layout, replace(bp, t_nor=1.0, t_init=1.0, e_nor=1.0))
    t = latency_ratio * target.latency / unit.latency
    e = energy_ratio * target.energy / unit.energy
    return replace(bp, t_nor=t, t_init=t, e_nor=e)


# -- simulated cost & reconciliation ---------------------------------------------


def simulated_cost(summary, pc):
    """Price an event-log summary; breakdown is per procedure phase."""
    bd = {}
    for phase, c in summary.by_phase.items():
        t = (c.get("RowRead", 0) * pc.t_read + c.get("RowWrite", 0) * pc.t_write
             + c.get("Search", 0) * pc.t_search)
        e = (c.get("RowRead_bits", 0) * pc.e_read + c.get("RowWrite_bits", 0) * pc.e_write
             + c.get("Search", 0) * pc.e_search)
        bd[phase or "other"] = (t, e)
    return CostReport.from_breakdown(bd)


def reconcile(summary, layout, pc, op="add", tolerance=0.30, n_ops=1):
    """Compare a simulated log (``n_ops`` operations of kind ``op``) with the
    closed form; the run is flagged when either deviation exceeds ``tolerance``."""
    analytic = {"add": analytic_add_cost, "mul": analytic_mul_cost,
                "mac": analytic_mac_cost}[op](layout, pc)
    sim = simulated_cost(summary, pc).scaled(1.0 / n_ops)
    dev_t = sim.latency / analytic.latency - 1.0
    dev_e = sim.energy / analytic.energy - 1.0
    empty = summary.n_reads + summary.n_writes + summary.n_searches == 0
    report = {
        "op": op,
        "layout": [layout.n_e, layout.n_m],
        "analytic": {"latency_ns": analytic.latency, "energy_fj": analytic.energy},
        "simulated": {"latency_ns": sim.latency, "energy_fj": sim.energy},
        "deviation": {"latency": dev_t, "energy": dev_e},
        "n_ops": n_ops,
        "events_per_op": {"reads": summary.n_reads / n_ops, "writes": summary.n_writes / n_ops,
                          "searches": summary.n_searches / n_ops},
        "tolerance": tolerance,
        "flagged": empty or abs(dev_t) > tolerance or abs(dev_e) > tolerance,
    }
    if op == "add":
        report["search_coefficient"] = add_coefficients(layout)["t_search"]
    return report


def sampled_summary(op, layout, n, rng):
    """Summed event logs of ``n`` single-lane ``op`` runs on random operands
    (for "mac" each run is one multiply plus one accumulate)."""
    from . import arith
    from .softfloat import random_words

    fn = {"add": arith.float_add_lanes, "mul": arith.float_mul_lanes, "mac": arith.mac_lanes}[op]
    words = random_words(rng, 3 * n, layout).reshape(3, n)
    total = LogSummary.empty()
    fr = arith.frame_for(layout)
    for i in range(n):
        sa = arith.new_subarray(layout)
        for slot in range(3):
            arith.place_words(sa, fr, slot, words[slot, i:i + 1])
        fn(sa, layout=layout)
        total = total + sa.summarize_log()
    return total


def area_estimate(n_subarrays, per_subarray_area):
    if n_subarrays <= 0 or per_subarray_area <= 0:
        raise ConfigError("subarray count and area must be positive")
    return n_subarrays * per_subarray_area


# -- calibration file ---------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    cell: CellParams
    peripheral: Peripheral
    fast_t_switch: float
    baseline: BaselineParams
    proposed_subarray_mm2: float
    baseline_subarray_mm2: float
    rows: int = 1024
    cols: int = 1024
    reconcile_tolerance: float = 0.30
    workload: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)

    def primitive_costs(self, fast=False):
        cell = replace(self.cell, t_switch=self.fast_t_switch) if fast else self.cell
        return derive_primitive_costs(cell, self.peripheral)


def default_calibration_path():
    return resources.files("sotpim") / "data" / "calibration.json"


def load_calibration(path=None):
    path = default_calibration_path() if path is None else Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"calibration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"calibration file {path} is not valid JSON: {exc}") from exc
    try:
        c, p, b, a = raw["cell"], raw["peripheral"], raw["baseline"], raw["area"]
        return Calibration(
            cell=CellParams(c["r_on_ohm"], c["r_off_ohm"], c["v_b_v"], c["i_write_a"],
                            c["t_switch_s"], c["e_switch_j"]),
            peripheral=Peripheral(**p),
            fast_t_switch=raw["fast_mram"]["t_switch_s"],
            baseline=BaselineParams(**b),
            proposed_subarray_mm2=a["proposed_subarray_mm2"],
            baseline_subarray_mm2=a["baseline_subarray_mm2"],
            rows=raw.get("geometry", {}).get("rows", 1024),
            cols=raw.get("geometry", {}).get("cols", 1024),
            reconcile_tolerance=raw.get("tolerances", {}).get("reconcile", 0.30),
            workload=raw.get("workload", {}),
            targets=raw.get("targets", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"calibration file {path} is malformed: {exc}") from exc


def calibration_to_dict(cal):
    c = cal.cell
    return {
        "cell": {"r_on_ohm": c.r_on, "r_off_ohm": c.r_off, "v_b_v": c.v_b,
                 "i_write_a": c.i_write, "t_switch_s": c.t_switch, "e_switch_j": c.e_switch},
        "peripheral": asdict(cal.peripheral),
        "fast_mram": {"t_switch_s": cal.fast_t_switch},
        "baseline": asdict(cal.baseline),
        "area": {"proposed_subarray_mm2": cal.proposed_subarray_mm2,
                 "baseline_subarray_mm2": cal.baseline_subarray_mm2},
        "geometry": {"rows": cal.rows, "cols": cal.cols},
        "tolerances": {"reconcile": cal.reconcile_tolerance},
        "workload": cal.workload,
        "targets": cal.targets,
    }


def mac_ratios(cal, layout=FP32, fast=False):
    proposed = analytic_mac_cost(layout, cal.primitive_costs(fast))
    base = baseline_mac_cost(layout, cal.baseline)
    return {"energy": base.energy / proposed.energy, "latency": base.latency / proposed.latency,
            "proposed": proposed, "baseline": base}
