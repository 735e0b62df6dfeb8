"""Bit-level simulator and cost model of a SOT-MRAM processing-in-memory
floating-point training accelerator."""

from .arith import (FaLocs, StoredFloat, add_nbit, add_words, decode_float, encode_float,
                    float_add, float_mul, full_add_1bit, mac, mac_words, mul_words,
                    new_subarray)
from .cell import CellState, LogicKind, WriteConfig, apply_write, read_cell
from .cost import (BaselineParams, CellParams, ConfigError, CostReport, Peripheral,
                   PrimitiveCosts, analytic_add_cost, analytic_mac_cost, analytic_mul_cost,
                   area_estimate, baseline_mac_cost, calibrate_baseline, derive_primitive_costs,
                   load_calibration, reconcile, simulated_cost)
from .softfloat import FP32, Flags, FloatLayout, decode, encode, ref_add, ref_mac, ref_mul
from .subarray import ColumnOp, CostEvent, EventKind, LogSummary, Subarray, WordLoc
from .workload import (NetworkSpec, SpecError, TrainingPlan, count_training_macs,
                       estimate_training, functional_train_tiny, load_network)

__version__ = "0.1.0"
