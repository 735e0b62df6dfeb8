"""Command-line front end: ``sotpim <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical divergence. Every report is written once, atomically, when the
command finishes.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import arith
from .cost import (ConfigError, analytic_add_cost, analytic_mac_cost, analytic_mul_cost,
                   baseline_mac_cost, load_calibration, mac_ratios, reconcile, sampled_summary)
from .softfloat import FloatLayout, random_words, ref_mac
from .workload import (SpecError, TrainingPlan, estimate_training, functional_train_tiny,
                       load_network, write_loss_csv)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _parse_layout(text):
    try:
        ne, nm = (int(v) for v in text.split(","))
        return FloatLayout(ne, nm)
    except ValueError as exc:
        raise ConfigError(f"--layout expects '<n_e>,<n_m>', got {text!r}: {exc}") from exc


class _Run:
    """Parsed common options plus the pending output files."""

    def __init__(self, args):
        self.args = args
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        self.layout = _parse_layout(args.layout)
        self.cal = load_calibration(args.calibration)
        self.pc = self.cal.primitive_costs(fast=args.fast_mram)
        self.out = Path(args.out)
        self.rng = np.random.default_rng(args.seed)
        self.files = {}

    def report(self, command, data):
        return {
            "command": command,
            "layout": [self.layout.n_e, self.layout.n_m],
            "calibration": str(self.args.calibration or "bundled"),
            "fast_mram": bool(self.args.fast_mram),
            "seed": self.args.seed,
            "data": data,
        }

    def add_json(self, name, obj):
        self.files[name] = json.dumps(obj, indent=2, default=str) + "\n"

    def add_csv(self, name, header, rows):
        self.files[name] = _csv_text(header, rows)

    def flush(self):
        for name, text in self.files.items():
            _atomic_write(self.out / name, text)


# -- commands ------------------------------------------------------------------------


def cmd_cost(run):
    L, pc = run.layout, run.pc
    ratios = mac_ratios(run.cal, L, fast=run.args.fast_mram)
    slow = mac_ratios(run.cal, L, fast=False)["proposed"]
    reports = {
        ("proposed", "add"): analytic_add_cost(L, pc),
        ("proposed", "mul"): analytic_mul_cost(L, pc),
        ("proposed", "mac"): analytic_mac_cost(L, pc),
        ("baseline", "mac"): baseline_mac_cost(L, run.cal.baseline),
    }
    data = {
        "costs": {f"{d}/{op}": r.to_dict() for (d, op), r in reports.items()},
        "mac_ratios": {"energy": ratios["energy"], "latency": ratios["latency"]},
        "mac_latency_reduction_vs_default": 1.0 - ratios["proposed"].latency / slow.latency,
    }
    run.add_json("cost.json", run.report("cost", data))
    run.add_csv("cost.csv", ["design", "op", "latency_ns", "energy_fj"],
                [[d, op, r.latency, r.energy] for (d, op), r in reports.items()])
    print(f"MAC energy ratio (baseline/proposed): {ratios['energy']:.3f}")
    print(f"MAC latency ratio (baseline/proposed): {ratios['latency']:.3f}")
    if run.args.fast_mram:
        print(f"MAC latency reduction vs default cell: {data['mac_latency_reduction_vs_default']:.1%}")
    return EXIT_OK


def _reconcile_ops(run, ops, samples):
    tol = run.cal.reconcile_tolerance
    out = []
    for op in ops:
        summary = sampled_summary(op, run.layout, samples, run.rng)
        out.append(reconcile(summary, run.layout, run.pc, op, tol, n_ops=samples))
    return out


def _reconcile_rows(reports):
    return [[r["op"], r["n_ops"], r["analytic"]["latency_ns"], r["simulated"]["latency_ns"],
             r["deviation"]["latency"], r["analytic"]["energy_fj"], r["simulated"]["energy_fj"],
             r["deviation"]["energy"], r["events_per_op"]["searches"], r["flagged"]]
            for r in reports]


_RECONCILE_HEADER = ["op", "n_ops", "analytic_latency_ns", "simulated_latency_ns",
                     "latency_deviation", "analytic_energy_fj", "simulated_energy_fj",
                     "energy_deviation", "searches_per_op", "flagged"]


def cmd_simulate_mac(run):
    a = run.args
    if a.n_random < 1:
        raise ConfigError("--n-random must be >= 1")
    L = run.layout
    acc, x, w = random_words(run.rng, 3 * a.n_random, L).reshape(3, a.n_random)
    factory = None
    if a.inject_fault:
        def factory(lanes):
            sa = arith.new_subarray(L, lanes)
            fr = arith.frame_for(L)
            # flip the top fraction bit of lane 0's multiplicand after the first micro-op
            sa.inject_fault(1, 0, arith.Frame.WORDS, fr.slot(1).frac[-1])
            return sa
    got, flags = arith.mac_words(acc, x, w, L, lanes=min(a.lanes, a.n_random), sa_factory=factory)
    mismatches = []
    for i in range(a.n_random):
        ref, rf = ref_mac(int(acc[i]), int(x[i]), int(w[i]), L)
        if ref != int(got[i]) or int(rf) != int(flags[i]):
            mismatches.append({"index": i, "acc": hex(int(acc[i])), "x": hex(int(x[i])),
                               "w": hex(int(w[i])), "expected": hex(ref), "got": hex(int(got[i]))})
    recon = _reconcile_ops(run, ("add", "mul", "mac"), a.reconcile_samples)
    data = {"n_random": a.n_random, "mismatches": len(mismatches),
            "failures": mismatches[:50], "reconciliation": recon}
    run.add_json("simulate_mac.json", run.report("simulate-mac", data))
    run.add_csv("reconcile.csv", _RECONCILE_HEADER, _reconcile_rows(recon))
    if a.trace:
        sa = arith.new_subarray(L)
        fr = arith.frame_for(L)
        for slot, words in enumerate((acc, x, w)):
            arith.place_words(sa, fr, slot, words[:1])
        arith.mac_lanes(sa, L)
        buf = io.StringIO()
        sa.dump_trace(buf)
        run.files["trace.csv"] = buf.getvalue()
    print(f"{a.n_random} MACs verified, {len(mismatches)} mismatches")
    adds = next(r for r in recon if r["op"] == "add")
    print(f"searches per add: {adds['events_per_op']['searches']:g} "
          f"(closed form {adds['search_coefficient']})")
    for m in mismatches[:10]:
        print(f"MISMATCH acc={m['acc']} x={m['x']} w={m['w']}: "
              f"expected {m['expected']}, got {m['got']}", file=sys.stderr)
    return EXIT_VERIFY if mismatches else EXIT_OK


def cmd_reconcile(run):
    recon = _reconcile_ops(run, run.args.ops, run.args.samples)
    run.add_json("reconcile.json", run.report("reconcile", {"reconciliation": recon}))
    run.add_csv("reconcile.csv", _RECONCILE_HEADER, _reconcile_rows(recon))
    for r in recon:
        state = "FLAGGED" if r["flagged"] else "ok"
        print(f"{r['op']}: latency {r['deviation']['latency']:+.1%}, "
              f"energy {r['deviation']['energy']:+.1%} [{state}]")
    return EXIT_VERIFY if any(r["flagged"] for r in recon) else EXIT_OK


def cmd_estimate_train(run):
    a = run.args
    net = load_network(a.net)
    plan = TrainingPlan.for_network(net, a.batch, a.steps)
    est = estimate_training(net, plan, run.cal, run.layout, fast=a.fast_mram)
    data = {"network": net.name, "total_params": net.total_params,
            "layers": net.layer_table(), **est.to_dict()}
    run.add_json("estimate_train.json", run.report("estimate-train", data))
    run.add_csv("estimate_train.csv", ["metric", "proposed", "baseline", "ratio"], [
        ["area_mm2", est.proposed.area, est.baseline.area, est.ratios["area"]],
        ["latency_ns", est.proposed.latency, est.baseline.latency, est.ratios["latency"]],
        ["energy_fj", est.proposed.energy, est.baseline.energy, est.ratios["energy"]],
    ])
    for k, v in est.ratios.items():
        print(f"{k} ratio (baseline/proposed): {v:.3f}" if v is not None else f"{k} ratio: n/a")
    return EXIT_OK


def cmd_train_tiny(run):
    a = run.args
    net = load_network(a.preset)
    res = functional_train_tiny(net, a.epochs, a.lr, a.seed, a.backend, run.layout)
    buf = io.StringIO()
    write_loss_csv(buf, res)
    run.files["loss.csv"] = buf.getvalue()
    data = {"preset": a.preset, "epochs": a.epochs, "lr": a.lr, "backend": a.backend,
            "final_accuracy": res.final_accuracy, "diverged": res.diverged,
            "final_loss": res.losses[-1] if res.losses else None}
    run.add_json("train_tiny.json", run.report("train-tiny", data))
    if res.diverged:
        print(f"training diverged (overflow) at epoch {len(res.losses) - 1}", file=sys.stderr)
        return EXIT_DIVERGED
    acc = res.final_accuracy
    print(f"final accuracy: {acc:.0%}" if acc is not None else "no epochs run")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--calibration", type=Path, default=None,
                        help="calibration JSON (default: the bundled file)")
    common.add_argument("--layout", default="8,23", help="float layout as n_e,n_m")
    common.add_argument("--fast-mram", action="store_true",
                        help="use the fast-switching cell from the calibration file")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    p = argparse.ArgumentParser(prog="sotpim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("cost", parents=[common], help="closed-form add/mul/MAC costs")
    s.set_defaults(fn=cmd_cost)

    s = sub.add_parser("simulate-mac", parents=[common],
                       help="bit-level MACs checked against the oracle, plus reconciliation")
    s.add_argument("--n-random", type=int, default=1000)
    s.add_argument("--lanes", type=int, default=1024, help="MACs per simulated subarray")
    s.add_argument("--reconcile-samples", type=int, default=32)
    s.add_argument("--trace", action="store_true", help="also write one MAC's micro-op trace")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(fn=cmd_simulate_mac)

    s = sub.add_parser("reconcile", parents=[common],
                       help="simulated vs closed-form cost of random operations")
    s.add_argument("--samples", type=int, default=64)
    s.add_argument("--ops", nargs="+", choices=("add", "mul", "mac"), default=["add", "mul"])
    s.set_defaults(fn=cmd_reconcile)

    s = sub.add_parser("estimate-train", parents=[common],
                       help="training cost of a network, proposed vs baseline")
    s.add_argument("--net", default="lenet5", help="preset name or network JSON file")
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--steps", type=int, default=938)
    s.set_defaults(fn=cmd_estimate_train)

    s = sub.add_parser("train-tiny", parents=[common],
                       help="train a tiny MLP with every add/multiply simulated")
    s.add_argument("--preset", default="xor-mlp")
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--backend", choices=("pim", "oracle"), default="pim")
    s.set_defaults(fn=cmd_train_tiny)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        code = args.fn(run)
        run.flush()
        return code
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
