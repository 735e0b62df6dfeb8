"""DNN training workloads: MAC counting, cost estimation and a tiny functional
training loop whose every multiply and add runs on the simulated array."""

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .arith import add_words, mul_words
from .cost import CostReport, analytic_mac_cost, area_estimate, baseline_mac_cost
from .softfloat import FP32, Flags, decode, encode, ref_add, ref_mul

LAYER_KINDS = ("Conv", "Dense", "Pool", "Activation")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    units: int = 0
    size: int = 2
    fn: str = "relu"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind == "Conv" and (self.out_channels < 1 or self.kernel < 1 or self.stride < 1
                                    or self.padding < 0):
            raise SpecError(f"bad conv layer {self}")
        if self.kind == "Dense" and self.units < 1:
            raise SpecError(f"dense layer needs units >= 1, got {self.units}")
        if self.kind == "Pool" and self.size < 1:
            raise SpecError(f"bad pool size {self.size}")

    def apply(self, shape):
        """(output shape, parameter count, MACs per sample) for ``shape`` in."""
        if self.kind == "Conv":
            if len(shape) != 3:
                raise SpecError(f"conv layer needs a (c, h, w) input, got {shape}")
            c, h, w = shape
            oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
            ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
            if oh < 1 or ow < 1:
                raise SpecError(f"kernel {self.kernel} does not fit input {shape}")
            fan_in = self.kernel * self.kernel * c
            return ((self.out_channels, oh, ow), (fan_in + 1) * self.out_channels,
                    fan_in * self.out_channels * oh * ow)
        if self.kind == "Dense":
            n = math.prod(shape)
            return (self.units,), (n + 1) * self.units, n * self.units
        if self.kind == "Pool":
            if len(shape) != 3 or shape[1] < self.size or shape[2] < self.size:
                raise SpecError(f"pool size {self.size} does not fit input {shape}")
            c, h, w = shape
            return (c, h // self.size, w // self.size), 0, 0
        return shape, 0, 0


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple
    layers: tuple

    def _walk(self):
        shape = tuple(self.input_shape)
        out = []
        for layer in self.layers:
            shape, params, macs = layer.apply(shape)
            out.append((shape, params, macs))
        return out

    @property
    def total_params(self):
        return sum(p for _, p, _ in self._walk())

    @property
    def forward_macs(self):
        """MACs of one forward pass of one sample."""
        return sum(m for _, _, m in self._walk())

    def layer_table(self):
        return [{"kind": l.kind, "output_shape": list(s), "params": p, "macs": m}
                for l, (s, p, m) in zip(self.layers, self._walk())]

    @classmethod
    def from_dict(cls, d):
        try:
            layers = tuple(LayerSpec(**l) for l in d["layers"])
            net = cls(d.get("name", "custom"), tuple(d["input_shape"]), layers)
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed network spec: {exc}") from exc
        if not layers:
            raise SpecError("network has no layers")
        declared = d.get("total_params")
        if declared is not None and declared != net.total_params:
            raise SpecError(f"declared total_params {declared} != computed {net.total_params}")
        return net

    def to_dict(self):
        return {"name": self.name, "input_shape": list(self.input_shape),
                "total_params": self.total_params,
                "layers": [{k: v for k, v in l.__dict__.items()} for l in self.layers]}


PRESETS = ("lenet5", "xor-mlp")


def load_network(name_or_path):
    """A bundled preset by name, or a JSON spec file."""
    if name_or_path in PRESETS:
        text = (resources.files("sotpim") / "data" / "nets" / f"{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise SpecError(f"no preset or spec file named {name_or_path!r}")
        text = path.read_text()
    try:
        return NetworkSpec.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise SpecError(f"network spec is not valid JSON: {exc}") from exc


# -- cost estimation ------------------------------------------------------------------


@dataclass(frozen=True)
class MacCounts:
    forward: int
    backward: int
    update: int

    @property
    def total(self):
        return self.forward + self.backward + self.update


def count_training_macs(net, batch, backward_factor=2, update_factor=1):
    """Per-step MACs. Backward costs ``backward_factor`` forward passes (input
    and weight gradients); the update is ``update_factor`` MAC per parameter
    per sample."""
    if batch < 1:
        raise SpecError("batch must be >= 1")
    fwd = net.forward_macs * batch
    return MacCounts(fwd, backward_factor * fwd, update_factor * net.total_params * batch)


@dataclass(frozen=True)
class TrainingPlan:
    batch_size: int
    steps: int
    subarrays_used: int
    lanes_per_subarray: int = 128

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.subarrays_used < 1 \
                or self.lanes_per_subarray < 1:
            raise SpecError(f"invalid training plan {self}")

    @classmethod
    def for_network(cls, net, batch_size=64, steps=938, lanes_per_subarray=128):
        """One weight per lane; enough subarrays to hold every parameter."""
        return cls(batch_size, steps, math.ceil(net.total_params / lanes_per_subarray),
                   lanes_per_subarray)


@dataclass
class TrainingEstimate:
    macs: MacCounts
    plan: TrainingPlan
    proposed: CostReport
    baseline: CostReport
    ratios: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "macs_per_step": {"forward": self.macs.forward, "backward": self.macs.backward,
                              "update": self.macs.update},
            "plan": self.plan.__dict__,
            "proposed": self.proposed.to_dict(),
            "baseline": self.baseline.to_dict(),
            "ratios": self.ratios,
        }


def _ratio(a, b):
    return a / b if b else None


def estimate_training(net, plan, cal, layout=FP32, fast=False):
    """Proposed vs baseline training cost; ratios are baseline / proposed."""
    wl = cal.workload
    macs = count_training_macs(net, plan.batch_size, wl.get("backward_factor", 2),
                               wl.get("update_factor", 1))
    lanes = plan.subarrays_used * plan.lanes_per_subarray
    traffic_bits = 2 * net.total_params * layout.width * plan.steps
    traffic = (traffic_bits * wl.get("traffic_ns_per_bit", 0.0),
               traffic_bits * wl.get("traffic_fj_per_bit", 0.0))

    def total(mac_cost, sub_area):
        bd = {}
        for name, n in (("forward", macs.forward), ("backward", macs.backward),
                        ("update", macs.update)):
            k = n * plan.steps
            bd[name] = (k * mac_cost.latency / lanes, k * mac_cost.energy)
        bd["traffic"] = traffic
        return CostReport.from_breakdown(bd, area=area_estimate(plan.subarrays_used, sub_area))

    prop = total(analytic_mac_cost(layout, cal.primitive_costs(fast)), cal.proposed_subarray_mm2)
    base = total(baseline_mac_cost(layout, cal.baseline), cal.baseline_subarray_mm2)
    ratios = {"area": _ratio(base.area, prop.area),
              "latency": _ratio(base.latency, prop.latency),
              "energy": _ratio(base.energy, prop.energy)}
    return TrainingEstimate(macs, plan, prop, base, ratios)


# -- functional training on simulated arithmetic -----------------------------------------


class OracleArith:
    """Elementwise arithmetic through the reference soft-float model."""

    name = "oracle"

    def __init__(self, layout=FP32):
        self.layout = layout

    def _apply(self, fn, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
        out = np.zeros(a.shape, dtype=np.uint64)
        flags = np.zeros(a.shape, dtype=np.int64)
        for i in np.ndindex(a.shape):
            out[i], flags[i] = fn(int(a[i]), int(b[i]), self.layout)
        return out, flags

    def add(self, a, b):
        return self._apply(ref_add, a, b)

    def mul(self, a, b):
        return self._apply(ref_mul, a, b)


class PimArith:
    """Elementwise arithmetic executed lane-parallel on simulated subarrays."""

    name = "pim"

    def __init__(self, layout=FP32, lanes=1024):
        self.layout = layout
        self.lanes = lanes

    def _apply(self, fn, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
        out, flags = fn(a.ravel(), b.ravel(), self.layout, min(self.lanes, a.size))
        return out.reshape(a.shape), flags.reshape(a.shape)

    def add(self, a, b):
        return self._apply(add_words, a, b)

    def mul(self, a, b):
        return self._apply(mul_words, a, b)


class _Tracked:
    """Wraps a backend and accumulates result flags."""

    def __init__(self, backend):
        self.be = backend
        self.flags = 0

    def add(self, a, b):
        out, f = self.be.add(a, b)
        self.flags |= int(np.bitwise_or.reduce(f, axis=None)) if f.size else 0
        return out

    def mul(self, a, b):
        out, f = self.be.mul(a, b)
        self.flags |= int(np.bitwise_or.reduce(f, axis=None)) if f.size else 0
        return out

    def sum(self, x, axis):
        """Pairwise-tree sum along ``axis``; the order is fixed so any two
        backends see the same sequence of operations."""
        x = np.moveaxis(x, axis, 0)
        while x.shape[0] > 1:
            half = x.shape[0] // 2
            s = self.add(x[:half], x[half:2 * half])
            x = np.concatenate([s, x[2 * half:]]) if x.shape[0] % 2 else s
        return x[0]

    def matmul(self, a, b):
        """(N, I) @ (I, J): one batched multiply, then a tree sum over I."""
        prods = self.mul(a[:, :, None], b[None, :, :])
        return self.sum(prods, axis=1)


@dataclass
class TrainResult:
    losses: list  # per-epoch loss as decoded floats
    loss_words: list  # the same losses as encoded words
    accuracies: list
    diverged: bool = False
    backend: str = ""

    @property
    def final_accuracy(self):
        return self.accuracies[-1] if self.accuracies else None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            write_loss_csv(fh, self)


def write_loss_csv(fh, result):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epoch", "loss", "accuracy"])
    for i, (loss, acc) in enumerate(zip(result.losses, result.accuracies)):
        w.writerow([i, repr(loss), repr(acc)])


def xor_dataset():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    labels = np.array([0, 1, 1, 0])
    return x, labels


def _enc(values, layout):
    flat = [encode(v, layout)[0] for v in np.ravel(values)]
    return np.array(flat, dtype=np.uint64).reshape(np.shape(values))


def _dec(words, layout):
    return np.array([decode(int(w), layout) for w in np.ravel(words)]).reshape(np.shape(words))


def functional_train_tiny(net=None, epochs=500, lr=0.1, seed=0, backend="pim", layout=FP32,
                          dataset=None):
    """Full-batch SGD on a one-hidden-layer ReLU MLP with MSE loss against
    one-hot targets. Every multiply and add goes through ``backend``
    ("pim", "oracle" or an object with ``add``/``mul``); ReLU and negation
    are sign-bit manipulations. Returns per-epoch loss (before that epoch's
    update) and accuracy; stops early and flags divergence on overflow."""
    net = load_network("xor-mlp") if net is None else net
    dense = [l for l in net.layers if l.kind == "Dense"]
    if len(dense) != 2 or len(net.input_shape) != 1:
        raise SpecError("tiny training expects an input -> Dense -> ReLU -> Dense network")
    x, labels = xor_dataset() if dataset is None else dataset
    n_in, hidden, n_out = net.input_shape[0], dense[0].units, dense[1].units
    if x.shape[1] != n_in or labels.max() >= n_out or len(x) > 64:
        raise SpecError("dataset does not fit the network (or has more than 64 samples)")
    be = {"pim": PimArith, "oracle": OracleArith}[backend](layout) \
        if isinstance(backend, str) else backend
    ops = _Tracked(be)

    rng = np.random.default_rng(seed)
    w1 = _enc(rng.uniform(-1, 1, (n_in, hidden)), layout)
    b1 = _enc(np.zeros(hidden), layout)
    w2 = _enc(rng.uniform(-1, 1, (hidden, n_out)), layout)
    b2 = _enc(np.zeros(n_out), layout)
    xs = _enc(x, layout)
    n = len(x)
    targets = _enc(np.eye(n_out)[labels], layout)
    sign = np.uint64(1 << (layout.width - 1))
    scale = _enc(1.0 / (n * n_out), layout)
    grad_scale = _enc(2.0 / (n * n_out), layout)
    step = _enc(-lr, layout)

    def relu_mask(v):
        return ((v & sign) == 0) & ((v & ~sign) != 0)

    res = TrainResult([], [], [], backend=getattr(be, "name", type(be).__name__))
    for _ in range(epochs):
        h_pre = ops.add(ops.matmul(xs, w1), b1[None, :])
        active = relu_mask(h_pre)
        h = np.where(active, h_pre, np.uint64(0))
        out = ops.add(ops.matmul(h, w2), b2[None, :])
        diff = ops.add(out, targets ^ sign)
        loss = ops.mul(ops.sum(ops.sum(ops.mul(diff, diff), axis=1), axis=0), scale)

        d_out = ops.mul(diff, grad_scale)
        g_w2 = ops.sum(ops.mul(h[:, :, None], d_out[:, None, :]), axis=0)
        g_b2 = ops.sum(d_out, axis=0)
        d_h = ops.matmul(d_out, w2.T)
        d_h = np.where(active, d_h, np.uint64(0))
        g_w1 = ops.sum(ops.mul(xs[:, :, None], d_h[:, None, :]), axis=0)
        g_b1 = ops.sum(d_h, axis=0)

        params = np.concatenate([w1.ravel(), b1, w2.ravel(), b2])
        grads = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
        new = ops.add(params, ops.mul(grads, step))

        res.loss_words.append(int(loss))
        res.losses.append(decode(int(loss), layout))
        pred = np.argmax(_dec(out, layout), axis=1)
        res.accuracies.append(float(np.mean(pred == labels)))
        if ops.flags & Flags.OVERFLOW:
            res.diverged = True
            break

        i = 0
        for arr in (w1, b1, w2, b2):
            arr.ravel()[:] = new[i:i + arr.size]
            i += arr.size
    return res
