"""Deep-optimization models that emit all-pass filter parameters.

A BiasNet is an input-free MLP: a learnable bias vector feeds a sine-activated
bottleneck (hidden sizes 1024/512/256/128 by default) whose tanh outputs are
denormalized into bounded physical filter parameters.  Three assemblies are
provided:

* ``sequential`` -- one BiasNet per cascade section
* ``connected``  -- a single BiasNet emitting every section parameter
* ``naive``      -- no network; the raw values are free scalars (still pushed
                    through tanh + denormalization so bounds hold by
                    construction)

Hidden layers use ``sin(omega0 * z)`` with the matching uniform init
(first layer U(-1/n, 1/n), later layers U(-sqrt(6/n)/omega0, +...)); the
output layer uses tanh with Xavier-uniform weights and zero biases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .filters import DEFAULT_ORDER_SPEC, SectionSpec


class ModelConfigError(ValueError):
    """Invalid model assembly configuration."""


DEFAULT_HIDDEN = (1024, 512, 256, 128)
DEFAULT_OMEGA0 = 30.0

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ParamSpec:
    """Denormalization descriptor for one emitted parameter."""

    kind: str      # "fc" | "R" | "a" | "pole"
    lo: float
    hi: float

    def denormalize(self, p):
        """Affine map from raw (-1, 1) to [lo, hi]."""
        return (self.hi - self.lo) / 2.0 * p + (self.hi + self.lo) / 2.0

    def denormalize_node(self, p):
        return ad.add(ad.mul(p, (self.hi - self.lo) / 2.0),
                      (self.hi + self.lo) / 2.0)


DEFAULT_BOUNDS = {
    "fc": (20.0, 20000.0),
    "R": (0.0, 0.99999),
    "a": (-0.999, 0.999),
    "pole": (-0.999, 0.999),
}


def param_specs_for(specs, bounds=None):
    """Flat, routed list of ParamSpec plus (section, name) routing labels."""
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    flat = []
    routing = []
    for i, sec in enumerate(specs):
        for name in sec.param_names:
            lo, hi = bounds[name]
            flat.append(ParamSpec(kind=name, lo=lo, hi=hi))
            routing.append((i, name))
    return flat, routing


# ---------------------------------------------------------------------------
# BiasNet
# ---------------------------------------------------------------------------

class BiasNet:
    """Input-free sine MLP driven by a learnable bias vector."""

    def __init__(self, out_dim: int, b0_dim: int = 1,
                 hidden=DEFAULT_HIDDEN, omega0: float = DEFAULT_OMEGA0,
                 rng=None, prefix: str = ""):
        if out_dim < 1 or b0_dim < 1:
            raise ModelConfigError("out_dim and b0_dim must be >= 1")
        self.out_dim = out_dim
        self.b0_dim = b0_dim
        self.hidden = tuple(hidden)
        self.omega0 = omega0
        self.prefix = prefix
        rng = rng or np.random.default_rng(0)
        sizes = [b0_dim, *self.hidden, out_dim]
        self.params: dict[str, np.ndarray] = {
            f"{prefix}bias_in": rng.uniform(-1.0, 1.0, b0_dim)}
        for li in range(len(sizes) - 1):
            fan_in, fan_out = sizes[li], sizes[li + 1]
            last = li == len(sizes) - 2
            if last:
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, (fan_out, fan_in))
                b = np.zeros(fan_out)
            elif li == 0:
                w = rng.uniform(-1.0 / fan_in, 1.0 / fan_in, (fan_out, fan_in))
                b = rng.uniform(-1.0 / math.sqrt(fan_in),
                                1.0 / math.sqrt(fan_in), fan_out)
            else:
                bound = math.sqrt(6.0 / fan_in) / omega0
                w = rng.uniform(-bound, bound, (fan_out, fan_in))
                b = rng.uniform(-1.0 / math.sqrt(fan_in),
                                1.0 / math.sqrt(fan_in), fan_out)
            self.params[f"{prefix}w{li}"] = w
            self.params[f"{prefix}bias{li}"] = b
        self.n_layers = len(sizes) - 1

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def forward_plain(self, params=None) -> np.ndarray:
        """Raw outputs in (-1, 1)."""
        p = params if params is not None else self.params
        h = p[f"{self.prefix}bias_in"]
        for li in range(self.n_layers):
            z = p[f"{self.prefix}w{li}"] @ h + p[f"{self.prefix}bias{li}"]
            h = np.tanh(z) if li == self.n_layers - 1 else np.sin(self.omega0 * z)
        return h

    def forward_tape(self, tape, leaf_map) -> list:
        """Raw output nodes in (-1, 1); ``leaf_map`` maps name -> leaf Node."""
        h = leaf_map[f"{self.prefix}bias_in"]
        for li in range(self.n_layers):
            z = ad.add(ad.matvec(leaf_map[f"{self.prefix}w{li}"], h),
                       leaf_map[f"{self.prefix}bias{li}"])
            if li == self.n_layers - 1:
                h = ad.tanh(z)
            else:
                h = ad.sin(ad.mul(z, self.omega0))
        return [_pick(h, k) for k in range(self.out_dim)]


def _pick(vec_node, k):
    """Extract element k of a 1-D node as a scalar node."""
    def back(g, _k=k, _n=vec_node.shape[0]):
        out = np.zeros(_n)
        out[_k] = g
        return out
    return vec_node.tape._record(float(vec_node.value[k]), (vec_node,), (back,))


# ---------------------------------------------------------------------------
# Model assemblies
# ---------------------------------------------------------------------------

class Model:
    """Common surface: named parameters in, routed section parameters out."""

    kind = "base"

    def __init__(self, specs, bounds=None):
        self.specs = tuple(specs)
        if not all(isinstance(s, SectionSpec) for s in self.specs):
            raise ModelConfigError("order spec must be SectionSpec instances")
        self.flat_specs, self.routing = param_specs_for(self.specs, bounds)
        self.out_dim = len(self.flat_specs)
        self.params: dict[str, np.ndarray] = {}

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def set_params(self, params: dict):
        for k, v in params.items():
            if k not in self.params:
                raise ModelConfigError(f"unknown parameter {k!r}")
            self.params[k] = np.asarray(v, dtype=np.float64).reshape(
                self.params[k].shape)

    def emit_raw_plain(self, params=None) -> np.ndarray:
        raise NotImplementedError

    def emit_raw_tape(self, tape, leaf_map) -> list:
        raise NotImplementedError

    def emit_section_params_plain(self, params=None):
        """List of per-section parameter dicts with physical values."""
        raw = self.emit_raw_plain(params)
        out = [dict() for _ in self.specs]
        for value, spec, (sec_i, name) in zip(raw, self.flat_specs, self.routing):
            out[sec_i][name] = float(spec.denormalize(value))
        return out

    def emit_section_params_tape(self, tape, leaf_map):
        raw = self.emit_raw_tape(tape, leaf_map)
        out = [dict() for _ in self.specs]
        for node, spec, (sec_i, name) in zip(raw, self.flat_specs, self.routing):
            out[sec_i][name] = spec.denormalize_node(node)
        return out

    def make_leaves(self, tape):
        """Create one leaf per named parameter (floats for 0-d params)."""
        leaf_map = {}
        for name, value in self.params.items():
            leaf_map[name] = tape.leaf(
                float(value) if value.ndim == 0 else value)
        return leaf_map

    def routing_labels(self):
        return [f"s{sec_i}.{name}" for sec_i, name in self.routing]


class ConnectedModel(Model):
    """One BiasNet emits every routed parameter."""

    kind = "connected"

    def __init__(self, specs=DEFAULT_ORDER_SPEC, bounds=None, b0_dim=1,
                 hidden=DEFAULT_HIDDEN, omega0=DEFAULT_OMEGA0, seed=0):
        super().__init__(specs, bounds)
        self.net = BiasNet(self.out_dim, b0_dim, hidden, omega0,
                           rng=np.random.default_rng(seed))
        self.params = self.net.params

    def emit_raw_plain(self, params=None):
        return self.net.forward_plain(params)

    def emit_raw_tape(self, tape, leaf_map):
        return self.net.forward_tape(tape, leaf_map)


class SequentialModel(Model):
    """One BiasNet per section, each emitting that section's parameters."""

    kind = "sequential"

    def __init__(self, specs=DEFAULT_ORDER_SPEC, bounds=None, b0_dim=1,
                 hidden=DEFAULT_HIDDEN, omega0=DEFAULT_OMEGA0, seed=0):
        super().__init__(specs, bounds)
        rng = np.random.default_rng(seed)
        self.nets = []
        self.params = {}
        for i, sec in enumerate(self.specs):
            net = BiasNet(len(sec.param_names), b0_dim, hidden, omega0,
                          rng=rng, prefix=f"n{i}.")
            self.nets.append(net)
            self.params.update(net.params)

    def emit_raw_plain(self, params=None):
        p = params if params is not None else self.params
        return np.concatenate([net.forward_plain(p) for net in self.nets])

    def emit_raw_tape(self, tape, leaf_map):
        out = []
        for net in self.nets:
            out.extend(net.forward_tape(tape, leaf_map))
        return out


class NaiveModel(Model):
    """Free raw scalars per routed parameter (tanh-squashed, then denormalized)."""

    kind = "naive"

    def __init__(self, specs=DEFAULT_ORDER_SPEC, bounds=None, init_raw=0.0,
                 seed=0):
        super().__init__(specs, bounds)
        init = np.broadcast_to(np.asarray(init_raw, dtype=np.float64),
                               (self.out_dim,))
        self.params = {
            f"raw.{label}": np.asarray(init[k])
            for k, label in enumerate(self.routing_labels())}

    def emit_raw_plain(self, params=None):
        p = params if params is not None else self.params
        return np.tanh(np.array(
            [p[f"raw.{label}"] for label in self.routing_labels()], dtype=float))

    def emit_raw_tape(self, tape, leaf_map):
        return [ad.tanh(leaf_map[f"raw.{label}"])
                for label in self.routing_labels()]


MODEL_KINDS = {
    "connected": ConnectedModel,
    "sequential": SequentialModel,
    "naive": NaiveModel,
}


def build_model(kind: str, specs=DEFAULT_ORDER_SPEC, bounds=None, seed=0,
                **kwargs):
    if kind not in MODEL_KINDS:
        raise ModelConfigError(
            f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    return MODEL_KINDS[kind](specs=specs, bounds=bounds, seed=seed, **kwargs)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: Model, extra: dict | None = None):
    """Write a versioned .npz checkpoint (parameters + reconstruction meta)."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "specs": [{"order": s.order, "warped": s.warped} for s in model.specs],
        "bounds": {ps.kind: (ps.lo, ps.hi) for ps in model.flat_specs},
        "routing": model.routing_labels(),
        "extra": extra or {},
    }
    net = getattr(model, "net", None) or (
        model.nets[0] if hasattr(model, "nets") else None)
    if net is not None:
        meta["omega0"] = net.omega0
        meta["hidden"] = list(net.hidden)
        meta["b0_dim"] = net.b0_dim
    arrays = {f"param:{k}": v for k, v in model.params.items()}
    np.savez(path, __meta__=json.dumps(meta), **arrays)


def load_checkpoint(path) -> Model:
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["__meta__"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ModelConfigError(
                f"unsupported checkpoint version {meta['version']}")
        specs = tuple(SectionSpec(s["order"], s["warped"]) for s in meta["specs"])
        bounds = {k: tuple(v) for k, v in meta["bounds"].items()}
        kwargs = {}
        if meta["kind"] in ("connected", "sequential"):
            kwargs = {"hidden": tuple(meta["hidden"]),
                      "omega0": meta["omega0"], "b0_dim": meta["b0_dim"]}
        model = build_model(meta["kind"], specs=specs, bounds=bounds, **kwargs)
        params = {k[len("param:"):]: blob[k] for k in blob.files
                  if k.startswith("param:")}
    model.set_params(params)
    return model
