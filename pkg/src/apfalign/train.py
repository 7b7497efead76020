"""Optimization driver: fit filter parameters so a processed input matches
a phase-shifted target, then export the resulting coefficients.

Training unrolls the filter recurrences per 2048-sample sequence (states are
zeroed per sequence), evaluates the configured loss, and Adam-updates the
model.  Sequences are processed in fixed-size chunks; chunks may be farmed
out to a thread pool, and gradients are reduced in chunk-index order, so
parallel and single-threaded runs produce bit-identical results.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import loss as loss_mod
from . import nn as nn_mod
from .filters import (BiquadAPF, Cascade, DEFAULT_ORDER_SPEC, FilterError,
                      FirstOrderAPF, SectionSpec, WarpedBiquadAPF,
                      WarpedFirstOrderAPF, compute_biquad_coeffs, APFParams,
                      tape_run_cascade)
from .signals import Signal, frame


class TrainError(ValueError):
    """Invalid training configuration or data."""


BUNDLE_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 512
    max_epochs: int = 400
    seed: int = 0
    loss: str = "mstft"                  # "mstft" | "mse"
    model: str = "sequential"            # "sequential" | "connected" | "naive"
    specs: tuple = DEFAULT_ORDER_SPEC
    sample_rate: int = 48000
    seq_len: int = 2048
    shuffle: bool = True
    plateau_patience: int = 20
    plateau_min_delta: float = 1e-6
    chunk_size: int = 16
    num_workers: int = 1
    spec_power: int = 1
    stft_resolutions: tuple | None = None   # ((fft, hop, win), ...) override
    bounds: dict | None = None
    naive_init_raw: float = 0.0
    omega0: float = nn_mod.DEFAULT_OMEGA0
    hidden: tuple = nn_mod.DEFAULT_HIDDEN
    b0_dim: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 \
                or self.max_epochs <= 0 or self.seq_len <= 0 \
                or self.chunk_size <= 0 or self.num_workers <= 0:
            raise TrainError("rates, sizes and counts must be positive")
        if self.loss not in ("mstft", "mse"):
            raise TrainError(f"unknown loss {self.loss!r}")
        if self.model not in nn_mod.MODEL_KINDS:
            raise TrainError(f"unknown model kind {self.model!r}")
        self.specs = tuple(
            s if isinstance(s, SectionSpec) else SectionSpec(**s)
            for s in self.specs)

    def config_hash(self) -> str:
        # num_workers is an execution detail: parallel and serial runs are
        # bit-identical, so they share a hash
        fields = _jsonable(asdict(self))
        fields.pop("num_workers")
        blob = json.dumps(fields, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolutions(self):
        if self.stft_resolutions is None:
            return loss_mod.default_resolutions(power=self.spec_power)
        return tuple(
            loss_mod.STFTConfig(fft, hop, win, power=self.spec_power)
            for fft, hop, win in self.stft_resolutions)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        """Returns a fresh parameter dict; inputs are left untouched."""
        self.t += 1
        out = {}
        for name, value in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(value, dtype=np.float64)
                self.v[name] = np.zeros_like(value, dtype=np.float64)
            m = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            out[name] = value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def default_bounds_for_rate(sample_rate: float, bounds: dict | None = None) -> dict:
    """Denormalization bounds with the break frequency kept below Nyquist."""
    out = dict(bounds or {})
    out.setdefault("fc", (20.0, min(20000.0, 0.45 * sample_rate)))
    return out


def plateau_check(history, patience: int = 20, min_delta: float = 1e-6) -> bool:
    """True when the best loss has not improved (relatively) for ``patience`` epochs."""
    if len(history) == 0:
        raise TrainError("loss history is empty")
    best = history[0]
    since = 0
    for value in history[1:]:
        if best - value > min_delta * max(abs(best), 1e-30):
            best = value
            since = 0
        else:
            since += 1
    return since >= patience


# ---------------------------------------------------------------------------
# Coefficient bundles
# ---------------------------------------------------------------------------

@dataclass
class CoefficientBundle:
    """Serializable trained cascade: sections with physical params and coeffs."""

    sample_rate: int
    model: str
    sections: list
    provenance: dict = field(default_factory=dict)
    version: int = BUNDLE_VERSION

    def to_json(self) -> str:
        return json.dumps({
            "version": self.version,
            "sample_rate": self.sample_rate,
            "model": self.model,
            "sections": self.sections,
            "provenance": self.provenance,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CoefficientBundle":
        blob = json.loads(text)
        if blob.get("version") != BUNDLE_VERSION:
            raise TrainError(f"unsupported bundle version {blob.get('version')}")
        return cls(sample_rate=blob["sample_rate"], model=blob["model"],
                   sections=blob["sections"], provenance=blob["provenance"],
                   version=blob["version"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CoefficientBundle":
        with open(path) as fh:
            return cls.from_json(fh.read())


def export_bundle(model: nn_mod.Model, cfg: TrainConfig,
                  provenance: dict | None = None) -> CoefficientBundle:
    """Freeze the model's current section parameters into a bundle."""
    sections = []
    for spec, params in zip(model.specs, model.emit_section_params_plain()):
        entry = {"order": spec.order, "warped": spec.warped,
                 "params": {k: float(v) for k, v in params.items()}}
        if spec.order == 2:
            coeffs = compute_biquad_coeffs(
                APFParams(params["R"], params["fc"], params.get("a", 0.0)),
                cfg.sample_rate)
            entry["coeffs"] = {"c": float(coeffs.c), "d": float(coeffs.d)}
        else:
            entry["coeffs"] = {"pole": float(params["pole"])}
        sections.append(entry)
    prov = {"config_hash": cfg.config_hash(), "seed": cfg.seed,
            "loss": cfg.loss, "model": cfg.model,
            "routing": model.routing_labels()}
    prov.update(provenance or {})
    return CoefficientBundle(sample_rate=cfg.sample_rate, model=cfg.model,
                             sections=sections, provenance=prov)


def cascade_from_bundle(bundle: CoefficientBundle) -> Cascade:
    sections = []
    for i, entry in enumerate(bundle.sections):
        try:
            coeffs, params = entry["coeffs"], entry["params"]
            if entry["order"] == 2:
                if entry["warped"]:
                    sections.append(WarpedBiquadAPF(coeffs["c"], coeffs["d"],
                                                    params["a"]))
                else:
                    sections.append(BiquadAPF(coeffs["c"], coeffs["d"]))
            elif entry["warped"]:
                sections.append(WarpedFirstOrderAPF(coeffs["pole"], params["a"]))
            else:
                sections.append(FirstOrderAPF(coeffs["pole"]))
        except (KeyError, FilterError) as exc:
            raise TrainError(f"bundle section {i} invalid: {exc}") from exc
    return Cascade(sections)


def apply(bundle: CoefficientBundle, signal: Signal) -> Signal:
    """Pure inference: run a signal through a bundle's cascade."""
    if bundle.sample_rate != signal.sample_rate:
        raise TrainError(
            f"bundle rate {bundle.sample_rate} != signal rate "
            f"{signal.sample_rate}; resample explicitly first")
    if not bundle.sections:
        return Signal(signal.samples.copy(), signal.sample_rate)
    return cascade_from_bundle(bundle).process(signal)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: nn_mod.Model
    bundle: CoefficientBundle
    loss_curve: list            # rows (step, epoch, loss)
    epoch_losses: list
    best_loss: float
    aborted: bool = False
    abort_batch: int | None = None

    def loss_curve_csv(self) -> str:
        lines = [f"# config_hash={self.bundle.provenance['config_hash']}",
                 "step,epoch,loss"]
        for step, epoch, value in self.loss_curve:
            lines.append(f"{step},{epoch},{value!r}")
        return "\n".join(lines) + "\n"


def _chunk_job(model, cfg, x_mat, y_mat):
    """Forward+backward for one chunk; returns (loss_sum, grads)."""
    tape = ad.Tape()
    leaves = model.make_leaves(tape)
    section_nodes = model.emit_section_params_tape(tape, leaves)
    ys = tape_run_cascade(model.specs, section_nodes, x_mat, cfg.sample_rate)
    if cfg.loss == "mse":
        loss_node = loss_mod.tape_mse_loss_sum(ys, y_mat)
    else:
        loss_node = loss_mod.tape_mstft_loss_sum(ys, y_mat, cfg.resolutions())
    tape.backward(loss_node)
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    return float(loss_node.value), grads


def _check_bounds(model):
    for spec, params in zip(model.specs, model.emit_section_params_plain()):
        flat, _ = nn_mod.param_specs_for([spec])
        for ps in flat:
            v = params[ps.kind]
            if not (ps.lo <= v <= ps.hi):
                raise TrainError(
                    f"parameter {ps.kind}={v} escaped bounds [{ps.lo}, {ps.hi}]")


def train(input_signal: Signal, target_signal: Signal, cfg: TrainConfig,
          model: nn_mod.Model | None = None) -> TrainResult:
    """Fit the configured model so cascade(input) approximates target."""
    if input_signal.sample_rate != target_signal.sample_rate:
        raise TrainError("input and target sample rates differ")
    if len(input_signal) != len(target_signal):
        raise TrainError("input and target lengths differ")
    if input_signal.sample_rate != cfg.sample_rate:
        raise TrainError(
            f"config sample_rate {cfg.sample_rate} != signal rate "
            f"{input_signal.sample_rate}")
    if not cfg.specs:
        raise TrainError("order spec is empty; nothing to train")

    if model is None:
        kwargs = {}
        if cfg.model == "naive":
            kwargs["init_raw"] = cfg.naive_init_raw
        else:
            kwargs = {"hidden": cfg.hidden, "omega0": cfg.omega0,
                      "b0_dim": cfg.b0_dim}
        bounds = default_bounds_for_rate(cfg.sample_rate, cfg.bounds)
        model = nn_mod.build_model(cfg.model, specs=cfg.specs,
                                   bounds=bounds, seed=cfg.seed, **kwargs)

    x_batch = frame(input_signal, cfg.seq_len)
    y_batch = frame(target_signal, cfg.seq_len)
    x_seqs = x_batch.sequences
    y_seqs = y_batch.sequences
    n_seq = x_seqs.shape[0]

    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(cfg.learning_rate)
    loss_curve = []
    epoch_losses = []
    best_loss = math.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    aborted = False
    abort_batch = None
    step = 0

    pool = None
    if cfg.num_workers > 1:
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=cfg.num_workers)
    try:
        for epoch in range(cfg.max_epochs):
            order = rng.permutation(n_seq) if cfg.shuffle else np.arange(n_seq)
            batch_losses = []
            for bi in range(0, n_seq, cfg.batch_size):
                batch_idx = order[bi:bi + cfg.batch_size]
                chunks = [batch_idx[ci:ci + cfg.chunk_size]
                          for ci in range(0, len(batch_idx), cfg.chunk_size)]
                jobs = [(model, cfg,
                         np.ascontiguousarray(x_seqs[idx].T),
                         np.ascontiguousarray(y_seqs[idx].T))
                        for idx in chunks]
                if pool is None:
                    results = [_chunk_job(*job) for job in jobs]
                else:
                    results = list(pool.map(lambda j: _chunk_job(*j), jobs))
                loss_sum = 0.0
                grad_sum: dict[str, np.ndarray] = {}
                for chunk_loss, grads in results:
                    loss_sum = loss_sum + chunk_loss
                    for name, g in grads.items():
                        if name in grad_sum:
                            grad_sum[name] = grad_sum[name] + g
                        else:
                            grad_sum[name] = g
                n_items = len(batch_idx)
                batch_loss = loss_sum / n_items
                if not math.isfinite(batch_loss):
                    aborted = True
                    abort_batch = bi // cfg.batch_size
                    break
                if batch_loss < best_loss:
                    # snapshot the parameters the loss was evaluated at,
                    # i.e. before this step's update
                    best_loss = batch_loss
                    best_params = {k: v.copy()
                                   for k, v in model.params.items()}
                grads = {name: g / n_items for name, g in grad_sum.items()}
                new_params = optimizer.step(model.params, grads)
                model.set_params(new_params)
                _check_bounds(model)
                loss_curve.append((step, epoch, batch_loss))
                batch_losses.append(batch_loss)
                step += 1
            if aborted:
                break
            epoch_loss = float(np.mean(batch_losses))
            epoch_losses.append(epoch_loss)
            if plateau_check(epoch_losses, cfg.plateau_patience,
                             cfg.plateau_min_delta):
                break
    finally:
        if pool is not None:
            pool.shutdown()

    model.set_params(best_params)
    provenance = {"epochs": len(epoch_losses),
                  "final_loss": epoch_losses[-1] if epoch_losses else None,
                  "best_loss": None if math.isinf(best_loss) else best_loss,
                  "aborted": aborted, "abort_batch": abort_batch}
    bundle = export_bundle(model, cfg, provenance)
    return TrainResult(model=model, bundle=bundle, loss_curve=loss_curve,
                       epoch_losses=epoch_losses,
                       best_loss=best_loss if not math.isinf(best_loss) else float("nan"),
                       aborted=aborted, abort_batch=abort_batch)
