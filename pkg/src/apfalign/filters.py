"""All-pass filter sections, cascades and the RC low-pass reference target.

Every section exists in two forms:

* plain state-stepping classes (``step``/``process``) used for inference,
  response export and property tests.  Coefficients may be scalars or
  equal-length arrays; array coefficients evaluate a whole batch of filter
  instances elementwise in lock-step.
* tape builders (``tape_run_*``) that unroll the same recurrences as
  autodiff graphs for training.

The warped sections replace each unit delay of the transposed direct
form II structure with a first-order all-pass ``D(z) = (a + z^-1)/(1 + a z^-1)``
and solve the resulting delay-free loop, so the step is explicit.  With
``a = 0`` the warped update performs bit-for-bit the same arithmetic as the
unwarped one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class FilterError(ValueError):
    """Invalid filter parameters or degenerate numerics."""


# ---------------------------------------------------------------------------
# Parameter and coefficient containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class APFParams:
    """Pole radius, break frequency and warp factor of one section."""

    R: float
    fc: float
    a: float = 0.0

    def __post_init__(self):
        if not np.all((0.0 <= np.asarray(self.R)) & (np.asarray(self.R) < 1.0)):
            raise FilterError(f"pole radius out of [0, 1): R={self.R}")
        if not np.all(np.asarray(self.fc) > 0.0):
            raise FilterError(f"break frequency must be positive: fc={self.fc}")
        if not np.all(np.abs(np.asarray(self.a)) < 1.0):
            raise FilterError(f"warp factor out of (-1, 1): a={self.a}")


@dataclass(frozen=True)
class BiquadCoeffs:
    """Second-order all-pass coefficients (c controls steepness, d the break)."""

    c: float
    d: float

    def __post_init__(self):
        if not np.all(np.abs(np.asarray(self.c)) < 1.0):
            raise FilterError(f"coefficient c out of (-1, 1): {self.c}")
        if not np.all(np.abs(np.asarray(self.d)) < 2.0):
            raise FilterError(f"coefficient d out of (-2, 2): {self.d}")


def compute_biquad_coeffs(params: APFParams, sample_rate: float) -> BiquadCoeffs:
    """c = R^2,  d = -2 R cos(2 pi fc / fs)."""
    if not np.all(np.asarray(params.fc) < sample_rate / 2.0):
        raise FilterError(
            f"fc={params.fc} violates the Nyquist limit at {sample_rate} Hz")
    c = params.R * params.R
    d = -2.0 * params.R * np.cos(2.0 * math.pi * params.fc / sample_rate)
    return BiquadCoeffs(c=c, d=d)


# ---------------------------------------------------------------------------
# Plain sections
# ---------------------------------------------------------------------------

class BiquadAPF:
    """Second-order all-pass in transposed direct form II."""

    order = 2
    warped = False

    def __init__(self, c, d):
        BiquadCoeffs(c, d)
        self.c = c
        self.d = d
        self.reset()

    def reset(self):
        self.v1 = 0.0
        self.v2 = 0.0

    def step(self, x):
        y = self.c * x + self.v1
        self.v1 = self.d * x + self.v2 - self.d * y
        self.v2 = x - self.c * y
        return y

    def process(self, x):
        return _run(self, x)


class WarpedBiquadAPF:
    """Second-order all-pass on a warped frequency axis (warp factor a)."""

    order = 2
    warped = True

    def __init__(self, c, d, a):
        BiquadCoeffs(c, d)
        if not np.all(np.abs(np.asarray(a)) < 1.0):
            raise FilterError(f"warp factor out of (-1, 1): a={a}")
        den = 1.0 + a * a * c + a * d
        if np.min(np.abs(np.asarray(den))) < 1e-12:
            raise FilterError(
                f"degenerate warped section: 1 + a^2 c + a d ~ 0 "
                f"for c={c}, d={d}, a={a}")
        self.c = c
        self.d = d
        self.a = a
        self.den = den
        self.kxy = c + a * a + a * d
        self.k1 = 2.0 * a + d + a * c
        self.k2 = 1.0 - a * a
        self.k3 = 2.0 * a * c + d + a
        self.a2 = a * a
        self.a3 = a * a * a
        self.reset()

    def reset(self):
        self.v1 = 0.0
        self.v2 = 0.0

    def step(self, x):
        y = (x * self.kxy + self.v1) / self.den
        t = x - self.c * y
        self.v1 = ((x * self.k1 + self.v2 * self.k2) - y * self.k3) - self.a3 * t
        self.v2 = t - (self.a2 * t + self.a * self.v2)
        return y

    def process(self, x):
        return _run(self, x)


class FirstOrderAPF:
    """First-order all-pass (p + z^-1)/(1 + p z^-1) in transposed form."""

    order = 1
    warped = False

    def __init__(self, p):
        if not np.all(np.abs(np.asarray(p)) < 1.0):
            raise FilterError(f"pole out of (-1, 1): p={p}")
        self.p = p
        self.reset()

    def reset(self):
        self.s = 0.0

    def step(self, x):
        y = self.p * x + self.s
        self.s = x - self.p * y
        return y

    def process(self, x):
        return _run(self, x)


class WarpedFirstOrderAPF:
    """First-order all-pass with its delay replaced by the warp all-pass."""

    order = 1
    warped = True

    def __init__(self, p, a):
        if not np.all(np.abs(np.asarray(p)) < 1.0):
            raise FilterError(f"pole out of (-1, 1): p={p}")
        if not np.all(np.abs(np.asarray(a)) < 1.0):
            raise FilterError(f"warp factor out of (-1, 1): a={a}")
        den = 1.0 + p * a
        if np.min(np.abs(np.asarray(den))) < 1e-12:
            raise FilterError(
                f"degenerate warped section: 1 + p a ~ 0 for p={p}, a={a}")
        self.p = p
        self.a = a
        self.den = den
        self.kx = p + a
        self.a2 = a * a
        self.reset()

    def reset(self):
        self.s = 0.0

    def step(self, x):
        y = (x * self.kx + self.s) / self.den
        t = x - self.p * y
        self.s = t - (self.a2 * t + self.a * self.s)
        return y

    def process(self, x):
        return _run(self, x)


def _run(section, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x, dtype=np.float64)
    step = section.step
    for n in range(x.shape[0]):
        out[n] = step(x[n])
    return out


# ---------------------------------------------------------------------------
# Cascade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionSpec:
    """Order (1 or 2) and warping flag of one cascade slot."""

    order: int
    warped: bool = True

    def __post_init__(self):
        if self.order not in (1, 2):
            raise FilterError(f"section order must be 1 or 2, got {self.order}")

    @property
    def param_names(self):
        if self.order == 2:
            return ("R", "fc", "a") if self.warped else ("R", "fc")
        return ("pole", "a") if self.warped else ("pole",)


DEFAULT_ORDER_SPEC = (
    SectionSpec(2, True),
    SectionSpec(2, True),
    SectionSpec(2, True),
    SectionSpec(1, True),
)


def make_section(spec: SectionSpec, params: dict, sample_rate: float):
    """Build a plain section from a parameter dict ({R, fc, a} or {pole, a})."""
    if spec.order == 2:
        coeffs = compute_biquad_coeffs(
            APFParams(params["R"], params["fc"], params.get("a", 0.0)),
            sample_rate)
        if spec.warped:
            return WarpedBiquadAPF(coeffs.c, coeffs.d, params["a"])
        return BiquadAPF(coeffs.c, coeffs.d)
    if spec.warped:
        return WarpedFirstOrderAPF(params["pole"], params["a"])
    return FirstOrderAPF(params["pole"])


class Cascade:
    """Ordered chain of all-pass sections; output of one feeds the next."""

    def __init__(self, sections):
        self.sections = list(sections)

    @classmethod
    def from_params(cls, specs, params_list, sample_rate):
        if len(specs) != len(params_list):
            raise FilterError("order spec and parameter list length mismatch")
        return cls(make_section(s, p, sample_rate)
                   for s, p in zip(specs, params_list))

    @property
    def total_order(self):
        return sum(s.order for s in self.sections)

    def reset(self):
        for s in self.sections:
            s.reset()

    def process_array(self, x):
        y = np.asarray(x, dtype=np.float64)
        for i, section in enumerate(self.sections):
            try:
                section.reset()
                y = section.process(y)
            except Exception as exc:
                raise FilterError(f"section {i}: {exc}") from exc
        return y

    def process(self, signal):
        from .signals import Signal
        return Signal(self.process_array(signal.samples), signal.sample_rate)


def random_cascade(rng, specs=DEFAULT_ORDER_SPEC, sample_rate=48000,
                   r_range=(0.2, 0.9), fc_range=(50.0, 16000.0),
                   a_range=(-0.5, 0.5), pole_range=(-0.9, 0.9)):
    """Draw a random stable cascade (log-uniform break frequencies)."""
    params_list = []
    for spec in specs:
        p = {}
        if spec.order == 2:
            p["R"] = rng.uniform(*r_range)
            p["fc"] = math.exp(rng.uniform(math.log(fc_range[0]),
                                           math.log(fc_range[1])))
        else:
            p["pole"] = rng.uniform(*pole_range)
        if spec.warped:
            p["a"] = rng.uniform(*a_range)
        params_list.append(p)
    return Cascade.from_params(specs, params_list, sample_rate), params_list


# ---------------------------------------------------------------------------
# Response helpers
# ---------------------------------------------------------------------------

def impulse_response(processor, n: int):
    imp = np.zeros(n)
    imp[0] = 1.0
    if hasattr(processor, "process_array"):
        return processor.process_array(imp)
    processor.reset()
    return processor.process(imp)


def frequency_response(processor, n_fft: int, sample_rate: float):
    """(freqs_hz, complex response) from an n_fft-tap impulse response."""
    ir = impulse_response(processor, n_fft)
    h = np.fft.rfft(ir, axis=0)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    return freqs, h


def analytic_warped_biquad_response(c, d, a, w):
    """Oracle: A2(z) with z^-1 replaced by the warp all-pass, on the unit circle."""
    zinv = np.exp(-1j * np.asarray(w))
    D = (a + zinv) / (1.0 + a * zinv)
    return (c + d * D + D * D) / (1.0 + d * D + c * D * D)


def analytic_warped_first_order_response(p, a, w):
    zinv = np.exp(-1j * np.asarray(w))
    D = (a + zinv) / (1.0 + a * zinv)
    return (p + D) / (1.0 + p * D)


# ---------------------------------------------------------------------------
# RC low-pass reference target
# ---------------------------------------------------------------------------

class RCFilter:
    """Bilinear-discretized first-order RC low-pass.

    y[n] = (rho*(x[n] + x[n-1]) + (1 - rho)*y[n-1]) / (1 + rho)

    ``rho = 1/(2*fs*R*C)`` makes this the exact bilinear transform of the
    analog RC circuit with unity DC gain.  ``paper_literal_rho`` switches to
    the dimensionally odd ``rho = fs/(2*R*C)`` variant for comparison runs.
    """

    def __init__(self, sample_rate: float, resistance: float = 120.0,
                 capacitance: float = 68e-9, paper_literal_rho: bool = False):
        if resistance <= 0 or capacitance <= 0 or sample_rate <= 0:
            raise FilterError("resistance, capacitance and rate must be positive")
        if paper_literal_rho:
            self.rho = sample_rate / (2.0 * resistance * capacitance)
        else:
            self.rho = 1.0 / (2.0 * sample_rate * resistance * capacitance)
        self.resistance = resistance
        self.capacitance = capacitance
        self.sample_rate = sample_rate
        self.reset()

    def reset(self):
        self.prev_in = 0.0
        self.prev_out = 0.0

    def step(self, x):
        rho = self.rho
        y = (rho * (x + self.prev_in) + (1.0 - rho) * self.prev_out) / (1.0 + rho)
        self.prev_in = x
        self.prev_out = y
        return y

    def process_array(self, x):
        self.reset()
        x = np.asarray(x, dtype=np.float64)
        out = np.empty_like(x)
        step = self.step
        for n in range(x.shape[0]):
            out[n] = step(x[n])
        return out

    def process(self, signal):
        from .signals import Signal
        return Signal(self.process_array(signal.samples), signal.sample_rate)

    def analytic_response(self, freqs_hz):
        """Oracle: the bilinear transfer function evaluated directly."""
        z = np.exp(2j * math.pi * np.asarray(freqs_hz) / self.sample_rate)
        rho = self.rho
        return rho * (1.0 + 1.0 / z) / ((1.0 + rho) + (rho - 1.0) / z)


# ---------------------------------------------------------------------------
# Tape builders (training path)
# ---------------------------------------------------------------------------

def tape_biquad_coeffs(R, fc, sample_rate):
    """Differentiable c = R^2, d = -2 R cos(2 pi fc / fs)."""
    c = ad.mul(R, R)
    d = ad.mul(ad.mul(R, -2.0), ad.cos(ad.mul(fc, 2.0 * math.pi / sample_rate)))
    return c, d


def _rows(xs):
    """Yield (is_node, row) pairs for list-of-node or const-matrix input."""
    if isinstance(xs, np.ndarray):
        return False, [xs[t] for t in range(xs.shape[0])]
    return True, xs


def tape_run_biquad(c, d, xs):
    mul, add, sub, fma = ad.mul, ad.add, ad.sub, ad.fma
    node_in, rows = _rows(xs)
    v1 = ad.mul(c, 0.0)
    v2 = v1
    out = []
    append = out.append
    if node_in:
        for x in rows:
            y = fma(x, c, v1)
            w = fma(x, d, v2)
            v1 = sub(w, mul(d, y))
            v2 = sub(x, mul(c, y))
            append(y)
    else:
        for x in rows:
            y = add(mul(c, x), v1)
            w = add(mul(d, x), v2)
            v1 = sub(w, mul(d, y))
            v2 = sub(x, mul(c, y))
            append(y)
    return out


def tape_run_warped_biquad(c, d, a, xs):
    mul, add, sub, fma = ad.mul, ad.add, ad.sub, ad.fma
    a2 = mul(a, a)
    a3 = mul(a2, a)
    den = add(add(1.0, mul(a2, c)), mul(a, d))
    if np.min(np.abs(np.asarray(den.value))) < 1e-12:
        raise FilterError(
            f"degenerate warped section: 1 + a^2 c + a d ~ 0 for "
            f"c={c.value}, d={d.value}, a={a.value}")
    inv = ad.div(1.0, den)
    kxy = add(add(c, a2), mul(a, d))
    # state update with the a^3*(x - c*y) term folded into the x/y factors:
    # v1' = x*(2a + d + ac - a^3) - y*(2ac + d + a - a^3 c) + v2*(1 - a^2)
    k1 = sub(add(add(mul(a, 2.0), d), mul(a, c)), a3)
    k2 = sub(1.0, a2)
    k3 = sub(add(add(mul(mul(a, 2.0), c), d), a), mul(a3, c))
    node_in, rows = _rows(xs)
    v1 = mul(c, 0.0)
    v2 = v1
    out = []
    append = out.append
    if node_in:
        for x in rows:
            y = mul(fma(x, kxy, v1), inv)
            t = sub(x, mul(c, y))
            v1 = sub(fma(v2, k2, mul(x, k1)), mul(y, k3))
            v2 = sub(t, fma(v2, a, mul(a2, t)))
            append(y)
    else:
        for x in rows:
            y = mul(add(mul(kxy, x), v1), inv)
            t = sub(x, mul(c, y))
            v1 = sub(fma(v2, k2, mul(k1, x)), mul(y, k3))
            v2 = sub(t, fma(v2, a, mul(a2, t)))
            append(y)
    return out


def tape_run_first_order(p, xs):
    mul, add, sub, fma = ad.mul, ad.add, ad.sub, ad.fma
    node_in, rows = _rows(xs)
    s = mul(p, 0.0)
    out = []
    append = out.append
    if node_in:
        for x in rows:
            y = fma(x, p, s)
            s = sub(x, mul(p, y))
            append(y)
    else:
        for x in rows:
            y = add(mul(p, x), s)
            s = sub(x, mul(p, y))
            append(y)
    return out


def tape_run_warped_first_order(p, a, xs):
    mul, add, sub, fma = ad.mul, ad.add, ad.sub, ad.fma
    a2 = mul(a, a)
    den = add(1.0, mul(p, a))
    if np.min(np.abs(np.asarray(den.value))) < 1e-12:
        raise FilterError(
            f"degenerate warped section: 1 + p a ~ 0 for p={p.value}, a={a.value}")
    inv = ad.div(1.0, den)
    kx = add(p, a)
    node_in, rows = _rows(xs)
    s = mul(p, 0.0)
    out = []
    append = out.append
    if node_in:
        for x in rows:
            y = mul(fma(x, kx, s), inv)
            t = sub(x, mul(p, y))
            s = sub(t, fma(s, a, mul(a2, t)))
            append(y)
    else:
        for x in rows:
            y = mul(add(mul(kx, x), s), inv)
            t = sub(x, mul(p, y))
            s = sub(t, fma(s, a, mul(a2, t)))
            append(y)
    return out


def tape_run_section(spec: SectionSpec, param_nodes: dict, xs, sample_rate):
    """Unroll one section; ``param_nodes`` maps spec.param_names to Nodes."""
    if spec.order == 2:
        c, d = tape_biquad_coeffs(param_nodes["R"], param_nodes["fc"], sample_rate)
        if spec.warped:
            return tape_run_warped_biquad(c, d, param_nodes["a"], xs)
        return tape_run_biquad(c, d, xs)
    if spec.warped:
        return tape_run_warped_first_order(param_nodes["pole"], param_nodes["a"], xs)
    return tape_run_first_order(param_nodes["pole"], xs)


def tape_run_cascade(specs, param_nodes_list, xs, sample_rate):
    """Chain section graphs; each consumes the previous section's outputs."""
    ys = xs
    for i, (spec, nodes) in enumerate(zip(specs, param_nodes_list)):
        try:
            ys = tape_run_section(spec, nodes, ys, sample_rate)
        except FilterError as exc:
            raise FilterError(f"section {i}: {exc}") from exc
    return ys
