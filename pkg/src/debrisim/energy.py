"""Per-action energy accounting, synthetic current traces and IIR filtering.

Action costs are mean values measured on the flight hardware: the CoAP
request an action issues, the energy it draws and how long it keeps the
radio busy. The synthetic trace turns a ledger into a rectangular current
waveform so it can be post-processed like a profiler capture.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

DEFAULT_SUPPLY_V = 3.3
DEFAULT_IDLE_MA = 5.0
DEFAULT_FS_HZ = 500.0
DEFAULT_CUTOFF_HZ = 50.0


class UnknownActionError(KeyError):
    pass


@dataclass(frozen=True)
class ActionCost:
    action: str
    request_bytes: int
    energy_uj: float
    duration_ms: float

    def __post_init__(self):
        if self.request_bytes <= 0 or self.energy_uj <= 0 or self.duration_ms <= 0:
            raise ValueError(f"{self.action}: costs must be positive")


DEFAULT_COSTS = (
    ActionCost("listen_gs", 70, 271.0, 14.7),
    ActionCost("announce_perform_mission", 78, 294.0, 14.7),
    ActionCost("listen_server", 70, 276.0, 14.9),
)


def default_cost_table(overrides: Optional[Mapping[str, Mapping]] = None) -> Dict[str, ActionCost]:
    table = {c.action: c for c in DEFAULT_COSTS}
    for name, values in (overrides or {}).items():
        base = table.get(name)
        merged = dict(
            request_bytes=base.request_bytes if base else None,
            energy_uj=base.energy_uj if base else None,
            duration_ms=base.duration_ms if base else None,
        )
        merged.update(values)
        if None in merged.values():
            raise ValueError(f"cost override for new action {name!r} must set every field")
        table[name] = ActionCost(name, **merged)
    return table


@dataclass(frozen=True)
class Charge:
    agent: str
    action: str
    at_ms: float
    cost: ActionCost


@dataclass
class EnergyLedger:
    table: Dict[str, ActionCost] = field(default_factory=default_cost_table)
    charges: List[Charge] = field(default_factory=list)

    def charge(self, agent: str, action: str, at_ms: float = 0.0) -> Charge:
        try:
            cost = self.table[action]
        except KeyError:
            raise UnknownActionError(action) from None
        entry = Charge(agent, action, at_ms, cost)
        self.charges.append(entry)
        return entry

    def energy_uj(self, agent: str) -> float:
        return sum(c.cost.energy_uj for c in self.charges if c.agent == agent)

    def busy_ms(self, agent: str) -> float:
        return sum(c.cost.duration_ms for c in self.charges if c.agent == agent)

    def counts(self, agent: str) -> Dict[str, int]:
        out: Dict[str, int] = defaultdict(int)
        for c in self.charges:
            if c.agent == agent:
                out[c.action] += 1
        return dict(sorted(out.items()))

    def for_agent(self, agent: str) -> List[Charge]:
        return [c for c in self.charges if c.agent == agent]


# -- current traces ------------------------------------------------------------

@dataclass
class CurrentTrace:
    """Uniformly sampled current in milliamperes."""

    fs_hz: float
    samples: np.ndarray
    t0_ms: float = 0.0

    def __post_init__(self):
        if self.fs_hz <= 0:
            raise ValueError("fs_hz must be positive")
        self.samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace samples must be finite")

    @property
    def times_ms(self) -> np.ndarray:
        return self.t0_ms + np.arange(len(self.samples)) * 1000.0 / self.fs_hz

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_ms", "current_ma"])
        for t, i in zip(self.times_ms, self.samples):
            writer.writerow([f"{t:.6f}", f"{i:.9f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, fs_hz: Optional[float] = None) -> "CurrentTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or "t_ms" not in rows[0] or "current_ma" not in rows[0]:
            raise ValueError("expected CSV header t_ms,current_ma")
        t = np.array([float(r["t_ms"]) for r in rows])
        i = np.array([float(r["current_ma"]) for r in rows])
        if fs_hz is None:
            if len(t) < 2:
                raise ValueError("cannot infer sampling rate from fewer than two rows")
            fs_hz = 1000.0 / float(np.median(np.diff(t)))
        return cls(fs_hz, i, float(t[0]))


def pulse_amplitude_ma(cost: ActionCost, supply_v: float = DEFAULT_SUPPLY_V) -> float:
    # uJ / (V * ms) = mA
    return cost.energy_uj / (supply_v * cost.duration_ms)


def synth_trace(
    charges: Iterable[Charge],
    fs_hz: float = DEFAULT_FS_HZ,
    supply_v: float = DEFAULT_SUPPLY_V,
    baseline_ma: float = DEFAULT_IDLE_MA,
    t0_ms: float = 0.0,
    t_end_ms: Optional[float] = None,
) -> CurrentTrace:
    """Rectangular pulse per charged action on top of an idle baseline.

    A sample at time t is high when ``start <= t < start + duration``.
    Pulses of one agent must not overlap.
    """
    if fs_hz <= 0 or supply_v <= 0:
        raise ValueError("fs_hz and supply_v must be positive")
    pulses = sorted(((c.at_ms, c.cost) for c in charges), key=lambda p: p[0])
    for (s0, c0), (s1, _) in zip(pulses, pulses[1:]):
        if s1 < s0 + c0.duration_ms - 1e-9:
            raise ValueError(f"overlapping pulses at {s0} ms and {s1} ms")
    if t_end_ms is None:
        t_end_ms = max((s + c.duration_ms for s, c in pulses), default=t0_ms)
    n = int(math.floor((t_end_ms - t0_ms) * fs_hz / 1000.0)) + 1
    times = t0_ms + np.arange(n) * 1000.0 / fs_hz
    samples = np.full(n, float(baseline_ma))
    for start, cost in pulses:
        high = (times >= start) & (times < start + cost.duration_ms)
        samples[high] += pulse_amplitude_ma(cost, supply_v)
    return CurrentTrace(fs_hz, samples, t0_ms)


# -- Butterworth design and filtering -------------------------------------------

@dataclass(frozen=True)
class IirCoeffs:
    b: Tuple[float, ...]
    a: Tuple[float, ...]

    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    @property
    def dc_gain(self) -> float:
        return sum(self.b) / sum(self.a)


def butterworth_lowpass(order: int, fc_hz: float, fs_hz: float) -> IirCoeffs:
    """Digital Butterworth low-pass by bilinear transform with a prewarped cutoff."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0 < fc_hz < fs_hz / 2:
        raise ValueError(f"cutoff {fc_hz} Hz must lie in (0, {fs_hz / 2}) Hz")
    k = np.arange(order)
    prototype = np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))
    warped = 2.0 * fs_hz * math.tan(math.pi * fc_hz / fs_hz)
    s_poles = warped * prototype
    z_poles = (2.0 * fs_hz + s_poles) / (2.0 * fs_hz - s_poles)
    a = np.real(np.poly(z_poles))
    b = np.real(np.poly(-np.ones(order)))
    b = b * a.sum() / b.sum()
    return IirCoeffs(tuple(float(x) for x in b), tuple(float(x) for x in a))


def lfilter(coeffs: IirCoeffs, x: Sequence[float]) -> np.ndarray:
    """Direct-form I difference equation from a zero initial state."""
    b = [v / coeffs.a[0] for v in coeffs.b]
    a = [v / coeffs.a[0] for v in coeffs.a]
    nb, na = len(b), len(a)
    xs = [float(v) for v in x]
    y = [0.0] * len(xs)
    for n in range(len(xs)):
        acc = 0.0
        for k in range(min(nb, n + 1)):
            acc += b[k] * xs[n - k]
        for k in range(1, min(na, n + 1)):
            acc -= a[k] * y[n - k]
        y[n] = acc
    return np.asarray(y)


def apply_filter(coeffs: IirCoeffs, trace: CurrentTrace) -> CurrentTrace:
    return CurrentTrace(trace.fs_hz, lfilter(coeffs, trace.samples), trace.t0_ms)


class ButterworthLowpass(TransformerMixin, BaseEstimator):
    """Causal Butterworth low-pass as a scikit-learn transformer.

    ``fit`` designs the filter; ``transform`` filters each column of ``X``
    along the sample axis (rows are samples).
    """

    def __init__(self, order: int = 4, cutoff_hz: float = DEFAULT_CUTOFF_HZ, fs_hz: float = DEFAULT_FS_HZ):
        self.order = order
        self.cutoff_hz = cutoff_hz
        self.fs_hz = fs_hz

    def fit(self, X=None, y=None):
        self.coeffs_ = butterworth_lowpass(self.order, self.cutoff_hz, self.fs_hz)
        return self

    def transform(self, X):
        check_is_fitted(self, "coeffs_")
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            return lfilter(self.coeffs_, X)
        return np.column_stack([lfilter(self.coeffs_, col) for col in X.T])
