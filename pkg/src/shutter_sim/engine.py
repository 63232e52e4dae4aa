"""Pulse-train simulation of the shutter and the two sweep experiments.

Laser pulses are instantaneous events: each one sees the Pockels cell frozen
at its retardance at the pulse time.  Two evaluation routes exist.
:func:`simulate_pulse` pushes a :class:`RailState` through every element.
:class:`DeviceResponse` exploits that, with a single 45-degree cell, the
output field is ``cos(d/2) * A + sin(d/2) * B`` for fixed fields ``A`` and
``B``; sweeps use it to evaluate hundreds of thousands of pulses at once.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .elements import (
    Analyzer,
    BeamDisplacer,
    Device,
    Pinhole,
    PockelsStatic,
    Waveplate,
    polarizer_matrix,
)
from .jones import (
    JonesVector,
    RailState,
    analyzer_intensities,
    basis_state,
    intensity,
)
from .metrics import fidelity_on, transmittivity
from .pockels import CellState, effective_retardance, sample_trigger_times

DEFAULT_LABELS = ("H", "V", "+", "-")
BASES = {"hv": ("H", "V"), "pm": ("+", "-")}


def default_threads() -> int:
    env = os.environ.get("SHUTTER_SIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"SHUTTER_SIM_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class SourceConfig:
    rep_rate: float = 250e3
    wavelength: float = 800.0
    bandwidth: float = 1.5
    polarization: JonesVector = field(default_factory=lambda: basis_state("H"))
    intensity: float = 1.0

    def __post_init__(self) -> None:
        if not self.rep_rate > 0:
            raise ValueError("rep_rate must be positive")
        if abs(intensity(self.polarization) - 1.0) > 1e-12:
            raise ValueError("source polarization must be normalized")
        if not self.intensity > 0:
            raise ValueError("source intensity must be positive")


@dataclass(frozen=True)
class PulseResult:
    time: float
    retardance: float
    outputs: tuple[JonesVector, ...]
    transmitted: float
    blocked: float
    i_par: float
    i_perp: float

    @property
    def output(self) -> JonesVector:
        """Field on the output rail in the main (non-leaked) branch."""
        return self.outputs[0]


def _input_state(device: Device, v: JonesVector, input_intensity: float) -> RailState:
    return RailState.single(v.scaled(math.sqrt(input_intensity)), 0, device.rail_pitch)


def simulate_pulse(device: Device, cell: CellState, t: float, input: JonesVector,
                   input_intensity: float = 1.0, reference: JonesVector | None = None,
                   output_rail: int = 1) -> PulseResult:
    """Propagate one pulse entering on rail 0 at time ``t``."""
    ref = reference if reference is not None else JonesVector.normalized(input.amp_h, input.amp_v)
    delta = effective_retardance(cell, t)
    prop = device.propagate(_input_state(device, input, input_intensity), delta)
    i_par = i_perp = 0.0
    for b in prop.branches:
        for v in b.rails.values():
            p, q = analyzer_intensities(v, ref)
            i_par += p
            i_perp += q
    return PulseResult(t, delta, tuple(b[output_rail] for b in prop.branches),
                       prop.transmitted, prop.blocked, i_par, i_perp)


@dataclass(frozen=True)
class TrainResult:
    times: np.ndarray
    retardance: np.ndarray
    transmitted: np.ndarray
    blocked: np.ndarray
    i_par: np.ndarray
    i_perp: np.ndarray
    input_intensity: float


def pulse_count(duration: float, rep_rate: float) -> int:
    # guard against round-off in duration * rep_rate landing just below an integer
    return math.floor(duration * rep_rate + 1e-9) + 1


def simulate_train(source: SourceConfig, device: Device, cell: CellState, duration: float,
                   t0: float = 0.0) -> TrainResult:
    """Laser pulses at ``t0 + k / rep_rate``, each through :func:`simulate_pulse`."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = pulse_count(duration, source.rep_rate)
    times = t0 + np.arange(n) / source.rep_rate
    rows = [simulate_pulse(device, cell, float(t), source.polarization, source.intensity)
            for t in times]
    return TrainResult(
        times=times,
        retardance=np.array([r.retardance for r in rows]),
        transmitted=np.array([r.transmitted for r in rows]),
        blocked=np.array([r.blocked for r in rows]),
        i_par=np.array([r.i_par for r in rows]),
        i_perp=np.array([r.i_perp for r in rows]),
        input_intensity=source.intensity,
    )


def _fields(prop, rails: Sequence[int]) -> np.ndarray:
    return np.array([[b[r].to_array() for r in rails] for b in prop.branches])


@dataclass(frozen=True)
class DeviceResponse:
    """Closed-form pulse response of a device with at most one Pockels cell.

    Stores the six quadratic-form coefficients needed for transmitted and
    analyzed intensities as a function of the cell retardance.
    """

    tot: tuple[float, float, float]
    par: tuple[float, float, float]
    constant: bool

    @classmethod
    def build(cls, device: Device, input: JonesVector, reference: JonesVector | None = None,
              input_intensity: float = 1.0) -> "DeviceResponse":
        ref = reference if reference is not None else input
        state = _input_state(device, input, input_intensity)
        n_pc = device.pockels_count
        if n_pc > 1:
            raise ValueError("closed-form response needs at most one Pockels cell")
        if n_pc == 1:
            p0 = device.propagate(state, 0.0)
            p1 = device.propagate(state, math.pi)
            rails = sorted({r for p in (p0, p1) for b in p.branches for r in b.rails})
            a = _fields(p0, rails)
            b = _fields(p1, rails) - math.cos(math.pi / 2) * a
            constant = False
        else:
            p0 = device.propagate(state)
            rails = sorted({r for b in p0.branches for r in b.rails})
            a = _fields(p0, rails)
            b = np.zeros_like(a)
            constant = True
        r = ref.to_array().conj()
        pa, pb = a @ r, b @ r
        tot = (float(np.sum(np.abs(a) ** 2)), float(np.sum(np.abs(b) ** 2)),
               float(np.sum((a.conj() * b).real)))
        par = (float(np.sum(np.abs(pa) ** 2)), float(np.sum(np.abs(pb) ** 2)),
               float(np.sum((pa.conj() * pb).real)))
        return cls(tot, par, constant)

    def evaluate(self, retardance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(transmitted, i_par, i_perp) for each retardance value."""
        d = np.asarray(retardance, dtype=float)
        if self.constant:
            c, s = np.ones_like(d), np.zeros_like(d)
        else:
            c, s = np.cos(d / 2), np.sin(d / 2)
        cc, ss, cs = c * c, s * s, 2 * c * s
        tot = cc * self.tot[0] + ss * self.tot[1] + cs * self.tot[2]
        par = cc * self.par[0] + ss * self.par[1] + cs * self.par[2]
        tot = np.maximum(tot, 0.0)
        par = np.clip(par, 0.0, tot)
        return tot, par, tot - par


def retardance_series(cell: CellState, times: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """:func:`effective_retardance` over sorted ``times``, chunked.

    Triggers older than ``cell.memory`` contribute exactly zero, so each chunk
    only looks at the triggers that can reach it.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros(0)
    trig = np.asarray(cell.trigger_times)
    out = np.empty_like(times)
    for lo in range(0, times.size, chunk):
        t = times[lo:lo + chunk]
        i0 = np.searchsorted(trig, t.min() - cell.memory, side="left")
        i1 = np.searchsorted(trig, t.max(), side="right")
        out[lo:lo + chunk] = effective_retardance(cell.with_triggers(trig[i0:i1]), t)
    return out


@dataclass(frozen=True)
class SweepResult:
    abscissa: np.ndarray
    metrics: dict[str, np.ndarray]
    seed: int | None = None
    abscissa_name: str = "x"

    def __post_init__(self) -> None:
        x = np.asarray(self.abscissa, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("sweep abscissa must be strictly increasing")
        for k, v in self.metrics.items():
            if len(v) != len(x):
                raise ValueError(f"metric {k!r} has {len(v)} points, abscissa has {len(x)}")


def sweep_time_after_trigger(device: Device, cell: CellState, window: float, resolution: float,
                             labels: Iterable[str] = DEFAULT_LABELS,
                             input_intensity: float = 1.0) -> SweepResult:
    """Transmittivity against the delay between one trigger and the laser pulse.

    Scanning the trigger phase against the 4 us laser comb maps every delay
    in ``[0, window]`` onto some pulse, sampled every ``resolution``.
    """
    if not window > 0 or not resolution > 0:
        raise ValueError("window and resolution must be positive")
    n = math.floor(window / resolution + 1e-9)
    return sweep_delays(device, cell, np.arange(n + 1) * resolution, labels, input_intensity)


def sweep_delays(device: Device, cell: CellState, delays: Sequence[float],
                 labels: Iterable[str] = DEFAULT_LABELS,
                 input_intensity: float = 1.0) -> SweepResult:
    """Transmittivity at the given delays after a single trigger at zero."""
    delays = np.asarray(delays, dtype=float)
    single = cell.with_triggers((0.0,))
    deltas = retardance_series(single, delays)
    metrics = {}
    for lab in labels:
        pol = basis_state(lab)
        tot, _, _ = DeviceResponse.build(device, pol, pol, input_intensity).evaluate(deltas)
        metrics[f"t_{lab}"] = tot / input_intensity
    return SweepResult(delays, metrics, None, "time_s")


@dataclass(frozen=True)
class SteadyState:
    """Raw intensity sums for one polarization at one trigger frequency."""

    label: str
    on_par: float
    on_perp: float
    on_count: int
    off_transmitted: float
    off_count: int
    input_intensity: float

    @property
    def f_on(self) -> float:
        return fidelity_on(self.on_par, self.on_perp)

    @property
    def t_on(self) -> float:
        return transmittivity(self.on_par, self.on_perp, self.on_count * self.input_intensity)

    @property
    def t_off(self) -> float:
        return transmittivity(self.off_transmitted, 0.0, self.off_count * self.input_intensity)


def trigger_schedule(cell: CellState, frequency: float, n_triggers: int, warmup: int,
                     seed) -> CellState:
    """Jittered triggers at ``k / frequency``, one extra to close the last period."""
    requested = np.arange(warmup + n_triggers + 1) / frequency
    return cell.with_triggers(sample_trigger_times(requested, cell.drive.jitter_sigma, seed))


def measure_steady_state(device: Device, cell: CellState, frequency: float,
                         source: SourceConfig = SourceConfig(),
                         labels: Iterable[str] = DEFAULT_LABELS,
                         n_triggers: int = 100, warmup: int = 10,
                         seed=0) -> dict[str, SteadyState]:
    """Gated and idle pulses over ``n_triggers`` periods after ``warmup`` triggers.

    The gated pulse sits ``t_flat / 2`` after each (jittered) trigger edge;
    every later laser pulse before the next trigger counts as an OFF pulse.
    """
    if not frequency > 0:
        raise ValueError("trigger frequency must be positive")
    if n_triggers < 1 or warmup < 0:
        raise ValueError("need n_triggers >= 1 and warmup >= 0")
    sched = trigger_schedule(cell, frequency, n_triggers, warmup, seed)
    trig = np.asarray(sched.trigger_times)
    lag = cell.drive.t_flat / 2
    tp = 1.0 / source.rep_rate
    on_times = trig[warmup:warmup + n_triggers] + lag
    off_chunks = []
    for k in range(warmup, warmup + n_triggers):
        start, stop = trig[k] + lag, trig[k + 1]
        j = np.arange(1, math.ceil((stop - start) / tp) + 1)
        t = start + j * tp
        off_chunks.append(t[t < stop])
    off_times = np.concatenate(off_chunks)
    if off_times.size == 0:
        raise ValueError("trigger period is shorter than the laser pulse period")
    d_on = retardance_series(sched, on_times)
    d_off = retardance_series(sched, off_times)
    out = {}
    for lab in labels:
        pol = basis_state(lab)
        resp = DeviceResponse.build(device, pol, pol, source.intensity)
        _, par, perp = resp.evaluate(d_on)
        off_tot, _, _ = resp.evaluate(d_off)
        out[lab] = SteadyState(lab, float(par.sum()), float(perp.sum()), on_times.size,
                               float(off_tot.sum()), off_times.size, source.intensity)
    return out


def sweep_trigger_frequency(device: Device, cell: CellState, frequencies: Sequence[float],
                            n_triggers: int = 100, warmup: int = 10,
                            source: SourceConfig = SourceConfig(),
                            labels: Iterable[str] = DEFAULT_LABELS, seed: int = 0,
                            threads: int | None = None) -> SweepResult:
    """Steady-state F_ON, T_ON and T_OFF per trigger frequency.

    Each point uses its own generator seeded from ``(seed, index)``; points
    run in parallel and are merged in frequency order.
    """
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.size == 0 or np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise ValueError("frequencies must be positive and strictly increasing")
    labels = tuple(labels)

    def point(i: int) -> dict[str, SteadyState]:
        return measure_steady_state(device, cell, float(freqs[i]), source, labels,
                                    n_triggers, warmup, np.random.SeedSequence([seed, i]))

    workers = threads or default_threads()
    if workers > 1 and freqs.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(point, range(freqs.size)))
    else:
        points = [point(i) for i in range(freqs.size)]

    metrics: dict[str, np.ndarray] = {}
    for name in ("f_on", "t_on", "t_off"):
        for lab in labels:
            metrics[f"{name}_{lab}"] = np.array([getattr(p[lab], name) for p in points])
        for basis, pair in BASES.items():
            if all(lab in labels for lab in pair):
                metrics[f"{name}_{basis}"] = (metrics[f"{name}_{pair[0]}"]
                                              + metrics[f"{name}_{pair[1]}"]) / 2
    return SweepResult(freqs, metrics, seed, "frequency_hz")


def _element_operators(el, n: int) -> list[np.ndarray]:
    eye = np.eye(n)
    if isinstance(el, BeamDisplacer):
        up = np.eye(n, k=-1)
        return [np.kron(eye, np.diag(stay)) + np.kron(up, np.diag(shift))
                for stay, shift in el.kraus_pairs()]
    if isinstance(el, (Waveplate, PockelsStatic)):
        return [np.kron(eye, el.matrix().to_array())]
    if isinstance(el, Pinhole):
        mask = np.array([1.0 if r in el.allowed_rails else 0.0 for r in range(n)])
        return [np.kron(np.diag(mask), np.eye(2))]
    if isinstance(el, Analyzer):
        return [np.kron(eye, polarizer_matrix(el.angle).to_array())]
    raise TypeError(f"unsupported element {el!r}")


def composed_operators(device: Device, retardance: float | None, n_rails: int) -> list[np.ndarray]:
    """Whole-device Kraus operators on ``n_rails`` rails, branch order as in propagate.

    Index ``2 * rail + pol`` with pol 0 = H, 1 = V.  Light shifted beyond the
    last rail is lost, so ``n_rails`` must cover every displacer step.
    """
    dev = device.with_retardance(retardance) if retardance is not None else device
    ops = [np.eye(2 * n_rails, dtype=complex)]
    for el in dev.elements:
        ops = [e @ k for k in ops for e in _element_operators(el, n_rails)]
    return ops


def state_vector(s: RailState, n_rails: int) -> np.ndarray:
    x = np.zeros(2 * n_rails, dtype=complex)
    for r, v in s.rails.items():
        if not 0 <= r < n_rails:
            raise ValueError(f"rail {r} outside 0..{n_rails - 1}")
        x[2 * r], x[2 * r + 1] = v.amp_h, v.amp_v
    return x
