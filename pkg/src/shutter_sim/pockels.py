"""Time-dependent Pockels-cell retardance.

All times are in seconds.  The retardance of the cell is the sum, over every
trigger fired so far, of the electro-optic response to the drive pulse, the
damped piezoelectric ringing of the crystal, and a slowly relaxing recovery
residual; the total is clamped to ``[0, 2*pi]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

TWO_PI = 2 * math.pi


class JitterCollisionError(ValueError):
    """Jittered trigger times are no longer strictly increasing."""


@dataclass(frozen=True)
class DriveWaveform:
    v_peak: float = 3200.0
    t_flat: float = 10e-9
    tau_decay: float = 500e-9
    jitter_sigma: float = 1.5e-9

    def __post_init__(self) -> None:
        if not self.v_peak > 0:
            raise ValueError("v_peak must be positive")
        if not self.t_flat >= 0:
            raise ValueError("t_flat must be non-negative")
        if not self.tau_decay > 0:
            raise ValueError("tau_decay must be positive")
        if not self.jitter_sigma >= 0:
            raise ValueError("jitter_sigma must be non-negative")


@dataclass(frozen=True)
class RingingModel:
    """Damped acoustic oscillation of the crystal, in retardance units."""

    amplitude: float = 0.0
    omega: float = TWO_PI * 1e6
    tau_damp: float = 1e-6
    phase0: float = 0.0
    onset_delay: float = 10e-9

    def __post_init__(self) -> None:
        if not self.amplitude >= 0:
            raise ValueError("ringing amplitude must be non-negative")
        if not self.tau_damp > 0:
            raise ValueError("tau_damp must be positive")
        if not self.onset_delay >= 0:
            raise ValueError("onset_delay must be non-negative")


@dataclass(frozen=True)
class RecoveryModel:
    """Per-trigger residual retardance relaxing with ``tau_recovery``."""

    tau_recovery: float = 100e-6
    residual: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau_recovery > 0:
            raise ValueError("tau_recovery must be positive")
        if not self.residual >= 0:
            raise ValueError("residual must be non-negative")


# Ringing and recovery constants are not given numerically by the measurement;
# these satisfy the 100x extinction after 4 us and the monotone rate trend.
CALIBRATED_RINGING = RingingModel(amplitude=0.6, omega=TWO_PI * 1e6, tau_damp=1e-6,
                                  phase0=0.0, onset_delay=10e-9)
CALIBRATED_RECOVERY = RecoveryModel(tau_recovery=100e-6, residual=0.08)


@dataclass(frozen=True)
class CellState:
    trigger_times: tuple[float, ...] = ()
    drive: DriveWaveform = field(default_factory=DriveWaveform)
    ringing: RingingModel = field(default_factory=RingingModel)
    recovery: RecoveryModel = field(default_factory=RecoveryModel)
    halfwave_voltage: float = 3200.0

    def __post_init__(self) -> None:
        times = tuple(float(t) for t in self.trigger_times)
        object.__setattr__(self, "trigger_times", times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trigger_times must be strictly increasing")
        if not self.halfwave_voltage > 0:
            raise ValueError("halfwave_voltage must be positive")

    def with_triggers(self, times: Sequence[float]) -> "CellState":
        return replace(self, trigger_times=tuple(times))

    @property
    def memory(self) -> float:
        """Age beyond which a trigger's contribution underflows to exactly zero."""
        longest = max(self.drive.tau_decay, self.ringing.tau_damp, self.recovery.tau_recovery)
        # exp(-746) is 0.0 in double precision
        return 746.0 * longest + self.drive.t_flat + self.ringing.onset_delay


def drive_voltage(w: DriveWaveform, dt):
    """High-voltage pulse: flat top of ``t_flat`` then exponential decay."""
    dt = np.asarray(dt, dtype=float)
    tail = w.v_peak * np.exp(-np.maximum(dt - w.t_flat, 0.0) / w.tau_decay)
    v = np.where(dt < 0, 0.0, tail)
    return v if v.ndim else float(v)


def retardance_of_voltage(v, v_halfwave: float):
    """Linear electro-optic response: ``pi`` at the half-wave voltage."""
    if not v_halfwave > 0:
        raise ValueError("v_halfwave must be positive")
    return math.pi * np.asarray(v, dtype=float) / v_halfwave if np.ndim(v) \
        else math.pi * float(v) / v_halfwave


def ringing_retardance(r: RingingModel, dt):
    dt = np.asarray(dt, dtype=float)
    age = np.maximum(dt - r.onset_delay, 0.0)
    ring = r.amplitude * np.exp(-age / r.tau_damp) * np.cos(r.omega * age + r.phase0)
    out = np.where(dt < r.onset_delay, 0.0, ring)
    return out if out.ndim else float(out)


def _residual(c: CellState, dt):
    # the residual appears once the drive has left its flat top
    rec = c.recovery
    decay = rec.residual * np.exp(-np.maximum(dt, 0.0) / rec.tau_recovery)
    return np.where(dt > c.drive.t_flat, decay, 0.0)


def effective_retardance(c: CellState, t):
    """Cell retardance at absolute time(s) ``t``, clamped to ``[0, 2*pi]``."""
    t = np.asarray(t, dtype=float)
    if not c.trigger_times:
        out = np.zeros_like(t)
        return out if out.ndim else float(out)
    tk = np.asarray(c.trigger_times)
    dt = t[..., None] - tk
    phi = (retardance_of_voltage(drive_voltage(c.drive, dt), c.halfwave_voltage)
           + ringing_retardance(c.ringing, dt)
           + _residual(c, dt))
    phi = np.where(dt >= 0, phi, 0.0).sum(axis=-1)
    out = np.clip(phi, 0.0, TWO_PI)
    return out if out.ndim else float(out)


def sample_trigger_times(requested: Sequence[float], jitter_sigma: float,
                         rng_seed: int | np.random.SeedSequence = 0) -> tuple[float, ...]:
    """Shift each requested time by Gaussian jitter from a seeded generator."""
    req = np.asarray(requested, dtype=float)
    if req.ndim != 1:
        raise ValueError("requested trigger times must be one-dimensional")
    if np.any(np.diff(req) <= 0):
        raise ValueError("requested trigger times must be strictly increasing")
    if jitter_sigma < 0:
        raise ValueError("jitter_sigma must be non-negative")
    if jitter_sigma == 0:
        return tuple(float(t) for t in req)
    rng = np.random.default_rng(rng_seed)
    out = req + rng.normal(0.0, jitter_sigma, size=req.shape)
    bad = np.flatnonzero(np.diff(out) <= 0)
    if bad.size:
        i = int(bad[0])
        raise JitterCollisionError(
            f"jitter reorders triggers {i} and {i + 1} ({out[i]!r} >= {out[i + 1]!r})")
    return tuple(float(t) for t in out)
