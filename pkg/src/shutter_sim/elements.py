"""Optical components acting on multi-rail states, and the shutter assembly.

Every element maps a :class:`RailState` to a tuple of mutually incoherent
branches.  Only the beam displacer ever returns more than one branch: light
that takes the wrong path through the calcite is carried as a separate
branch, so intensities of branches add and the energy ledger stays exact.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Union

from .jones import (
    EMPTY_AMPLITUDE,
    JonesMatrix,
    JonesVector,
    RailState,
    apply,
    total_intensity,
)

QUARTER_TURN = math.pi / 4
MAX_LEAKAGE = 0.05


def waveplate_matrix(retardance: float, angle: float) -> JonesMatrix:
    """Lossless linear retarder with its fast axis at ``angle`` from H.

    Equals ``R(angle) @ diag(exp(-i d/2), exp(+i d/2)) @ R(-angle)``.
    """
    c = math.cos(retardance / 2)
    s = math.sin(retardance / 2)
    c2 = math.cos(2 * angle)
    s2 = math.sin(2 * angle)
    return JonesMatrix(c - 1j * s * c2, -1j * s * s2, -1j * s * s2, c + 1j * s * c2)


def polarizer_matrix(angle: float) -> JonesMatrix:
    c, s = math.cos(angle), math.sin(angle)
    return JonesMatrix(c * c, c * s, c * s, s * s)


def _check_transmission(t: float) -> None:
    if not 0 < t <= 1:
        raise ValueError(f"transmission must lie in (0, 1], got {t!r}")


def _per_rail(m: JonesMatrix, s: RailState) -> RailState:
    return RailState({r: apply(m, v) for r, v in s.rails.items()}, s.rail_pitch,
                     dict(s.path_length))


@dataclass(frozen=True)
class BeamDisplacer:
    """Calcite beam displacer: H passes straight, V steps one rail up.

    ``leakage_h`` / ``leakage_v`` are the intensity fractions of each
    polarization that take the other polarization's path; that light forms
    its own incoherent branch.
    """

    chi_o: float = 0.0
    chi_e: float = 0.0
    tilt_phase: float = 0.0
    displacement: float = 4.0
    transmission: float = 1.0
    leakage_h: float = 0.0
    leakage_v: float = 0.0

    def __post_init__(self) -> None:
        _check_transmission(self.transmission)
        for name in ("leakage_h", "leakage_v"):
            lk = getattr(self, name)
            if not 0 <= lk <= MAX_LEAKAGE:
                raise ValueError(f"{name} must lie in [0, {MAX_LEAKAGE}], got {lk!r}")
        if not self.displacement > 0:
            raise ValueError("displacement must be positive")
        for name in ("chi_o", "chi_e", "tilt_phase"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def lossless(self) -> bool:
        return self.transmission == 1 and self.leakage_h == 0 and self.leakage_v == 0

    def kraus_pairs(self) -> list[tuple[tuple[complex, complex], tuple[complex, complex]]]:
        """(stay, shift) diagonal coefficients for each branch, main branch first."""
        amp = math.sqrt(self.transmission)
        straight = amp * cmath.exp(1j * self.chi_o)
        deviated = amp * cmath.exp(1j * (self.chi_e + self.tilt_phase))
        lh, lv = self.leakage_h, self.leakage_v
        pairs = [((math.sqrt(1 - lh) * straight, 0j), (0j, math.sqrt(1 - lv) * deviated))]
        if lh > 0 or lv > 0:
            pairs.append(((0j, math.sqrt(lv) * straight), (math.sqrt(lh) * deviated, 0j)))
        return pairs

    def act(self, s: RailState) -> tuple[RailState, ...]:
        return displacer_apply(self, s)


def _deposit(out: dict, dev: dict, rail: int, amp_h: complex, amp_v: complex, count: int) -> None:
    acc = out.setdefault(rail, [0j, 0j])
    acc[0] += amp_h
    acc[1] += amp_v
    if abs(amp_h) > EMPTY_AMPLITUDE or abs(amp_v) > EMPTY_AMPLITUDE:
        dev[rail] = max(dev[rail], count) if rail in dev else count


def _route(s: RailState, stay, shift) -> RailState:
    out: dict[int, list[complex]] = {}
    dev: dict[int, int] = {}
    for r in sorted(s.rails):
        v = s.rails[r]
        n = s.path_length.get(r, 0)
        _deposit(out, dev, r, stay[0] * v.amp_h, stay[1] * v.amp_v, n)
        _deposit(out, dev, r + 1, shift[0] * v.amp_h, shift[1] * v.amp_v, n + 1)
    return RailState({r: JonesVector(*a) for r, a in out.items()}, s.rail_pitch, dev)


def displacer_apply(d: BeamDisplacer, s: RailState) -> tuple[RailState, ...]:
    """Route every rail through the displacer; one state per branch."""
    return tuple(_route(s, stay, shift) for stay, shift in d.kraus_pairs())


@dataclass(frozen=True)
class Waveplate:
    retardance: float = math.pi
    angle: float = QUARTER_TURN
    transmission: float = 1.0

    def __post_init__(self) -> None:
        _check_transmission(self.transmission)

    def matrix(self) -> JonesMatrix:
        return waveplate_matrix(self.retardance, self.angle).scaled(math.sqrt(self.transmission))

    def act(self, s: RailState) -> tuple[RailState, ...]:
        return (_per_rail(self.matrix(), s),)


@dataclass(frozen=True)
class PockelsStatic:
    """Pockels cell frozen at one retardance; optical axis fixed at 45 degrees."""

    retardance: float = 0.0
    transmission: float = 1.0

    def __post_init__(self) -> None:
        _check_transmission(self.transmission)

    def matrix(self) -> JonesMatrix:
        return waveplate_matrix(self.retardance, QUARTER_TURN).scaled(math.sqrt(self.transmission))

    def act(self, s: RailState) -> tuple[RailState, ...]:
        return (pockels_apply(self, s),)


def pockels_apply(p: PockelsStatic, s: RailState) -> RailState:
    return _per_rail(p.matrix(), s)


@dataclass(frozen=True)
class Pinhole:
    allowed_rails: frozenset[int] = frozenset({1})
    transmission = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "allowed_rails", frozenset(self.allowed_rails))

    def act(self, s: RailState) -> tuple[RailState, ...]:
        return (pinhole_apply(self, s),)


def pinhole_apply(ph: Pinhole, s: RailState) -> RailState:
    keep = ph.allowed_rails
    return RailState({r: v for r, v in s.rails.items() if r in keep}, s.rail_pitch,
                     {r: n for r, n in s.path_length.items() if r in keep})


@dataclass(frozen=True)
class Analyzer:
    """Ideal linear polarizer passing polarization at ``angle`` on every rail."""

    angle: float = 0.0
    transmission = 1.0

    def act(self, s: RailState) -> tuple[RailState, ...]:
        return (_per_rail(polarizer_matrix(self.angle), s),)


Element = Union[BeamDisplacer, Waveplate, PockelsStatic, Pinhole, Analyzer]
PROJECTORS = (Pinhole, Analyzer)


@dataclass(frozen=True)
class Propagation:
    """Output branches plus the intensity stopped by pinholes and analyzers.

    ``blocked`` is referred to the device output: light stopped at some
    element is scaled by the transmissions of the elements after it, so that
    ``transmitted + blocked`` equals input intensity times the transmission
    product of the device.
    """

    branches: tuple[RailState, ...]
    blocked: float

    @property
    def transmitted(self) -> float:
        return sum(total_intensity(b) for b in self.branches)


@dataclass(frozen=True)
class Device:
    elements: tuple[Element, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        pitches = {e.displacement for e in self.elements if isinstance(e, BeamDisplacer)}
        if len(pitches) > 1:
            raise ValueError(f"beam displacers disagree on displacement: {sorted(pitches)}")

    @property
    def rail_pitch(self) -> float:
        for e in self.elements:
            if isinstance(e, BeamDisplacer):
                return e.displacement
        return 4.0

    @property
    def transmission_product(self) -> float:
        return math.prod(e.transmission for e in self.elements)

    @property
    def pockels_count(self) -> int:
        return sum(isinstance(e, PockelsStatic) for e in self.elements)

    def with_retardance(self, retardance: float) -> "Device":
        return Device(tuple(replace(e, retardance=retardance) if isinstance(e, PockelsStatic)
                            else e for e in self.elements))

    def propagate(self, state: RailState, retardance: float | None = None) -> Propagation:
        elements = self.with_retardance(retardance).elements if retardance is not None \
            else self.elements
        branches = (state,)
        blocked = 0.0
        for el in elements:
            nxt = tuple(out for b in branches for out in el.act(b))
            if isinstance(el, PROJECTORS):
                blocked += (sum(total_intensity(b) for b in branches)
                            - sum(total_intensity(b) for b in nxt))
            else:
                blocked *= el.transmission
            branches = nxt
        return Propagation(branches, blocked)


@dataclass(frozen=True)
class ShutterParams:
    """Parameters of the two-displacer shutter.

    ``phase_error`` is the residual phase between the two interferometer
    arms, set through the tilt of the second displacer.
    """

    displacement: float = 4.0
    chi_o: float = 0.0
    chi_e: float = 0.0
    phase_error: float = 0.0
    leakage_h: float = 0.0
    leakage_v: float = 0.0
    displacer_transmission: float = 1.0
    pockels_transmission: float = 1.0
    waveplate_transmission: float = 1.0
    waveplate_retardance: float = math.pi

    @classmethod
    def from_device(cls, device: Device) -> "ShutterParams":
        """Recover parameters from a device with the standard shutter layout."""
        kinds = [type(e) for e in device.elements]
        if kinds != [BeamDisplacer, PockelsStatic, BeamDisplacer, Pinhole, Waveplate]:
            raise ValueError("device is not a displacer/pockels/displacer/pinhole/hwp shutter")
        d1, pc, d2, ph, hwp = device.elements
        if ph.allowed_rails != frozenset({1}):
            raise ValueError("shutter pinhole must pass rail 1 only")
        if (d1.leakage_h, d1.leakage_v, d1.transmission) != \
                (d2.leakage_h, d2.leakage_v, d2.transmission):
            raise ValueError("shutter displacers must share leakage and transmission")
        if not math.isclose(hwp.angle, QUARTER_TURN, abs_tol=1e-12):
            raise ValueError("output waveplate must sit at 45 degrees")
        return cls(
            displacement=d1.displacement,
            chi_o=d1.chi_o,
            chi_e=d1.chi_e,
            phase_error=arm_phase_difference(device),
            leakage_h=d1.leakage_h,
            leakage_v=d1.leakage_v,
            displacer_transmission=d1.transmission,
            pockels_transmission=pc.transmission,
            waveplate_transmission=hwp.transmission,
            waveplate_retardance=hwp.retardance,
        )


def build_shutter(params: ShutterParams = ShutterParams()) -> Device:
    """Displacer, Pockels cell, displacer, pinhole on rail 1, half-wave plate at 45 degrees."""
    common = dict(chi_o=params.chi_o, chi_e=params.chi_e, displacement=params.displacement,
                  transmission=params.displacer_transmission,
                  leakage_h=params.leakage_h, leakage_v=params.leakage_v)
    return Device((
        BeamDisplacer(**common),
        PockelsStatic(0.0, params.pockels_transmission),
        BeamDisplacer(tilt_phase=params.phase_error, **common),
        Pinhole(frozenset({1})),
        Waveplate(params.waveplate_retardance, QUARTER_TURN, params.waveplate_transmission),
    ))


def arm_phase_difference(device: Device) -> float:
    """Phase of the H-input arm minus the V-input arm in the ON configuration.

    The H component is straight in the first displacer and deviated in the
    second; the V component the other way round.
    """
    d1, d2 = [e for e in device.elements if isinstance(e, BeamDisplacer)][:2]
    return (d1.chi_o + d2.chi_e + d2.tilt_phase) - (d1.chi_e + d1.tilt_phase + d2.chi_o)
