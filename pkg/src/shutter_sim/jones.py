"""Jones vectors, Jones matrices and the multi-rail field container.

Amplitudes are classical field amplitudes and intensities are their squared
moduli.  For the linear elements used here this is interchangeable with the
single-photon description of the same device.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

NORM_TOL = 1e-12
# amplitudes below this are "nothing arrived" when tagging path deviations
EMPTY_AMPLITUDE = 1e-12

_SQRT_HALF = math.sqrt(0.5)


def _require_finite(*values: complex) -> None:
    for z in values:
        if not cmath.isfinite(z):
            raise ValueError(f"non-finite amplitude: {z!r}")


@dataclass(frozen=True)
class JonesVector:
    """Fully polarized field ``amp_h * H + amp_v * V``."""

    amp_h: complex = 0j
    amp_v: complex = 0j

    def __post_init__(self) -> None:
        object.__setattr__(self, "amp_h", complex(self.amp_h))
        object.__setattr__(self, "amp_v", complex(self.amp_v))
        _require_finite(self.amp_h, self.amp_v)

    @classmethod
    def normalized(cls, amp_h: complex, amp_v: complex) -> "JonesVector":
        """Rescale ``(amp_h, amp_v)`` to unit intensity."""
        norm = abs(complex(amp_h)) ** 2 + abs(complex(amp_v)) ** 2
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        s = 1.0 / math.sqrt(norm)
        return cls(amp_h * s, amp_v * s)

    @classmethod
    def from_array(cls, a) -> "JonesVector":
        a = np.asarray(a, dtype=complex)
        return cls(a[0], a[1])

    def to_array(self) -> np.ndarray:
        return np.array([self.amp_h, self.amp_v], dtype=complex)

    def scaled(self, z: complex) -> "JonesVector":
        return JonesVector(self.amp_h * z, self.amp_v * z)

    def __add__(self, other: "JonesVector") -> "JonesVector":
        return JonesVector(self.amp_h + other.amp_h, self.amp_v + other.amp_v)

    def is_zero(self, tol: float = 0.0) -> bool:
        return abs(self.amp_h) <= tol and abs(self.amp_v) <= tol

    @property
    def intensity(self) -> float:
        return intensity(self)


ZERO = JonesVector()

BASIS_STATES: dict[str, JonesVector] = {
    "H": JonesVector(1, 0),
    "V": JonesVector(0, 1),
    "+": JonesVector(_SQRT_HALF, _SQRT_HALF),
    "-": JonesVector(_SQRT_HALF, -_SQRT_HALF),
    "R": JonesVector(_SQRT_HALF, -1j * _SQRT_HALF),
    "L": JonesVector(_SQRT_HALF, 1j * _SQRT_HALF),
}
_ALIASES = {"D": "+", "A": "-"}


def basis_state(label: str) -> JonesVector:
    """Named polarization: H, V, + (or D), - (or A), R, L."""
    key = _ALIASES.get(label, label)
    try:
        return BASIS_STATES[key]
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def orthogonal(v: JonesVector) -> JonesVector:
    """The polarization orthogonal to ``v`` with the same intensity."""
    return JonesVector(-v.amp_v.conjugate(), v.amp_h.conjugate())


@dataclass(frozen=True)
class JonesMatrix:
    m_hh: complex = 1 + 0j
    m_hv: complex = 0j
    m_vh: complex = 0j
    m_vv: complex = 1 + 0j

    def __post_init__(self) -> None:
        for name in ("m_hh", "m_hv", "m_vh", "m_vv"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        _require_finite(self.m_hh, self.m_hv, self.m_vh, self.m_vv)

    @classmethod
    def identity(cls) -> "JonesMatrix":
        return cls()

    @classmethod
    def diagonal(cls, d_h: complex, d_v: complex) -> "JonesMatrix":
        return cls(d_h, 0, 0, d_v)

    @classmethod
    def from_array(cls, a) -> "JonesMatrix":
        a = np.asarray(a, dtype=complex)
        if a.shape != (2, 2):
            raise ValueError(f"expected a 2x2 array, got shape {a.shape}")
        return cls(a[0, 0], a[0, 1], a[1, 0], a[1, 1])

    def to_array(self) -> np.ndarray:
        return np.array([[self.m_hh, self.m_hv], [self.m_vh, self.m_vv]], dtype=complex)

    def scaled(self, z: complex) -> "JonesMatrix":
        return JonesMatrix(self.m_hh * z, self.m_hv * z, self.m_vh * z, self.m_vv * z)

    def is_lossless(self, tol: float = NORM_TOL) -> bool:
        a = self.to_array()
        return bool(np.all(np.abs(a.conj().T @ a - np.eye(2)) <= tol))


def apply(m: JonesMatrix, v: JonesVector) -> JonesVector:
    return JonesVector(
        m.m_hh * v.amp_h + m.m_hv * v.amp_v,
        m.m_vh * v.amp_h + m.m_vv * v.amp_v,
    )


def compose(m2: JonesMatrix, m1: JonesMatrix) -> JonesMatrix:
    """Matrix product ``m2 @ m1``: ``m1`` acts first."""
    return JonesMatrix(
        m2.m_hh * m1.m_hh + m2.m_hv * m1.m_vh,
        m2.m_hh * m1.m_hv + m2.m_hv * m1.m_vv,
        m2.m_vh * m1.m_hh + m2.m_vv * m1.m_vh,
        m2.m_vh * m1.m_hv + m2.m_vv * m1.m_vv,
    )


def intensity(v: JonesVector) -> float:
    return v.amp_h.real**2 + v.amp_h.imag**2 + v.amp_v.real**2 + v.amp_v.imag**2


def inner(a: JonesVector, b: JonesVector) -> complex:
    """``<a|b>``, conjugate-linear in ``a``."""
    return a.amp_h.conjugate() * b.amp_h + a.amp_v.conjugate() * b.amp_v


def analyzer_intensities(v: JonesVector, reference: JonesVector) -> tuple[float, float]:
    """Split ``intensity(v)`` into the part along ``reference`` and the orthogonal rest.

    ``reference`` must be normalized.  Round-off negatives are clamped to zero.
    """
    if abs(intensity(reference) - 1.0) > NORM_TOL:
        raise ValueError(
            f"analyzer reference must be normalized (intensity {intensity(reference)!r})"
        )
    i_par = abs(inner(reference, v)) ** 2
    i_perp = intensity(v) - i_par
    if i_perp < 0:
        i_perp = 0.0
    return i_par, i_perp


def global_phase_normalize(v: JonesVector) -> JonesVector:
    """Rotate the global phase so the first nonzero component is real positive."""
    lead = v.amp_h if v.amp_h != 0 else v.amp_v
    if lead == 0:
        return v
    w = v.scaled(abs(lead) / lead)
    # pin the reference component to the real axis exactly
    if v.amp_h != 0:
        return JonesVector(abs(lead), w.amp_v)
    return JonesVector(0j, abs(lead))


@dataclass(frozen=True)
class RailState:
    """Fields on discrete transverse rails.

    ``rails`` maps a rail index to its Jones vector; absent rails are empty.
    ``rail_pitch`` is the lateral spacing of neighbouring rails in mm and
    ``path_length`` counts, per rail, how many deviated (extraordinary)
    passages the light there has taken.
    """

    rails: Mapping[int, JonesVector] = field(default_factory=dict)
    rail_pitch: float = 4.0
    path_length: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for r in self.rails:
            if not isinstance(r, (int, np.integer)):
                raise TypeError(f"rail index must be an integer, got {r!r}")
        for r, n in self.path_length.items():
            if n < 0:
                raise ValueError(f"negative deviation count {n} on rail {r}")
        if not self.rail_pitch > 0:
            raise ValueError("rail_pitch must be positive")

    @classmethod
    def single(cls, v: JonesVector, rail: int = 0, rail_pitch: float = 4.0) -> "RailState":
        return cls({rail: v}, rail_pitch, {rail: 0})

    def __getitem__(self, rail: int) -> JonesVector:
        return self.rails.get(rail, ZERO)

    def occupied(self, tol: float = 0.0) -> list[int]:
        return sorted(r for r, v in self.rails.items() if not v.is_zero(tol))

    def total_intensity(self) -> float:
        return total_intensity(self)


def total_intensity(s: RailState) -> float:
    return sum(intensity(v) for v in s.rails.values())


def random_state(rng: np.random.Generator, rails: Iterable[int] = (0,)) -> RailState:
    """Random complex amplitudes on ``rails`` with unit total intensity."""
    rails = list(rails)
    z = rng.normal(size=(len(rails), 2)) + 1j * rng.normal(size=(len(rails), 2))
    z /= np.linalg.norm(z)
    return RailState({r: JonesVector(*z[i]) for i, r in enumerate(rails)},
                     path_length={r: 0 for r in rails})
