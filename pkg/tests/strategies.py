"""Shared hypothesis strategies."""
import math

import numpy as np
from hypothesis import strategies as st

from shutter_sim.jones import JonesVector

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
unit_interval = st.floats(0.0, 1.0)


@st.composite
def jones_vectors(draw, normalized=True):
    parts = [draw(st.floats(-1, 1)) for _ in range(4)]
    if normalized and math.hypot(*parts) < 1e-3:
        parts = [1.0, 0.0, 0.0, 0.0]
    v = JonesVector(complex(parts[0], parts[1]), complex(parts[2], parts[3]))
    return JonesVector.normalized(v.amp_h, v.amp_v) if normalized else v


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# -- bench documents ---------------------------------------------------------

from fractions import Fraction  # noqa: E402

from shutter_sim import bench  # noqa: E402

_UNBOUNDED = (Fraction(-10**6), Fraction(10**6), False, False)
_BOUNDS = {
    "transmission": (Fraction(0), Fraction(1), True, False),
    "leak_h": (Fraction(0), Fraction(1, 20), False, False),
    "leak_v": (Fraction(0), Fraction(1, 20), False, False),
    "f_diag": (Fraction(1, 2), Fraction(1), True, False),
    "f_hv": (Fraction(0), Fraction(1), True, False),
    "t_on": (Fraction(0), Fraction(1), True, False),
    "t_off_h": (Fraction(0), Fraction(1), False, True),
    "t_off_v": (Fraction(0), Fraction(1), False, True),
}
_POSITIVE = (Fraction(0), Fraction(10**6), True, False)
_NONNEG = (Fraction(0), Fraction(10**6), False, False)


def _bounds(key: str, spec) -> tuple:
    if key in _BOUNDS:
        return _BOUNDS[key]
    if spec.rule == "must be positive":
        return _POSITIVE
    if spec.rule == "must be non-negative":
        return _NONNEG
    return _UNBOUNDED


@st.composite
def _decimal_in(draw, lo, hi, lo_open, hi_open):
    k = draw(st.integers(0, 6))
    scale = 10**k
    a = math.ceil(lo * scale) + (1 if lo_open and (lo * scale).denominator == 1 else 0)
    b = math.floor(hi * scale) - (1 if hi_open and (hi * scale).denominator == 1 else 0)
    if a > b:
        k, scale = 6, 10**6
        a = math.ceil(lo * scale) + (1 if lo_open else 0)
        b = math.floor(hi * scale) - (1 if hi_open else 0)
    return Fraction(draw(st.integers(a, b)), scale)


@st.composite
def _value(draw, key: str, spec):
    if spec.kind in bench.IDENTS:
        return draw(st.sampled_from(bench.IDENTS[spec.kind]))
    if spec.kind == "int_list":
        return tuple(Fraction(x) for x in draw(st.lists(st.integers(0, 9), min_size=1,
                                                        max_size=3)))
    if spec.kind == "count":
        lo = {"steps": 2, "triggers": 1}.get(key, 0)
        return bench.Quantity(Fraction(draw(st.integers(lo, 10**5))))
    mag = draw(_decimal_in(*_bounds(key, spec)))
    if spec.kind == "number":
        return bench.Quantity(mag)
    dims = ("angle", "angle_deg") if spec.kind == "angle" else (spec.kind,)
    unit = draw(st.sampled_from([u for u, (d, _) in bench.UNITS.items() if d in dims]))
    dim, factor = bench.UNITS[unit]
    return bench.Quantity(mag * factor, bench.UNIT_FAMILIES[dim][0])


@st.composite
def _assignments(draw, scope: str, required=()):
    keys = list(bench.SCHEMA[scope])
    chosen = draw(st.lists(st.sampled_from(keys), unique=True, max_size=len(keys)))
    chosen += [k for k in required if k not in chosen]
    if "chi" in chosen:
        chosen = [k for k in chosen if k not in ("chi_o", "chi_e")]
    return tuple(bench.Assignment(k, draw(_value(k, bench.SCHEMA[scope][k]))) for k in chosen)


@st.composite
def bench_documents(draw):
    elements = tuple(
        bench.ElementDecl(kind, draw(_assignments(kind)))
        for kind in draw(st.lists(st.sampled_from(bench.ELEMENT_KINDS), min_size=1, max_size=6)))
    sections = [bench.Section("device", elements)]
    for name in ("source", "trigger"):
        sections.append(bench.Section(name, draw(_assignments(name))))
    if draw(st.booleans()):
        sections.append(bench.Section("sweep", draw(_assignments("sweep"))))
    if draw(st.booleans()):
        sections.append(bench.Section(
            "targets", draw(_assignments("targets", required=tuple(bench.SCHEMA["targets"])))))
    order = draw(st.permutations(range(len(sections))))
    return bench.BenchDocument(tuple(sections[i] for i in order))
