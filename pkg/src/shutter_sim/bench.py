"""Bench description format: parse, validate, serialize, and build engine inputs.

A bench file is a sequence of brace-delimited sections::

    device {
        displacer d=4mm
        pockels vhalf=3200V
        displacer d=4mm tilt=0rad
        pinhole rails=[1]
        hwp angle=45deg
    }
    source { rep_rate=250kHz wavelength=800nm polarization=H }
    trigger { freq=1kHz vpeak=3200V flat=10ns tau=500ns jitter=1.5ns }

Entries end at a newline or ``;`` and ``#`` starts a comment.  Quantities
are stored exactly (as fractions) in canonical units: mm, ns, V, Hz, and
rad, with degrees kept as their own exact angle unit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Union

from .elements import (
    Analyzer,
    BeamDisplacer,
    Device,
    Pinhole,
    PockelsStatic,
    ShutterParams,
    Waveplate,
    arm_phase_difference,
)
from .engine import SourceConfig
from .jones import basis_state
from .metrics import CalibrationTargets
from .pockels import CellState, DriveWaveform, RecoveryModel, RingingModel


class BenchError(ValueError):
    """Diagnostic tied to a line and column of the bench text."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


# unit -> (dimension, factor to the canonical unit of that dimension)
UNITS: dict[str, tuple[str, Fraction]] = {
    "m": ("length", Fraction(1000)),
    "cm": ("length", Fraction(10)),
    "mm": ("length", Fraction(1)),
    "um": ("length", Fraction(1, 10**3)),
    "nm": ("length", Fraction(1, 10**6)),
    "s": ("time", Fraction(10**9)),
    "ms": ("time", Fraction(10**6)),
    "us": ("time", Fraction(10**3)),
    "ns": ("time", Fraction(1)),
    "ps": ("time", Fraction(1, 10**3)),
    "fs": ("time", Fraction(1, 10**6)),
    "V": ("voltage", Fraction(1)),
    "kV": ("voltage", Fraction(10**3)),
    "mV": ("voltage", Fraction(1, 10**3)),
    "Hz": ("frequency", Fraction(1)),
    "kHz": ("frequency", Fraction(10**3)),
    "MHz": ("frequency", Fraction(10**6)),
    "GHz": ("frequency", Fraction(10**9)),
    "rad": ("angle", Fraction(1)),
    "mrad": ("angle", Fraction(1, 10**3)),
    "urad": ("angle", Fraction(1, 10**6)),
    "deg": ("angle_deg", Fraction(1)),
}
_MICRO = {"µ": "u", "μ": "u"}
# serialization candidates, canonical unit first
UNIT_FAMILIES: dict[str, tuple[str, ...]] = {
    "length": ("mm", "m", "cm", "um", "nm"),
    "time": ("ns", "s", "ms", "us", "ps", "fs"),
    "voltage": ("V", "kV", "mV"),
    "frequency": ("Hz", "kHz", "MHz", "GHz"),
    "angle": ("rad", "mrad", "urad"),
    "angle_deg": ("deg",),
}
DIMENSION_NAMES = {"length": "a length", "time": "a time", "voltage": "a voltage",
                   "frequency": "a frequency", "angle": "an angle", "angle_deg": "an angle"}

SECTION_NAMES = ("device", "source", "trigger", "sweep", "targets")
REQUIRED_SECTIONS = ("device", "source", "trigger")
ELEMENT_KINDS = ("displacer", "pockels", "hwp", "pinhole", "analyzer")


def _canonical_unit(text: str) -> str:
    for k, v in _MICRO.items():
        if text.startswith(k):
            text = v + text[len(k):]
    return text


@dataclass(frozen=True)
class Quantity:
    magnitude: Fraction
    unit: str = ""

    @property
    def dimension(self) -> str:
        return UNITS[self.unit][0] if self.unit else "number"

    def to_float(self) -> float:
        """Magnitude in engine units: mm, s, V, Hz, rad, or plain number."""
        if self.unit == "ns":
            return float(self.magnitude / 10**9)
        if self.unit == "deg":
            return math.radians(float(self.magnitude))
        return float(self.magnitude)


Value = Union[Quantity, tuple, str]


@dataclass(frozen=True)
class Assignment:
    key: str
    value: Value
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ElementDecl:
    kind: str
    params: tuple[Assignment, ...] = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Section:
    name: str
    entries: tuple = ()
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BenchDocument:
    sections: tuple[Section, ...]

    def section(self, name: str) -> Section | None:
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def values(self, name: str) -> dict[str, Value]:
        sec = self.section(name)
        return {a.key: a.value for a in sec.entries} if sec else {}


# ---------------------------------------------------------------- lexing

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>[\n;])
  | (?P<lbrace>\{) | (?P<rbrace>\}) | (?P<lbrack>\[) | (?P<rbrack>\])
  | (?P<comma>,) | (?P<eq>=)
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)(?P<unit>[A-Za-zµμ]+)?
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*|[+-])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int
    unit: str | None = None


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise BenchError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup if m.lastgroup != "unit" else "number"
        if kind == "number":
            unit = m.group("unit")
            toks.append(_Tok("number", m.group("number"), line, col, unit))
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, col))
        if m.group() == "\n":
            line += 1
            line_start = m.end()
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------- parsing

_DESCRIBE = {"nl": "end of line", "eof": "end of input", "lbrace": "'{'", "rbrace": "'}'",
             "lbrack": "'['", "rbrack": "']'", "comma": "','", "eq": "'='"}


def _describe(t: _Tok) -> str:
    if t.kind in ("word", "number"):
        return repr(t.text + (t.unit or ""))
    return _DESCRIBE[t.kind]


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str, what: str) -> _Tok:
        t = self.peek()
        if t.kind != kind:
            raise BenchError(f"expected {what}, found {_describe(t)}", t.line, t.col)
        return self.take()

    def skip_newlines(self) -> None:
        while self.peek().kind == "nl":
            self.i += 1

    def document(self) -> list[Section]:
        self.skip_newlines()
        if self.peek().kind == "eof":
            raise BenchError("empty document: expected a section such as 'device {'", 1, 1)
        sections = []
        while self.peek().kind != "eof":
            sections.append(self.section())
            self.skip_newlines()
        return sections

    def section(self) -> Section:
        name = self.expect("word", "a section name")
        if name.text not in SECTION_NAMES:
            raise BenchError(f"unknown section {name.text!r} (expected one of "
                             f"{', '.join(SECTION_NAMES)})", name.line, name.col)
        self.expect("lbrace", f"'{{' after {name.text!r}")
        entries = []
        while True:
            self.skip_newlines()
            t = self.peek()
            if t.kind == "rbrace":
                self.take()
                break
            if t.kind == "eof":
                raise BenchError(f"section {name.text!r} opened at line {name.line} is never "
                                 f"closed", t.line, t.col)
            if name.text == "device":
                entries.append(self.element())
            else:
                entries.extend(self.assignments())
        end = self.peek()
        if end.kind not in ("nl", "eof"):
            raise BenchError(f"expected end of line after '}}', found {_describe(end)}",
                             end.line, end.col)
        return Section(name.text, tuple(entries), name.line, name.col)

    def element(self) -> ElementDecl:
        kind = self.expect("word", "an element")
        if kind.text not in ELEMENT_KINDS:
            if self.peek().kind == "eq":
                raise BenchError(f"expected an element before {kind.text!r}=...",
                                 kind.line, kind.col)
            raise BenchError(f"unknown element {kind.text!r} (expected one of "
                             f"{', '.join(ELEMENT_KINDS)})", kind.line, kind.col)
        params = []
        while self.peek().kind not in ("nl", "rbrace", "eof"):
            params.append(self.assignment())
        return ElementDecl(kind.text, tuple(params), kind.line, kind.col)

    def assignments(self) -> list[Assignment]:
        out = [self.assignment()]
        while self.peek().kind not in ("nl", "rbrace", "eof"):
            out.append(self.assignment())
        return out

    def assignment(self) -> Assignment:
        key = self.expect("word", "a key")
        self.expect("eq", f"'=' after {key.text!r}")
        t = self.peek()
        if t.kind == "number":
            return Assignment(key.text, self.quantity(self.take()), key.line, key.col)
        if t.kind == "word":
            return Assignment(key.text, self.take().text, key.line, key.col)
        if t.kind == "lbrack":
            self.take()
            items = [self.plain_number()]
            while self.peek().kind == "comma":
                self.take()
                items.append(self.plain_number())
            self.expect("rbrack", "',' or ']'")
            return Assignment(key.text, tuple(items), key.line, key.col)
        raise BenchError(f"expected a value for {key.text!r}, found {_describe(t)}",
                         t.line, t.col)

    def plain_number(self) -> Fraction:
        t = self.expect("number", "a number")
        if t.unit:
            raise BenchError(f"list entries take no unit, found {t.text + t.unit!r}",
                             t.line, t.col)
        return Fraction(t.text)

    @staticmethod
    def quantity(t: _Tok) -> Quantity:
        value = Fraction(t.text)
        if not t.unit:
            return Quantity(value, "")
        unit = _canonical_unit(t.unit)
        if unit not in UNITS:
            raise BenchError(f"unknown unit {t.unit!r} in {t.text + t.unit!r}", t.line, t.col)
        dim, factor = UNITS[unit]
        return Quantity(value * factor, UNIT_FAMILIES[dim][0])


# ---------------------------------------------------------------- schema

Check = Callable[[float], bool]


@dataclass(frozen=True)
class _Key:
    kind: str  # a dimension, "number", "count", "int_list", or an ident set name
    check: Check | None = None
    rule: str = ""


_POSITIVE = (lambda x: x > 0, "must be positive")
_NONNEG = (lambda x: x >= 0, "must be non-negative")
_UNIT_OPEN = (lambda x: 0 < x <= 1, "must lie in (0, 1]")

SCHEMA: dict[str, dict[str, _Key]] = {
    "displacer": {
        "d": _Key("length", *_POSITIVE),
        "chi": _Key("angle"),
        "chi_o": _Key("angle"),
        "chi_e": _Key("angle"),
        "tilt": _Key("angle"),
        "transmission": _Key("number", *_UNIT_OPEN),
        "leak_h": _Key("number", lambda x: 0 <= x <= 0.05, "must lie in [0, 0.05]"),
        "leak_v": _Key("number", lambda x: 0 <= x <= 0.05, "must lie in [0, 0.05]"),
    },
    "pockels": {
        "vhalf": _Key("voltage", *_POSITIVE),
        "transmission": _Key("number", *_UNIT_OPEN),
    },
    "hwp": {
        "angle": _Key("angle"),
        "retardance": _Key("angle"),
        "transmission": _Key("number", *_UNIT_OPEN),
    },
    "pinhole": {"rails": _Key("int_list")},
    "analyzer": {"angle": _Key("angle")},
    "source": {
        "rep_rate": _Key("frequency", *_POSITIVE),
        "wavelength": _Key("length", *_POSITIVE),
        "bandwidth": _Key("length", *_NONNEG),
        "polarization": _Key("polarization"),
        "intensity": _Key("number", *_POSITIVE),
    },
    "trigger": {
        "freq": _Key("frequency", *_POSITIVE),
        "vpeak": _Key("voltage", *_POSITIVE),
        "flat": _Key("time", *_NONNEG),
        "tau": _Key("time", *_POSITIVE),
        "jitter": _Key("time", *_NONNEG),
        "ring_amp": _Key("angle", *_NONNEG),
        "ring_freq": _Key("frequency", *_NONNEG),
        "ring_tau": _Key("time", *_POSITIVE),
        "ring_phase": _Key("angle"),
        "ring_delay": _Key("time", *_NONNEG),
        "tau_rec": _Key("time", *_POSITIVE),
        "residual": _Key("angle", *_NONNEG),
        "triggers": _Key("count", lambda x: x >= 1, "must be at least 1"),
        "warmup": _Key("count", lambda x: x >= 0, "must be non-negative"),
    },
    "sweep": {
        "mode": _Key("mode"),
        "start": _Key("frequency", *_POSITIVE),
        "stop": _Key("frequency", *_POSITIVE),
        "steps": _Key("count", lambda x: x >= 2, "must be at least 2"),
        "window": _Key("time", *_POSITIVE),
        "resolution": _Key("time", *_POSITIVE),
    },
    "targets": {
        "f_diag": _Key("number", lambda x: 0.5 < x <= 1, "must lie in (0.5, 1]"),
        "f_hv": _Key("number", *_UNIT_OPEN),
        "t_on": _Key("number", *_UNIT_OPEN),
        "t_off_h": _Key("number", lambda x: 0 <= x < 1, "must lie in [0, 1)"),
        "t_off_v": _Key("number", lambda x: 0 <= x < 1, "must lie in [0, 1)"),
    },
}
IDENTS = {
    "polarization": ("H", "V", "+", "-", "D", "A", "R", "L"),
    "mode": ("time", "frequency"),
}


def _check_assignment(scope: str, a: Assignment) -> None:
    keys = SCHEMA[scope]
    if a.key not in keys:
        raise BenchError(f"unknown key {a.key!r} for {scope} (expected one of "
                         f"{', '.join(keys)})", a.line, a.col)
    spec = keys[a.key]
    v = a.value
    if spec.kind in IDENTS:
        if not isinstance(v, str) or v not in IDENTS[spec.kind]:
            raise BenchError(f"{a.key!r} must be one of {', '.join(IDENTS[spec.kind])}",
                             a.line, a.col)
        return
    if spec.kind == "int_list":
        if not isinstance(v, tuple) or any(x.denominator != 1 or x < 0 for x in v):
            raise BenchError(f"{a.key!r} must be a list of non-negative integers",
                             a.line, a.col)
        return
    if not isinstance(v, Quantity):
        raise BenchError(f"{a.key!r} must be a number", a.line, a.col)
    if spec.kind in ("number", "count"):
        if v.unit:
            raise BenchError(f"unit mismatch: {a.key!r} is dimensionless, got unit "
                             f"{v.unit!r}", a.line, a.col)
        if spec.kind == "count" and v.magnitude.denominator != 1:
            raise BenchError(f"{a.key!r} must be an integer", a.line, a.col)
    else:
        if not v.unit:
            raise BenchError(f"{a.key!r} needs a unit ({DIMENSION_NAMES[spec.kind]})",
                             a.line, a.col)
        dims = ("angle", "angle_deg") if spec.kind == "angle" else (spec.kind,)
        if v.dimension not in dims:
            raise BenchError(f"unit mismatch: {a.key!r} expects {DIMENSION_NAMES[spec.kind]}, "
                             f"got unit {v.unit!r}", a.line, a.col)
    if spec.check is not None and not spec.check(v.magnitude):
        raise BenchError(f"{a.key!r} {spec.rule}", a.line, a.col)


def _check_unique(items, what: str) -> None:
    seen: dict[str, object] = {}
    for a in items:
        if a.key in seen:
            first = seen[a.key]
            raise BenchError(f"duplicate {what} {a.key!r} (first set at line {first.line}, "
                             f"column {first.col})", a.line, a.col)
        seen[a.key] = a


def validate(doc: BenchDocument) -> None:
    """Structural and schema checks; raises :class:`BenchError`."""
    seen: dict[str, Section] = {}
    for sec in doc.sections:
        if sec.name in seen:
            first = seen[sec.name]
            raise BenchError(f"duplicate {sec.name!r} section (first at line {first.line}, "
                             f"column {first.col}; again at line {sec.line}, column "
                             f"{sec.col})", sec.line, sec.col)
        seen[sec.name] = sec
        if sec.name == "device":
            for el in sec.entries:
                _check_unique(el.params, "parameter")
                for a in el.params:
                    _check_assignment(el.kind, a)
                keys = {a.key for a in el.params}
                if "chi" in keys and keys & {"chi_o", "chi_e"}:
                    raise BenchError("'chi' sets both path phases; do not combine it with "
                                     "'chi_o' or 'chi_e'", el.line, el.col)
        else:
            _check_unique(sec.entries, "key")
            for a in sec.entries:
                _check_assignment(sec.name, a)
    for name in REQUIRED_SECTIONS:
        if name not in seen:
            raise BenchError(f"missing required {name!r} section", 1, 1)
    dev = seen["device"]
    if not dev.entries:
        raise BenchError("device section declares no elements", dev.line, dev.col)
    if "targets" in seen:
        missing = [k for k in SCHEMA["targets"] if k not in doc.values("targets")]
        if missing:
            t = seen["targets"]
            raise BenchError(f"targets section is missing {', '.join(missing)}", t.line, t.col)


def parse(text: str) -> BenchDocument:
    """Parse and validate bench text."""
    doc = BenchDocument(tuple(_Parser(_lex(text)).document()))
    validate(doc)
    return doc


def load(path) -> BenchDocument:
    with open(path, encoding="utf-8") as f:
        return parse(f.read())


# ---------------------------------------------------------------- serializing

def format_decimal(x: Fraction) -> str:
    """Exact decimal form of a fraction whose denominator divides a power of ten."""
    sign = "-" if x < 0 else ""
    x = abs(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise ValueError(f"{x} has no finite decimal expansion")
    k = max(twos, fives)
    digits = str(x.numerator * (10**k // x.denominator)).rjust(k + 1, "0")
    whole, frac = (digits[:-k], digits[-k:].rstrip("0")) if k else (digits, "")
    return sign + whole + ("." + frac if frac else "")


def format_quantity(q: Quantity) -> str:
    if not q.unit:
        return format_decimal(q.magnitude)
    family = UNIT_FAMILIES[q.dimension]
    if q.magnitude == 0:
        return "0" + family[0]

    def rank(item):
        i, unit = item
        m = q.magnitude / UNITS[unit][1]
        text = format_decimal(m)
        return (not 1 <= abs(m) < 1000, len(text), i), text + unit

    return min(rank(item) for item in enumerate(family))[1]


def format_value(v: Value) -> str:
    if isinstance(v, Quantity):
        return format_quantity(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(format_decimal(x) for x in v) + "]"
    return v


def serialize(doc: BenchDocument) -> str:
    lines: list[str] = []
    for i, sec in enumerate(doc.sections):
        if i:
            lines.append("")
        lines.append(f"{sec.name} {{")
        for e in sec.entries:
            if isinstance(e, ElementDecl):
                parts = [e.kind] + [f"{a.key}={format_value(a.value)}" for a in e.params]
                lines.append("    " + " ".join(parts))
            else:
                lines.append(f"    {e.key}={format_value(e.value)}")
        lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- building

@dataclass(frozen=True)
class SweepSettings:
    mode: str = "frequency"
    start: float = 100.0
    stop: float = 10e3
    steps: int = 9
    window: float = 6e-6
    resolution: float = 50e-9


@dataclass(frozen=True)
class Setup:
    device: Device
    source: SourceConfig
    cell: CellState
    trigger_frequency: float = 1e3
    n_triggers: int = 100
    warmup: int = 10
    sweep: SweepSettings = SweepSettings()
    targets: CalibrationTargets | None = None


def _num(params: dict, key: str, default: float) -> float:
    v = params.get(key)
    return v.to_float() if isinstance(v, Quantity) else default


def _nm(params: dict, key: str, default: float) -> float:
    v = params.get(key)
    return float(v.magnitude * 10**6) if isinstance(v, Quantity) else default


def _element(decl: ElementDecl):
    p = {a.key: a.value for a in decl.params}
    if decl.kind == "displacer":
        chi = _num(p, "chi", 0.0)
        return BeamDisplacer(
            chi_o=_num(p, "chi_o", chi), chi_e=_num(p, "chi_e", chi),
            tilt_phase=_num(p, "tilt", 0.0), displacement=_num(p, "d", 4.0),
            transmission=_num(p, "transmission", 1.0),
            leakage_h=_num(p, "leak_h", 0.0), leakage_v=_num(p, "leak_v", 0.0))
    if decl.kind == "pockels":
        return PockelsStatic(0.0, _num(p, "transmission", 1.0))
    if decl.kind == "hwp":
        return Waveplate(_num(p, "retardance", math.pi), _num(p, "angle", math.pi / 4),
                         _num(p, "transmission", 1.0))
    if decl.kind == "pinhole":
        return Pinhole(frozenset(int(x) for x in p.get("rails", (1,))))
    return Analyzer(_num(p, "angle", 0.0))


def build(doc: BenchDocument) -> Setup:
    """Engine inputs from a validated document."""
    dev_sec = doc.section("device")
    elements = []
    vhalf = None
    for decl in dev_sec.entries:
        try:
            elements.append(_element(decl))
        except ValueError as exc:
            raise BenchError(str(exc), decl.line, decl.col) from None
        if decl.kind == "pockels":
            v = _num({a.key: a.value for a in decl.params}, "vhalf", 3200.0)
            if vhalf is not None and v != vhalf:
                raise BenchError("all Pockels cells must share one half-wave voltage",
                                 decl.line, decl.col)
            vhalf = v
    try:
        device = Device(tuple(elements))
    except ValueError as exc:
        raise BenchError(str(exc), dev_sec.line, dev_sec.col) from None

    src = doc.values("source")
    source = SourceConfig(
        rep_rate=_num(src, "rep_rate", 250e3),
        wavelength=_nm(src, "wavelength", 800.0),
        bandwidth=_nm(src, "bandwidth", 1.5),
        polarization=basis_state(src.get("polarization", "H")),
        intensity=_num(src, "intensity", 1.0),
    )

    trg = doc.values("trigger")
    cell = CellState(
        drive=DriveWaveform(
            v_peak=_num(trg, "vpeak", 3200.0), t_flat=_num(trg, "flat", 10e-9),
            tau_decay=_num(trg, "tau", 500e-9), jitter_sigma=_num(trg, "jitter", 1.5e-9)),
        ringing=RingingModel(
            amplitude=_num(trg, "ring_amp", 0.0),
            omega=2 * math.pi * _num(trg, "ring_freq", 1e6),
            tau_damp=_num(trg, "ring_tau", 1e-6), phase0=_num(trg, "ring_phase", 0.0),
            onset_delay=_num(trg, "ring_delay", 10e-9)),
        recovery=RecoveryModel(tau_recovery=_num(trg, "tau_rec", 100e-6),
                               residual=_num(trg, "residual", 0.0)),
        halfwave_voltage=vhalf if vhalf is not None else 3200.0,
    )

    sw = doc.values("sweep")
    sweep = SweepSettings(
        mode=sw.get("mode", "frequency"), start=_num(sw, "start", 100.0),
        stop=_num(sw, "stop", 10e3), steps=int(_num(sw, "steps", 9)),
        window=_num(sw, "window", 6e-6), resolution=_num(sw, "resolution", 50e-9))
    if sweep.stop <= sweep.start:
        sec = doc.section("sweep")
        raise BenchError("sweep stop must exceed start", sec.line, sec.col)

    targets = None
    if doc.section("targets") is not None:
        tv = doc.values("targets")
        targets = CalibrationTargets(**{k: tv[k].to_float() for k in SCHEMA["targets"]})

    return Setup(device, source, cell, _num(trg, "freq", 1e3),
                 int(_num(trg, "triggers", 100)), int(_num(trg, "warmup", 10)),
                 sweep, targets)


def quantity(x: float, unit: str = "") -> Quantity:
    """Exact quantity from a float (shortest round-tripping decimal)."""
    return Quantity(Fraction(repr(float(x))), unit)


def _set_params(decl: ElementDecl, updates: dict[str, Value]) -> ElementDecl:
    params = [replace(a, value=updates[a.key]) if a.key in updates else a for a in decl.params]
    have = {a.key for a in decl.params}
    params += [Assignment(k, v) for k, v in updates.items() if k not in have]
    return replace(decl, params=tuple(params))


def calibrated_document(doc: BenchDocument, params: ShutterParams) -> BenchDocument:
    """Copy of ``doc`` with the shutter's fitted parameters written into the device."""
    setup = build(doc)
    current = arm_phase_difference(setup.device)
    dev_sec = doc.section("device")
    d1, pc, d2, ph, hwp = dev_sec.entries
    d2_tilt = setup.device.elements[2].tilt_phase + (params.phase_error - current)
    leak = {"transmission": quantity(params.displacer_transmission),
            "leak_h": quantity(params.leakage_h), "leak_v": quantity(params.leakage_v)}
    entries = (
        _set_params(d1, leak),
        _set_params(pc, {"transmission": quantity(params.pockels_transmission)}),
        _set_params(d2, {**leak, "tilt": quantity(d2_tilt, "rad")}),
        ph,
        _set_params(hwp, {"retardance": quantity(params.waveplate_retardance, "rad"),
                          "transmission": quantity(params.waveplate_transmission)}),
    )
    sections = tuple(replace(s, entries=entries) if s.name == "device" else s
                     for s in doc.sections)
    return BenchDocument(sections)


def parse_quantity(text: str) -> Quantity:
    """A lone number with an optional unit, e.g. ``10kHz``."""
    toks = _lex(text)
    if len(toks) != 2 or toks[0].kind != "number":
        raise BenchError(f"expected a number with an optional unit, got {text!r}", 1, 1)
    return _Parser.quantity(toks[0])
