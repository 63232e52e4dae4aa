import math
from fractions import Fraction

import pytest
from hypothesis import given, settings

from shutter_sim import bench
from shutter_sim.bench import BenchError, Quantity, format_decimal, parse, serialize
from shutter_sim.elements import BeamDisplacer, Pinhole, ShutterParams, Waveplate
from shutter_sim.jones import basis_state
from strategies import bench_documents

MINIMAL = "device {\n    displacer\n}\nsource {}\ntrigger {}\n"


def error_of(text: str) -> BenchError:
    with pytest.raises(BenchError) as info:
        parse(text)
    return info.value


def test_shipped_default_builds_the_shutter(default_bench_path):
    setup = bench.build(bench.load(default_bench_path))
    kinds = [type(e).__name__ for e in setup.device.elements]
    assert kinds == ["BeamDisplacer", "PockelsStatic", "BeamDisplacer", "Pinhole", "Waveplate"]
    assert setup.device.rail_pitch == 4.0
    assert setup.cell.drive.v_peak == 3200.0
    assert setup.cell.drive.t_flat == 10e-9
    assert setup.cell.drive.tau_decay == 500e-9
    assert setup.source.rep_rate == 250e3
    assert setup.trigger_frequency == 1e3
    assert setup.source.wavelength == 800.0
    assert setup.device.elements[4].angle == pytest.approx(math.pi / 4)


def test_inline_example_parses():
    doc = parse("device { displacer d=4mm chi=0rad ; pockels vhalf=3200V ; displacer d=4mm "
                "tilt=0rad ; pinhole rails=[1] ; hwp angle=45deg }\n"
                "source { rep_rate=250kHz wavelength=800nm polarization=H }\n"
                "trigger { freq=1kHz vpeak=3200V flat=10ns tau=500ns jitter=1.5ns }\n")
    assert len(doc.section("device").entries) == 5


def test_default_round_trip_is_a_fixed_point(default_bench_path):
    doc = bench.load(default_bench_path)
    once = serialize(doc)
    assert parse(once) == doc
    assert serialize(parse(once)) == once


@pytest.mark.parametrize("text, expected", [
    ("0.004m", "4mm"),
    ("4000um", "4mm"),
    ("0.0000015s", "1.5us"),
    ("3200V", "3.2kV"),
    ("1000Hz", "1kHz"),
    ("0.08rad", "80mrad"),
    ("45deg", "45deg"),
    ("0", "0"),
    ("0ns", "0ns"),
    ("-2.50", "-2.5"),
])
def test_unit_canonicalization(text, expected):
    assert bench.format_quantity(bench.parse_quantity(text)) == expected


def test_micro_sign_spellings():
    assert bench.parse_quantity("3µm") == bench.parse_quantity("3um") == \
        bench.parse_quantity("3μm") == Quantity(Fraction(3, 1000), "mm")


def test_conversion_is_exact():
    assert bench.parse_quantity("0.1us").magnitude == 100
    assert bench.parse_quantity("1e-3mm") == bench.parse_quantity("1um")
    assert bench.parse_quantity("7nm").magnitude == Fraction(7, 10**6)


def test_format_decimal():
    assert format_decimal(Fraction(1, 8)) == "0.125"
    assert format_decimal(Fraction(-3, 2)) == "-1.5"
    assert format_decimal(Fraction(1200)) == "1200"
    with pytest.raises(ValueError):
        format_decimal(Fraction(1, 3))


def test_comments_and_separators():
    doc = parse("# header\ndevice { # inline\n displacer d=4mm; pockels\n}\n"
                "source { polarization=- }\ntrigger { freq=2kHz; flat=5ns }\n")
    assert doc.values("source")["polarization"] == "-"
    assert doc.values("trigger")["freq"] == Quantity(Fraction(2000), "Hz")


def test_equality_ignores_locations():
    a = parse(MINIMAL)
    b = parse("\n\n" + MINIMAL.replace("    ", "  "))
    assert a == b
    assert a.section("device").line != b.section("device").line


@pytest.mark.parametrize("text, line, col, fragment", [
    ("", 1, 1, "empty"),
    ("\n\n  # only a comment\n", 1, 1, "empty"),
    ("device {}\ndevice {}\nsource{}\ntrigger{}", 2, 1, "line 1"),
    ("device {\n  displacer d=4kg\n}", 2, 15, "'kg'"),
    ("device {\n  displacer d=4ns\n}", 2, 13, "unit mismatch"),
    ("device {\n  displacer d=4\n}", 2, 13, "needs a unit"),
    ("device {\n  displacer colour=4\n}", 2, 13, "unknown key"),
    ("device {\n  lens f=4mm\n}", 2, 3, "unknown element"),
    ("device {\n  d=4mm\n}", 2, 3, "expected an element"),
    ("widgets {\n}", 1, 1, "unknown section"),
    ("device {\n  displacer d 4mm\n}", 2, 15, "'='"),
    ("device {\n  displacer d=4mm @\n}", 2, 19, "unexpected character"),
    ("device {\n  displacer leak_h=0.2\n}\nsource{}\ntrigger{}", 2, 13, "[0, 0.05]"),
    ("device {\n  displacer\n}\nsource{}\ntrigger{ tau=-5ns }", 5, 10, "positive"),
    ("device {\n  displacer\n", 3, 1, "never closed"),
    ("device {\n  displacer chi=1rad chi_o=1rad\n}\nsource{}\ntrigger{}", 2, 3, "chi"),
    ("device {\n  displacer d=4mm d=5mm\n}", 2, 19, "duplicate"),
    ("device {\n  pinhole rails=[1.5]\n}\nsource{}\ntrigger{}", 2, 11, "integers"),
    ("device {\n  pinhole rails=[1mm]\n}", 2, 18, "no unit"),
    (MINIMAL + "targets { t_on=1.2 }", 6, 11, "(0, 1]"),
    (MINIMAL + "targets { t_on=0.9 }", 6, 1, "missing"),
    ("device {\n  displacer\n}\nsource{}", 1, 1, "'trigger'"),
    ("device {\n  displacer\n} source{}", 3, 3, "end of line"),
    ("device {\n  displacer\n}\nsource{ polarization=Q }\ntrigger{}", 4, 9, "one of"),
    ("device {\n  displacer\n}\nsource{}\ntrigger{ triggers=1.5 }", 5, 10, "integer"),
])
def test_diagnostics_carry_location(text, line, col, fragment):
    err = error_of(text)
    assert (err.line, err.col) == (line, col), str(err)
    assert fragment in err.message
    assert str(err).startswith(f"{line}:{col}: ")


def test_duplicate_section_names_both_locations():
    err = error_of("device {}\nsource{}\n\ndevice {}\ntrigger{}")
    assert "line 1" in err.message and "line 4" in err.message


def test_build_maps_every_element():
    doc = parse("device {\n displacer d=2mm chi_o=0.1rad chi_e=0.2rad tilt=30mrad "
                "transmission=0.9 leak_h=0.01 leak_v=0.02\n pockels vhalf=3kV "
                "transmission=0.95\n pinhole rails=[0, 2]\n hwp angle=0rad retardance=90deg\n"
                " analyzer angle=90deg\n}\nsource { polarization=R intensity=2 }\n"
                "trigger { ring_amp=0.1rad ring_freq=2MHz tau_rec=1ms residual=1mrad }\n")
    s = bench.build(doc)
    d, pc, ph, hwp, an = s.device.elements
    assert d == BeamDisplacer(0.1, 0.2, 0.03, 2.0, 0.9, 0.01, 0.02)
    assert pc.transmission == 0.95 and s.cell.halfwave_voltage == 3000.0
    assert ph == Pinhole(frozenset({0, 2}))
    assert hwp == Waveplate(math.pi / 2, 0.0, 1.0)
    assert an.angle == pytest.approx(math.pi / 2)
    assert s.source.polarization == basis_state("R") and s.source.intensity == 2.0
    assert s.cell.ringing.omega == pytest.approx(2 * math.pi * 2e6)
    assert s.cell.recovery.tau_recovery == pytest.approx(1e-3)
    assert s.cell.recovery.residual == pytest.approx(1e-3)


def test_build_rejects_inconsistent_devices():
    with pytest.raises(BenchError):
        bench.build(parse("device {\n displacer d=4mm\n displacer d=3mm\n}\nsource{}\n"
                          "trigger{}"))
    with pytest.raises(BenchError):
        bench.build(parse("device {\n pockels vhalf=1kV\n pockels vhalf=2kV\n}\nsource{}\n"
                          "trigger{}"))
    with pytest.raises(BenchError):
        bench.build(parse(MINIMAL + "sweep { start=10kHz stop=1kHz }"))


def test_calibrated_document_writes_fitted_parameters(default_bench_path):
    doc = bench.load(default_bench_path)
    p = ShutterParams(phase_error=0.42, leakage_h=0.002, leakage_v=0.001,
                      displacer_transmission=0.99, pockels_transmission=0.98,
                      waveplate_transmission=0.97, waveplate_retardance=3.05)
    back = ShutterParams.from_device(bench.build(bench.calibrated_document(doc, p)).device)
    assert back == p
    # the text form carries the same floats exactly
    again = parse(serialize(bench.calibrated_document(doc, p)))
    assert ShutterParams.from_device(bench.build(again).device) == p


@settings(max_examples=200, deadline=None)
@given(bench_documents())
def test_generated_documents_round_trip(doc):
    bench.validate(doc)
    text = serialize(doc)
    assert parse(text) == doc
    assert serialize(parse(text)) == text
