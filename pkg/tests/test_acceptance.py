"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import csv
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings

from shutter_sim import bench
from shutter_sim.cli import main
from shutter_sim.elements import (
    Analyzer,
    BeamDisplacer,
    Device,
    Pinhole,
    PockelsStatic,
    ShutterParams,
    Waveplate,
    build_shutter,
)
from shutter_sim.engine import (
    SourceConfig,
    composed_operators,
    simulate_train,
    state_vector,
    sweep_time_after_trigger,
    sweep_trigger_frequency,
)
from shutter_sim.jones import RailState, basis_state, global_phase_normalize, random_state
from shutter_sim.metrics import MEASURED_TABLE, calibrate_phase_error, characterize
from shutter_sim.pockels import CellState, RecoveryModel, RingingModel, sample_trigger_times
from strategies import bench_documents


def _read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_1_ideal_device_identity(verdict):
    with verdict("1 ideal device returns the input state; T_ON = 1, T_OFF = 0"):
        dev = build_shutter()
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        for _ in range(1000):
            s = random_state(rng)
            on = dev.propagate(s, math.pi)
            off = dev.propagate(s, 0.0)
            assert len(on.branches) == 1
            out = global_phase_normalize(on.branches[0][1]).to_array()
            ref = global_phase_normalize(s[0]).to_array()
            assert np.abs(out - ref).max() <= 1e-10
            assert on.transmitted == pytest.approx(1.0, abs=1e-14)
            assert off.transmitted == 0.0
        assert time.perf_counter() - start < 1.0


def test_2_table_reproduction(verdict, default_bench_path, tmp_path):
    with verdict("2 calibrate + characterize reproduce the 1 kHz table within 0.002"):
        start = time.perf_counter()
        fitted = tmp_path / "fitted.bench"
        table = tmp_path / "table.csv"
        assert main(["calibrate", "--bench", default_bench_path, "--out", str(fitted)]) == 0
        assert main(["characterize", "--bench", str(fitted), "--out", str(table)]) == 0
        elapsed = time.perf_counter() - start
        rows = _read(table)
        assert len(rows) == 4
        for r in rows:
            expected = MEASURED_TABLE[r["polarization"]]
            got = (float(r["f_on"]), float(r["t_on"]), float(r["t_off"]))
            for g, e in zip(got, expected):
                assert abs(g - e) <= 0.002, (r, expected)
        mean_off = np.mean([float(r["t_off"]) for r in rows])
        assert abs(mean_off - 0.003) <= 0.001
        assert elapsed < 10.0


def test_3_diagonal_phase_sensitivity(verdict):
    with verdict("3 arm phase error lowers only the diagonal-basis fidelity"):
        dchi = 2 * math.acos(math.sqrt(0.956))
        assert calibrate_phase_error(0.956) == pytest.approx(dchi, abs=1e-15)
        dev = build_shutter(ShutterParams(phase_error=dchi))
        cell = CellState()
        recs = {r.polarization: r for r in characterize(dev, cell)}
        for lab in ("+", "-"):
            assert abs(recs[lab].f_on - 0.956) <= 0.001
        for lab in ("H", "V"):
            assert abs(recs[lab].f_on - 1.0) <= 1e-10


def test_4_ringing_extinction(verdict, calibrated_setup):
    with verdict("4 transmission 4 us after a trigger is 100x below the peak"):
        res = sweep_time_after_trigger(calibrated_setup.device, calibrated_setup.cell,
                                       10e-6, 10e-9)
        late = res.abscissa >= 4e-6
        for key, t in res.metrics.items():
            assert t.max() / t[late].max() >= 100, key

        quiet = CellState(ringing=RingingModel(amplitude=0.0),
                          recovery=RecoveryModel(residual=0.0))
        res = sweep_time_after_trigger(build_shutter(), quiet, 10e-6, 10e-9)
        late = res.abscissa >= 4e-6
        for key, t in res.metrics.items():
            assert t[late].max() <= 1e-6 * t.max(), key


def test_5_trigger_rate_trend(verdict, calibrated_setup):
    with verdict("5 fidelity falls and leakage rises with trigger rate; mean F >= 0.97"):
        s = calibrated_setup
        freqs = np.geomspace(100.0, 10e3, 9)
        res = sweep_trigger_frequency(s.device, s.cell, freqs, s.n_triggers, s.warmup,
                                      s.source, seed=0)
        for basis in ("hv", "pm"):
            f = res.metrics[f"f_on_{basis}"]
            t = res.metrics[f"t_off_{basis}"]
            assert np.all(np.diff(f) <= 1e-12), (basis, f)
            assert np.all(np.diff(t) >= -1e-12), (basis, t)
            assert f[0] - f[-1] > 0 and t[-1] - t[0] > 0
        recs = characterize(s.device, s.cell, trigger_frequency=1e3)
        assert np.mean([r.f_on for r in recs]) >= 0.97


def test_6_energy_conservation(verdict, calibrated_setup):
    with verdict("6 transmitted + blocked = input x transmission on 10^4 pulses"):
        s = calibrated_setup
        source = SourceConfig(polarization=basis_state("+"), intensity=1.7)
        duration = 9999 / source.rep_rate
        triggers = sample_trigger_times(np.arange(0.0, duration, 1e-3), 1.5e-9, 11)
        res = simulate_train(source, s.device, s.cell.with_triggers(triggers), duration)
        assert len(res.times) == 10_000
        expected = source.intensity * s.device.transmission_product
        assert np.abs(res.transmitted + res.blocked - expected).max() <= 1e-12
        assert res.transmitted.max() > 0.9


def _random_device(rng) -> Device:
    elements = []
    for _ in range(rng.integers(2, 7)):
        kind = rng.integers(5)
        if kind == 0:
            elements.append(BeamDisplacer(
                chi_o=rng.uniform(-3, 3), chi_e=rng.uniform(-3, 3), tilt_phase=rng.uniform(-1, 1),
                transmission=rng.uniform(0.8, 1), leakage_h=rng.uniform(0, 0.05),
                leakage_v=rng.uniform(0, 0.05)))
        elif kind == 1:
            elements.append(PockelsStatic(rng.uniform(0, 2 * math.pi), rng.uniform(0.8, 1)))
        elif kind == 2:
            elements.append(Waveplate(rng.uniform(0, 2 * math.pi), rng.uniform(-3, 3),
                                      rng.uniform(0.8, 1)))
        elif kind == 3:
            elements.append(Pinhole(frozenset(int(r) for r in rng.choice(4, 2, replace=False))))
        else:
            elements.append(Analyzer(rng.uniform(-3, 3)))
    return Device(tuple(elements))


def test_7_operator_oracle(verdict):
    with verdict("7 composed operators agree with element-by-element propagation"):
        rng = np.random.default_rng(7)
        for _ in range(20):
            dev = _random_device(rng)
            n = 1 + sum(isinstance(e, BeamDisplacer) for e in dev.elements) + 1
            ops = composed_operators(dev, None, n)
            for _ in range(100):
                s = random_state(rng, rails=(0,))
                prop = dev.propagate(s)
                assert len(prop.branches) == len(ops)
                x = state_vector(s, n)
                for k, b in zip(ops, prop.branches):
                    assert np.abs(k @ x - state_vector(b, n)).max() <= 1e-12


@settings(max_examples=500, deadline=None, database=None)
@given(bench_documents())
def _round_trip(doc):
    bench.validate(doc)
    assert bench.parse(bench.serialize(doc)) == doc


def _corruptions(lines: list[str]) -> list[tuple[str, int]]:
    entries = [i for i, line in enumerate(lines) if "=" in line]
    mutations = [
        lambda s: s + " bogus=1",
        lambda s: s.replace("=", " ", 1),
        lambda s: s + " @",
        lambda s: s.split("=")[0] + "=1parsec",
        lambda s: "    frobnicate" + s.strip(),
    ]
    picks = entries[:: max(1, len(entries) // 20)][:20]
    assert len(picks) == 20
    out = []
    for j, i in enumerate(picks):
        broken = list(lines)
        broken[i] = mutations[j % len(mutations)](lines[i])
        out.append(("\n".join(broken) + "\n", i + 1))
    return out


def test_8_parser_suite(verdict, default_bench_path):
    with verdict("8 parser round-trips, 500 generated documents, 20 located diagnostics"):
        doc = bench.load(default_bench_path)
        text = bench.serialize(doc)
        assert bench.parse(text) == doc
        assert bench.serialize(bench.parse(text)) == text
        _round_trip()
        cases = _corruptions(text.splitlines())
        for broken, line in cases:
            with pytest.raises(bench.BenchError) as info:
                bench.parse(broken)
            assert info.value.line == line, (line, str(info.value))
            assert info.value.col >= 1


def test_9_cli_determinism(verdict, default_bench_path, calibrated_bench_path, tmp_path):
    with verdict("9 repeated CLI runs with one seed give byte-identical CSV"):
        runs = [
            ["characterize", "--bench", calibrated_bench_path, "--seed", "4"],
            ["sweep", "--bench", calibrated_bench_path, "--mode", "frequency",
             "--range", "100Hz:10kHz:4", "--seed", "4"],
            ["sweep", "--bench", calibrated_bench_path, "--mode", "time", "--seed", "4"],
            ["calibrate", "--bench", default_bench_path, "--seed", "4"],
        ]
        for k, args in enumerate(runs):
            outs = []
            for rep in range(2):
                out = tmp_path / f"run{k}_{rep}.out"
                assert main(args + ["--out", str(out)]) == 0
                outs.append(out.read_bytes())
            assert outs[0] == outs[1], args
