import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmu_sentinel.data import (
    ChannelKind,
    PmuChannel,
    PmuDataset,
    SynthConfig,
    generate_synthetic,
    load_csv,
    save_csv,
    synth_phasor,
    validate,
)
from pmu_sentinel.exceptions import IntegrityError, ParameterError, ParseError, SchemaError


def test_phasor_rms_factor_cancels():
    re, im = synth_phasor(SynthConfig(amplitude_peak=math.sqrt(2), initial_phase=0.0), 0.0)
    assert re == pytest.approx(1.0, abs=1e-12)
    assert im == pytest.approx(0.0, abs=1e-12)


def test_phasor_quarter_turn_is_imaginary():
    re, im = synth_phasor(SynthConfig(amplitude_peak=math.sqrt(2), initial_phase=90.0), 0.0)
    assert re == pytest.approx(0.0, abs=1e-12)
    assert im == pytest.approx(1.0, abs=1e-12)


def test_phasor_hand_evaluation():
    # 100/sqrt(2) = 70.71067811865476; times cos 30 and sin 30
    re, im = synth_phasor(SynthConfig(amplitude_peak=100.0, initial_phase=30.0), 0.0)
    assert re == pytest.approx(61.23724356957945, rel=1e-12)
    assert im == pytest.approx(35.35533905932737, rel=1e-12)


@given(st.floats(0, 3600), st.floats(1, 1e5), st.floats(-180, 180))
def test_phasor_modulus_is_rms(t, peak, phase):
    cfg = SynthConfig(amplitude_peak=peak, initial_phase=phase, noise_floor_sigma=0.0)
    re, im = synth_phasor(cfg, t)
    assert re * re + im * im == pytest.approx((peak / math.sqrt(2)) ** 2, rel=1e-9)


def test_noiseless_magnitude_is_constant_rms():
    cfg = SynthConfig(amplitude_peak=200.0, noise_floor_sigma=0.0, duration=10.0)
    ds = generate_synthetic(cfg)
    vmag = ds.channel("S1", "vmag").values
    np.testing.assert_allclose(vmag, 200.0 / math.sqrt(2), rtol=1e-12)


def test_generation_is_deterministic():
    cfg = SynthConfig(duration=5.0, seed=7, station_count=2, angle_noise_sigma=0.1, frequency_noise_sigma=0.01)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)
    other = generate_synthetic(SynthConfig(duration=5.0, seed=8, station_count=2))
    assert other != generate_synthetic(cfg)


def test_noise_sigma_matches_config():
    cfg = SynthConfig(noise_floor_sigma=0.1, duration=10_000 / 30.0, seed=3)
    vmag = generate_synthetic(cfg).channel("S1", "vmag").values
    assert vmag.size == 10_000
    assert abs(vmag.std() - 0.1) <= 0.01


def test_angle_is_wrapped_and_sample_rate_is_30():
    cfg = SynthConfig(duration=300.0, frequency_offset=0.05, noise_floor_sigma=0.0)
    ds = generate_synthetic(cfg)
    ang = ds.channel("S1", ChannelKind.VOLTAGE_ANGLE).values
    assert ds.sample_rate == 30.0
    assert np.all(ang > -180.0) and np.all(ang <= 180.0)
    assert np.any(np.abs(np.diff(ang)) > 180.0)  # at least one wrap occurred


def test_load_steps_shift_magnitude():
    cfg = SynthConfig(amplitude_peak=math.sqrt(2) * 100, noise_floor_sigma=0.0, duration=4.0,
                      load_step_schedule=[(1.0, 5.0), (3.0, -2.0)])
    vmag = generate_synthetic(cfg).channel("S1", "vmag").values
    assert vmag[0] == pytest.approx(100.0)
    assert vmag[45] == pytest.approx(105.0)
    assert vmag[-1] == pytest.approx(103.0)


def test_invalid_config_rejected():
    with pytest.raises(ParameterError):
        SynthConfig(duration=0)
    with pytest.raises(ParameterError):
        SynthConfig(noise_floor_sigma=-1)


def test_validate_clean_dataset():
    assert validate(generate_synthetic(SynthConfig(duration=2.0, station_count=3))) == []


def test_validate_reports_nan_location():
    ds = generate_synthetic(SynthConfig(duration=2.0))
    vals = np.array(ds.channel("S1", "freq").values)
    vals[17] = np.nan
    problems = validate(ds.replace_channel("S1", "freq", vals))
    assert len(problems) == 1
    assert "S1/freq" in problems[0] and "17" in problems[0]


def test_validate_reports_length_mismatch():
    ds = generate_synthetic(SynthConfig(duration=2.0))
    short = ds.replace_channel("S1", "vangle", ds.channel("S1", "vangle").values[:-1])
    problems = validate(short)
    assert any("length mismatch" in p for p in problems)


def test_validate_reports_missing_channel_kind():
    ds = generate_synthetic(SynthConfig(duration=1.0))
    partial = PmuDataset(ds.channels[:2], ds.start_time)
    assert any("vmag/vangle/freq" in p for p in validate(partial))


def _write(tmp_path, text):
    p = tmp_path / "pmu.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_minimal_file(tmp_path):
    p = _write(tmp_path, "timestamp,station,vmag,vangle,freq\n"
                         "100.000,A,7200.5,10.0,60.01\n"
                         "100.033,A,7200.1,10.5,60.00\n")
    ds = load_csv(p)
    assert len(ds) == 2
    assert ds.stations == ("A",)
    assert ds.sample_rate == 30.0
    assert ds.channel("A", "vangle").values.tolist() == [10.0, 10.5]


def test_load_blank_cell_is_integrity_error(tmp_path):
    p = _write(tmp_path, "timestamp,station,vmag,vangle,freq\n"
                         "100.000,A,7200.5,,60.01\n")
    with pytest.raises(IntegrityError) as info:
        load_csv(p)
    assert info.value.row == 2 and info.value.column == "vangle"


def test_load_non_numeric_cell_is_parse_error(tmp_path):
    p = _write(tmp_path, "timestamp,station,vmag,vangle,freq\n"
                         "100.000,A,7200.5,abc,60.01\n")
    with pytest.raises(ParseError) as info:
        load_csv(p)
    assert info.value.row == 2 and info.value.column == "vangle"


def test_load_bad_header_is_schema_error(tmp_path):
    p = _write(tmp_path, "time,station,vmag,vangle,freq\n100.000,A,1,2,3\n")
    with pytest.raises(SchemaError):
        load_csv(p)


def test_save_layout_is_exact(tmp_path):
    ds = PmuDataset((
        PmuChannel("B", "vmag", [1.5, 2.0]), PmuChannel("B", "vangle", [-10.0, 179.0]),
        PmuChannel("B", "freq", [60.0, 59.99]),
        PmuChannel("A", "vmag", [3.0, 4.0]), PmuChannel("A", "vangle", [0.0, 180.0]),
        PmuChannel("A", "freq", [60.0, 60.01]),
    ), start_time=12.5)
    path = tmp_path / "out.csv"
    save_csv(ds, path)
    assert path.read_bytes() == (
        b"timestamp,station,vmag,vangle,freq\n"
        b"12.500,A,3.0,0.0,60.0\n"
        b"12.500,B,1.5,-10.0,60.0\n"
        b"12.533,A,4.0,180.0,60.01\n"
        b"12.533,B,2.0,179.0,59.99\n"
    )


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(SynthConfig(duration=20.0, station_count=6, seed=11,
                                        angle_noise_sigma=0.05, frequency_noise_sigma=0.002))
    path = tmp_path / "rt.csv"
    save_csv(ds, path)
    assert load_csv(path) == ds


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40),
       st.integers(0, 2_000_000_000))
def test_csv_round_trip_property(tmp_path_factory, values, start_ms):
    n = len(values)
    ds = PmuDataset((PmuChannel("S1", "vmag", values), PmuChannel("S1", "vangle", np.zeros(n)),
                     PmuChannel("S1", "freq", np.full(n, 60.0))), start_time=start_ms / 1000.0)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    save_csv(ds, path)
    assert load_csv(path, sample_rate=30.0) == ds
