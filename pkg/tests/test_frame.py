import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pnradar.errors import InconsistentNumerology
from pnradar.frame import (SPEED_OF_LIGHT, FrameConfig, OscillatorModel, Scenario, make_frame,
                           noise_from_snr, parse_quantity, reference_frame, target_params)


def test_reference_numerology():
    fr = reference_frame()
    assert fr.T == pytest.approx(5.12e-6, rel=1e-12)
    assert fr.Tsym == pytest.approx(6.40e-6, rel=1e-12)
    assert fr.Ts == pytest.approx(20e-9, rel=1e-12)
    assert (fr.N, fr.M, fr.fc) == (256, 10, 28e9)


def test_trivial_numerology():
    fr = make_frame(2, 1, cp_duration=0.25, carrier_frequency=1.0, subcarrier_spacing=1.0)
    assert (fr.T, fr.Tsym, fr.Ts) == (1.0, 1.25, 0.5)


def test_contradictory_spacing_and_duration():
    with pytest.raises(InconsistentNumerology):
        make_frame(256, 10, 1.28e-6, 28e9, subcarrier_spacing=195312.5, elementary_duration=5.0e-6)


def test_duration_alone_is_enough():
    fr = make_frame(256, 10, 1.28e-6, 28e9, elementary_duration=5.12e-6)
    assert fr.subcarrier_spacing == pytest.approx(195312.5, rel=1e-12)


def test_invalid_frames_rejected():
    with pytest.raises(ValueError):
        make_frame(1, 1, 1e-6, 28e9, subcarrier_spacing=1e5)
    with pytest.raises(ValueError):
        make_frame(4, 0, 1e-6, 28e9, subcarrier_spacing=1e5)
    with pytest.raises(ValueError):
        make_frame(4, 1, -1e-6, 28e9, subcarrier_spacing=1e5)


def test_frame_config_checks_derived_fields():
    with pytest.raises(ValueError):
        FrameConfig(4, 1, 1e5, 1e-5, 1e-6, 1.2e-5, 28e9, 2.5e-6)


def test_target_delay_and_doppler():
    fr = reference_frame()
    tg = target_params(30.0, 20.0, 1.0, fr)
    assert tg.delay == pytest.approx(2.00138e-7, rel=1e-5)
    assert tg.doppler == pytest.approx(1.33425e-7, rel=1e-5)
    assert tg.cp_valid


def test_zero_range():
    tg = target_params(0.0, 5.0, 1.0, reference_frame())
    assert tg.delay == 0.0
    assert tg.doppler == pytest.approx(10.0 / SPEED_OF_LIGHT)


def test_far_target_flagged_not_rejected():
    tg = target_params(1000.0, 0.0, 1.0, reference_frame())
    assert not tg.cp_valid
    assert tg.delay > reference_frame().T


def test_large_doppler_warns():
    with pytest.warns(UserWarning):
        target_params(10.0, 1e5, 1.0, reference_frame())


def test_negative_range_rejected():
    with pytest.raises(ValueError):
        target_params(-1.0, 0.0, 1.0, reference_frame())


def test_max_unambiguous_range():
    fr = reference_frame()
    assert fr.max_unambiguous_range() == pytest.approx(767.47, abs=0.01)
    # 768 m with c = 3e8, within 0.2 %
    assert fr.max_unambiguous_range() == pytest.approx(768.0, rel=2e-3)
    assert fr.max_unambiguous_range(3e8) == pytest.approx(768.0, rel=1e-12)


@given(st.floats(-20, 60), st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
def test_noise_level_matches_snr(snr_db, gain):
    nm = noise_from_snr(snr_db, gain)
    assert abs(gain) ** 2 / (2 * nm.sigma2) == pytest.approx(10 ** (snr_db / 10), rel=1e-12)


def test_oscillator_validation():
    assert OscillatorModel("fro", 1e3).kind == "FRO"
    with pytest.raises(ValueError):
        OscillatorModel("PLL", 1e3)
    with pytest.raises(ValueError):
        OscillatorModel("FRO", -1.0)
    with pytest.raises(ValueError):
        OscillatorModel("XYZ", 1.0)


@given(st.integers(2, 4096), st.integers(1, 64), st.floats(1e3, 1e7), st.floats(0.01, 1.0),
       st.floats(1e8, 1e11))
def test_scenario_round_trip_bit_exact(N, M, df, cp_frac, fc):
    fr = make_frame(N, M, cp_duration=cp_frac / df, carrier_frequency=fc, subcarrier_spacing=df)
    sc = Scenario(fr, OscillatorModel.pll(123456.789, 1.1e6), 1000.0 / 3, 20.0 / 7,
                  complex(0.3, -0.7), 17.25, {"c_override": 3e8})
    back = Scenario.loads(sc.dumps())
    assert back == sc
    assert back.frame == fr


def test_scenario_file_sections(tmp_path):
    sc = Scenario(reference_frame(), OscillatorModel.fro(2e5), 30.0, 20.0, 1 + 0j, 20.0)
    path = tmp_path / "s.toml"
    sc.save(path)
    text = path.read_text()
    for section in ("[frame]", "[oscillator]", "[target]", "[noise]", "[run]"):
        assert section in text
    assert "f3dB" in text and "subcarrier_spacing" in text
    assert Scenario.load(path) == sc


def test_c_override():
    sc = Scenario(reference_frame(), OscillatorModel.fro(2e5), 30.0, 20.0, 1 + 0j, 20.0,
                  {"c_override": 3e8})
    assert sc.target().delay == pytest.approx(2e-7, rel=1e-12)


def test_with_axis():
    sc = Scenario(reference_frame(), OscillatorModel.pll(2e5, 1e6), 30.0, 20.0, 1 + 0j, 20.0)
    assert sc.with_axis("snr_db", 5).snr_db == 5
    assert sc.with_axis("range_m", 100).range == 100
    assert sc.with_axis("f3dB", 1e3).oscillator.f3db == 1e3
    assert sc.with_axis("floop", 2e6).oscillator.floop == 2e6
    with pytest.raises(ValueError):
        sc.with_axis("bogus", 1)


@pytest.mark.parametrize("text,value", [("200kHz", 200e3), ("1.28us", 1.28e-6), ("28 GHz", 28e9),
                                        ("20ns", 20e-9), ("1km", 1e3), ("3", 3.0),
                                        ("20 m/s", 20.0), ("-5dB", -5.0)])
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


def test_parse_quantity_rejects_unknown_unit():
    with pytest.raises(ValueError):
        parse_quantity("3 parsecs")
