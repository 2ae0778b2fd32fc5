import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pnradar.frame import OscillatorModel, make_frame, reference_frame

settings.register_profile("pnradar", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pnradar")


def toy_frame(N=8, M=3, cp=0.08e-6):
    # 20 ns sampling like the reference frame, short symbols
    return make_frame(N, M, cp_duration=cp, carrier_frequency=28e9, subcarrier_spacing=50e6 / N)


@pytest.fixture
def ref_frame():
    return reference_frame()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FRO200 = OscillatorModel.fro(200e3)
PLL200 = OscillatorModel.pll(200e3, 1e6)
