import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lidarbg.pointio import Frame
from lidarbg.tensorize import SensorConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_SENSOR = SensorConfig.uniform(4, -10.0, 5.0, azimuth_resolution_deg=10.0, max_range_m=100.0)


@pytest.fixture
def small_sensor():
    return SMALL_SENSOR


def spherical_frame(frame_id, beams, az, rng_m, intensity=None, returned=None, timestamp=None):
    """Frame of spherical-form records."""
    n = len(beams)
    returned = np.ones(n, bool) if returned is None else np.asarray(returned, bool)
    intensity = np.full(n, 50.0) if intensity is None else np.asarray(intensity, float)
    r = np.where(returned, rng_m, np.nan)
    inten = np.where(returned, intensity, np.nan)
    return Frame(frame_id, float(frame_id) / 10 if timestamp is None else timestamp, np.asarray(beams),
                 np.asarray(az, float), r, np.full((n, 3), np.nan), inten, returned)
