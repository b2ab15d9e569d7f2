import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from curvepath.planner import GainMatrix
from curvepath.simulate import (
    SyntheticDriverSpec,
    build_scenario_road,
    generate_synthetic_driver_log,
    s_curve_scenario,
)

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

P_TRUE = np.array([[22.0, 3.0, -1.0], [4.0, 25.0, 2.0], [-2.0, 5.0, 30.0]])


@pytest.fixture(scope="session")
def s_curve_road():
    return build_scenario_road(s_curve_scenario())


@pytest.fixture(scope="session")
def clean_driver_log(s_curve_road):
    """Noise-free synthetic drive over the S-curve with known gains."""
    driver = SyntheticDriverSpec(gains_true=GainMatrix(P_TRUE), offset_noise_sigma=0.0, seed=7)
    return generate_synthetic_driver_log(s_curve_road, driver)
