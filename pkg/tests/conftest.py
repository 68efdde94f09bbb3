import math

import numpy as np
import pytest

from rsschan import (
    ModelConfig,
    RssRegion,
    UnsupportedRegime,
    VehicleState,
    validate_config,
)
from rsschan.analytic_pdf import SwitchCase, build_angle_support

V105 = 105.0 / 3.6

FIG8_UPPER = RssRegion(-263.917, 276.045, 18.364, 26.396)
FIG8_LOWER = RssRegion(-263.146, 277.483, -23.747, -20.605)
FIG34_UPPER = RssRegion(-263.917, 276.045, 18.364, 106.396)
FIG34_LOWER = RssRegion(-263.146, 277.483, -103.747, -20.605)


def make_fig8(k=1.535, od=False):
    return validate_config(ModelConfig(
        tx=VehicleState(-200.0, -8.75, V105, 0.0),
        rx=VehicleState(200.0, -8.75, V105, math.pi if od else 0.0),
        upper=FIG8_UPPER, lower=FIG8_LOWER, fc=5.9e9, k_factor=k))


def make_fig5(od=False):
    return make_fig8(k=0.0, od=od)


def make_fig34(od=False):
    return validate_config(ModelConfig(
        tx=VehicleState(-200.0, -8.75, V105, 0.0),
        rx=VehicleState(200.0, -8.75, V105, math.pi if od else 0.0),
        upper=FIG34_UPPER, lower=FIG34_LOWER, fc=5.9e9, k_factor=0.0))


def make_fig7(k=1.715):
    return validate_config(ModelConfig(
        tx=VehicleState(-30.9, 0.0, 24.2, 0.0),
        rx=VehicleState(30.0, 0.0, 24.7, 0.0),
        upper=RssRegion(-49.0, 46.0, 14.0, 17.0),
        lower=RssRegion(-49.0, 46.0, -17.0, -14.0),
        fc=5.9e9, k_factor=k))


def make_fig6_scene():
    return validate_config(ModelConfig(
        tx=VehicleState(-200.0, -5.25, V105, 0.0),
        rx=VehicleState(200.0, -1.75, V105, 0.0),
        upper=RssRegion(-300.0, 300.0, 14.0, 19.0),
        lower=RssRegion(-300.0, 300.0, -19.0, -14.0),
        fc=5.9e9, k_factor=0.0))


def make_symmetric(half_length=250.0, half_road=14.0, depth=8.0,
                   speed=V105, v_r=None, od=False, k=0.0, fc=5.9e9,
                   x_half=200.0):
    """Mirror-symmetric scene: strips and vehicles symmetric about both axes."""
    return validate_config(ModelConfig(
        tx=VehicleState(-x_half, 0.0, speed, 0.0),
        rx=VehicleState(x_half, 0.0, speed if v_r is None else v_r,
                        math.pi if od else 0.0),
        upper=RssRegion(-half_length, half_length, half_road, half_road + depth),
        lower=RssRegion(-half_length, half_length, -half_road - depth, -half_road),
        fc=fc, k_factor=k))


def random_config(rng, od_fraction=0.5, k_max=3.0, base_regime=True):
    """Random valid scene; optionally resampled until the base regime holds."""
    for _ in range(200):
        x_t = -rng.uniform(30.0, 250.0)
        x_r = rng.uniform(30.0, 250.0)
        half_road = rng.uniform(4.0, 18.0)
        y_t = rng.uniform(-0.7, 0.7) * half_road
        y_r = rng.uniform(-0.7, 0.7) * half_road
        c1 = max(y_t, y_r) + rng.uniform(1.0, 10.0)
        d1 = c1 + rng.uniform(2.0, 50.0)
        d2 = min(y_t, y_r) - rng.uniform(1.0, 10.0)
        c2 = d2 - rng.uniform(2.0, 50.0)
        cfg = ModelConfig(
            tx=VehicleState(x_t, y_t, rng.uniform(5.0, 40.0), 0.0),
            rx=VehicleState(x_r, y_r, rng.uniform(5.0, 40.0),
                            math.pi if rng.random() < od_fraction else 0.0),
            upper=RssRegion(x_t - rng.uniform(10.0, 300.0),
                            x_r + rng.uniform(10.0, 300.0), c1, d1),
            lower=RssRegion(x_t - rng.uniform(10.0, 300.0),
                            x_r + rng.uniform(10.0, 300.0), c2, d2),
            fc=rng.uniform(2e9, 6e9),
            k_factor=rng.uniform(0.0, k_max))
        vcfg = validate_config(cfg)
        if not base_regime:
            return vcfg
        try:
            if build_angle_support(vcfg).switch_case is SwitchCase.BASE:
                return vcfg
        except UnsupportedRegime:
            continue
    raise RuntimeError("could not draw a base-regime scene")


def sample_strip_points(vcfg, n, rng):
    """Uniform scatterer positions over both strips (test-local sampler)."""
    n1 = int(n * vcfg.area1 / vcfg.area)
    x = np.empty(n)
    y = np.empty(n)
    x[:n1] = rng.uniform(vcfg.a1, vcfg.b1, n1)
    y[:n1] = rng.uniform(vcfg.c1, vcfg.d1, n1)
    x[n1:] = rng.uniform(vcfg.a2, vcfg.b2, n - n1)
    y[n1:] = rng.uniform(vcfg.c2, vcfg.d2, n - n1)
    return x, y


@pytest.fixture(scope="session")
def fig8():
    return make_fig8()


@pytest.fixture(scope="session")
def fig5_sd():
    return make_fig5(od=False)


@pytest.fixture(scope="session")
def fig5_od():
    return make_fig5(od=True)


@pytest.fixture(scope="session")
def fig34():
    return make_fig34()


@pytest.fixture(scope="session")
def fig7():
    return make_fig7()
