import dataclasses

import pytest

from rutfinder.config import RunConfig, scale_min_pixels
from rutfinder.synth import Pothole, SceneSpec, preset_spec, render

DESK_W = scale_min_pixels(3100, (400, 600))


@pytest.fixture(scope="session")
def desk_config():
    return RunConfig(min_pixels=DESK_W)


def noise_free(spec):
    return dataclasses.replace(spec, noise_sigma=0.0, invalid_fraction=0.0)


@pytest.fixture(scope="session")
def rolled_frame():
    spec = preset_spec("rolled", 5, 0)
    dmap, gt = render(spec)
    return spec, dmap, gt


@pytest.fixture(scope="session")
def small_scene():
    spec = SceneSpec(
        width=160,
        height=120,
        alpha_true=(30.0, 0.15, 5e-5),
        theta_true=0.05,
        potholes=(Pothole(10.0, 20.0, 25.0, 18.0, 15.0),),
        seed=3,
    )
    dmap, gt = render(spec)
    return spec, dmap, gt


ACCEPTANCE = []


def record(number, title, ok, detail=""):
    """Log one acceptance criterion outcome; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}"
    if detail:
        line += f"  [{detail}]"
    ACCEPTANCE.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
