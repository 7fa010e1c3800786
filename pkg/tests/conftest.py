"""Shared fixtures: a compact spec document, two missions, narrow config."""

import pytest

from statefuzz.fuzzspec import parse_fuzz_spec, parse_mission
from statefuzz.sutmodel import SutConfig


def small_spec_raw() -> dict:
    """Spec document with two constrained modes and three delay bands.

    Band maxima stay at 1200 ms so the (200, 600) latency window is valid
    for it; tests that need the default window build their own documents.
    """
    return {
        "FROM_PX4_modes": ["OFFBOARD", "LAND"],
        "FROM_APP_states": [
            "TAKEOFF",
            "FLYING_TO_WAYPOINT",
            "HOVERING",
            "LANDING",
            "DISARMING",
        ],
        "RC_INPUT_EVENTS": ["ALTCTL", "POSCTL", "STABILIZED"],
        "ENVIRONMENT": {
            "transition_delay": {
                "bands": {
                    "short": {"min": 50, "max": 200},
                    "medium": {"min": 200, "max": 600},
                    "long": {"min": 600, "max": 1200},
                }
            },
            "throttle": ["mid"],
            "geofence": ["none"],
            "wind": ["none"],
            "GPS": ["none"],
            "COMPASS_INTERFERENCE": ["none"],
        },
        "MISSION_CONTEXT": ["Flight plan A"],
        "CONSTRAINTS": {
            "REQUIRES_PX4_MODE": {
                "OFFBOARD": ["TAKEOFF", "FLYING_TO_WAYPOINT*", "HOVERING"],
                "LAND": ["LANDING", "DISARMING"],
            }
        },
    }


MISSION_A_RAW = {
    "id": "Flight plan A",
    "waypoints": [[20, 0, 10], [20, 20, 10], [0, 20, 10]],
    "cruise_speed": 5.0,
}

# route exits the fence at x = 18 partway through the first leg
MISSION_C_RAW = {
    "id": "Flight plan C",
    "waypoints": [[30, 0, 10], [30, 30, 10]],
    "cruise_speed": 5.0,
    "geofence_polygon": [[-10, -10], [18, -10], [18, 18], [-10, 18]],
}


@pytest.fixture()
def spec():
    return parse_fuzz_spec(small_spec_raw(), spec_id="fspec1")


@pytest.fixture()
def mission_a():
    return parse_mission(dict(MISSION_A_RAW))


@pytest.fixture()
def mission_c():
    return parse_mission(dict(MISSION_C_RAW))


@pytest.fixture()
def narrow_config():
    """Mode-switch latency inside the medium delay band, no faults seeded."""
    return SutConfig(latency_window_ms=(200.0, 600.0))
