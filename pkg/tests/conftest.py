import numpy as np
import pytest

from groupwise.types import Frame, RoadGeometry, VehicleState


def make_state(vid, x, lane=1, v=20.0, a=0.0, length=4.0, t=0.0, vtype="car"):
    from groupwise.types import VehicleType

    return VehicleState(
        vehicle_id=vid, t=t, x=x, lane_id=lane, v=v, a=a, length=length, vehicle_type=VehicleType(vtype)
    )


@pytest.fixture
def geometry():
    return RoadGeometry(
        segment_id="seg1",
        length=2000.0,
        lanes=4,
        on_ramp_positions=(1000.0,),
        off_ramp_positions=(1600.0,),
        curve_zones=((400.0, 700.0),),
    )


def random_frame(rng: np.random.Generator, n_max=20, lanes=4, t=0.0) -> Frame:
    """A random frame with positive in-lane gaps (valid data)."""
    n = int(rng.integers(1, n_max + 1))
    states = []
    counter = 0
    lane_x = {}
    for _ in range(n):
        lane = int(rng.integers(1, lanes + 1))
        length = float(rng.uniform(4.0, 12.0))
        base = lane_x.get(lane, 0.0)
        x = base + length + float(rng.uniform(0.5, 40.0))
        lane_x[lane] = x
        states.append(
            make_state(f"v{counter:03d}", x, lane=lane, v=float(rng.uniform(0.0, 35.0)), length=length, t=t)
        )
        counter += 1
    return Frame(t=t, states=tuple(states))
