import math

import pytest

from whysim.simulation.layout import Junction, Road, RoadLayout
from whysim.simulation.state import AgentState, Goal, ScenarioState


@pytest.fixture
def straight_layout():
    """Single one-way road with two lanes, no junctions."""
    road = Road(
        road_id=0,
        centerline=[[-200, 0], [400, 0]],
        lanes_forward=2,
        lanes_backward=0,
        lane_width=3.5,
        priority=1,
    )
    return RoadLayout(roads=[road], junctions=[])


@pytest.fixture
def tee_layout():
    """Split main road with a side road joining at a T-junction."""
    west = Road(road_id=0, centerline=[[-120, 0], [22, 0]], lanes_forward=2,
                lanes_backward=0, lane_width=3.5, priority=2)
    east = Road(road_id=1, centerline=[[38, 0], [160, 0]], lanes_forward=2,
                lanes_backward=0, lane_width=3.5, priority=2)
    side = Road(road_id=2, centerline=[[30, -90], [30, -8]], lanes_forward=1,
                lanes_backward=1, lane_width=3.5, priority=1)
    junction = Junction(junction_id=0, roads=[0, 1, 2], kind="t-junction",
                        center=[30, 0], radius=10)
    return RoadLayout(roads=[west, east, side], junctions=[junction])


def make_agent(agent_id=0, x=0.0, y=1.75, speed=8.0, bearing=0.0):
    return AgentState(
        agent_id=agent_id,
        position=(x, y),
        velocity=(speed * math.cos(bearing), speed * math.sin(bearing)),
        bearing=bearing,
    )


@pytest.fixture
def straight_state(straight_layout):
    agent = make_agent(0, x=0.0, y=1.75, speed=8.0)
    goals = [Goal(agent_id=0, region=(380, -4, 400, 4))]
    return ScenarioState(layout=straight_layout, agents=[agent], goals=goals)
