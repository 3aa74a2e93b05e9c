"""Kinematic bicycle integration for one simulation tick."""

from __future__ import annotations

import math

from ..geometry import normalize_angle
from .state import AgentState

WHEELBASE = 2.5
ACCEL_MIN = -6.0
ACCEL_MAX = 4.0
STEER_MAX = 0.6


def clamp_action(acceleration: float, steering: float) -> tuple[float, float]:
    a = min(max(acceleration, ACCEL_MIN), ACCEL_MAX)
    d = min(max(steering, -STEER_MAX), STEER_MAX)
    return a, d


def integrate(agent: AgentState, acceleration: float, steering: float, dt: float) -> AgentState:
    """Advance one agent by one tick under the kinematic bicycle model.

    Explicit Euler: position moves with the current velocity, then speed and
    bearing are updated. Speed never goes negative (no reverse gear).
    """
    a, delta = clamp_action(acceleration, steering)
    speed = agent.speed
    x, y = agent.position
    x += agent.velocity[0] * dt
    y += agent.velocity[1] * dt
    bearing = normalize_angle(agent.bearing + speed / WHEELBASE * math.tan(delta) * dt)
    speed = max(speed + a * dt, 0.0)
    return AgentState(
        agent_id=agent.agent_id,
        position=(x, y),
        velocity=(speed * math.cos(bearing), speed * math.sin(bearing)),
        bearing=bearing,
        acceleration=a,
        steering=delta,
    )
