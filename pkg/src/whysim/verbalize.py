"""Deterministic text rendering of layouts, observations, macros and rewards.

These blocks are slotted into prompt template placeholders. All formatting is
fixed-point and locale-independent so golden snapshots stay stable.
"""

from __future__ import annotations

from .macros import MacroSegment
from .simulation.layout import RoadLayout
from .simulation.state import RewardBreakdown, Trajectory

OBSERVATION_STRIDE = 7  # ticks; ~3 Hz rows from the 20 Hz base rate


def verbalise_layout(layout: RoadLayout) -> str:
    lines = ["Road layout:"]
    if layout.summary:
        lines.append(f"  Summary: {layout.summary}")
    for road in sorted(layout.roads, key=lambda r: r.road_id):
        direction = []
        if road.lanes_forward:
            direction.append(f"{road.lanes_forward} forward")
        if road.lanes_backward:
            direction.append(f"{road.lanes_backward} backward")
        label = f" ({road.name})" if road.name else ""
        lines.append(
            f"  Road {road.road_id}{label}: {road.num_lanes} lane(s) "
            f"[{', '.join(direction)}], lane width {road.lane_width:.1f} m, "
            f"priority {road.priority}, length {road.center.length:.1f} m."
        )
    if layout.junctions:
        for j in sorted(layout.junctions, key=lambda j: j.junction_id):
            roads = ", ".join(str(r) for r in sorted(j.roads))
            lines.append(f"  Junction {j.junction_id}: {j.kind} connecting roads {roads}.")
    else:
        lines.append("  No junctions.")
    if layout.obstacles:
        for i, rect in enumerate(sorted(layout.obstacles)):
            lines.append(
                f"  Obstacle {i}: blocks view over x=[{rect[0]:.1f}, {rect[2]:.1f}], "
                f"y=[{rect[1]:.1f}, {rect[3]:.1f}]."
            )
    return "\n".join(lines)


def _sample_ticks(n: int) -> list[int]:
    """Row indices at the subsampling stride; first and final always kept."""
    ticks = list(range(0, n, OBSERVATION_STRIDE))
    if n and ticks[-1] != n - 1:
        ticks.append(n - 1)
    return ticks


def verbalise_observations(trajectory: Trajectory) -> str:
    n = len(trajectory)
    rows_by_agent: dict[int, list[str]] = {}
    dt = trajectory.dt
    for k in _sample_ticks(n):
        state = trajectory.states[k]
        for agent in trajectory.ego_observations[k]:
            rows_by_agent.setdefault(agent.agent_id, []).append(
                f"    tick {state.t} ({state.t * dt:.1f} s): "
                f"position ({agent.position[0]:.1f}, {agent.position[1]:.1f}) m, "
                f"speed {agent.speed:.1f} m/s, bearing {agent.bearing:.1f} rad"
            )
    lines = ["Observed vehicles (ego viewpoint):"]
    if not rows_by_agent:
        lines.append("  no visible vehicles")
        return "\n".join(lines)
    for agent_id in sorted(rows_by_agent):
        label = " (ego)" if agent_id == trajectory.ego_id else ""
        lines.append(f"  Vehicle {agent_id}{label}:")
        lines.extend(rows_by_agent[agent_id])
    return "\n".join(lines)


def verbalise_macros(segments: list[MacroSegment], dt: float = 0.05) -> str:
    if not segments:
        return "Macro actions:\n  no actions observed"
    lines = ["Macro actions:"]
    for seg in segments:
        lines.append(
            f"  Vehicle {seg.agent_id}: {seg.macro_name} "
            f"from {seg.start_tick * dt:.1f} s to {seg.end_tick * dt:.1f} s"
        )
    return "\n".join(lines)


def verbalise_rewards(reward: RewardBreakdown) -> str:
    lines = ["Ego reward breakdown:"]
    for name, value in reward.ordered_components():
        lines.append(f"  {name}: {value:.2f} (weight {reward.weights.get(name, 0.0):.2f})")
    lines.append(f"  total: {reward.total:.2f}")
    return "\n".join(lines)
