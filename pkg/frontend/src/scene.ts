// Pure scene-model construction: everything the canvas painter draws is
// derived here from fetched payloads, never recomputed physics.

import { Frame, GoalPayload, LayoutPayload, TrajectoryPayload } from "./types";

export interface SceneAgent {
    id: number;
    x: number;
    y: number;
    bearing: number;
    speed: number;
    visibleToEgo: boolean;
    isEgo: boolean;
}

export interface SceneMarker {
    kind: "collision" | "goal" | "obstacle";
    x: number;
    y: number;
    label: string;
}

export interface SceneModel {
    tick: number;
    timeS: number;
    agents: SceneAgent[];
    markers: SceneMarker[];
}

export function frameAt(trajectory: TrajectoryPayload, tick: number): Frame {
    const clamped = Math.min(Math.max(tick, trajectory.start_tick), trajectory.end_tick);
    return trajectory.frames[clamped - trajectory.start_tick];
}

export function buildScene(
    trajectory: TrajectoryPayload,
    tick: number,
    goals: GoalPayload[] = [],
    layout: LayoutPayload | null = null,
): SceneModel {
    const frame = frameAt(trajectory, tick);
    const visible = new Set(frame.visible_to_ego);
    const agents: SceneAgent[] = frame.agents.map((a) => ({
        id: a.id,
        x: a.x,
        y: a.y,
        bearing: a.bearing,
        speed: a.speed,
        visibleToEgo: visible.has(a.id) || a.id === trajectory.ego_id,
        isEgo: a.id === trajectory.ego_id,
    }));
    const markers: SceneMarker[] = [];
    if (trajectory.collision && trajectory.collision.tick <= frame.tick) {
        const involved = frame.agents.find((a) => trajectory.collision!.agents.includes(a.id));
        markers.push({
            kind: "collision",
            x: involved ? involved.x : 0,
            y: involved ? involved.y : 0,
            label: `collision @ tick ${trajectory.collision.tick}`,
        });
    }
    for (const goal of goals) {
        const [xmin, ymin, xmax, ymax] = goal.region;
        markers.push({
            kind: "goal",
            x: (xmin + xmax) / 2,
            y: (ymin + ymax) / 2,
            label: `goal v${goal.agent_id}`,
        });
    }
    if (layout) {
        for (const rect of layout.obstacles) {
            markers.push({
                kind: "obstacle",
                x: (rect[0] + rect[2]) / 2,
                y: (rect[1] + rect[3]) / 2,
                label: "occluder",
            });
        }
    }
    return { tick: frame.tick, timeS: frame.time_s, agents, markers };
}

export function agentIds(trajectory: TrajectoryPayload): number[] {
    const ids = new Set<number>();
    for (const frame of trajectory.frames) {
        for (const agent of frame.agents) {
            ids.add(agent.id);
        }
    }
    return [...ids].sort((a, b) => a - b);
}

export interface RewardDelta {
    name: string;
    factual: number;
    counterfactual: number;
    delta: number;
}

export function rewardDeltas(
    factual: Record<string, number> & { total?: number },
    counterfactual: Record<string, number> & { total?: number },
): RewardDelta[] {
    const names = [...new Set([...Object.keys(factual), ...Object.keys(counterfactual)])].sort();
    return names.map((name) => {
        const f = factual[name] ?? 0;
        const c = counterfactual[name] ?? 0;
        return { name, factual: f, counterfactual: c, delta: c - f };
    });
}
