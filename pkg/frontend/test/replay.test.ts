// Replay fidelity: the scene model built from stored golden trajectories
// must show exactly the agents and event markers the record contains.

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { describe, expect, it } from "vitest";

import { agentIds, buildScene, frameAt, rewardDeltas } from "../src/scene";
import { TrajectoryPayload } from "../src/types";

const here = dirname(fileURLToPath(import.meta.url));
const dataDir = join(here, "..", "..", "tests", "data");

function loadJson<T>(name: string): T {
    return JSON.parse(readFileSync(join(dataDir, name), "utf-8"));
}

const scenario = loadJson<{ id: number; ego_id: number; layout: never; goals: never[] }>(
    "ui_scenario2.json",
);
const factual = loadJson<TrajectoryPayload>("ui_scenario2_trajectory.json");
const removeResponse = loadJson<{ trajectory: TrajectoryPayload;
                                  reward: { components: Record<string, number>;
                                            total: number } }>(
    "ui_scenario2_remove1.json",
);
const collisionTrajectory = loadJson<TrajectoryPayload>("ui_scenario6_trajectory.json");

describe("replay fidelity against golden trajectories", () => {
    it("shows every recorded agent at every scrubbed tick", () => {
        for (const tick of [factual.start_tick,
                            Math.floor((factual.start_tick + factual.end_tick) / 2),
                            factual.end_tick]) {
            const scene = buildScene(factual, tick);
            const recorded = frameAt(factual, tick).agents.map((a) => a.id).sort();
            expect(scene.agents.map((a) => a.id).sort()).toEqual(recorded);
        }
    });

    it("scenario 2 factual record contains vehicles 0, 1 and 2", () => {
        expect(agentIds(factual)).toEqual([0, 1, 2]);
    });

    it("flags ego and ego-visibility straight from the record", () => {
        const scene = buildScene(factual, factual.start_tick);
        const ego = scene.agents.find((a) => a.isEgo);
        expect(ego?.id).toBe(scenario.ego_id);
        const visibleIds = frameAt(factual, factual.start_tick).visible_to_ego;
        for (const agent of scene.agents) {
            expect(agent.visibleToEgo).toBe(
                visibleIds.includes(agent.id) || agent.id === scenario.ego_id,
            );
        }
    });

    it("manual remove(1) overlay omits vehicle 1 everywhere", () => {
        const cf = removeResponse.trajectory;
        expect(agentIds(cf)).toEqual([0, 2]);
        for (const frame of cf.frames) {
            expect(frame.agents.some((a) => a.id === 1)).toBe(false);
        }
        const scene = buildScene(cf, cf.start_tick + 40);
        expect(scene.agents.some((a) => a.id === 1)).toBe(false);
    });

    it("reward delta panel reflects the fetched numbers exactly", () => {
        const rows = rewardDeltas({}, { ...removeResponse.reward.components,
                                        total: removeResponse.reward.total });
        const total = rows.find((r) => r.name === "total");
        expect(total?.counterfactual).toBeCloseTo(removeResponse.reward.total, 10);
    });

    it("collision marker appears exactly from the recorded tick onward", () => {
        const record = collisionTrajectory.collision;
        expect(record).not.toBeNull();
        const before = buildScene(collisionTrajectory, record!.tick - 5);
        expect(before.markers.filter((m) => m.kind === "collision")).toEqual([]);
        const after = buildScene(collisionTrajectory, record!.tick);
        const marker = after.markers.find((m) => m.kind === "collision");
        expect(marker?.label).toContain(String(record!.tick));
    });

    it("timeline scrubbing clamps to the recorded range", () => {
        const early = buildScene(factual, factual.start_tick - 100);
        expect(early.tick).toBe(factual.start_tick);
        const late = buildScene(factual, factual.end_tick + 100);
        expect(late.tick).toBe(factual.end_tick);
    });
});
