// Canvas painting. Pure rendering only: world-to-screen interpolation is the
// single piece of client-side computation layered over fetched data.

import { buildScene, SceneModel } from "./scene";
import { GoalPayload, LayoutPayload, TrajectoryPayload } from "./types";

export interface Viewport {
    scale: number;
    offsetX: number;
    offsetY: number;
}

export function fitViewport(
    bbox: [number, number, number, number],
    width: number,
    height: number,
): Viewport {
    const [xmin, ymin, xmax, ymax] = bbox;
    const scale = Math.min(width / (xmax - xmin), height / (ymax - ymin));
    return {
        scale,
        offsetX: width / 2 - ((xmin + xmax) / 2) * scale,
        // Canvas y grows downward; world y grows upward.
        offsetY: height / 2 + ((ymin + ymax) / 2) * scale,
    };
}

function toScreen(vp: Viewport, x: number, y: number): [number, number] {
    return [vp.offsetX + x * vp.scale, vp.offsetY - y * vp.scale];
}

export function drawLayout(
    ctx: CanvasRenderingContext2D,
    layout: LayoutPayload,
    vp: Viewport,
): void {
    for (const road of layout.roads) {
        const width = (road.lanes_forward + road.lanes_backward) * road.lane_width;
        ctx.strokeStyle = "#3b3f46";
        ctx.lineWidth = width * vp.scale;
        ctx.lineCap = "round";
        ctx.beginPath();
        road.centerline.forEach(([x, y], i) => {
            const [sx, sy] = toScreen(vp, x, y);
            if (i === 0) ctx.moveTo(sx, sy);
            else ctx.lineTo(sx, sy);
        });
        ctx.stroke();
    }
    ctx.lineWidth = 1;
    ctx.setLineDash([6, 6]);
    ctx.strokeStyle = "#6b7280";
    for (const lane of layout.lanes) {
        ctx.beginPath();
        lane.points.forEach(([x, y], i) => {
            const [sx, sy] = toScreen(vp, x, y);
            if (i === 0) ctx.moveTo(sx, sy);
            else ctx.lineTo(sx, sy);
        });
        ctx.stroke();
    }
    ctx.setLineDash([]);
    for (const rect of layout.obstacles) {
        const [x0, y0] = toScreen(vp, rect[0], rect[3]);
        ctx.fillStyle = "rgba(120, 113, 108, 0.75)";
        ctx.fillRect(x0, y0, (rect[2] - rect[0]) * vp.scale, (rect[3] - rect[1]) * vp.scale);
    }
}

export function drawGoals(
    ctx: CanvasRenderingContext2D,
    goals: GoalPayload[],
    vp: Viewport,
): void {
    ctx.setLineDash([4, 4]);
    for (const goal of goals) {
        const [xmin, ymin, xmax, ymax] = goal.region;
        const [sx, sy] = toScreen(vp, xmin, ymax);
        ctx.strokeStyle = "#34d399";
        ctx.strokeRect(sx, sy, (xmax - xmin) * vp.scale, (ymax - ymin) * vp.scale);
    }
    ctx.setLineDash([]);
}

const VEHICLE_LENGTH = 4.5;
const VEHICLE_WIDTH = 1.8;

export function drawScene(
    ctx: CanvasRenderingContext2D,
    scene: SceneModel,
    vp: Viewport,
    style: { ghost?: boolean } = {},
): void {
    for (const agent of scene.agents) {
        const [sx, sy] = toScreen(vp, agent.x, agent.y);
        ctx.save();
        ctx.translate(sx, sy);
        ctx.rotate(-agent.bearing);
        const w = VEHICLE_LENGTH * vp.scale;
        const h = VEHICLE_WIDTH * vp.scale;
        ctx.globalAlpha = style.ghost ? 0.45 : 1.0;
        ctx.fillStyle = agent.isEgo ? "#60a5fa" : agent.visibleToEgo ? "#f59e0b" : "#52525b";
        ctx.fillRect(-w / 2, -h / 2, w, h);
        ctx.globalAlpha = 1.0;
        ctx.restore();
        ctx.fillStyle = "#e5e7eb";
        ctx.font = "11px sans-serif";
        ctx.fillText(String(agent.id), sx + 6, sy - 6);
    }
    for (const marker of scene.markers) {
        if (marker.kind !== "collision") continue;
        const [sx, sy] = toScreen(vp, marker.x, marker.y);
        ctx.strokeStyle = "#ef4444";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(sx, sy, 12, 0, Math.PI * 2);
        ctx.stroke();
        ctx.lineWidth = 1;
    }
}

export function paintFrame(
    ctx: CanvasRenderingContext2D,
    layout: LayoutPayload,
    goals: GoalPayload[],
    factual: TrajectoryPayload,
    tick: number,
    vp: Viewport,
    counterfactual: TrajectoryPayload | null = null,
): SceneModel {
    ctx.fillStyle = "#17191d";
    ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
    drawLayout(ctx, layout, vp);
    drawGoals(ctx, goals, vp);
    const factualScene = buildScene(factual, tick, [], layout);
    if (counterfactual) {
        drawScene(ctx, factualScene, vp, { ghost: true });
        const cfTick = Math.min(Math.max(tick, counterfactual.start_tick),
                                counterfactual.end_tick);
        drawScene(ctx, buildScene(counterfactual, cfTick), vp);
    } else {
        drawScene(ctx, factualScene, vp);
    }
    return factualScene;
}
