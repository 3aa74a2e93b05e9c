// API payload types, mirroring the backend service serializers.

export interface LanePayload {
    road_id: number;
    direction: number;
    lane_pos: number;
    points: [number, number][];
}

export interface RoadPayload {
    id: number;
    name: string;
    centerline: [number, number][];
    lanes_forward: number;
    lanes_backward: number;
    lane_width: number;
    priority: number;
}

export interface JunctionPayload {
    id: number;
    roads: number[];
    kind: string;
    center: [number, number];
    radius: number;
}

export interface LayoutPayload {
    summary: string;
    roads: RoadPayload[];
    lanes: LanePayload[];
    junctions: JunctionPayload[];
    obstacles: [number, number, number, number][];
    bbox: [number, number, number, number];
}

export interface GoalPayload {
    agent_id: number;
    region: [number, number, number, number];
    stop_required: boolean;
}

export interface ScenarioSummary {
    id: number;
    name: string;
    category: string;
    summary: string;
    agents: number;
    prompts: { text: string; time: number; ego: number }[];
}

export interface ScenarioDetail extends Omit<ScenarioSummary, "agents"> {
    ego_id: number;
    horizon: number;
    layout: LayoutPayload;
    agents: { id: number; x: number; y: number; speed: number; bearing: number }[];
    goals: GoalPayload[];
}

export interface FrameAgent {
    id: number;
    x: number;
    y: number;
    vx: number;
    vy: number;
    bearing: number;
    speed: number;
}

export interface Frame {
    tick: number;
    time_s: number;
    agents: FrameAgent[];
    visible_to_ego: number[];
}

export interface TrajectoryPayload {
    ego_id: number;
    start_tick: number;
    end_tick: number;
    dt: number;
    collision: { tick: number; agents: [number, number] } | null;
    frames: Frame[];
}

export interface RewardPayload {
    components: Record<string, number>;
    weights: Record<string, number>;
    total: number;
}

export interface QueryResponse {
    ok: boolean;
    stage?: string;
    error?: string;
    violations?: string[];
    query?: string;
    trajectory?: TrajectoryPayload;
    reward?: RewardPayload;
    baseline_reward?: RewardPayload | null;
}

export interface SessionEvent {
    kind: string;
    [key: string]: unknown;
}

export interface SessionDoc {
    session_id: string;
    status: string;
    error: string;
    events: SessionEvent[];
    record: {
        final_explanation: string;
        rounds: { round: number; query: string; verbalised_result: string;
                  intermediate_explanation: string }[];
        memory: { entries: { role: string; round: number; text: string }[] };
    } | null;
}
