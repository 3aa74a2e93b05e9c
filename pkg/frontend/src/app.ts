// Analyst console wiring: scenario browser, trajectory scrubber, manual
// queries with side-by-side counterfactual overlay, and live session feed.

import { ApiClient } from "./api";
import { describeError, parse, render } from "./dsl";
import { fitViewport, paintFrame } from "./render";
import { rewardDeltas } from "./scene";
import { Timeline } from "./timeline";
import { QueryResponse, ScenarioDetail, TrajectoryPayload } from "./types";

const api = new ApiClient("");

interface AppState {
    scenario: ScenarioDetail | null;
    factual: TrajectoryPayload | null;
    counterfactual: TrajectoryPayload | null;
    timeline: Timeline | null;
}

const state: AppState = { scenario: null, factual: null, counterfactual: null, timeline: null };

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
}

function banner(text: string, isError = false): void {
    const box = el<HTMLDivElement>("banner");
    box.textContent = text;
    box.className = isError ? "banner error" : "banner";
    box.style.display = text ? "block" : "none";
}

function repaint(): void {
    if (!state.scenario || !state.factual || !state.timeline) return;
    const canvas = el<HTMLCanvasElement>("viewer");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const vp = fitViewport(state.scenario.layout.bbox, canvas.width, canvas.height);
    const scene = paintFrame(ctx, state.scenario.layout, state.scenario.goals,
                             state.factual, state.timeline.tick, vp,
                             state.counterfactual);
    el<HTMLSpanElement>("clock").textContent =
        `tick ${scene.tick} (${scene.timeS.toFixed(2)} s)`;
}

async function loadScenario(id: number): Promise<void> {
    banner("");
    try {
        state.scenario = await api.getScenario(id);
        state.factual = await api.getTrajectory(id);
        state.counterfactual = null;
    } catch (err) {
        banner(`Backend error: ${err}. Retry?`, true);
        return;
    }
    const slider = el<HTMLInputElement>("scrubber");
    slider.min = String(state.factual.start_tick);
    slider.max = String(state.factual.end_tick);
    slider.value = "0";
    state.timeline = new Timeline(state.factual.start_tick, state.factual.end_tick,
                                  state.factual.dt, (tick) => {
        slider.value = String(tick);
        repaint();
    });
    el<HTMLDivElement>("summary").textContent = state.scenario.summary;
    renderPrompts();
    repaint();
}

function renderPrompts(): void {
    const box = el<HTMLDivElement>("prompts");
    box.innerHTML = "";
    state.scenario?.prompts.forEach((prompt, index) => {
        const button = document.createElement("button");
        button.textContent = `${prompt.text} (t=${prompt.time})`;
        button.onclick = () => void runExplanation(index);
        box.appendChild(button);
    });
}

function showReward(response: QueryResponse): void {
    const box = el<HTMLDivElement>("reward");
    box.innerHTML = "";
    if (!response.reward) return;
    const factual = response.baseline_reward
        ? { ...response.baseline_reward.components, total: response.baseline_reward.total }
        : {};
    const cf = { ...response.reward.components, total: response.reward.total };
    const table = document.createElement("table");
    table.innerHTML = "<tr><th>component</th><th>factual</th><th>counterfactual</th>" +
        "<th>delta</th></tr>";
    for (const row of rewardDeltas(factual, cf)) {
        const tr = document.createElement("tr");
        tr.innerHTML = `<td>${row.name}</td><td>${row.factual.toFixed(2)}</td>` +
            `<td>${row.counterfactual.toFixed(2)}</td><td>${row.delta.toFixed(2)}</td>`;
        table.appendChild(tr);
    }
    box.appendChild(table);
}

async function submitQuery(): Promise<void> {
    if (!state.scenario) return;
    const input = el<HTMLInputElement>("query");
    const parsed = parse(input.value);
    if (!parsed.ok) {
        banner(describeError(parsed), true);
        return;
    }
    banner(`running ${render(parsed.query)} ...`);
    const response = await api.runQuery(state.scenario.id, input.value);
    if (!response.ok) {
        const detail = response.violations?.join("; ") ?? response.error ?? "rejected";
        banner(`${response.stage}: ${detail}`, true);
        return;
    }
    banner("");
    state.counterfactual = response.trajectory ?? null;
    showReward(response);
    repaint();
}

async function runExplanation(promptIndex: number): Promise<void> {
    if (!state.scenario) return;
    const feed = el<HTMLDivElement>("feed");
    feed.innerHTML = "";
    const scriptRaw = el<HTMLTextAreaElement>("stub-script").value.trim();
    const body: Record<string, unknown> = {
        scenario_id: state.scenario.id,
        prompt_index: promptIndex,
        provider: scriptRaw ? "stub" : "http",
    };
    if (scriptRaw) {
        body.script = scriptRaw.split("\n---\n").map((s) => s.trim()).filter(Boolean);
    }
    const { session_id } = await api.createSession(body);
    const append = (label: string, text: string) => {
        const item = document.createElement("div");
        item.className = `event ${label}`;
        item.textContent = `[${label}] ${text}`;
        feed.appendChild(item);
        feed.scrollTop = feed.scrollHeight;
    };
    api.streamSession(session_id, (event) => {
        const kind = String(event.kind);
        if (kind === "query") append("query", String(event.query));
        else if (kind === "simulation") append("simulation", String(event.text).slice(0, 400));
        else if (kind === "explanation") append("explanation", String(event.text));
        else if (kind === "final") append("final", String(event.text));
        else if (kind === "status" && event.status === "error") {
            append("error", String(event.error));
        }
    }, () => append("status", "session finished"));
}

async function boot(): Promise<void> {
    const select = el<HTMLSelectElement>("scenario-select");
    const scenarios = await api.listScenarios();
    for (const scenario of scenarios) {
        const option = document.createElement("option");
        option.value = String(scenario.id);
        option.textContent = `#${scenario.id} ${scenario.name} (${scenario.category})`;
        select.appendChild(option);
    }
    select.onchange = () => void loadScenario(Number(select.value));
    el<HTMLInputElement>("scrubber").oninput = (event) => {
        state.timeline?.seek(Number((event.target as HTMLInputElement).value));
    };
    el<HTMLButtonElement>("play").onclick = () => state.timeline?.toggle();
    el<HTMLButtonElement>("run-query").onclick = () => void submitQuery();
    el<HTMLButtonElement>("clear-overlay").onclick = () => {
        state.counterfactual = null;
        el<HTMLDivElement>("reward").innerHTML = "";
        repaint();
    };
    await loadScenario(scenarios[0].id);
}

if (typeof document !== "undefined") {
    void boot();
}
