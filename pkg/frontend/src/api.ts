// Thin typed client over the backend service.

import {
    QueryResponse,
    ScenarioDetail,
    ScenarioSummary,
    SessionDoc,
    TrajectoryPayload,
} from "./types";

export class ApiClient {
    constructor(private base: string = "") {}

    private async get<T>(path: string): Promise<T> {
        const response = await fetch(`${this.base}${path}`);
        if (!response.ok) {
            throw new Error(`${path}: HTTP ${response.status}`);
        }
        return response.json() as Promise<T>;
    }

    private async post<T>(path: string, body: unknown): Promise<T> {
        const response = await fetch(`${this.base}${path}`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!response.ok) {
            throw new Error(`${path}: HTTP ${response.status}`);
        }
        return response.json() as Promise<T>;
    }

    listScenarios(): Promise<ScenarioSummary[]> {
        return this.get("/scenarios");
    }

    getScenario(id: number): Promise<ScenarioDetail> {
        return this.get(`/scenarios/${id}`);
    }

    getTrajectory(id: number): Promise<TrajectoryPayload> {
        return this.get(`/scenarios/${id}/trajectory`);
    }

    runQuery(id: number, text: string): Promise<QueryResponse> {
        return this.post(`/scenarios/${id}/query`, { text });
    }

    createSession(body: unknown): Promise<{ session_id: string; status: string }> {
        return this.post("/sessions", body);
    }

    getSession(sessionId: string): Promise<SessionDoc> {
        return this.get(`/sessions/${sessionId}`);
    }

    // Server-sent round events with a polling fallback.
    streamSession(
        sessionId: string,
        onEvent: (event: Record<string, unknown>) => void,
        onDone: () => void,
    ): () => void {
        if (typeof EventSource !== "undefined") {
            const source = new EventSource(`${this.base}/sessions/${sessionId}/events`);
            source.onmessage = (message) => {
                const event = JSON.parse(message.data);
                onEvent(event);
                if (event.kind === "status" && event.status !== "running") {
                    source.close();
                    onDone();
                }
            };
            source.onerror = () => {
                source.close();
                onDone();
            };
            return () => source.close();
        }
        let stopped = false;
        let seen = 0;
        const poll = async () => {
            while (!stopped) {
                const doc = await this.getSession(sessionId);
                for (const event of doc.events.slice(seen)) {
                    onEvent(event as Record<string, unknown>);
                }
                seen = doc.events.length;
                if (doc.status !== "running") {
                    onDone();
                    return;
                }
                await new Promise((resolve) => setTimeout(resolve, 400));
            }
        };
        void poll();
        return () => {
            stopped = true;
        };
    }
}
