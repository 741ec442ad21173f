/**
 * Typed client for the workflow control API.
 *
 * Every console mutation goes through this module, so a test can install
 * an onRequest hook and assert that only the documented routes are hit.
 */

export interface TaskSummary {
  id: string;
  description: string;
  status: string;
  depends_on: string[];
  unit: string | null;
}

export interface OutstandingRequest {
  task_id: string;
  prompt: string;
}

export interface WorkflowDescriptor {
  workflow_id: string;
  config_name: string;
  instruction: string;
  phase: string;
  verdict: boolean | null;
  final_result: string | null;
  replan_count: number;
  tasks: TaskSummary[];
  outstanding_requests: OutstandingRequest[];
  created_at: string;
  events_url: string;
  event_count: number;
}

export interface WorkflowEvent {
  sequence_no: number;
  timestamp: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface ConfigInfo {
  name: string;
  instruction: string;
}

export type FeedbackKind = "IncidentalObservation" | "HumanProxyResponse";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

export type RequestHook = (method: string, path: string) => void;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    public onRequest: RequestHook | null = null,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.onRequest?.(method, path);
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const data = (await response.json()) as { detail?: string };
        if (data.detail) detail = data.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listConfigs(): Promise<ConfigInfo[]> {
    return this.request("GET", "/configs");
  }

  listWorkflows(): Promise<WorkflowDescriptor[]> {
    return this.request("GET", "/workflows");
  }

  startWorkflow(configName: string, instruction?: string): Promise<{ workflow_id: string }> {
    return this.request("POST", "/workflows", {
      config_name: configName,
      instruction: instruction || null,
    });
  }

  getWorkflow(workflowId: string): Promise<WorkflowDescriptor> {
    return this.request("GET", `/workflows/${workflowId}`);
  }

  getEvents(workflowId: string, fromSeq = 0, waitSeconds = 0): Promise<WorkflowEvent[]> {
    const params = new URLSearchParams({ from: String(fromSeq) });
    if (waitSeconds > 0) params.set("wait", String(waitSeconds));
    return this.request("GET", `/workflows/${workflowId}/events?${params}`);
  }

  sendFeedback(
    workflowId: string,
    kind: FeedbackKind,
    content: string,
    taskId?: string,
  ): Promise<{ status: string }> {
    return this.request("POST", `/workflows/${workflowId}/feedback`, {
      kind,
      content,
      task_id: taskId ?? null,
    });
  }

  pause(workflowId: string): Promise<{ phase: string }> {
    return this.request("POST", `/workflows/${workflowId}/pause`);
  }

  resume(workflowId: string): Promise<{ phase: string }> {
    return this.request("POST", `/workflows/${workflowId}/resume`);
  }
}
