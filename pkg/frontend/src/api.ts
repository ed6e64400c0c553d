/** Typed client for the steering service (all values in display units). */

export interface AxisInfo {
  name: string;
  min: number;
  max: number;
  unit: string;
}

export interface AppInfo {
  id: string;
  description: string;
  parameters: AxisInfo[];
  objectives: AxisInfo[];
}

export interface ObservationView {
  index: number;
  fidelity: "formal" | "informal";
  parameters: number[];
  objectives: number[];
  iteration: number;
  timestamp: number;
  pareto: boolean;
}

export interface RequestEntry {
  request: string;
  index: number;
  reason: string;
  policy: string;
  fallback: boolean;
}

export interface Snapshot {
  status: "seeding" | "active" | "closed";
  mode: "designer_led" | "bo_led" | "cooperative";
  app: AppInfo;
  current_sliders: number[];
  iteration: number;
  history: ObservationView[];
  requests: RequestEntry[];
  evaluations: { index: number; status: string; observation_index: number | null }[];
}

export interface Proposal {
  parameters: number[];
  index: number;
  reason: string;
  policy: string;
  fallback: boolean;
  acquisition_value: number;
}

export interface ApiError {
  status: number;
  code: string;
  message: string;
}

export class ServiceError extends Error {
  readonly error: ApiError;

  constructor(error: ApiError) {
    super(`${error.code}: ${error.message}`);
    this.error = error;
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "http_error";
    let message = response.statusText;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError({ status: response.status, code, message });
  }
  if (response.status === 204) {
    return undefined as T;
  }
  return (await response.json()) as T;
}

export class SteeringApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return asJson<T>(response);
  }

  async createSession(config: Record<string, unknown>): Promise<string> {
    const body = await this.post<{ id: string }>("/sessions", config);
    return body.id;
  }

  async snapshot(sessionId: string): Promise<Snapshot> {
    const response = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`);
    return asJson<Snapshot>(response);
  }

  async propose(sessionId: string, request: string): Promise<Proposal> {
    return this.post<Proposal>(`/sessions/${sessionId}/propose`, { request });
  }

  async evaluate(
    sessionId: string,
    parameters: number[],
    fidelity: "formal" | "informal",
  ): Promise<{ status: string; evaluation: number; observation?: ObservationView }> {
    return this.post(`/sessions/${sessionId}/evaluate`, { parameters, fidelity });
  }

  async evaluationStatus(
    sessionId: string,
    k: number,
  ): Promise<{ status: string; evaluation: number; observation?: ObservationView }> {
    const response = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/evaluations/${k}`);
    return asJson(response);
  }

  async setSliders(sessionId: string, parameters: number[]): Promise<void> {
    await this.post<void>(`/sessions/${sessionId}/sliders`, { parameters });
  }
}
