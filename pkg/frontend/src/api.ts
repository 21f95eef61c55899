import type { AnswerPayload, Settings, TranscriptPayload } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `request failed with status ${res.status}`;
  try {
    const body = await res.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body, keep the generic message
  }
  return new ApiError(res.status, code, message);
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async post(path: string, body?: unknown): Promise<Response> {
    return this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  async health(): Promise<{ status: string; chunks: number; docs: number }> {
    const res = await this.fetchFn(this.base + "/health");
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async startSession(): Promise<string> {
    const res = await this.post("/sessions");
    if (!res.ok) throw await parseError(res);
    const body = await res.json();
    return body.session_id;
  }

  async getSession(sessionId: string): Promise<TranscriptPayload> {
    const res = await this.fetchFn(`${this.base}/sessions/${sessionId}`);
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async sendMessage(
    sessionId: string,
    question: string,
    settings: Settings,
  ): Promise<AnswerPayload> {
    const res = await this.post(`/sessions/${sessionId}/messages`, {
      question,
      k: settings.k,
      temperature: settings.temperature,
      max_tokens: settings.maxTokens,
    });
    if (!res.ok) throw await parseError(res);
    return res.json();
  }
}
