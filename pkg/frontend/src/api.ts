import type { Mode, SessionInfo, StepRecord, VocabManifest } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

async function parse<T>(res: Response): Promise<T> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    throw new ApiError(res.status, (body as { detail?: unknown }).detail ?? body);
  }
  return body as T;
}

export class Client {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(opts: {
    task_family: string;
    n_objects: number;
    seed: number;
    mode: Mode;
    checkpoint?: string;
  }): Promise<SessionInfo> {
    const res = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(opts),
    });
    return parse<SessionInfo>(res);
  }

  async step(sessionId: string, thought?: string): Promise<StepRecord> {
    const res = await fetch(this.url(`/sessions/${sessionId}/step`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(thought === undefined ? {} : { thought }),
    });
    return parse<StepRecord>(res);
  }

  async getSession(sessionId: string): Promise<SessionInfo & { history: unknown[] }> {
    const res = await fetch(this.url(`/sessions/${sessionId}`));
    return parse(res);
  }

  async deleteSession(sessionId: string): Promise<void> {
    const res = await fetch(this.url(`/sessions/${sessionId}`), { method: "DELETE" });
    await parse(res);
  }

  async vocab(): Promise<VocabManifest> {
    const res = await fetch(this.url("/vocab"));
    return parse<VocabManifest>(res);
  }

  async health(): Promise<boolean> {
    try {
      const res = await fetch(this.url("/healthz"));
      return res.ok;
    } catch {
      return false;
    }
  }
}
