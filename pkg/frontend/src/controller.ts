// Episode state machine behind the UI. The scene shown is always the last
// server response; the mode is fixed when the session is created; at most
// one step request is in flight.

import { Client } from "./api.js";
import type { Mode, Scene, StepRecord } from "./types.js";
import { validateThought } from "./validate.js";

export interface LogEntry {
  step: number;
  action: string;
  thought: string | null;
  source: string | null;
  latencyMs: number;
  tokens: number;
}

export interface ViewState {
  phase: "idle" | "ready" | "stepping" | "done";
  sessionId: string | null;
  mode: Mode | null;
  taskText: string;
  scene: Scene | null;
  log: LogEntry[];
  showSuccessBanner: boolean;
  error: string | null;
  autoRunning: boolean;
}

export class EpisodeController {
  state: ViewState = {
    phase: "idle",
    sessionId: null,
    mode: null,
    taskText: "",
    scene: null,
    log: [],
    showSuccessBanner: false,
    error: null,
    autoRunning: false,
  };

  private vocabTokens: Set<string> = new Set();
  private listeners: Array<(s: ViewState) => void> = [];

  constructor(private client: Client) {}

  onChange(fn: (s: ViewState) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  async loadVocab(): Promise<void> {
    const manifest = await this.client.vocab();
    this.vocabTokens = new Set(manifest.tokens);
  }

  get vocabulary(): Set<string> {
    return this.vocabTokens;
  }

  async create(opts: {
    task_family: string;
    n_objects: number;
    seed: number;
    mode: Mode;
    checkpoint?: string;
  }): Promise<void> {
    if (this.state.phase === "stepping") {
      throw new Error("a step is in flight");
    }
    const info = await this.client.createSession(opts);
    this.state = {
      phase: "ready",
      sessionId: info.session_id,
      mode: info.mode, // immutable from here on
      taskText: info.task_text,
      scene: info.scene,
      log: [],
      showSuccessBanner: false,
      error: null,
      autoRunning: false,
    };
    this.emit();
  }

  /** One policy step; in follow mode the thought is validated locally first. */
  async step(thought?: string): Promise<StepRecord | null> {
    const s = this.state;
    if (!s.sessionId || s.phase === "stepping") {
      return null;
    }
    if (s.mode === "follow") {
      const v = validateThought(thought ?? "", this.vocabTokens);
      if (!v.ok) {
        s.error =
          v.unknown.length > 0
            ? `unknown words: ${v.unknown.join(", ")}`
            : "follow mode needs a thought";
        this.emit();
        return null;
      }
    }
    s.phase = "stepping";
    s.error = null;
    this.emit();
    try {
      const rec = await this.client.step(s.sessionId, thought);
      s.scene = rec.scene;
      s.log.push({
        step: rec.step,
        action: `(${rec.action.dx},${rec.action.dy},${rec.action.grip})`,
        thought: rec.thought,
        source: rec.thought_source,
        latencyMs: rec.decode_seconds * 1000, // echoed server timing
        tokens: rec.tokens_generated,
      });
      if (rec.success) {
        s.phase = "done";
        s.showSuccessBanner = true;
        s.autoRunning = false;
      } else {
        s.phase = "ready";
      }
      this.emit();
      return rec;
    } catch (err) {
      s.phase = "ready";
      s.error = err instanceof Error ? err.message : String(err);
      this.emit();
      return null;
    }
  }

  /** Steps repeatedly until success, an error, or maxSteps. */
  async autoRun(intervalMs: number, maxSteps: number): Promise<void> {
    this.state.autoRunning = true;
    this.emit();
    for (let i = 0; i < maxSteps && this.state.autoRunning; i++) {
      const rec = await this.step();
      if (!rec || rec.success) {
        break;
      }
      if (intervalMs > 0) {
        await new Promise((r) => setTimeout(r, intervalMs));
      }
    }
    this.state.autoRunning = false;
    this.emit();
  }

  stopAutoRun(): void {
    this.state.autoRunning = false;
    this.emit();
  }

  async close(): Promise<void> {
    if (this.state.sessionId) {
      await this.client.deleteSession(this.state.sessionId).catch(() => undefined);
    }
    this.state.phase = "idle";
    this.state.sessionId = null;
    this.emit();
  }
}
