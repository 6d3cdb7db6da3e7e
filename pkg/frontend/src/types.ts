// Mirrors the service's scene JSON schema (shared with the dataset format).

export interface ObjectDef {
  id: number;
  shape: string;
  color: string;
}

export interface Stack {
  x: number;
  y: number;
  ids: number[];
}

export interface Gripper {
  x: number;
  y: number;
  state: "open" | "closed";
  held: number | null;
}

export interface Scene {
  grid_size: number;
  objects: ObjectDef[];
  stacks: Stack[];
  gripper: Gripper;
  task: { family: string; text: string; n_objects: number };
  step_count: number;
}

export type Mode = "act" | "think" | "follow" | "oracle";

export interface SessionInfo {
  session_id: string;
  mode: Mode;
  scene: Scene;
  task_text: string;
  success: boolean;
  steps: number;
}

export interface StepRecord {
  step: number;
  action: { dx: number; dy: number; grip: string };
  thought: string | null;
  thought_source: string | null;
  tokens_generated: number;
  decode_seconds: number;
  malformed: number;
  scene: Scene;
  success: boolean;
  warning: string | null;
}

export interface VocabManifest {
  grid_size: number;
  action_bins: number;
  tokens: string[];
}
