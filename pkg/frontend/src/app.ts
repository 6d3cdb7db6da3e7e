import { Client } from "./api.js";
import { EpisodeController } from "./controller.js";
import { drawToCanvas, sceneToDrawList } from "./render.js";
import type { Mode } from "./types.js";
import { thoughtTemplates } from "./validate.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const backendInput = $<HTMLInputElement>("backend");
const familySel = $<HTMLSelectElement>("family");
const objectsSel = $<HTMLSelectElement>("objects");
const seedInput = $<HTMLInputElement>("seed");
const modeSel = $<HTMLSelectElement>("mode");
const checkpointInput = $<HTMLInputElement>("checkpoint");
const startBtn = $<HTMLButtonElement>("start");
const stepBtn = $<HTMLButtonElement>("step");
const autoBtn = $<HTMLButtonElement>("auto");
const stopBtn = $<HTMLButtonElement>("stop");
const thoughtBox = $<HTMLInputElement>("thought");
const thoughtList = $<HTMLDataListElement>("thought-templates");
const thoughtRow = $("thought-row");
const taskEl = $("task");
const bannerEl = $("banner");
const errorEl = $("error");
const bubbleEl = $("thought-bubble");
const logEl = $("steplog");
const canvas = $<HTMLCanvasElement>("grid");

const CELL_PX = 56;

let controller = new EpisodeController(new Client(backendInput.value));

function render(): void {
  const s = controller.state;
  startBtn.disabled = s.phase === "stepping";
  stepBtn.disabled = s.phase !== "ready";
  autoBtn.disabled = s.phase !== "ready" || s.autoRunning;
  stopBtn.disabled = !s.autoRunning;
  // per-episode modality: the selector locks once a session exists
  modeSel.disabled = s.sessionId !== null && s.phase !== "idle";
  thoughtRow.style.display = s.mode === "follow" ? "" : "none";
  taskEl.textContent = s.taskText ? `Task: ${s.taskText}` : "";
  bannerEl.style.display = s.showSuccessBanner ? "" : "none";
  errorEl.textContent = s.error ?? "";

  if (s.scene) {
    canvas.width = s.scene.grid_size * CELL_PX;
    canvas.height = s.scene.grid_size * CELL_PX;
    const ctx = canvas.getContext("2d");
    if (ctx) drawToCanvas(ctx, sceneToDrawList(s.scene), CELL_PX);
  }

  const last = s.log[s.log.length - 1];
  bubbleEl.textContent = last?.thought
    ? `${last.source === "model" ? "model" : last.source} thinks: ${last.thought}`
    : "";

  logEl.innerHTML = "";
  for (const e of [...s.log].reverse().slice(0, 40)) {
    const li = document.createElement("li");
    const thought = e.thought ? ` "${e.thought}" [${e.source}]` : "";
    li.textContent = `#${e.step} ${e.action}${thought} (${e.tokens} tok, ${e.latencyMs.toFixed(0)} ms)`;
    logEl.appendChild(li);
  }
}

async function start(): Promise<void> {
  controller = new EpisodeController(new Client(backendInput.value));
  controller.onChange(render);
  try {
    await controller.loadVocab();
    thoughtList.innerHTML = "";
    for (const t of thoughtTemplates(controller.vocabulary)) {
      const opt = document.createElement("option");
      opt.value = t;
      thoughtList.appendChild(opt);
    }
    await controller.create({
      task_family: familySel.value,
      n_objects: parseInt(objectsSel.value, 10),
      seed: parseInt(seedInput.value, 10) || 0,
      mode: modeSel.value as Mode,
      checkpoint: checkpointInput.value || undefined,
    });
  } catch (err) {
    errorEl.textContent = err instanceof Error ? err.message : String(err);
  }
}

startBtn.addEventListener("click", () => void start());
stepBtn.addEventListener("click", () => {
  const thought = modeSel.value === "follow" ? thoughtBox.value : undefined;
  void controller.step(thought);
});
autoBtn.addEventListener("click", () => void controller.autoRun(500, 200));
stopBtn.addEventListener("click", () => controller.stopAutoRun());

render();
