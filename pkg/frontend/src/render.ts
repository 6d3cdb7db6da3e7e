// Scene -> draw list. Pure and testable; the canvas adapter below just
// replays the ops. Every frame comes from a server scene, never from local
// simulation.

import type { ObjectDef, Scene } from "./types.js";

export type DrawOp =
  | { kind: "tile"; x: number; y: number }
  | {
      kind: "glyph";
      x: number;
      y: number;
      shape: string;
      color: string;
      stackDepth: number;
    }
  | { kind: "badge"; x: number; y: number; count: number }
  | {
      kind: "gripper";
      x: number;
      y: number;
      state: "open" | "closed";
      heldShape: string | null;
      heldColor: string | null;
    };

export function sceneToDrawList(scene: Scene): DrawOp[] {
  const ops: DrawOp[] = [];
  const byId = new Map<number, ObjectDef>(scene.objects.map((o) => [o.id, o]));
  for (let y = 0; y < scene.grid_size; y++) {
    for (let x = 0; x < scene.grid_size; x++) {
      ops.push({ kind: "tile", x, y });
    }
  }
  for (const stack of scene.stacks) {
    const topId = stack.ids[stack.ids.length - 1];
    const top = byId.get(topId);
    if (!top) {
      throw new Error(`scene references unknown object id ${topId}`);
    }
    ops.push({
      kind: "glyph",
      x: stack.x,
      y: stack.y,
      shape: top.shape,
      color: top.color,
      stackDepth: stack.ids.length,
    });
    if (stack.ids.length > 1) {
      ops.push({ kind: "badge", x: stack.x, y: stack.y, count: stack.ids.length });
    }
  }
  const held = scene.gripper.held === null ? null : byId.get(scene.gripper.held) ?? null;
  ops.push({
    kind: "gripper",
    x: scene.gripper.x,
    y: scene.gripper.y,
    state: scene.gripper.state,
    heldShape: held ? held.shape : null,
    heldColor: held ? held.color : null,
  });
  return ops;
}

const CSS_COLOR: Record<string, string> = {
  red: "#d64541",
  blue: "#2e6fdb",
  green: "#27a25c",
  yellow: "#d8b021",
  purple: "#8e55c9",
};

function glyphPath(ctx: CanvasRenderingContext2D, shape: string, cx: number, cy: number, r: number) {
  ctx.beginPath();
  switch (shape) {
    case "cube":
      ctx.rect(cx - r, cy - r, 2 * r, 2 * r);
      break;
    case "sphere":
      ctx.arc(cx, cy, r, 0, 2 * Math.PI);
      break;
    case "triangle":
      ctx.moveTo(cx, cy - r);
      ctx.lineTo(cx + r, cy + r);
      ctx.lineTo(cx - r, cy + r);
      ctx.closePath();
      break;
    case "star": {
      for (let i = 0; i < 10; i++) {
        const rad = i % 2 === 0 ? r : r * 0.45;
        const a = -Math.PI / 2 + (i * Math.PI) / 5;
        const px = cx + rad * Math.cos(a);
        const py = cy + rad * Math.sin(a);
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      }
      ctx.closePath();
      break;
    }
    default:
      ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  }
}

export function drawToCanvas(
  ctx: CanvasRenderingContext2D,
  ops: DrawOp[],
  cellPx: number,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (const op of ops) {
    const px = op.x * cellPx;
    const py = op.y * cellPx;
    const cx = px + cellPx / 2;
    const cy = py + cellPx / 2;
    if (op.kind === "tile") {
      ctx.fillStyle = (op.x + op.y) % 2 === 0 ? "#f6f2ea" : "#efe9dd";
      ctx.fillRect(px, py, cellPx, cellPx);
      ctx.strokeStyle = "#ddd5c4";
      ctx.strokeRect(px + 0.5, py + 0.5, cellPx - 1, cellPx - 1);
    } else if (op.kind === "glyph") {
      ctx.fillStyle = CSS_COLOR[op.color] ?? "#777";
      ctx.strokeStyle = "#333";
      glyphPath(ctx, op.shape, cx, cy, cellPx * 0.32);
      ctx.fill();
      ctx.stroke();
    } else if (op.kind === "badge") {
      ctx.fillStyle = "#333";
      ctx.beginPath();
      ctx.arc(px + cellPx - 9, py + 9, 8, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillStyle = "#fff";
      ctx.font = "10px sans-serif";
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(String(op.count), px + cellPx - 9, py + 9);
    } else {
      // gripper: open = corner brackets, closed = solid ring
      ctx.strokeStyle = "#111";
      ctx.lineWidth = 2.5;
      const r = cellPx * 0.44;
      if (op.state === "closed") {
        ctx.beginPath();
        ctx.arc(cx, cy, r * 0.95, 0, 2 * Math.PI);
        ctx.stroke();
      } else {
        for (const [sx, sy] of [
          [-1, -1],
          [1, -1],
          [1, 1],
          [-1, 1],
        ]) {
          ctx.beginPath();
          ctx.moveTo(cx + sx * r, cy + sy * (r - 8));
          ctx.lineTo(cx + sx * r, cy + sy * r);
          ctx.lineTo(cx + sx * (r - 8), cy + sy * r);
          ctx.stroke();
        }
      }
      if (op.heldShape) {
        ctx.fillStyle = CSS_COLOR[op.heldColor ?? ""] ?? "#777";
        glyphPath(ctx, op.heldShape, cx, cy, cellPx * 0.2);
        ctx.fill();
        ctx.stroke();
      }
      ctx.lineWidth = 1;
    }
  }
}
