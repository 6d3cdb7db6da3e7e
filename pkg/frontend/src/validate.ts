// Client-side thought validation against the vocabulary manifest, so
// out-of-vocabulary words never reach the server.

export function tokenizeText(text: string): string[] {
  return text
    .replace(/([:;?])/g, " $1 ")
    .split(/\s+/)
    .filter((w) => w.length > 0);
}

export interface ValidationResult {
  ok: boolean;
  unknown: string[];
}

export function validateThought(text: string, vocabTokens: Set<string>): ValidationResult {
  const words = tokenizeText(text);
  if (words.length === 0) {
    return { ok: false, unknown: [] };
  }
  const unknown = [...new Set(words.filter((w) => !vocabTokens.has(w)))];
  return { ok: unknown.length === 0, unknown };
}

// Template completions offered in the thought box; every word comes from
// the vocabulary manifest.
export function thoughtTemplates(vocabTokens: Set<string>): string[] {
  const shapes = ["cube", "sphere", "triangle", "star"].filter((s) => vocabTokens.has(s));
  const colors = ["red", "blue", "green", "yellow", "purple"].filter((c) =>
    vocabTokens.has(c),
  );
  const out: string[] = [];
  for (const color of colors.slice(0, 2)) {
    for (const shape of shapes.slice(0, 2)) {
      out.push(`subtask: move to the ${color} ${shape} ; move: left`);
      out.push(`subtask: pick up the ${color} ${shape}`);
    }
  }
  out.push("subtask: move to the red cube ; move: right forward");
  return out.filter((t) => validateThought(t, vocabTokens).ok);
}
