/** Display helpers: ages, score formatting, segment labels. */

export function formatScore(score: number | null | undefined): string {
  if (score === null || score === undefined || Number.isNaN(score)) return "-";
  return score.toFixed(4);
}

export function formatAge(createdAtSeconds: number, nowMs = Date.now()): string {
  const seconds = Math.max(0, Math.floor(nowMs / 1000 - createdAtSeconds));
  if (seconds < 60) return `${seconds}s`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m`;
  if (seconds < 86400) return `${Math.floor(seconds / 3600)}h`;
  return `${Math.floor(seconds / 86400)}d`;
}

export function segmentLabel(name: string): string {
  if (name.startsWith("finger_")) {
    const pos = Number(name.slice(7));
    const hand = pos <= 5 ? "R" : "L";
    const digits = ["thumb", "index", "middle", "ring", "little"];
    return `${hand} ${digits[(pos - 1) % 5]}`;
  }
  if (name === "face") return "face";
  if (name === "iris_left") return "iris L";
  if (name === "iris_right") return "iris R";
  return name;
}

/** Width percentage for a cosine-like score bar; clamps to [0, 100]. */
export function barWidth(score: number): number {
  return Math.round(Math.min(1, Math.max(0, score)) * 100);
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
