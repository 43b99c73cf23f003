// Focus-area drawing: ring validation before anything is posted.

import type { ApiClient } from "./api.js";
import type { LonLat } from "./types.js";

export interface RingValidation {
  ok: boolean;
  ring?: LonLat[];
  error?: string;
}

function segmentsProperlyIntersect(a: LonLat, b: LonLat, c: LonLat, d: LonLat): boolean {
  const cross = (o: LonLat, p: LonLat, q: LonLat) =>
    (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
  const d1 = cross(c, d, a);
  const d2 = cross(c, d, b);
  const d3 = cross(a, b, c);
  const d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

/** Validate a drawn vertex list: >= 3 vertices, auto-closed, and no two
 *  non-adjacent edges crossing. Mirrors the server's geometry policy so
 *  bad rings are rejected inline without a network round trip. */
export function validateRing(vertices: LonLat[]): RingValidation {
  const open =
    vertices.length > 1 &&
    vertices[0]![0] === vertices[vertices.length - 1]![0] &&
    vertices[0]![1] === vertices[vertices.length - 1]![1]
      ? vertices.slice(0, -1)
      : vertices.slice();
  if (open.length < 3) {
    return { ok: false, error: "a focus area needs at least 3 vertices" };
  }
  const n = open.length;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      // Skip adjacent edges (they share an endpoint, including the wrap).
      if (j === i + 1 || (i === 0 && j === n - 1)) continue;
      const a = open[i]!;
      const b = open[(i + 1) % n]!;
      const c = open[j]!;
      const d = open[(j + 1) % n]!;
      if (segmentsProperlyIntersect(a, b, c, d)) {
        return { ok: false, error: "ring crosses itself; redraw the polygon" };
      }
    }
  }
  return { ok: true, ring: [...open, open[0]!] };
}

export interface DrawOutcome {
  posted: boolean;
  error?: string;
  name?: string;
  vertexCount?: number;
}

/** Finish a draw interaction: validate locally, then post the closed ring.
 *  Invalid rings never reach the server. */
export async function drawFocusArea(
  api: ApiClient,
  projectId: string,
  name: string,
  vertices: LonLat[],
): Promise<DrawOutcome> {
  const validation = validateRing(vertices);
  if (!validation.ok || !validation.ring) {
    return { posted: false, error: validation.error ?? "invalid ring" };
  }
  const saved = await api.postFocusArea(projectId, name, validation.ring);
  return { posted: true, name: saved.name, vertexCount: saved.vertex_count };
}
