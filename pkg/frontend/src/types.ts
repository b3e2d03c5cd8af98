/**
 * Wire contracts for the suggestion service (checked-in duplicate of the
 * server's JSON shapes). Parsers validate at the boundary so the rest of
 * the app can trust the types.
 */

export type RankerName = "matching" | "mmr" | "mcvae";

export const RANKERS: RankerName[] = ["matching", "mmr", "mcvae"];

export interface Suggestion {
  text: string;
  response_id: number;
  cluster_id: number;
  raw_score: number;
  softmax_score: number;
  mmr_score: number | null;
  votes: number | null;
}

export interface SuggestionBlock {
  ranker: string;
  suggestions: Suggestion[];
  timings_us: Record<string, number>;
  params: Record<string, unknown>;
}

export interface CompareResponse {
  message: string;
  rankers: Partial<Record<RankerName, SuggestionBlock>>;
}

/** Request-side knob values; `s` is the wire name for the sample count. */
export interface KnobParams {
  alpha: number;
  beta: number;
  k: number;
  s: number;
  seed: number;
  use_mmr_preselect?: boolean;
}

export interface ClickRequest {
  message: string;
  chosen_text: string;
  ranker: string;
}

export class WireFormatError extends Error {}

function fail(path: string, expected: string): never {
  throw new WireFormatError(`bad payload at ${path}: expected ${expected}`);
}

function asNumber(value: unknown, path: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) fail(path, "a finite number");
  return value;
}

function asOptionalNumber(value: unknown, path: string): number | null {
  if (value === null || value === undefined) return null;
  return asNumber(value, path);
}

function asString(value: unknown, path: string): string {
  if (typeof value !== "string") fail(path, "a string");
  return value;
}

function asObject(value: unknown, path: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) fail(path, "an object");
  return value as Record<string, unknown>;
}

export function parseSuggestion(raw: unknown, path = "suggestion"): Suggestion {
  const doc = asObject(raw, path);
  return {
    text: asString(doc.text, `${path}.text`),
    response_id: asNumber(doc.response_id, `${path}.response_id`),
    cluster_id: asNumber(doc.cluster_id, `${path}.cluster_id`),
    raw_score: asNumber(doc.raw_score, `${path}.raw_score`),
    softmax_score: asNumber(doc.softmax_score, `${path}.softmax_score`),
    mmr_score: asOptionalNumber(doc.mmr_score, `${path}.mmr_score`),
    votes: asOptionalNumber(doc.votes, `${path}.votes`),
  };
}

export function parseSuggestionBlock(raw: unknown, path = "block"): SuggestionBlock {
  const doc = asObject(raw, path);
  const suggestions = doc.suggestions;
  if (!Array.isArray(suggestions)) fail(`${path}.suggestions`, "an array");
  const timings = asObject(doc.timings_us ?? {}, `${path}.timings_us`);
  for (const [key, value] of Object.entries(timings)) asNumber(value, `${path}.timings_us.${key}`);
  return {
    ranker: asString(doc.ranker, `${path}.ranker`),
    suggestions: suggestions.map((s, i) => parseSuggestion(s, `${path}.suggestions[${i}]`)),
    timings_us: timings as Record<string, number>,
    params: asObject(doc.params ?? {}, `${path}.params`),
  };
}

export function parseCompareResponse(raw: unknown): CompareResponse {
  const doc = asObject(raw, "compare");
  const rankersDoc = asObject(doc.rankers, "compare.rankers");
  const rankers: Partial<Record<RankerName, SuggestionBlock>> = {};
  for (const name of RANKERS) {
    if (name in rankersDoc) {
      rankers[name] = parseSuggestionBlock(rankersDoc[name], `compare.rankers.${name}`);
    }
  }
  if (Object.keys(rankers).length === 0) fail("compare.rankers", "at least one ranker block");
  return { message: asString(doc.message, "compare.message"), rankers };
}
