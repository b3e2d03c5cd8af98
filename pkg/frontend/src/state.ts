/**
 * Conversation state machine, kept pure so it is unit-testable without a
 * DOM: turns, knob values, the latest compare payload, and the pending
 * request bookkeeping that gives clicks their debounce.
 */

import type { CompareResponse, KnobParams, RankerName } from "./types.js";
import { DEFAULT_KNOBS } from "./knobs.js";

export type TurnAuthor = "user" | "suggestion-click";

export interface Turn {
  author: TurnAuthor;
  text: string;
  ranker?: RankerName; // which column the click came from
}

export interface ConversationState {
  turns: Turn[];
  knobs: KnobParams;
  lastCompare: CompareResponse | null;
  pendingMessage: string | null; // message whose /compare is in flight
  error: string | null;
}

export function initialState(): ConversationState {
  return {
    turns: [],
    knobs: { ...DEFAULT_KNOBS },
    lastCompare: null,
    pendingMessage: null,
    error: null,
  };
}

/** A typed user message becomes a turn and triggers a fetch. */
export function submitMessage(state: ConversationState, text: string): ConversationState {
  const trimmed = text.trim();
  if (!trimmed) return state;
  return {
    ...state,
    turns: [...state.turns, { author: "user", text: trimmed }],
    pendingMessage: trimmed,
    error: null,
  };
}

/**
 * A clicked suggestion becomes the next turn. Double-clicks debounce: if
 * the click's text already equals the in-flight message, nothing changes.
 */
export function clickSuggestion(
  state: ConversationState,
  text: string,
  ranker: RankerName,
): ConversationState {
  if (state.pendingMessage === text) return state;
  return {
    ...state,
    turns: [...state.turns, { author: "suggestion-click", text, ranker }],
    pendingMessage: text,
    error: null,
  };
}

export function compareArrived(
  state: ConversationState,
  forMessage: string,
  payload: CompareResponse,
): ConversationState {
  if (state.pendingMessage !== forMessage) return state; // stale response: latest wins
  return { ...state, lastCompare: payload, pendingMessage: null, error: null };
}

export function compareFailed(state: ConversationState, forMessage: string, error: string): ConversationState {
  if (state.pendingMessage !== forMessage) return state;
  // the conversation is preserved; the banner offers a retry
  return { ...state, pendingMessage: null, error };
}

export function applyKnobs(state: ConversationState, knobs: KnobParams): ConversationState {
  return { ...state, knobs: { ...knobs } };
}

/** The message a retry (or a knob change) should re-fetch, newest first. */
export function currentMessage(state: ConversationState): string | null {
  for (let i = state.turns.length - 1; i >= 0; i--) {
    return state.turns[i].text;
  }
  return null;
}

/** Cluster ids that appear more than once within a column (duplicate badges). */
export function duplicateClusterIds(block: { suggestions: { cluster_id: number }[] }): Set<number> {
  const seen = new Map<number, number>();
  for (const s of block.suggestions) {
    seen.set(s.cluster_id, (seen.get(s.cluster_id) ?? 0) + 1);
  }
  return new Set([...seen.entries()].filter(([, n]) => n > 1).map(([cid]) => cid));
}
