/** DOM rendering for the chat log and the three ranker columns. */

import type { ConversationState } from "./state.js";
import { duplicateClusterIds } from "./state.js";
import { RANKERS, type RankerName, type Suggestion, type SuggestionBlock } from "./types.js";

export interface RenderCallbacks {
  onSuggestionClick: (text: string, ranker: RankerName) => void;
  onRetry: () => void;
}

const RANKER_TITLES: Record<RankerName, string> = {
  matching: "Matching",
  mmr: "MMR",
  mcvae: "M-CVAE",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderConversation(root: HTMLElement, state: ConversationState): void {
  root.replaceChildren();
  for (const turn of state.turns) {
    const bubble = el("div", `turn ${turn.author === "user" ? "turn-user" : "turn-click"}`);
    bubble.appendChild(el("div", "turn-text", turn.text));
    if (turn.ranker) bubble.appendChild(el("div", "turn-meta", `clicked from ${turn.ranker}`));
    root.appendChild(bubble);
  }
  if (state.pendingMessage !== null) {
    root.appendChild(el("div", "turn turn-pending", "fetching suggestions..."));
  }
  root.scrollTop = root.scrollHeight;
}

function scoreLine(s: Suggestion): string {
  const bits = [`score ${s.raw_score.toFixed(3)}`];
  if (s.votes !== null) bits.push(`${s.votes} votes`);
  if (s.mmr_score !== null) bits.push(`mmr ${s.mmr_score.toFixed(3)}`);
  bits.push(`cluster ${s.cluster_id}`);
  return bits.join(" · ");
}

function timingsLine(block: SuggestionBlock): string {
  const stages = ["encode_us", "score_us", "preselect_us", "sample_vote_us", "dedup_us"];
  return stages
    .filter((name) => name in block.timings_us)
    .map((name) => `${name.replace("_us", "")} ${Math.round(block.timings_us[name])}µs`)
    .join("  ");
}

export function renderColumns(root: HTMLElement, state: ConversationState, callbacks: RenderCallbacks): void {
  root.replaceChildren();
  if (state.error !== null) {
    const banner = el("div", "error-banner");
    banner.appendChild(el("span", undefined, `suggestion fetch failed: ${state.error}`));
    const retry = el("button", "retry", "retry");
    retry.addEventListener("click", callbacks.onRetry);
    banner.appendChild(retry);
    root.appendChild(banner);
  }
  const compare = state.lastCompare;
  if (!compare) {
    if (state.error === null) {
      root.appendChild(el("div", "placeholder", "Send a message to see all three rankers side by side."));
    }
    return;
  }
  const grid = el("div", "columns");
  for (const name of RANKERS) {
    const block = compare.rankers[name];
    if (!block) continue;
    const column = el("div", "column");
    column.appendChild(el("h3", undefined, RANKER_TITLES[name]));
    const duplicates = duplicateClusterIds(block);
    for (const suggestion of block.suggestions) {
      const chip = el("button", "suggestion");
      chip.appendChild(el("div", "suggestion-text", suggestion.text));
      const meta = el("div", "suggestion-meta", scoreLine(suggestion));
      if (duplicates.has(suggestion.cluster_id)) {
        meta.appendChild(el("span", "dup-badge", "duplicate"));
      }
      chip.appendChild(meta);
      chip.addEventListener("click", () => callbacks.onSuggestionClick(suggestion.text, name));
      column.appendChild(chip);
    }
    column.appendChild(el("div", "timings", timingsLine(block)));
    grid.appendChild(column);
  }
  root.appendChild(grid);
}
