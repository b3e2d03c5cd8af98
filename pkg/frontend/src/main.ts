/** Playground wiring: state + api + render + knob panel. */

import { ApiClient, ApiError } from "./api.js";
import { DEFAULT_KNOBS, KNOB_LIMITS, validateKnobs } from "./knobs.js";
import * as state from "./state.js";
import { renderColumns, renderConversation } from "./render.js";
import type { KnobParams, RankerName } from "./types.js";

const api = new ApiClient("");
let current = state.initialState();

const chatLog = document.getElementById("chat-log") as HTMLElement;
const columnsRoot = document.getElementById("columns-root") as HTMLElement;
const form = document.getElementById("composer") as HTMLFormElement;
const input = document.getElementById("composer-input") as HTMLInputElement;
const knobForm = document.getElementById("knob-form") as HTMLFormElement;
const knobStatus = document.getElementById("knob-status") as HTMLElement;

function redraw(): void {
  renderConversation(chatLog, current);
  renderColumns(columnsRoot, current, {
    onSuggestionClick: handleSuggestionClick,
    onRetry: handleRetry,
  });
}

async function fetchCompare(message: string): Promise<void> {
  try {
    const payload = await api.compare(message, current.knobs);
    current = state.compareArrived(current, message, payload);
  } catch (err) {
    if ((err as Error).name === "AbortError") return; // superseded request
    current = state.compareFailed(current, message, (err as ApiError).message);
  }
  redraw();
}

form.addEventListener("submit", (event) => {
  event.preventDefault();
  const text = input.value;
  const before = current;
  current = state.submitMessage(current, text);
  if (current === before) return;
  input.value = "";
  redraw();
  void fetchCompare(current.pendingMessage as string);
});

function handleSuggestionClick(text: string, ranker: RankerName): void {
  const before = current;
  const message = state.currentMessage(current);
  current = state.clickSuggestion(current, text, ranker);
  if (current === before) return; // debounced
  redraw();
  if (message !== null) {
    api.click({ message, chosen_text: text, ranker }).catch(() => {
      /* click logging is best effort; the turn stays */
    });
  }
  void fetchCompare(text);
}

function handleRetry(): void {
  const message = state.currentMessage(current);
  if (message === null) return;
  current = { ...current, pendingMessage: message, error: null };
  redraw();
  void fetchCompare(message);
}

function readKnobForm(): KnobParams {
  const data = new FormData(knobForm);
  return {
    alpha: Number(data.get("alpha")),
    beta: Number(data.get("beta")),
    k: Number(data.get("k")),
    s: Number(data.get("s")),
    seed: Number(data.get("seed")),
    use_mmr_preselect: data.get("use_mmr_preselect") === "on",
  };
}

knobForm.addEventListener("submit", (event) => {
  event.preventDefault();
  const values = readKnobForm();
  const check = validateKnobs(values);
  if (!check.ok) {
    knobStatus.textContent = Object.entries(check.errors)
      .map(([name, msg]) => `${name}: ${msg}`)
      .join("; ");
    knobStatus.className = "knob-status knob-error";
    return; // out-of-range: no request leaves the client
  }
  current = state.applyKnobs(current, values);
  knobStatus.textContent = "applied; next compare uses these values";
  knobStatus.className = "knob-status knob-ok";
  const message = state.currentMessage(current);
  if (message !== null) {
    current = { ...current, pendingMessage: message };
    redraw();
    void fetchCompare(message);
  }
});

function seedKnobForm(): void {
  for (const [name, value] of Object.entries(DEFAULT_KNOBS)) {
    const field = knobForm.elements.namedItem(name);
    if (field instanceof HTMLInputElement) {
      if (field.type === "checkbox") field.checked = Boolean(value);
      else field.value = String(value);
    }
  }
  for (const [name, limits] of Object.entries(KNOB_LIMITS)) {
    const field = knobForm.elements.namedItem(name);
    if (field instanceof HTMLInputElement && field.type === "number") {
      field.min = String(limits.min);
      field.max = String(limits.max);
      field.step = limits.integer ? "1" : "0.05";
    }
  }
}

async function boot(): Promise<void> {
  seedKnobForm();
  redraw();
  try {
    const config = await api.config();
    const knobs: KnobParams = {
      alpha: Number(config.alpha ?? DEFAULT_KNOBS.alpha),
      beta: Number(config.beta ?? DEFAULT_KNOBS.beta),
      k: Number(config.k ?? DEFAULT_KNOBS.k),
      s: Number(config.samples ?? DEFAULT_KNOBS.s),
      seed: Number(config.seed ?? DEFAULT_KNOBS.seed),
      use_mmr_preselect: Boolean(config.use_mmr_preselect ?? false),
    };
    current = state.applyKnobs(current, knobs);
    seedFromKnobs(knobs);
  } catch {
    /* service config unavailable: keep local defaults */
  }
}

function seedFromKnobs(knobs: KnobParams): void {
  for (const [name, value] of Object.entries(knobs)) {
    const field = knobForm.elements.namedItem(name);
    if (field instanceof HTMLInputElement) {
      if (field.type === "checkbox") field.checked = Boolean(value);
      else field.value = String(value);
    }
  }
}

void boot();
