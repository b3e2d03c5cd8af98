/** Client-side knob validation mirroring the service's documented ranges. */

import type { KnobParams } from "./types.js";

export interface KnobLimits {
  min: number;
  max: number;
  integer: boolean;
}

export const KNOB_LIMITS: Record<keyof Omit<KnobParams, "use_mmr_preselect">, KnobLimits> = {
  alpha: { min: 0, max: 5, integer: false },
  beta: { min: 0, max: 1, integer: false },
  k: { min: 3, max: 100, integer: true },
  s: { min: 1, max: 10000, integer: true },
  seed: { min: 0, max: Number.MAX_SAFE_INTEGER, integer: true },
};

export const DEFAULT_KNOBS: KnobParams = {
  alpha: 0.1,
  beta: 0.5,
  k: 15,
  s: 300,
  seed: 0,
  use_mmr_preselect: false,
};

export interface KnobValidation {
  ok: boolean;
  errors: Partial<Record<keyof KnobParams, string>>;
}

export function validateKnobs(values: KnobParams): KnobValidation {
  const errors: KnobValidation["errors"] = {};
  for (const [name, limits] of Object.entries(KNOB_LIMITS) as [keyof typeof KNOB_LIMITS, KnobLimits][]) {
    const value = values[name];
    if (typeof value !== "number" || Number.isNaN(value)) {
      errors[name] = "must be a number";
    } else if (limits.integer && !Number.isInteger(value)) {
      errors[name] = "must be an integer";
    } else if (value < limits.min || value > limits.max) {
      errors[name] = `must be in [${limits.min}, ${limits.max}]`;
    }
  }
  return { ok: Object.keys(errors).length === 0, errors };
}
