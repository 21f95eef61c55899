import type { Settings } from "./types.js";

export const DEFAULT_SETTINGS: Settings = { k: 3, temperature: 0.3, maxTokens: 700 };

export interface SettingsValidation {
  ok: boolean;
  value: Settings;
  errors: Partial<Record<keyof Settings, string>>;
}

// Raw form values come in as strings; reject anything out of range instead
// of clamping so the user sees what they typed next to the error.
export function validateSettings(
  raw: { k: string; temperature: string; maxTokens: string },
  previous: Settings,
): SettingsValidation {
  const errors: SettingsValidation["errors"] = {};

  const k = Number(raw.k);
  if (!Number.isInteger(k) || k < 1) {
    errors.k = "k must be an integer >= 1";
  }

  const temperature = Number(raw.temperature);
  if (!Number.isFinite(temperature) || temperature < 0 || temperature > 2) {
    errors.temperature = "temperature must be between 0 and 2";
  }

  const maxTokens = Number(raw.maxTokens);
  if (!Number.isInteger(maxTokens) || maxTokens < 1) {
    errors.maxTokens = "max tokens must be an integer >= 1";
  }

  const ok = Object.keys(errors).length === 0;
  return { ok, value: ok ? { k, temperature, maxTokens } : previous, errors };
}
