import type { Settings, UiMessage } from "./types.js";
import type { SettingsValidation } from "./settings.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderReferences(lines: string[]): string {
  if (lines.length === 0) return "";
  const items = lines.map((l) => `<li>${escapeHtml(l)}</li>`).join("");
  return (
    `<details class="refs" open><summary>References (${lines.length})</summary>` +
    `<ul>${items}</ul></details>`
  );
}

export function renderMessage(msg: UiMessage, idx: number): string {
  const classes = ["bubble", msg.role];
  if (msg.pending) classes.push("pending");
  if (msg.error) classes.push("error");
  const body = msg.pending ? "…" : escapeHtml(msg.text);
  const refs = msg.role === "assistant" && !msg.pending ? renderReferences(msg.references) : "";
  const retry = msg.error
    ? `<button type="button" data-action="retry" data-idx="${idx}">retry</button>`
    : "";
  return `<div class="${classes.join(" ")}" data-idx="${idx}"><p>${body}</p>${refs}${retry}</div>`;
}

export function renderTranscript(messages: UiMessage[]): string {
  return messages.map(renderMessage).join("\n");
}

export function renderSettings(settings: Settings, validation?: SettingsValidation): string {
  const errors = validation?.errors ?? {};
  const field = (name: keyof Settings, label: string, value: string) => {
    const err = errors[name] ? `<span class="field-error">${escapeHtml(errors[name]!)}</span>` : "";
    return (
      `<label>${label} <input name="${name}" value="${escapeHtml(value)}"></label>${err}`
    );
  };
  return (
    `<fieldset class="settings"><legend>Settings</legend>` +
    field("k", "results (k)", String(settings.k)) +
    field("temperature", "temperature", String(settings.temperature)) +
    field("maxTokens", "max tokens", String(settings.maxTokens)) +
    `<button type="button" data-action="apply-settings">Apply</button></fieldset>`
  );
}

export function renderBanner(connection: "ok" | "down"): string {
  if (connection === "ok") return "";
  return (
    `<div class="banner">Cannot reach the service.` +
    ` <button type="button" data-action="retry-connect">Retry</button></div>`
  );
}
