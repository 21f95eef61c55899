import { ApiClient, ApiError } from "./api.js";
import { DEFAULT_SETTINGS, validateSettings } from "./settings.js";
import type { SettingsValidation } from "./settings.js";
import { renderBanner, renderSettings, renderTranscript } from "./render.js";
import type { Settings, TranscriptPayload, UiMessage } from "./types.js";

export type MiniStorage = Pick<Storage, "getItem" | "setItem" | "removeItem">;

const SESSION_KEY = "litrag.session";

export function messagesFromTranscript(transcript: TranscriptPayload): UiMessage[] {
  const out: UiMessage[] = [];
  for (const turn of transcript.turns) {
    out.push({ role: "user", text: turn.question, references: [], pending: false, error: false });
    out.push({
      role: "assistant",
      text: turn.answer.text,
      references: turn.answer.references.map((r) => r.line),
      pending: false,
      error: false,
    });
  }
  return out;
}

export class ChatController {
  api: ApiClient;
  storage: MiniStorage;
  sessionId: string | null = null;
  messages: UiMessage[] = [];
  settings: Settings = { ...DEFAULT_SETTINGS };
  settingsValidation: SettingsValidation | undefined;
  connection: "ok" | "down" = "ok";
  // text of a send that never reached the service; the shell puts it back
  // in the input box so a transient network failure loses nothing
  lostInput: string | null = null;

  private tail: Promise<void> = Promise.resolve();
  // bubbles are tracked by identity, not index: a retry can splice the
  // list while a later send is still in flight
  private questionsByMsg = new Map<UiMessage, string>();
  private onChange: () => void;

  constructor(api: ApiClient, storage: MiniStorage, onChange?: () => void) {
    this.api = api;
    this.storage = storage;
    this.onChange = onChange ?? (() => {});
  }

  private notify(): void {
    this.onChange();
  }

  async boot(): Promise<void> {
    const stored = this.storage.getItem(SESSION_KEY);
    try {
      if (stored) {
        try {
          const transcript = await this.api.getSession(stored);
          this.sessionId = stored;
          this.messages = messagesFromTranscript(transcript);
          this.connection = "ok";
          this.notify();
          return;
        } catch (err) {
          if (!(err instanceof ApiError && err.status === 404)) throw err;
          this.storage.removeItem(SESSION_KEY); // stale id, start over
        }
      }
      this.sessionId = await this.api.startSession();
      this.storage.setItem(SESSION_KEY, this.sessionId);
      this.messages = [];
      this.connection = "ok";
    } catch {
      this.connection = "down";
    }
    this.notify();
  }

  get busy(): boolean {
    return this.messages.some((m) => m.pending);
  }

  send(text: string): Promise<void> {
    const question = text.trim();
    if (!question || this.sessionId === null || this.connection === "down") {
      return Promise.resolve();
    }
    this.messages.push({ role: "user", text: question, references: [], pending: false, error: false });
    const bubble: UiMessage = { role: "assistant", text: "", references: [], pending: true, error: false };
    this.messages.push(bubble);
    this.questionsByMsg.set(bubble, question);
    this.notify();
    // one request in flight per session: later sends wait in line here
    this.tail = this.tail.then(() => this.dispatch(bubble, question));
    return this.tail;
  }

  private async dispatch(bubble: UiMessage, question: string): Promise<void> {
    try {
      const answer = await this.api.sendMessage(this.sessionId!, question, this.settings);
      bubble.text = answer.text;
      bubble.references = answer.references.map((r) => r.line);
      bubble.pending = false;
      this.questionsByMsg.delete(bubble);
    } catch (err) {
      if (err instanceof ApiError) {
        bubble.text =
          err.status === 409
            ? "previous answer still generating"
            : `request failed: ${err.message}`;
      } else {
        bubble.text = "network failure, message not sent";
        this.lostInput = question;
      }
      bubble.pending = false;
      bubble.error = true; // question stays in the map for retry
    }
    this.notify();
  }

  retry(idx: number): Promise<void> {
    const bubble = this.messages[idx];
    if (!bubble?.error) return Promise.resolve();
    const question = this.questionsByMsg.get(bubble);
    if (question === undefined) return Promise.resolve();
    this.questionsByMsg.delete(bubble);
    const at = this.messages.indexOf(bubble);
    this.messages.splice(at - 1, 2); // drop the failed user/assistant pair
    this.notify();
    return this.send(question);
  }

  applySettings(raw: { k: string; temperature: string; maxTokens: string }): boolean {
    const result = validateSettings(raw, this.settings);
    this.settings = result.value;
    this.settingsValidation = result;
    this.notify();
    return result.ok;
  }

  takeLostInput(): string | null {
    const text = this.lostInput;
    this.lostInput = null;
    return text;
  }

  renderApp(): string {
    return (
      renderBanner(this.connection) +
      `<div class="transcript">${renderTranscript(this.messages)}</div>` +
      renderSettings(this.settings, this.settingsValidation)
    );
  }
}
