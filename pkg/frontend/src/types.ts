// Wire shapes, mirroring the service's JSON responses.

export interface ReferencePayload {
  ordinal: number;
  authors: string;
  year: number;
  title: string;
  doi: string;
  line: string;
}

export interface AnswerPayload {
  text: string;
  rendered: string;
  references: ReferencePayload[];
  hits: { chunk_id: string; doc_id: string; score: number; rank: number }[];
  config_used: {
    model_name: string;
    temperature: number;
    max_new_tokens: number;
    context_budget_tokens: number;
  };
}

export interface TurnPayload {
  question: string;
  answer: AnswerPayload;
  timestamp: number;
}

export interface TranscriptPayload {
  session_id: string;
  created_at: number;
  turns: TurnPayload[];
}

// Client-side state.

export interface UiMessage {
  role: "user" | "assistant";
  text: string;
  references: string[]; // rendered reference lines, assistant only
  pending: boolean;
  error: boolean;
}

export interface Settings {
  k: number;
  temperature: number;
  maxTokens: number;
}
