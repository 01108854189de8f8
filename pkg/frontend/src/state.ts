/** View state for one conversation, persisted so a reload restores the transcript. */

import type { Payload, TurnFlags } from "./api.js";

export type Role = "user" | "bot";

export interface Turn {
  role: Role;
  text: string;
  /** Structured result for widget rendering; bot turns only. */
  payload?: Payload;
  /** Canonical parse the server executed; empty for small talk and clarifications. */
  parse?: string;
  flags?: TurnFlags;
  /** The server's index for this bot turn — the key /feedback expects. */
  serverIndex?: number;
  /** Last rating sent to the server: 1, -1, or 0 (cleared). */
  rating?: number;
  /** The send failed; the turn carries a retry affordance instead of a reply. */
  failed?: boolean;
}

export interface DatasetView {
  page: number;
  query: string;
  /** True when the conversation narrowed the viewer to its active filter. */
  filtered: boolean;
  total: number;
}

export interface ChatViewState {
  conversationId: string;
  /** Appended strictly in send/receive order so it mirrors the server log. */
  turns: Turn[];
  dataset: DatasetView;
  customInputDraft: string;
  /** Last text acknowledged by /custom_input, shown as a badge. */
  customInputStored: string | null;
}

export function freshState(conversationId: string): ChatViewState {
  return {
    conversationId,
    turns: [],
    dataset: { page: 0, query: "", filtered: false, total: 0 },
    customInputDraft: "",
    customInputStored: null,
  };
}

export function newConversationId(): string {
  return `web-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 8)}`;
}

export function appendUserTurn(state: ChatViewState, text: string): Turn {
  const turn: Turn = { role: "user", text };
  state.turns.push(turn);
  return turn;
}

export function appendBotTurn(
  state: ChatViewState,
  reply: { text: string; payload: Payload; parse: string; flags: TurnFlags; turn_index: number },
): Turn {
  const turn: Turn = {
    role: "bot",
    text: reply.text,
    payload: reply.payload,
    parse: reply.parse,
    flags: reply.flags,
    serverIndex: reply.turn_index,
    rating: 0,
  };
  state.turns.push(turn);
  return turn;
}

/** Rating a turn twice with the same thumb clears it; the opposite thumb replaces it. */
export function nextRating(current: number | undefined, clicked: 1 | -1): number {
  return current === clicked ? 0 : clicked;
}

const STORAGE_KEY = "askmodel-view";

export function saveState(storage: Pick<Storage, "setItem">, state: ChatViewState): void {
  storage.setItem(STORAGE_KEY, JSON.stringify(state));
}

export function loadState(storage: Pick<Storage, "getItem">): ChatViewState | null {
  const raw = storage.getItem(STORAGE_KEY);
  if (raw === null) return null;
  try {
    const parsed = JSON.parse(raw) as ChatViewState;
    if (typeof parsed.conversationId !== "string" || !Array.isArray(parsed.turns)) return null;
    return parsed;
  } catch {
    return null;
  }
}

export function clearState(storage: Pick<Storage, "removeItem">): void {
  storage.removeItem(STORAGE_KEY);
}
