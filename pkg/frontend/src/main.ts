/** Application shell: builds the page, wires events, and keeps state, server, and DOM in sync. */

import { ApiClient, resolveApiBase } from "./api.js";
import {
  appendBotTurn,
  appendUserTurn,
  type ChatViewState,
  freshState,
  loadState,
  newConversationId,
  nextRating,
  saveState,
  type Turn,
} from "./state.js";
import { renderDatasetPage, renderTurn } from "./render.js";

export const PREDEFINED_QUESTIONS = [
  "Please show me instance 5",
  "Which tokens are most important for this prediction?",
  "Why was this instance classified this way?",
  "What would be the counterfactual for this instance?",
  "What is closest to this instance in the dataset?",
  "How accurate are you?",
  "What does the model predict for my text?",
];

export interface AppOptions {
  root: HTMLElement;
  api: ApiClient;
  storage: Storage;
}

export interface App {
  readonly state: ChatViewState;
  send(text: string): Promise<void>;
  refreshDataset(): Promise<void>;
  destroy(): void;
}

interface Elements {
  turns: HTMLDivElement;
  input: HTMLInputElement;
  sendButton: HTMLButtonElement;
  questions: HTMLDivElement;
  customText: HTMLTextAreaElement;
  customSet: HTMLButtonElement;
  customBadge: HTMLSpanElement;
  search: HTMLInputElement;
  datasetBody: HTMLDivElement;
  toast: HTMLDivElement;
}

function buildLayout(root: HTMLElement): Elements {
  root.innerHTML = `
    <div class="layout">
      <section class="chat-pane">
        <div class="turns" data-role="turns"></div>
        <div class="questions" data-role="questions"></div>
        <form class="composer" data-role="composer">
          <input type="text" data-role="utterance" placeholder="Ask about the model, the data, or an instance…" autocomplete="off" />
          <button type="submit" data-role="send">Send</button>
        </form>
        <details class="custom-input">
          <summary>Custom input</summary>
          <textarea data-role="custom-text" placeholder="Paste your own text, then ask for a prediction, attributions, or neighbors."></textarea>
          <button type="button" data-role="custom-set">Use as custom input</button>
          <span class="custom-badge" data-role="custom-badge"></span>
        </details>
      </section>
      <aside class="dataset-pane">
        <h2>Dataset</h2>
        <input type="search" data-role="search" placeholder="Search text…" />
        <div data-role="dataset-body"></div>
      </aside>
      <div class="toast" data-role="toast" hidden></div>
    </div>
  `;
  const pick = <T extends HTMLElement>(role: string): T => {
    const node = root.querySelector<T>(`[data-role="${role}"]`);
    if (!node) throw new Error(`layout is missing element '${role}'`);
    return node;
  };
  return {
    turns: pick<HTMLDivElement>("turns"),
    input: pick<HTMLInputElement>("utterance"),
    sendButton: pick<HTMLButtonElement>("send"),
    questions: pick<HTMLDivElement>("questions"),
    customText: pick<HTMLTextAreaElement>("custom-text"),
    customSet: pick<HTMLButtonElement>("custom-set"),
    customBadge: pick<HTMLSpanElement>("custom-badge"),
    search: pick<HTMLInputElement>("search"),
    datasetBody: pick<HTMLDivElement>("dataset-body"),
    toast: pick<HTMLDivElement>("toast"),
  };
}

export function createApp(options: AppOptions): App {
  const { root, api, storage } = options;
  const state = loadState(storage) ?? freshState(newConversationId());
  const elements = buildLayout(root);
  let chatInFlight = false;
  let toastTimer: ReturnType<typeof setTimeout> | undefined;

  function persist(): void {
    saveState(storage, state);
  }

  function showToast(message: string): void {
    elements.toast.textContent = message;
    elements.toast.hidden = false;
    if (toastTimer !== undefined) clearTimeout(toastTimer);
    toastTimer = setTimeout(() => {
      elements.toast.hidden = true;
    }, 4000);
  }

  function setBusy(busy: boolean): void {
    chatInFlight = busy;
    elements.input.disabled = busy;
    elements.sendButton.disabled = busy;
  }

  function renderTurns(): void {
    elements.turns.replaceChildren(
      ...state.turns.map((turn) =>
        renderTurn(turn, {
          onRate: (target, clicked) => void rate(target, clicked),
          onRetry: (target) => void retry(target),
        }),
      ),
    );
    elements.turns.scrollTop = elements.turns.scrollHeight;
  }

  function renderCustomBadge(): void {
    elements.customBadge.textContent = state.customInputStored
      ? `using: "${state.customInputStored}"`
      : "";
  }

  async function refreshDataset(): Promise<void> {
    try {
      const page = await api.dataset({
        page: state.dataset.page,
        q: state.dataset.query,
        conversationId: state.conversationId,
      });
      state.dataset.total = page.total;
      state.dataset.filtered = page.filtered;
      persist();
      elements.datasetBody.replaceChildren(
        renderDatasetPage(page, {
          onPage: (next) => {
            state.dataset.page = next;
            void refreshDataset();
          },
        }),
      );
    } catch (error) {
      showToast(`dataset view failed: ${(error as Error).message}`);
    }
  }

  async function deliver(turn: Turn): Promise<void> {
    if (chatInFlight) return;
    setBusy(true);
    try {
      const reply = await api.chat(state.conversationId, turn.text);
      turn.failed = false;
      appendBotTurn(state, reply);
      persist();
      renderTurns();
      await refreshDataset();
    } catch (error) {
      turn.failed = true;
      persist();
      renderTurns();
      showToast(`send failed: ${(error as Error).message}`);
    } finally {
      setBusy(false);
    }
  }

  async function send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (trimmed === "" || chatInFlight) return;
    const turn = appendUserTurn(state, trimmed);
    persist();
    renderTurns();
    await deliver(turn);
  }

  async function retry(turn: Turn): Promise<void> {
    if (!turn.failed) return;
    await deliver(turn);
  }

  async function rate(turn: Turn, clicked: 1 | -1): Promise<void> {
    if (turn.serverIndex === undefined) return;
    const rating = nextRating(turn.rating, clicked);
    try {
      const ack = await api.feedback(state.conversationId, turn.serverIndex, rating);
      turn.rating = ack.rating;
      persist();
      renderTurns();
    } catch (error) {
      showToast(`feedback failed: ${(error as Error).message}`);
    }
  }

  async function setCustomInput(text: string): Promise<void> {
    try {
      const ack = await api.customInput(state.conversationId, text);
      state.customInputStored = ack.text;
      state.customInputDraft = "";
      elements.customText.value = "";
      persist();
      renderCustomBadge();
    } catch (error) {
      showToast(`custom input failed: ${(error as Error).message}`);
    }
  }

  // --- event wiring ---
  const composer = root.querySelector<HTMLFormElement>('[data-role="composer"]');
  composer?.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = elements.input.value;
    elements.input.value = "";
    void send(text);
  });

  elements.input.addEventListener("keydown", (event) => {
    if (event.key === "Escape") {
      elements.input.value = "";
    }
  });

  for (const question of PREDEFINED_QUESTIONS) {
    const chip = document.createElement("button");
    chip.type = "button";
    chip.className = "question-chip";
    chip.textContent = question;
    chip.addEventListener("click", () => {
      elements.input.value = question;
      elements.input.focus();
    });
    elements.questions.appendChild(chip);
  }

  elements.customText.addEventListener("input", () => {
    state.customInputDraft = elements.customText.value;
    persist();
  });
  elements.customSet.addEventListener("click", () => {
    const text = elements.customText.value.trim();
    if (text !== "") void setCustomInput(text);
  });

  let searchTimer: ReturnType<typeof setTimeout> | undefined;
  elements.search.addEventListener("input", () => {
    if (searchTimer !== undefined) clearTimeout(searchTimer);
    searchTimer = setTimeout(() => {
      state.dataset.query = elements.search.value.trim();
      state.dataset.page = 0;
      void refreshDataset();
    }, 150);
  });

  // --- restore persisted view ---
  elements.customText.value = state.customInputDraft;
  elements.search.value = state.dataset.query;
  renderCustomBadge();
  renderTurns();
  void refreshDataset();

  return {
    state,
    send,
    refreshDataset,
    destroy: () => {
      if (toastTimer !== undefined) clearTimeout(toastTimer);
      if (searchTimer !== undefined) clearTimeout(searchTimer);
      root.innerHTML = "";
    },
  };
}

/** Browser entry point; tests build the app themselves with their own wiring. */
export function boot(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const base = resolveApiBase(window as Window & { ASKMODEL_API_BASE?: string });
  createApp({ root, api: new ApiClient(base), storage: window.localStorage });
}

declare global {
  interface Window {
    __ASKMODEL_TEST__?: boolean;
  }
}

if (typeof window !== "undefined" && !window.__ASKMODEL_TEST__) {
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", boot);
  } else {
    boot();
  }
}
