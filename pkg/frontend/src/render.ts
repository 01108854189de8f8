/** DOM builders: message bubbles, payload widgets, and the dataset table.
 *
 * Everything here is a pure function of its inputs; event wiring lives in main.ts.
 */

import type { InstanceRow, Payload } from "./api.js";
import type { Turn } from "./state.js";

/** Convert `**…**` marker pairs into <strong> elements; pairs are never shown raw. */
export function emphasize(text: string): DocumentFragment {
  const fragment = document.createDocumentFragment();
  const parts = text.split("**");
  if (parts.length % 2 === 0) {
    // an unpaired trailing marker is not emphasis: keep it literal on the tail
    const tail = parts.pop() ?? "";
    parts[parts.length - 1] += `**${tail}`;
  }
  parts.forEach((part, index) => {
    if (part.length === 0) return;
    if (index % 2 === 1) {
      const strong = document.createElement("strong");
      strong.textContent = part;
      fragment.appendChild(strong);
    } else {
      fragment.appendChild(document.createTextNode(part));
    }
  });
  return fragment;
}

/** Magnitudes normalized to the largest |score|; all zeros stay zero. */
export function heatOpacities(scores: number[]): number[] {
  const peak = Math.max(...scores.map(Math.abs), 0);
  if (peak === 0) return scores.map(() => 0);
  return scores.map((score) => Math.abs(score) / peak);
}

function heatmap(tokens: string[], scores: number[]): HTMLElement {
  const container = document.createElement("div");
  container.className = "heatmap";
  const opacities = heatOpacities(scores);
  tokens.forEach((token, index) => {
    const score = scores[index] ?? 0;
    const span = document.createElement("span");
    span.className = `heat-token ${score < 0 ? "heat-negative" : "heat-positive"}`;
    span.textContent = token;
    span.title = score.toFixed(4);
    span.dataset.score = String(score);
    const alpha = opacities[index] ?? 0;
    span.style.backgroundColor =
      score < 0 ? `rgba(59, 130, 246, ${alpha.toFixed(3)})` : `rgba(239, 68, 68, ${alpha.toFixed(3)})`;
    container.appendChild(span);
  });
  return container;
}

function instanceTable(items: InstanceRow[], extraColumn?: { header: string; value: (row: InstanceRow) => string }): HTMLElement {
  const table = document.createElement("table");
  table.className = "instance-table";
  const head = table.createTHead().insertRow();
  const headers = ["id", "label", "text"];
  if (extraColumn) headers.push(extraColumn.header);
  for (const header of headers) {
    const cell = document.createElement("th");
    cell.textContent = header;
    head.appendChild(cell);
  }
  const body = table.createTBody();
  for (const item of items) {
    const row = body.insertRow();
    row.insertCell().textContent = String(item.id);
    const labelCell = row.insertCell();
    labelCell.textContent = item.label;
    labelCell.className = "label-cell";
    row.insertCell().textContent = item.text;
    if (extraColumn) row.insertCell().textContent = extraColumn.value(item);
  }
  return table;
}

function metricCard(title: string, value: string, note?: string): HTMLElement {
  const card = document.createElement("div");
  card.className = "metric-card";
  const big = document.createElement("div");
  big.className = "metric-value";
  big.textContent = value;
  const label = document.createElement("div");
  label.className = "metric-title";
  label.textContent = title;
  card.append(big, label);
  if (note) {
    const small = document.createElement("div");
    small.className = "metric-note";
    small.textContent = note;
    card.appendChild(small);
  }
  return card;
}

function probabilityBars(probabilities: Record<string, number>): HTMLElement {
  const container = document.createElement("div");
  container.className = "probability-bars";
  for (const [label, probability] of Object.entries(probabilities)) {
    const row = document.createElement("div");
    row.className = "probability-row";
    const name = document.createElement("span");
    name.className = "probability-label";
    name.textContent = label;
    const track = document.createElement("span");
    track.className = "probability-track";
    const fill = document.createElement("span");
    fill.className = "probability-fill";
    fill.style.width = `${(probability * 100).toFixed(1)}%`;
    track.appendChild(fill);
    const amount = document.createElement("span");
    amount.className = "probability-amount";
    amount.textContent = `${(probability * 100).toFixed(1)}%`;
    row.append(name, track, amount);
    container.appendChild(row);
  }
  return container;
}

/** Widget for one bot payload, or null when the sentence alone carries the answer. */
export function renderPayload(payload: Payload): HTMLElement | null {
  switch (payload.type) {
    case "attribution":
      return heatmap(payload.tokens as string[], payload.scores as number[]);
    case "global_topk": {
      const items = payload.items as { token: string; score: number }[];
      return heatmap(
        items.map((item) => item.token),
        items.map((item) => item.score),
      );
    }
    case "instances":
      return instanceTable(payload.items as InstanceRow[]);
    case "mistakes_sample":
      return instanceTable(payload.items as InstanceRow[]);
    case "similar":
      return instanceTable(payload.neighbors as (InstanceRow & { cosine: number })[], {
        header: "cosine",
        value: (row) => ((row as { cosine?: number }).cosine ?? 0).toFixed(3),
      });
    case "score":
      return metricCard(
        payload.metric as string,
        (payload.value as number).toFixed(4),
        `${payload.count as number} instances`,
      );
    case "count":
      return metricCard("matching instances", String(payload.count), `of ${payload.total}`);
    case "mistakes_count":
      return metricCard("mistakes", String(payload.count), `of ${payload.total} instances`);
    case "likelihood":
    case "prediction":
      return probabilityBars(payload.probabilities as Record<string, number>);
    case "prediction_summary": {
      const fractions = payload.fractions as Record<string, number>;
      return probabilityBars(fractions);
    }
    case "distribution": {
      const counts = payload.counts as Record<string, number>;
      const total = Object.values(counts).reduce((sum, count) => sum + count, 0);
      const shares: Record<string, number> = {};
      for (const [label, count] of Object.entries(counts)) shares[label] = total ? count / total : 0;
      return probabilityBars(shares);
    }
    default:
      return null;
  }
}

export interface TurnHandlers {
  onRate: (turn: Turn, clicked: 1 | -1) => void;
  onRetry: (turn: Turn) => void;
}

/** One chat bubble: emphasized text, payload widget, feedback buttons on bot turns. */
export function renderTurn(turn: Turn, handlers: TurnHandlers): HTMLElement {
  const article = document.createElement("article");
  article.className = `turn ${turn.role}`;
  if (turn.flags?.clarification) article.classList.add("clarification");

  const bubble = document.createElement("div");
  bubble.className = "bubble";
  bubble.appendChild(emphasize(turn.text));
  article.appendChild(bubble);

  if (turn.role === "user" && turn.failed) {
    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => handlers.onRetry(turn));
    article.appendChild(retry);
    article.classList.add("failed");
  }

  if (turn.role === "bot") {
    if (turn.payload) {
      const widget = renderPayload(turn.payload);
      if (widget) article.appendChild(widget);
    }
    const feedback = document.createElement("div");
    feedback.className = "feedback";
    for (const clicked of [1, -1] as const) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = clicked === 1 ? "thumb thumb-up" : "thumb thumb-down";
      button.textContent = clicked === 1 ? "👍" : "👎";
      if (turn.rating === clicked) button.classList.add("active");
      button.addEventListener("click", () => handlers.onRate(turn, clicked));
      feedback.appendChild(button);
    }
    if (turn.rating === 1 || turn.rating === -1) {
      const badge = document.createElement("span");
      badge.className = "rating-badge";
      badge.textContent = turn.rating === 1 ? "rated helpful" : "rated not helpful";
      feedback.appendChild(badge);
    }
    article.appendChild(feedback);
  }
  return article;
}

export interface DatasetHandlers {
  onPage: (page: number) => void;
}

/** Table, pager, filter badge, and empty-state message for one dataset page. */
export function renderDatasetPage(
  page: {
    items: InstanceRow[];
    total: number;
    page: number;
    page_size: number;
    filtered: boolean;
    query: string;
  },
  handlers: DatasetHandlers,
): HTMLElement {
  const container = document.createElement("div");
  container.className = "dataset-page";

  const status = document.createElement("div");
  status.className = "dataset-status";
  const count = document.createElement("span");
  count.textContent = `${page.total} instances`;
  status.appendChild(count);
  if (page.filtered) {
    const badge = document.createElement("span");
    badge.className = "filter-badge";
    badge.textContent = "conversation filter active";
    status.appendChild(badge);
  }
  container.appendChild(status);

  if (page.items.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = page.query
      ? `No instances match "${page.query}".`
      : "No instances to show.";
    container.appendChild(empty);
    return container;
  }

  container.appendChild(instanceTable(page.items));

  const lastPage = Math.max(0, Math.ceil(page.total / page.page_size) - 1);
  const pager = document.createElement("div");
  pager.className = "pager";
  const previous = document.createElement("button");
  previous.type = "button";
  previous.className = "page-previous";
  previous.textContent = "‹ Prev";
  previous.disabled = page.page === 0;
  previous.addEventListener("click", () => handlers.onPage(page.page - 1));
  const label = document.createElement("span");
  label.className = "page-label";
  label.textContent = `page ${page.page + 1} of ${lastPage + 1}`;
  const next = document.createElement("button");
  next.type = "button";
  next.className = "page-next";
  next.textContent = "Next ›";
  next.disabled = page.page >= lastPage;
  next.addEventListener("click", () => handlers.onPage(page.page + 1));
  pager.append(previous, label, next);
  container.appendChild(pager);
  return container;
}
