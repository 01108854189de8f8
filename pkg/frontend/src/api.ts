/** Typed client for the askmodel JSON API: /chat, /custom_input, /dataset, /feedback. */

export interface TurnFlags {
  fallback_used: boolean;
  clarification: boolean;
  no_result: boolean;
}

export interface ChatResponse {
  conversation_id: string;
  turn_index: number;
  text: string;
  payload: Payload;
  parse: string;
  flags: TurnFlags;
  finished: boolean;
}

/** Bot payloads are a tagged union; the renderer dispatches on `type`. */
export interface Payload {
  type: string;
  [key: string]: unknown;
}

export interface AttributionPayload extends Payload {
  type: "attribution";
  tokens: string[];
  scores: number[];
  label?: string;
}

export interface InstanceRow {
  id: number;
  label: string;
  text: string;
  fields?: Record<string, string>;
}

export interface DatasetPage {
  name: string;
  total: number;
  page: number;
  page_size: number;
  filtered: boolean;
  query: string;
  class_names: string[];
  items: InstanceRow[];
}

export interface CustomInputAck {
  ok: boolean;
  text: string;
}

export interface FeedbackAck {
  ok: boolean;
  turn_index: number;
  rating: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly base: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  chat(conversationId: string, utterance: string): Promise<ChatResponse> {
    return this.post("/chat", { conversation_id: conversationId, utterance });
  }

  customInput(conversationId: string, text: string): Promise<CustomInputAck> {
    return this.post("/custom_input", { conversation_id: conversationId, text });
  }

  feedback(conversationId: string, turnIndex: number, rating: number): Promise<FeedbackAck> {
    return this.post("/feedback", {
      conversation_id: conversationId,
      turn_index: turnIndex,
      rating,
    });
  }

  async dataset(params: {
    page?: number;
    q?: string;
    name?: string;
    conversationId?: string;
  }): Promise<DatasetPage> {
    const query = new URLSearchParams();
    if (params.name !== undefined) query.set("name", params.name);
    if (params.page !== undefined) query.set("page", String(params.page));
    if (params.q) query.set("q", params.q);
    if (params.conversationId !== undefined) query.set("conversation_id", params.conversationId);
    const suffix = query.size > 0 ? `?${query.toString()}` : "";
    const response = await this.fetchImpl(`${this.base}/dataset${suffix}`);
    return this.decode(response);
  }

  private async post<T>(route: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${route}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return this.decode(response);
  }

  private async decode<T>(response: Response): Promise<T> {
    if (!response.ok) {
      let detail = `request failed with status ${response.status}`;
      try {
        const body = (await response.json()) as { detail?: string };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the generic message when the error body is not JSON
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }
}

/** API base resolution: explicit global, then ?api= query parameter, then same-origin default. */
export function resolveApiBase(win: Pick<Window, "location"> & { ASKMODEL_API_BASE?: string }): string {
  if (win.ASKMODEL_API_BASE) return win.ASKMODEL_API_BASE.replace(/\/$/, "");
  const fromQuery = new URLSearchParams(win.location.search).get("api");
  if (fromQuery) return fromQuery.replace(/\/$/, "");
  return "http://127.0.0.1:8000";
}
