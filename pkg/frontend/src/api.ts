/**
 * Typed client for the chat service JSON API. The fetch implementation is
 * injectable so tests can drive every path without a server.
 */

export interface CitationInfo {
  source_path: string;
  unit_number: number;
}

export interface SessionInfo {
  token: string;
  privacy_notice: string;
}

export interface ChatResult {
  turn_id: number;
  reply: string;
  citations: CitationInfo[];
  degraded: boolean;
  privacy_notice?: string;
}

export interface TurnRecord {
  turn_id: number;
  query: string;
  reply: string;
  citations: CitationInfo[];
  timestamp: string;
  degraded: boolean;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** What the UI needs from the backend; TutorApi is the HTTP implementation. */
export interface TutorClient {
  createSession(consent: boolean): Promise<SessionInfo>;
  sendMessage(token: string, message: string): Promise<ChatResult>;
  history(token: string): Promise<TurnRecord[]>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class TutorApi implements TutorClient {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "error" in body
          ? String((body as { error: unknown }).error)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  createSession(consent: boolean): Promise<SessionInfo> {
    return this.request<SessionInfo>("/api/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ consent }),
    });
  }

  sendMessage(token: string, message: string): Promise<ChatResult> {
    return this.request<ChatResult>("/api/chat", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ token, message }),
    });
  }

  async history(token: string): Promise<TurnRecord[]> {
    const data = await this.request<{ turns: TurnRecord[] }>(
      `/api/history?token=${encodeURIComponent(token)}`,
    );
    return data.turns;
  }
}
