/** Typed client for the retrieval service's HTTP+JSON API. */

export interface ResultEntry {
  imageId: number;
  score: number;
  rank: number;
  url: string;
}

export interface PageResponse {
  sessionId: string;
  iteration: number;
  pageSize: number;
  results: ResultEntry[];
}

export interface HealthResponse {
  status: string;
  images: number;
  paletteSize: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorFromResponse(response: Response): Promise<ApiError> {
  let message = `request failed with status ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") {
      message = body.detail;
    } else if (body && body.detail !== undefined) {
      message = JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  return new ApiError(message, response.status);
}

export class RetrievalClient {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  /** Absolute URL for a server-relative path such as "/images/42". */
  imageUrl(path: string): string {
    return this.baseUrl + path;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(this.baseUrl + "/healthz");
    if (!response.ok) throw await errorFromResponse(response);
    return response.json();
  }

  /** Upload a query crop and receive the first result page. */
  async createSession(image: Blob, filename = "query.png"): Promise<PageResponse> {
    const file =
      image instanceof File && image.name === filename
        ? image
        : new File([image], filename, { type: image.type });
    const form = new FormData();
    form.append("image", file);
    const response = await this.fetchFn(this.baseUrl + "/sessions", {
      method: "POST",
      body: form,
    });
    if (response.status !== 201) throw await errorFromResponse(response);
    return response.json();
  }

  /** Submit one round of marks and receive the re-ranked page. */
  async sendFeedback(
    sessionId: string,
    positives: number[],
    negatives: number[],
  ): Promise<PageResponse> {
    const response = await this.fetchFn(
      this.baseUrl + `/sessions/${encodeURIComponent(sessionId)}/feedback`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ positives, negatives }),
      },
    );
    if (!response.ok) throw await errorFromResponse(response);
    return response.json();
  }

  /** End a session. A session already gone counts as ended. */
  async endSession(sessionId: string): Promise<void> {
    const response = await this.fetchFn(
      this.baseUrl + `/sessions/${encodeURIComponent(sessionId)}`,
      { method: "DELETE" },
    );
    if (response.status !== 204 && response.status !== 404) {
      throw await errorFromResponse(response);
    }
  }
}
