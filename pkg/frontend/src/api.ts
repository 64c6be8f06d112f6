/**
 * Thin client for the deraining endpoint.
 *
 * Every network round trip goes through one chokepoint that increments
 * `requestCount`, so both the tests and the footer of the page can verify
 * the core interaction contract: tuning the blend constant never touches
 * the network.
 */

export type ResultName = "input" | "bm" | "refined";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  private requests = 0;

  constructor(
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly base: string = "",
  ) {}

  /** Total round trips issued through this client since construction. */
  get requestCount(): number {
    return this.requests;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    this.requests += 1;
    const res = await this.fetchImpl(this.base + path, init);
    if (!res.ok) {
      const body = await res.text().catch(() => "");
      throw new ApiError(body.trim() || `request failed with status ${res.status}`, res.status);
    }
    return res;
  }

  /** POST a PNG body; resolves to the new run id. */
  async upload(png: ArrayBuffer | Blob): Promise<string> {
    const res = await this.request("/derain", {
      method: "POST",
      headers: { "Content-Type": "image/png" },
      body: png,
    });
    const doc = (await res.json()) as { run_id: string };
    if (typeof doc.run_id !== "string" || doc.run_id.length === 0) {
      throw new ApiError("malformed upload response", res.status);
    }
    return doc.run_id;
  }

  /** Run ids currently stored on the server, oldest first. */
  async listRuns(): Promise<string[]> {
    const res = await this.request("/runs");
    const doc = (await res.json()) as { runs: string[] };
    return Array.isArray(doc.runs) ? doc.runs : [];
  }

  /** One of the three stored result images for a run, as an encoded PNG. */
  async fetchResult(runId: string, name: ResultName): Promise<Blob> {
    const res = await this.request(`/result/${encodeURIComponent(runId)}/${name}.png`);
    return res.blob();
  }
}
