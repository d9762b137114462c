// Typed client for the review service HTTP+JSON API.  Every request the UI
// makes goes through this module; nothing else touches the network.

export type Status = "silver" | "gold" | "rejected";

export interface ImageRow {
  image_id: string;
  status: Status;
  version: number;
  width: number;
  height: number;
  n_polygons: number;
  n_degenerates: number;
}

export interface Degenerate {
  kind: string;
  points: number[][];
}

export interface RecordDto {
  image_id: string;
  source_path: string;
  width: number;
  height: number;
  polygons: number[][][];
  degenerates: Degenerate[];
  status: Status;
  reviewer_note: string;
  created_at: string;
  updated_at: string;
  version: number;
}

// The mutable part of a record sent back on PUT.
export interface RecordUpdate {
  polygons: number[][][];
  degenerates: Degenerate[];
  status: Status;
  reviewer_note: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

// 409: someone else saved a newer version since our fetch.
export class ConflictError extends ApiError {
  constructor(
    readonly expected: number,
    readonly actual: number,
    message: string,
  ) {
    super(409, "version_conflict", message);
    this.name = "ConflictError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForError(res: Response): Promise<void> {
  if (res.ok) return;
  let code = "http_error";
  let message = `HTTP ${res.status}`;
  let expected = -1;
  let actual = -1;
  try {
    const body = await res.json();
    if (typeof body.code === "string") code = body.code;
    if (typeof body.message === "string") message = body.message;
    if (typeof body.expected === "number") expected = body.expected;
    if (typeof body.actual === "number") actual = body.actual;
  } catch {
    // non-JSON error body: keep the generic message
  }
  if (res.status === 409) throw new ConflictError(expected, actual, message);
  throw new ApiError(res.status, code, message);
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async listImages(): Promise<ImageRow[]> {
    const res = await this.fetchFn(`${this.baseUrl}/api/images`);
    await raiseForError(res);
    const body = await res.json();
    return body.images as ImageRow[];
  }

  // URL for the <img> tag; fetching the pixels is the browser's job.
  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
  }

  async getRecord(imageId: string): Promise<RecordDto> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/annotations/${encodeURIComponent(imageId)}`,
    );
    await raiseForError(res);
    return (await res.json()) as RecordDto;
  }

  async putRecord(
    imageId: string,
    expectedVersion: number,
    update: RecordUpdate,
  ): Promise<RecordDto> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/annotations/${encodeURIComponent(imageId)}`,
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ expected_version: expectedVersion, record: update }),
      },
    );
    await raiseForError(res);
    return (await res.json()) as RecordDto;
  }

  async getStats(): Promise<Record<string, unknown>> {
    const res = await this.fetchFn(`${this.baseUrl}/api/stats`);
    await raiseForError(res);
    return (await res.json()) as Record<string, unknown>;
  }
}
