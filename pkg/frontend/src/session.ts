// Review workflow state: an ordered work queue, the record on screen with its
// version token, pending edits, and a per-item stopwatch.  Edits stay local
// until an explicit accept/reject; nothing here auto-submits.

import { ConflictError, RecordDto, RecordUpdate, ReviewApi } from "./api.js";
import { PolygonEditor } from "./geometry.js";

export interface Clock {
  now(): number; // milliseconds
}

export type DecisionOutcome =
  | { kind: "saved"; record: RecordDto; done: boolean }
  | { kind: "conflict"; expected: number; actual: number; theirs: RecordDto };

export class ReviewSession {
  readonly editor = new PolygonEditor();
  reviewerNote = "";

  private queue: string[] = [];
  private index = -1;
  private record: RecordDto | null = null;
  private startedAt: number | null = null;
  private stoppedAt: number | null = null;

  constructor(
    private readonly api: ReviewApi,
    private readonly clock: Clock = { now: () => Date.now() },
  ) {}

  // Build one pass over the corpus: every silver record exactly once, ahead
  // of gold records available for re-inspection.  Rejected items are skipped.
  async start(): Promise<number> {
    const rows = await this.api.listImages();
    const silver = rows.filter((r) => r.status === "silver").map((r) => r.image_id);
    const gold = rows.filter((r) => r.status === "gold").map((r) => r.image_id);
    this.queue = [...silver, ...gold];
    this.index = -1;
    this.record = null;
    return this.queue.length;
  }

  get queueIds(): string[] {
    return [...this.queue];
  }

  get position(): number {
    return this.index;
  }

  get current(): RecordDto | null {
    return this.record;
  }

  // The version the next decision will be submitted against.
  get versionToken(): number | null {
    return this.record === null ? null : this.record.version;
  }

  get noDefects(): boolean {
    return this.record !== null && this.editor.polygonCount === 0;
  }

  async next(): Promise<RecordDto | null> {
    if (this.index + 1 >= this.queue.length) {
      this.record = null;
      return null;
    }
    this.index += 1;
    return this.loadCurrent();
  }

  async goTo(imageId: string): Promise<RecordDto> {
    const at = this.queue.indexOf(imageId);
    if (at < 0) throw new Error(`image not in queue: ${imageId}`);
    this.index = at;
    return this.loadCurrent();
  }

  // Re-fetch the current record, discarding local edits.  Used by the
  // explicit "reload" affordance, never triggered automatically.
  async reload(): Promise<RecordDto> {
    if (this.record === null) throw new Error("no record loaded");
    return this.loadCurrent();
  }

  private async loadCurrent(): Promise<RecordDto> {
    const id = this.queue[this.index];
    const rec = await this.api.getRecord(id);
    this.record = rec;
    this.editor.load(rec.polygons);
    this.reviewerNote = rec.reviewer_note;
    // Stopwatch starts when the record goes on screen.
    this.startedAt = this.clock.now();
    this.stoppedAt = null;
    return rec;
  }

  elapsedSeconds(): number {
    if (this.startedAt === null) return 0;
    const end = this.stoppedAt ?? this.clock.now();
    return (end - this.startedAt) / 1000;
  }

  accept(): Promise<DecisionOutcome> {
    return this.decide("gold");
  }

  reject(): Promise<DecisionOutcome> {
    return this.decide("rejected");
  }

  private async decide(status: "gold" | "rejected"): Promise<DecisionOutcome> {
    if (this.record === null) {
      throw new Error("no record loaded: a decision needs a version token");
    }
    const update: RecordUpdate = {
      polygons: this.editor.snapshot(),
      degenerates: this.record.degenerates,
      status,
      reviewer_note: this.reviewerNote,
    };
    try {
      const saved = await this.api.putRecord(this.record.image_id, this.record.version, update);
      this.stoppedAt = this.clock.now();
      const following = await this.next();
      return { kind: "saved", record: saved, done: following === null };
    } catch (err) {
      if (err instanceof ConflictError) {
        // Someone saved a newer version.  Pick up the new version token but
        // keep the local geometry in the editor so the reviewer can compare
        // and re-apply; a second decision then submits against the new token.
        const theirs = await this.api.getRecord(this.record.image_id);
        this.record = theirs;
        return { kind: "conflict", expected: err.expected, actual: err.actual, theirs };
      }
      throw err;
    }
  }
}
