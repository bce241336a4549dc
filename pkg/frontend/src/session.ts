/**
 * Per-image review state: the server-acknowledged corrections, the unsaved
 * buffer, and the revision number used for optimistic concurrency.
 *
 * The buffer is only ever emptied by an acknowledged save or an explicit
 * discard; navigation code must check `dirty` and ask before switching
 * images. Saves post the whole buffer atomically with the base revision,
 * and an identical replay after a dropped response is accepted by the
 * server without a second revision bump, so retrying a timed-out save is
 * safe.
 */

import { ApiError, ReviewClient } from "./client.js";
import type { Correction, RecordDoc, RegistryClass } from "./types.js";

export type SaveOutcome =
  | { kind: "saved"; revision: number }
  | { kind: "nothing_to_save" }
  | { kind: "conflict"; currentRevision: number | null }
  | { kind: "rejected"; reasons: string[] }
  | { kind: "offline"; queued: number };

export type FinalizeOutcome =
  | { kind: "curated"; revision: number }
  | { kind: "incomplete"; unresolved: string[] }
  | { kind: "conflict"; currentRevision: number | null }
  | { kind: "offline" };

export class ReviewSession {
  readonly imageId: string;
  revision: number;
  status: string;
  reviewer: string;
  /** Server-acknowledged corrections, keyed by class code. */
  applied: Record<string, Correction>;
  /** Unsaved corrections, keyed by class code. */
  private pending = new Map<string, Correction>();
  private readonly codes: string[];
  /** True after a save failed to reach the service; cleared by the next response. */
  offline = false;

  constructor(record: RecordDoc, registry: RegistryClass[], reviewer = "") {
    this.imageId = record.image_id;
    this.revision = record.revision;
    this.status = record.status;
    this.reviewer = reviewer;
    this.applied = { ...record.corrections };
    this.codes = registry.map((c) => c.code);
  }

  stage(code: string, correction: Correction): void {
    this.pending.set(code, correction);
  }

  unstage(code: string): void {
    this.pending.delete(code);
  }

  stagedFor(code: string): Correction | undefined {
    return this.pending.get(code);
  }

  /** The correction the overlay should draw: staged wins over acknowledged. */
  effectiveFor(code: string): Correction | undefined {
    return this.pending.get(code) ?? this.applied[code];
  }

  get dirty(): boolean {
    return this.pending.size > 0;
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  /** Explicit throw-away of the unsaved buffer. */
  discardPending(): void {
    this.pending.clear();
  }

  resolvedCodes(): Set<string> {
    const resolved = new Set<string>(Object.keys(this.applied));
    for (const code of this.pending.keys()) resolved.add(code);
    return resolved;
  }

  unresolvedCodes(): string[] {
    const resolved = this.resolvedCodes();
    return this.codes.filter((code) => !resolved.has(code));
  }

  /**
   * Client-side gate for the finalize button. The server re-checks the
   * same rule, so this can only be too strict, never too lax.
   */
  get canFinalize(): boolean {
    return this.status !== "curated" && !this.dirty && this.unresolvedCodes().length === 0;
  }

  /** Posts the whole buffer atomically; the buffer survives every failure path. */
  async save(client: ReviewClient): Promise<SaveOutcome> {
    if (this.pending.size === 0) return { kind: "nothing_to_save" };
    const batch: Record<string, Correction> = {};
    for (const [code, corr] of this.pending) batch[code] = corr;
    try {
      const response = await client.postCorrections(this.imageId, this.revision, batch, this.reviewer);
      this.offline = false;
      this.revision = response.revision;
      for (const [code, corr] of Object.entries(batch)) this.applied[code] = corr;
      // only drop entries that went out in this batch; a correction staged
      // while the request was in flight stays pending
      for (const [code, corr] of [...this.pending]) {
        if (batch[code] === corr) this.pending.delete(code);
      }
      return { kind: "saved", revision: response.revision };
    } catch (error) {
      if (error instanceof ApiError) {
        this.offline = false;
        if (error.isStaleRevision) {
          return { kind: "conflict", currentRevision: error.currentRevision };
        }
        if (error.status === 422) {
          return { kind: "rejected", reasons: error.reasons };
        }
        throw error;
      }
      // network failure: nothing reached the server we know of, keep the
      // buffer queued and let the caller surface the retry prompt
      this.offline = true;
      return { kind: "offline", queued: this.pending.size };
    }
  }

  /** Re-posts the retained buffer after a network failure. */
  retryPending(client: ReviewClient): Promise<SaveOutcome> {
    return this.save(client);
  }

  async finalize(client: ReviewClient): Promise<FinalizeOutcome> {
    try {
      const response = await client.finalize(this.imageId, this.revision, this.reviewer);
      this.offline = false;
      this.revision = response.revision;
      this.status = response.status;
      return { kind: "curated", revision: response.revision };
    } catch (error) {
      if (error instanceof ApiError) {
        this.offline = false;
        if (error.isStaleRevision) {
          return { kind: "conflict", currentRevision: error.currentRevision };
        }
        if (error.isCurationIncomplete) {
          return { kind: "incomplete", unresolved: error.unresolved };
        }
        throw error;
      }
      this.offline = true;
      return { kind: "offline" };
    }
  }

  /** Replaces local state with the server's record after a conflict reload. */
  resetFrom(record: RecordDoc): void {
    if (record.image_id !== this.imageId) {
      throw new Error(`record for ${record.image_id} cannot reset session for ${this.imageId}`);
    }
    this.revision = record.revision;
    this.status = record.status;
    this.applied = { ...record.corrections };
    this.pending.clear();
    this.offline = false;
  }
}
