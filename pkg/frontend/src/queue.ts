/** Local retry queue for verdicts submitted while offline.
 *
 * Pending submissions persist in storage so a reload loses nothing; flush
 * drops entries the server accepted or already had (conflict) and keeps the
 * rest for the next retry.
 */

import type { ApiClient, Choice } from "./api";

export interface PendingVerdict {
  ticket_id: string;
  reviewer_id: string;
  choice: Choice;
}

interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const STORAGE_KEY = "ckpt-arbiter-pending-verdicts";

export class OfflineQueue {
  private readonly storage: StorageLike;

  constructor(storage: StorageLike) {
    this.storage = storage;
  }

  load(): PendingVerdict[] {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw);
      return Array.isArray(parsed) ? (parsed as PendingVerdict[]) : [];
    } catch {
      return [];
    }
  }

  private save(entries: PendingVerdict[]): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(entries));
  }

  size(): number {
    return this.load().length;
  }

  enqueue(entry: PendingVerdict): void {
    const entries = this.load();
    const exists = entries.some(
      (e) => e.ticket_id === entry.ticket_id && e.reviewer_id === entry.reviewer_id,
    );
    if (!exists) {
      entries.push(entry);
      this.save(entries);
    }
  }

  /** Retry everything once; returns how many entries remain queued. */
  async flush(api: ApiClient): Promise<number> {
    const remaining: PendingVerdict[] = [];
    for (const entry of this.load()) {
      const result = await api.submitChoice(
        entry.ticket_id,
        entry.reviewer_id,
        entry.choice,
      );
      if (result.kind === "offline") {
        remaining.push(entry);
      }
      // accepted, conflict, and rejected entries are all final: retrying
      // a rejection would loop forever on a bad ticket.
    }
    this.save(remaining);
    return remaining.length;
  }
}
