/** Queue and case state with polling, optimistic decisions and rollback.
 *
 * A decision is applied to the local case immediately (optimistic) and
 * rolled back if the server reports a state conflict, which happens when
 * another adjudicator got there first; conflicted cases are re-fetched
 * and surfaced through a banner. In-flight guards make a double click
 * a no-op rather than a double submit.
 */

import { ApiClient, ConflictError } from "./api.js";
import type { CaseView } from "./types.js";

export interface QueueState {
  cases: CaseView[];
  nextCursor: string | null;
  loading: boolean;
  error: string | null;
  conflict: { caseId: string; message: string } | null;
  lastDecision: { caseId: string; decision: string } | null;
  pendingSubmits: Set<string>;
}

export type Listener = () => void;

export class QueueStore {
  state: QueueState = {
    cases: [],
    nextCursor: null,
    loading: false,
    error: null,
    conflict: null,
    lastDecision: null,
    pendingSubmits: new Set(),
  };
  adjudicator = "";
  private listeners: Listener[] = [];
  private pollHandle: ReturnType<typeof setInterval> | null = null;

  constructor(private api: ApiClient) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  async refresh(cursor: string | null = null): Promise<void> {
    this.state.loading = true;
    this.state.error = null;
    this.emit();
    try {
      const page = await this.api.listCases("Pending", cursor);
      // oldest first: the server returns creation order
      this.state.cases = cursor ? [...this.state.cases, ...page.cases] : page.cases;
      this.state.nextCursor = page.next_cursor;
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    } finally {
      this.state.loading = false;
      this.emit();
    }
  }

  async loadMore(): Promise<void> {
    if (this.state.nextCursor) await this.refresh(this.state.nextCursor);
  }

  startPolling(intervalMs = 5000): void {
    this.stopPolling();
    this.pollHandle = setInterval(() => {
      void this.refresh();
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.pollHandle !== null) {
      clearInterval(this.pollHandle);
      this.pollHandle = null;
    }
  }

  /** Optimistically resolve a case; returns the server's case view. */
  async submitDecision(
    caseId: string,
    decision: "Duplicate" | "Unique",
  ): Promise<CaseView | null> {
    if (this.state.pendingSubmits.has(caseId)) {
      return null; // already in flight; never double-submit
    }
    const before = this.state.cases;
    this.state.pendingSubmits.add(caseId);
    this.state.cases = before.filter((c) => c.case_id !== caseId);
    this.state.lastDecision = { caseId, decision };
    this.emit();
    try {
      const view = await this.api.submitDecision(
        caseId,
        decision,
        this.adjudicator || "console",
      );
      return view;
    } catch (err) {
      if (err instanceof ConflictError) {
        // someone else decided first: roll back, re-fetch the case, banner it
        this.state.conflict = { caseId, message: err.message };
        this.state.lastDecision = null;
        try {
          const fresh = await this.api.getCase(caseId);
          if (fresh.state === "Pending") {
            this.state.cases = before;
          }
        } catch {
          /* case may be terminal; the queue stays without it */
        }
      } else {
        // network or server trouble: roll back fully so a retry is safe
        this.state.cases = before;
        this.state.lastDecision = null;
        this.state.error = err instanceof Error ? err.message : String(err);
      }
      return null;
    } finally {
      this.state.pendingSubmits.delete(caseId);
      this.emit();
    }
  }

  dismissConflict(): void {
    this.state.conflict = null;
    this.emit();
  }
}
