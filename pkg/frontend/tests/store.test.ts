import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { QueueStore } from "../src/store.js";
import type { CaseView } from "../src/types.js";

function caseView(id: string, state = "Pending"): CaseView {
  return {
    case_id: id,
    state: state as CaseView["state"],
    created_at: 1000,
    decided_at: null,
    adjudicator: null,
    packet_id: `pkt-${id}`,
    top_score: 0.42,
    probe: { presence: {}, quality: {} },
    candidates: [{ gallery_id: 7, score: 0.42 }],
    linked_candidate_id: null,
    enrolled_id: null,
  };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function makeStore(fetchImpl: typeof fetch): QueueStore {
  return new QueueStore(new ApiClient("http://svc", fetchImpl));
}

describe("QueueStore.refresh", () => {
  it("loads the pending page oldest-first", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ cases: [caseView("case-000001"), caseView("case-000002")], next_cursor: null }),
    );
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    expect(store.state.cases.map((c) => c.case_id)).toEqual([
      "case-000001",
      "case-000002",
    ]);
    expect(store.state.error).toBeNull();
  });

  it("pages through with the cursor", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL) => {
      const u = String(url);
      if (u.includes("cursor=")) {
        return jsonResponse({ cases: [caseView("case-000003")], next_cursor: null });
      }
      return jsonResponse({
        cases: [caseView("case-000001"), caseView("case-000002")],
        next_cursor: "2",
      });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    expect(store.state.nextCursor).toBe("2");
    await store.loadMore();
    expect(store.state.cases).toHaveLength(3);
    expect(store.state.nextCursor).toBeNull();
  });

  it("pages 25 cases at size 10 as three pages", async () => {
    const all = Array.from({ length: 25 }, (_, i) =>
      caseView(`case-${String(i + 1).padStart(6, "0")}`),
    );
    const fetchMock = vi.fn(async (url: RequestInfo | URL) => {
      const u = new URL(String(url));
      const size = Number(u.searchParams.get("page_size") ?? 20);
      const after = Number(u.searchParams.get("cursor") ?? 0);
      const page = all.filter((_, i) => i + 1 > after).slice(0, size);
      const last = after + page.length;
      return jsonResponse({
        cases: page,
        next_cursor: last < all.length ? String(last) : null,
      });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    const api = new ApiClient("http://svc", fetchMock as unknown as typeof fetch);
    let pages = 0;
    let cursor: string | null = null;
    do {
      const page = await api.listCases("Pending", cursor, 10);
      pages += 1;
      cursor = page.next_cursor;
    } while (cursor);
    expect(pages).toBe(3);
    expect(store).toBeDefined();
  });

  it("records errors and supports retry", async () => {
    let fail = true;
    const fetchMock = vi.fn(async () => {
      if (fail) return jsonResponse({ detail: "boom" }, 500);
      return jsonResponse({ cases: [caseView("case-000009")], next_cursor: null });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    expect(store.state.error).toContain("boom");
    fail = false;
    await store.refresh();
    expect(store.state.error).toBeNull();
    expect(store.state.cases).toHaveLength(1);
  });
});

describe("QueueStore polling", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("reflects new cases within one poll interval", async () => {
    const pages = [
      { cases: [caseView("case-000001")], next_cursor: null },
      { cases: [caseView("case-000001"), caseView("case-000002")], next_cursor: null },
    ];
    let call = 0;
    const fetchMock = vi.fn(async () => jsonResponse(pages[Math.min(call++, 1)]));
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    expect(store.state.cases).toHaveLength(1);
    store.startPolling(1000);
    await vi.advanceTimersByTimeAsync(1001);
    expect(store.state.cases).toHaveLength(2);
    store.stopPolling();
  });
});

describe("QueueStore.submitDecision", () => {
  it("optimistically removes the case and confirms on success", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      if (init?.method === "POST") {
        return jsonResponse(caseView("case-000001", "Unique"));
      }
      return jsonResponse({ cases: [caseView("case-000001")], next_cursor: null });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    const result = await store.submitDecision("case-000001", "Unique");
    expect(result?.state).toBe("Unique");
    expect(store.state.cases).toHaveLength(0);
    expect(store.state.conflict).toBeNull();
  });

  it("rolls back and surfaces a banner on state conflict", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      const u = String(url);
      if (init?.method === "POST") {
        return jsonResponse({ detail: "case case-000001 already decided" }, 409);
      }
      if (u.endsWith("/cases/case-000001")) {
        return jsonResponse(caseView("case-000001", "Duplicate"));
      }
      return jsonResponse({ cases: [caseView("case-000001")], next_cursor: null });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    const result = await store.submitDecision("case-000001", "Unique");
    expect(result).toBeNull();
    expect(store.state.conflict?.caseId).toBe("case-000001");
    // the case was already terminal elsewhere, so it stays out of the queue
    expect(store.state.cases).toHaveLength(0);
    store.dismissConflict();
    expect(store.state.conflict).toBeNull();
  });

  it("restores the queue when the case is still pending after a conflict", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      const u = String(url);
      if (init?.method === "POST") {
        return jsonResponse({ detail: "lost the race" }, 409);
      }
      if (u.endsWith("/cases/case-000002")) {
        return jsonResponse(caseView("case-000002", "Pending"));
      }
      return jsonResponse({ cases: [caseView("case-000002")], next_cursor: null });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    await store.submitDecision("case-000002", "Duplicate");
    expect(store.state.cases.map((c) => c.case_id)).toEqual(["case-000002"]);
  });

  it("rolls back on network failure so retry is safe, without double submit", async () => {
    let posts = 0;
    let resolveFirst: (() => void) | null = null;
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      if (init?.method === "POST") {
        posts += 1;
        if (posts === 1) {
          await new Promise<void>((resolve) => {
            resolveFirst = resolve;
          });
          throw new TypeError("network down");
        }
        return jsonResponse(caseView("case-000003", "Unique"));
      }
      return jsonResponse({ cases: [caseView("case-000003")], next_cursor: null });
    });
    const store = makeStore(fetchMock as unknown as typeof fetch);
    await store.refresh();
    const first = store.submitDecision("case-000003", "Unique");
    // a second click while in flight must be ignored entirely
    const second = await store.submitDecision("case-000003", "Unique");
    expect(second).toBeNull();
    expect(posts).toBe(1);
    resolveFirst!();
    expect(await first).toBeNull();
    expect(store.state.error).toContain("network down");
    expect(store.state.cases.map((c) => c.case_id)).toEqual(["case-000003"]);
    // deliberate retry after the failure goes through
    const retry = await store.submitDecision("case-000003", "Unique");
    expect(retry?.state).toBe("Unique");
    expect(posts).toBe(2);
  });
});
