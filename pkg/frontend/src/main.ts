/** Entry point: hash routing, event delegation, polling. */

import { ApiClient, NotFoundError } from "./api.js";
import { QueueStore } from "./store.js";
import { renderCaseDetail, renderNotFound, renderQueue } from "./views.js";

const POLL_INTERVAL_MS = 5000;

const api = new ApiClient("");
const store = new QueueStore(api);
store.adjudicator =
  new URLSearchParams(window.location.search).get("adjudicator") ?? "console";

const root = document.getElementById("app")!;
let currentCaseId: string | null = null;

function route(): { view: "queue" } | { view: "case"; caseId: string } {
  const hash = window.location.hash || "#/queue";
  const m = hash.match(/^#\/cases\/(.+)$/);
  if (m) return { view: "case", caseId: decodeURIComponent(m[1]) };
  return { view: "queue" };
}

async function render(): Promise<void> {
  const r = route();
  if (r.view === "queue") {
    currentCaseId = null;
    root.innerHTML = renderQueue(store.state);
    return;
  }
  currentCaseId = r.caseId;
  try {
    const view = await api.getCase(r.caseId);
    root.innerHTML = renderCaseDetail(view);
  } catch (err) {
    if (err instanceof NotFoundError) {
      root.innerHTML = renderNotFound(r.caseId);
    } else {
      root.innerHTML = `<p class="banner error">${String(err)}</p>`;
    }
  }
}

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("[data-action]");
  if (!(target instanceof HTMLElement)) return;
  const action = target.dataset.action;
  if (action === "decide") {
    const caseId = target.dataset.case!;
    const decision = target.dataset.decision as "Duplicate" | "Unique";
    void store.submitDecision(caseId, decision).then(() => {
      if (currentCaseId === caseId) window.location.hash = "#/queue";
    });
  } else if (action === "dismiss-conflict") {
    store.dismissConflict();
  } else if (action === "retry-refresh" || action === "load-more") {
    void (action === "load-more" ? store.loadMore() : store.refresh());
  }
});

store.subscribe(() => {
  if (route().view === "queue") {
    root.innerHTML = renderQueue(store.state);
  }
});

window.addEventListener("hashchange", () => void render());

void store.refresh().then(() => render());
store.startPolling(POLL_INTERVAL_MS);
