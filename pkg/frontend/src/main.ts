// Console wiring: load the inbox for a rep, hook up the feedback
// buttons, poll metrics every 5 seconds. The console holds no state
// beyond the in-flight feedback queue; reloading reproduces the server.

import { ServiceClient } from "./api";
import { renderInbox, toCards, type Card } from "./cards";
import { FeedbackTracker } from "./feedback";
import { renderDistribution, renderTrend, toTrendSeries } from "./trends";

const POLL_INTERVAL_MS = 5000;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export async function bootstrap(baseUrl: string): Promise<void> {
  const client = new ServiceClient(baseUrl);
  const params = new URLSearchParams(window.location.search);
  const repId = params.get("rep") ?? "R0";
  el("rep-name").textContent = repId;

  let cards: Card[] = [];
  let tracker: FeedbackTracker | null = null;

  async function loadInbox(): Promise<void> {
    try {
      const list = await client.getRecommendations(repId, { retries: 2 });
      cards = toCards(list);
      tracker = new FeedbackTracker(client, cards);
      el("inbox").innerHTML = renderInbox(cards);
      el("banner").textContent = "";
    } catch (err) {
      el("banner").textContent = `Could not load recommendations (${String(err)}). Retrying on next poll.`;
    }
  }

  async function refreshTrends(): Promise<void> {
    try {
      const series = toTrendSeries(await client.getMetrics({ retries: 1 }));
      el("trends").innerHTML = renderDistribution(series) + renderTrend(series);
    } catch {
      // leave the previous chart in place; next poll retries
    }
  }

  el("inbox").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const open = target.getAttribute("data-open");
    const dismiss = target.getAttribute("data-dismiss");
    if (!tracker) return;
    if (open) {
      void tracker.open(open).then(() => el("inbox").innerHTML = renderInbox(cards));
    } else if (dismiss) {
      void tracker.dismiss(dismiss).then(() => el("inbox").innerHTML = renderInbox(cards));
    }
  });

  el("close-day").addEventListener("click", () => {
    if (!tracker) return;
    void tracker.closeDay().then(() => refreshTrends());
  });

  el("reload").addEventListener("click", () => void loadInbox());

  await loadInbox();
  await refreshTrends();
  setInterval(() => void refreshTrends(), POLL_INTERVAL_MS);
}

declare global {
  interface Window {
    salesoptBootstrap?: typeof bootstrap;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("inbox")) {
  window.salesoptBootstrap = bootstrap;
  void bootstrap("");
}
