// Inbox card view-models and HTML rendering. Cards render in rRank order;
// every number shown comes straight from the API response.

import type { ActionType, Recommendation, RecommendationList } from "./types";

export type CardStatus = "untouched" | "opened" | "dismissed" | "unsynced";

export interface Card {
  accountId: string;
  repId: string;
  action: ActionType;
  gRank: number;
  rRank: number;
  aValue: number;
  explanation: string;
  day: number;
  status: CardStatus;
}

export function toCards(list: RecommendationList): Card[] {
  return [...list.recommendations]
    .sort((a, b) => a.r_rank - b.r_rank)
    .map((r) => ({
      accountId: r.account_id,
      repId: r.rep_id,
      action: r.action,
      gRank: r.g_rank,
      rRank: r.r_rank,
      aValue: r.a_value,
      explanation: r.explanation,
      day: r.created_at,
      status: "untouched" as CardStatus,
    }));
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#039;");
}

export const EMPTY_INBOX_MESSAGE = "No recommendations today. Check back after the next run.";

export function renderCard(card: Card): string {
  const status = card.status === "untouched" ? "" : ` <em class="status">${card.status}</em>`;
  return `
<article class="card" data-account="${escapeHtml(card.accountId)}">
  <header>
    <span class="badge badge-${card.action}">${card.action}</span>
    <strong>${escapeHtml(card.accountId)}</strong>
    <span class="ranks">gRank ${card.gRank} &middot; rRank ${card.rRank}</span>${status}
  </header>
  <p class="explanation">${escapeHtml(card.explanation)}</p>
  <footer>
    <button type="button" data-open="${escapeHtml(card.accountId)}">Open</button>
    <button type="button" data-dismiss="${escapeHtml(card.accountId)}">Dismiss</button>
  </footer>
</article>`.trim();
}

export function renderInbox(cards: Card[]): string {
  if (cards.length === 0) {
    return `<p class="empty-state">${EMPTY_INBOX_MESSAGE}</p>`;
  }
  return cards.map(renderCard).join("\n");
}
