// Per-card feedback queue: optimistic status updates, serialized
// submissions with retry, NoClick sweep at day close. The service keeps
// the last submission per (rep, account, day), so re-sends are safe.

import type { ServiceClient } from "./api";
import type { Card } from "./cards";
import type { FeedbackKind } from "./types";

export interface SubmissionResult {
  accountId: string;
  feedback: FeedbackKind;
  ok: boolean;
}

export class FeedbackTracker {
  private touched = new Map<string, FeedbackKind>();
  private sweepDone = false;
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly client: ServiceClient,
    private readonly cards: Card[],
  ) {}

  private card(accountId: string): Card {
    const card = this.cards.find((c) => c.accountId === accountId);
    if (!card) throw new Error(`no card for account ${accountId}`);
    return card;
  }

  /** Serialize submissions per tracker so retries cannot reorder. */
  private submit(card: Card, feedback: FeedbackKind): Promise<SubmissionResult> {
    const attempt = this.queue.then(async () => {
      try {
        await this.client.postFeedback(
          { rep_id: card.repId, account_id: card.accountId, feedback },
          { retries: 2, backoffMs: 50 },
        );
        return { accountId: card.accountId, feedback, ok: true };
      } catch {
        card.status = "unsynced";
        return { accountId: card.accountId, feedback, ok: false };
      }
    });
    this.queue = attempt;
    return attempt;
  }

  open(accountId: string): Promise<SubmissionResult> {
    const card = this.card(accountId);
    card.status = "opened"; // optimistic
    this.touched.set(accountId, "DeepLinkClicked");
    return this.submit(card, "DeepLinkClicked");
  }

  dismiss(accountId: string): Promise<SubmissionResult> {
    const card = this.card(accountId);
    card.status = "dismissed"; // optimistic
    this.touched.set(accountId, "NotificationDismissed");
    return this.submit(card, "NotificationDismissed");
  }

  /** Emit NoClick once for every card the rep never touched. */
  async closeDay(): Promise<SubmissionResult[]> {
    if (this.sweepDone) return [];
    this.sweepDone = true;
    const results: SubmissionResult[] = [];
    for (const card of this.cards) {
      if (!this.touched.has(card.accountId)) {
        results.push(await this.submit(card, "NoClick"));
      }
    }
    return results;
  }
}
