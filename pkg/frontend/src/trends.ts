// Chart data for the trends view: per-day action selection shares and
// feedback distribution. Values come from GET /metrics unchanged; the
// only local computation is turning counts into display percentages.

import type { DayMetrics, MetricsResponse } from "./types";

export interface DayShares {
  day: number;
  served: number;
  reward: number;
  shares: Record<string, number>; // action -> fraction of served, sums to 1 when served > 0
  feedback: Record<string, number>;
}

export interface TrendSeries {
  cumulativeReward: number;
  feedbackCounts: Record<string, number>;
  overallShares: Record<string, number>;
  days: DayShares[];
}

function dayShares(day: DayMetrics): DayShares {
  const shares: Record<string, number> = {};
  for (const [action, count] of Object.entries(day.actions)) {
    shares[action] = day.served > 0 ? count / day.served : 0;
  }
  return {
    day: day.day,
    served: day.served,
    reward: day.reward,
    shares,
    feedback: { ...day.feedback },
  };
}

export function toTrendSeries(metrics: MetricsResponse): TrendSeries {
  return {
    cumulativeReward: metrics.cumulative_reward,
    feedbackCounts: { ...metrics.feedback_counts },
    overallShares: { ...metrics.selection_shares },
    days: metrics.days.map(dayShares),
  };
}

function bar(label: string, fraction: number, count: number): string {
  const pct = Math.round(fraction * 1000) / 10;
  return `
<div class="bar-row" data-label="${label}" data-count="${count}">
  <span class="bar-label">${label}</span>
  <span class="bar" style="width: ${pct}%"></span>
  <span class="bar-value" title="${count}">${pct}%</span>
</div>`.trim();
}

export function renderDistribution(series: TrendSeries): string {
  const total = Object.values(series.feedbackCounts).reduce((a, b) => a + b, 0);
  const rows = Object.entries(series.feedbackCounts)
    .map(([kind, count]) => bar(kind, total > 0 ? count / total : 0, count))
    .join("\n");
  return `<section class="distribution">
<h3>Feedback distribution (cumulative reward ${series.cumulativeReward})</h3>
${rows}
</section>`;
}

export function renderTrend(series: TrendSeries): string {
  const rows = series.days
    .map((d) => {
      const cells = Object.entries(d.shares)
        .map(([action, share]) => bar(action, share, d.served))
        .join("\n");
      return `<div class="day" data-day="${d.day}">
<h4>Day ${d.day} &middot; served ${d.served} &middot; reward ${d.reward}</h4>
${cells}
</div>`;
    })
    .join("\n");
  return `<section class="trend">
<h3>Per-action selection share by day</h3>
${rows}
</section>`;
}
