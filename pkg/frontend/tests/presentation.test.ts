import { describe, expect, it } from "vitest";

import {
  distributionSegments,
  formatPercent,
  wasteSummary,
} from "../src/viewmodel.js";
import { renderDistributionBar, renderMetricsPanel, renderRun } from "../src/render.js";
import type { MetricsPayload, RunPayload } from "../src/types.js";
import { fixture } from "./support.js";

const run = fixture<RunPayload>("run-parent.json");
const metrics = fixture<MetricsPayload>("metrics.json");

function withDistribution(distribution: RunPayload["distribution"]): RunPayload {
  return { ...run, distribution };
}

describe("distribution panel", () => {
  it("builds one segment per label in fixed order from fetched fractions", () => {
    const segments = distributionSegments({
      BVA: { count: 15, fraction: 0.48 },
      NVA: { count: 2, fraction: 0.063 },
      VA: { count: 14, fraction: 0.45 },
    });
    expect(segments.map((s) => s.label)).toEqual(["VA", "BVA", "NVA"]);
    expect(segments.map((s) => s.percentText)).toEqual(["45%", "48%", "6.3%"]);
    expect(segments.map((s) => s.color)).toEqual(["#2a9d8f", "#457b9d", "#e63946"]);
  });

  it("renders a three-segment bar for a three-label run", () => {
    const html = renderDistributionBar(run);
    const segments = html.match(/class="segment /g) ?? [];
    expect(segments.length).toBe(3);
  });

  it("percent formatting keeps one decimal only when needed", () => {
    expect(formatPercent(0.45)).toBe("45%");
    expect(formatPercent(0.063)).toBe("6.3%");
    expect(formatPercent(1)).toBe("100%");
    expect(formatPercent(0)).toBe("0%");
    expect(formatPercent(1 / 3)).toBe("33.3%");
  });
});

describe("waste summary", () => {
  it("counts NVA steps from the fetched distribution", () => {
    expect(wasteSummary(run)).toBe("2 NVA steps (16.7% of the run)");
  });

  it("says 0 NVA steps when the run surfaced no waste", () => {
    const clean = withDistribution({
      VA: { count: 10, fraction: 1.0 },
      BVA: { count: 0, fraction: 0.0 },
      NVA: { count: 0, fraction: 0.0 },
    });
    expect(wasteSummary(clean)).toBe("0 NVA steps");
    expect(renderRun(clean)).toContain("0 NVA steps");
  });

  it("uses the singular for one step", () => {
    const one = withDistribution({
      VA: { count: 3, fraction: 0.75 },
      NVA: { count: 1, fraction: 0.25 },
    });
    expect(wasteSummary(one)).toBe("1 NVA step (25% of the run)");
  });
});

describe("metrics panel", () => {
  const html = renderMetricsPanel(metrics);

  it("shows the confusion matrix cells the service sent", () => {
    for (const row of metrics.confusion.counts) {
      for (const count of row) {
        expect(html).toContain(`<td>${count}<span class="pct">`);
      }
    }
    for (const label of metrics.confusion.labels) {
      expect(html).toContain(`<th>${label}</th>`);
    }
  });

  it("shows macro and per-class F1 as sent, formatted for display", () => {
    expect(html).toContain("Macro F1 0.926");
    for (const line of Object.values(metrics.f1.per_class)) {
      expect(html).toContain(`<td>${line.f1.toFixed(3)}</td>`);
    }
  });

  it("shows the alignment outcome counts", () => {
    expect(html).toContain("ExactMatch: 9");
    expect(html).toContain(
      `${metrics.alignment.total_generated} generated vs ${metrics.alignment.total_ground_truth} ground-truth steps`,
    );
    expect(html).toContain(`${metrics.scored_steps} scored`);
    expect(html).toContain(`${metrics.unmatched_steps} unmatched`);
  });
});
