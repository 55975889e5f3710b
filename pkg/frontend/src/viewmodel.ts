import type { DistributionEntry, Label, RunPayload } from "./types.js";
import { LABELS } from "./types.js";
import { LABEL_COLORS } from "./labels.js";

/**
 * Pure view-model helpers between the wire payloads and the renderers.
 * Nothing here recomputes service-owned numbers; the helpers reshape them
 * for display and, for fractions, format them as percentages.
 */

/** 0.063 -> "6.3%", 0.45 -> "45%". One decimal unless it is a round number. */
export function formatPercent(fraction: number): string {
  const rounded = Math.round(fraction * 1000) / 10;
  const text = Number.isInteger(rounded) ? rounded.toFixed(0) : rounded.toFixed(1);
  return `${text}%`;
}

/** For percentages the service already scaled to 0..100. */
export function formatServicePercent(value: number): string {
  return `${value.toFixed(1)}%`;
}

export function formatScore(value: number): string {
  return value.toFixed(3);
}

export interface DistributionSegment {
  label: Label;
  count: number;
  fraction: number;
  percentText: string;
  color: string;
}

/** Fixed VA, BVA, NVA order so the bar always reads the same way. */
export function distributionSegments(
  distribution: Record<string, DistributionEntry>,
): DistributionSegment[] {
  const segments: DistributionSegment[] = [];
  for (const label of LABELS) {
    const entry = distribution[label];
    if (!entry) continue;
    segments.push({
      label,
      count: entry.count,
      fraction: entry.fraction,
      percentText: formatPercent(entry.fraction),
      color: LABEL_COLORS[label],
    });
  }
  return segments;
}

/** Headline the reviewer cares about: how much waste did the run surface. */
export function wasteSummary(run: RunPayload): string {
  const entry = run.distribution["NVA"];
  const count = entry ? entry.count : 0;
  const noun = count === 1 ? "NVA step" : "NVA steps";
  if (count === 0) return `0 ${noun}`;
  return `${count} ${noun} (${formatPercent(entry!.fraction)} of the run)`;
}

export type ChangeKind = "label" | "text" | "added";

export interface RunDiff {
  /** step_id -> what changed, for steps present in the child. */
  changes: Map<string, ChangeKind>;
  /** Steps the parent had that the child no longer has. */
  removed: { step_id: string; text: string; label: Label | null }[];
}

interface FlatStep {
  text: string;
  label: Label | null;
}

function flatten(run: RunPayload): Map<string, FlatStep> {
  const byLabel = new Map(run.classifications.map((c) => [c.step_id, c.label]));
  const flat = new Map<string, FlatStep>();
  for (const step of run.steps) {
    flat.set(step.step_id, { text: step.text, label: byLabel.get(step.step_id) ?? null });
  }
  return flat;
}

/**
 * Revision diff for the review screen. A step counts as changed when its
 * text or label differs from the parent revision; steps only one side has
 * are additions or removals. A single label override therefore yields
 * exactly one changed row.
 */
export function diffAgainstParent(child: RunPayload, parent: RunPayload): RunDiff {
  const childSteps = flatten(child);
  const parentSteps = flatten(parent);
  const changes = new Map<string, ChangeKind>();
  for (const [stepId, step] of childSteps) {
    const before = parentSteps.get(stepId);
    if (!before) {
      changes.set(stepId, "added");
    } else if (before.text !== step.text) {
      changes.set(stepId, "text");
    } else if (before.label !== step.label) {
      changes.set(stepId, "label");
    }
  }
  const removed = [];
  for (const [stepId, step] of parentSteps) {
    if (!childSteps.has(stepId)) {
      removed.push({ step_id: stepId, text: step.text, label: step.label });
    }
  }
  return { changes, removed };
}

/** Total steps across activities, for the run header. */
export function stepCount(run: RunPayload): number {
  return run.steps.length;
}
