import { describe, expect, it } from "vitest";

import { diffAgainstParent } from "../src/viewmodel.js";
import { renderRun } from "../src/render.js";
import type { RunPayload } from "../src/types.js";
import { fixture } from "./support.js";

const parent = fixture<RunPayload>("run-parent.json");
const child = fixture<RunPayload>("run-child-label.json");

function clone(run: RunPayload): RunPayload {
  return JSON.parse(JSON.stringify(run)) as RunPayload;
}

describe("revision diff", () => {
  it("a single label override yields exactly one changed row", () => {
    const diff = diffAgainstParent(child, parent);
    expect(diff.changes.size).toBe(1);
    expect([...diff.changes.values()]).toEqual(["label"]);
    expect(diff.removed).toEqual([]);

    const html = renderRun(child, diff);
    const highlighted = html.match(/diff-changed/g) ?? [];
    expect(highlighted.length).toBe(1);
    expect(html).toContain("diff-label");
  });

  it("reworded steps are flagged as text changes", () => {
    const edited = clone(child);
    edited.steps[0]!.text = "Log the rental request";
    const diff = diffAgainstParent(edited, child);
    expect(diff.changes.size).toBe(1);
    expect(diff.changes.get(edited.steps[0]!.step_id)).toBe("text");
  });

  it("steps present on only one side become additions or removals", () => {
    const trimmed = clone(child);
    const dropped = trimmed.steps.pop()!;
    trimmed.classifications = trimmed.classifications.filter(
      (c) => c.step_id !== dropped.step_id,
    );
    const diff = diffAgainstParent(trimmed, child);
    expect(diff.changes.size).toBe(0);
    expect(diff.removed.map((r) => r.step_id)).toEqual([dropped.step_id]);

    const reversed = diffAgainstParent(child, trimmed);
    expect(reversed.changes.get(dropped.step_id)).toBe("added");
    expect(reversed.removed).toEqual([]);
  });

  it("identical revisions of re-analysis produce an empty diff", () => {
    // The deterministic provider reproduced the same breakdown, so only
    // run metadata differs; no step rows should light up.
    const grandchild = fixture<RunPayload>("run-child-reanalyze.json");
    const diff = diffAgainstParent(grandchild, child);
    expect(diff.changes.size).toBe(0);
    expect(diff.removed).toEqual([]);
  });
});
