import type { Label } from "./types.js";

/**
 * Label presentation constants.
 *
 * The colors must stay in lockstep with the palette the report module of
 * the analysis service uses for its figures, so a chart exported there and
 * a run viewed here read the same way.
 */
export const LABEL_COLORS: Record<Label, string> = {
  VA: "#2a9d8f",
  BVA: "#457b9d",
  NVA: "#e63946",
};

export const LABEL_TITLES: Record<Label, string> = {
  VA: "Value adding",
  BVA: "Business value adding",
  NVA: "Non-value adding",
};

/** NVA is the waste signal reviewers scan for; it gets the loud styling. */
export function labelClass(label: Label | null): string {
  if (label === null) return "chip chip-pending";
  return label === "NVA" ? "chip chip-nva chip-emphasis" : `chip chip-${label.toLowerCase()}`;
}
