import type { ApiClient } from "./api.js";
import { ApiRequestError } from "./api.js";
import type { Label, RunPayload } from "./types.js";

/**
 * Review mutations. Every analyst action maps to exactly one documented
 * API call; the service answers with the child revision it created and
 * the controller navigates there. Failures go to the error sink instead
 * of throwing so the shell can keep the current view on screen.
 */

export interface ControllerDeps {
  api: ApiClient;
  /** Route the UI to a run id (hash change in the browser shell). */
  navigate: (runId: string) => void;
  onError: (error: ApiRequestError) => void;
}

export class ReviewActions {
  constructor(private readonly deps: ControllerDeps) {}

  private async apply(call: () => Promise<RunPayload>): Promise<RunPayload | null> {
    try {
      const child = await call();
      this.deps.navigate(child.run_id);
      return child;
    } catch (error) {
      if (error instanceof ApiRequestError) {
        this.deps.onError(error);
        return null;
      }
      throw error;
    }
  }

  overrideLabel(runId: string, stepId: string, label: Label, note = ""): Promise<RunPayload | null> {
    return this.apply(() => this.deps.api.overrideLabel(runId, stepId, label, note));
  }

  editStep(runId: string, stepId: string, text: string, note = ""): Promise<RunPayload | null> {
    return this.apply(() => this.deps.api.editStep(runId, stepId, text, note));
  }

  reanalyze(runId: string, activityId: string, note = ""): Promise<RunPayload | null> {
    return this.apply(() => this.deps.api.reanalyze(runId, activityId, note));
  }
}
