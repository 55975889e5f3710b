import { ApiClient, ApiRequestError } from "./api.js";
import { ReviewActions } from "./controller.js";
import type { Label, MetricsPayload, ProcessSummary, RunManifest, RunPayload } from "./types.js";
import { diffAgainstParent } from "./viewmodel.js";
import {
  renderError,
  renderMetricsPanel,
  renderProcessList,
  renderRun,
  renderRunList,
} from "./render.js";

/**
 * Browser shell: hash routing plus event delegation over the data-action
 * attributes the renderers emit. All state lives here; the render modules
 * stay pure so they can be exercised without a DOM.
 *
 * Routes:
 *   #/                  process list
 *   #/processes/<id>    runs of one process
 *   #/runs/<id>         full run view with diff and metrics
 */

interface AppState {
  processes: ProcessSummary[];
  processId: string | null;
  runs: RunManifest[];
  run: RunPayload | null;
  parent: RunPayload | null;
  metrics: MetricsPayload | null;
  error: ApiRequestError | null;
  lastAction: (() => Promise<void>) | null;
}

function tokenFromStorage(): string {
  try {
    return window.localStorage.getItem("processlens.token") ?? "";
  } catch {
    return "";
  }
}

export function startApp(root: HTMLElement): void {
  const api = new ApiClient({ token: tokenFromStorage() });
  const state: AppState = {
    processes: [],
    processId: null,
    runs: [],
    run: null,
    parent: null,
    metrics: null,
    error: null,
    lastAction: null,
  };

  const navigate = (runId: string) => {
    window.location.hash = `#/runs/${encodeURIComponent(runId)}`;
  };

  const showError = (error: ApiRequestError) => {
    state.error = error;
    render();
  };

  const actions = new ReviewActions({ api, navigate, onError: showError });

  function render(): void {
    const banner = state.error ? renderError(state.error) : "";
    const left = `<aside class="pane processes"><h2>Processes</h2>${renderProcessList(
      state.processes,
      state.processId ?? undefined,
    )}</aside>`;
    const middle = state.processId
      ? `<aside class="pane runs"><h2>Runs</h2>${renderRunList(
          state.runs,
          state.run?.run_id,
        )}</aside>`
      : "";
    let detail = `<main class="pane detail"><p class="empty">Select a process to review its runs.</p></main>`;
    if (state.run) {
      const diff = state.parent ? diffAgainstParent(state.run, state.parent) : undefined;
      const metrics = state.metrics ? renderMetricsPanel(state.metrics) : "";
      detail = `<main class="pane detail">${renderRun(state.run, diff)}${metrics}</main>`;
    }
    root.innerHTML = `${banner}<div class="layout">${left}${middle}${detail}</div>`;
  }

  async function guarded(action: () => Promise<void>): Promise<void> {
    state.lastAction = action;
    state.error = null;
    try {
      await action();
    } catch (error) {
      if (error instanceof ApiRequestError) {
        state.error = error;
      } else {
        throw error;
      }
    }
    render();
  }

  async function loadProcesses(): Promise<void> {
    state.processes = await api.listProcesses();
  }

  async function loadProcess(processId: string): Promise<void> {
    state.processId = processId;
    state.runs = await api.listRuns(processId);
    state.run = null;
    state.parent = null;
    state.metrics = null;
  }

  async function loadRun(runId: string): Promise<void> {
    const run = await api.getRun(runId);
    state.run = run;
    state.processId = run.process_id;
    state.runs = await api.listRuns(run.process_id);
    state.parent = run.parent_run ? await api.getRun(run.parent_run) : null;
    state.metrics = null;
    try {
      state.metrics = await api.getMetrics(runId);
    } catch (error) {
      // No ground truth for this process is the normal case; anything
      // else should surface like other failures.
      if (!(error instanceof ApiRequestError) || error.code !== "GOLD_NOT_FOUND") {
        throw error;
      }
    }
  }

  async function route(): Promise<void> {
    const hash = window.location.hash;
    const runMatch = /^#\/runs\/(.+)$/.exec(hash);
    const processMatch = /^#\/processes\/(.+)$/.exec(hash);
    await guarded(async () => {
      await loadProcesses();
      if (runMatch) {
        await loadRun(decodeURIComponent(runMatch[1]!));
      } else if (processMatch) {
        await loadProcess(decodeURIComponent(processMatch[1]!));
      } else {
        state.processId = null;
        state.run = null;
        state.parent = null;
        state.metrics = null;
      }
    });
  }

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement | null)?.closest<HTMLElement>("[data-action]");
    if (!target) return;
    const action = target.dataset["action"];
    const runId = target.dataset["run"] ?? state.run?.run_id ?? "";
    if (action === "open-process") {
      window.location.hash = `#/processes/${encodeURIComponent(target.dataset["process"] ?? "")}`;
    } else if (action === "open-run") {
      event.preventDefault();
      navigate(runId);
    } else if (action === "override-label") {
      void guarded(async () => {
        await actions.overrideLabel(
          runId,
          target.dataset["step"] ?? "",
          (target.dataset["label"] ?? "VA") as Label,
        );
      });
    } else if (action === "edit-step") {
      const stepId = target.dataset["step"] ?? "";
      const current = state.run?.steps.find((s) => s.step_id === stepId)?.text ?? "";
      const text = window.prompt("Step text", current);
      if (text === null) return;
      void guarded(async () => {
        await actions.editStep(runId, stepId, text);
      });
    } else if (action === "reanalyze") {
      void guarded(async () => {
        await actions.reanalyze(runId, target.dataset["activity"] ?? "");
      });
    } else if (action === "retry") {
      const retry = state.lastAction;
      if (retry) void guarded(retry);
    } else if (action === "reload-run") {
      void guarded(async () => {
        if (!state.run) return;
        // The conflict names an existing child; reloading the parent
        // refreshes its child pointer, then we jump to that revision.
        const fresh = await api.getRun(state.run.run_id);
        if (fresh.child_run) {
          navigate(fresh.child_run);
        } else {
          await loadRun(fresh.run_id);
        }
      });
    }
  });

  window.addEventListener("hashchange", () => void route());
  void route();
}

const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement) {
  startApp(rootElement);
}
