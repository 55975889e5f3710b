import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { ProcessSummary, RunManifest, RunPayload } from "../src/types.js";
import { fixture, stubFetch } from "./support.js";

const run = fixture<RunPayload>("run-parent.json");
const processList = fixture<{ processes: ProcessSummary[] }>("processes.json");
const runList = fixture<{ runs: RunManifest[] }>("runs-list.json");

describe("api client", () => {
  it("unwraps collection envelopes", async () => {
    const stub = stubFetch({
      "GET /api/v1/processes": { payload: processList },
      "GET /api/v1/runs?process_id=equipment-rental": { payload: runList },
    });
    const api = new ApiClient({ fetchFn: stub.fetchFn });

    const processes = await api.listProcesses();
    expect(processes.map((p) => p.process_id)).toEqual(["equipment-rental"]);
    expect(processes[0]!.has_gold).toBe(true);

    const runs = await api.listRuns("equipment-rental");
    expect(runs.length).toBe(runList.runs.length);
    expect(runs.map((r) => r.revision)).toEqual([1, 2, 3]);
  });

  it("sends the bearer token only when configured", async () => {
    const url = `GET /api/v1/runs/${run.run_id}`;
    const withToken = stubFetch({ [url]: { payload: run } });
    await new ApiClient({ fetchFn: withToken.fetchFn, token: "sesame" }).getRun(run.run_id);
    expect(withToken.calls[0]!.headers["Authorization"]).toBe("Bearer sesame");

    const without = stubFetch({ [url]: { payload: run } });
    await new ApiClient({ fetchFn: without.fetchFn }).getRun(run.run_id);
    expect(without.calls[0]!.headers["Authorization"]).toBeUndefined();
  });

  it("prefixes requests with the configured base url", async () => {
    const stub = stubFetch({
      [`GET http://localhost:8000/api/v1/runs/${run.run_id}`]: { payload: run },
    });
    const api = new ApiClient({ baseUrl: "http://localhost:8000/", fetchFn: stub.fetchFn });
    const loaded = await api.getRun(run.run_id);
    expect(loaded.run_id).toBe(run.run_id);
    expect(api.exportUrl(run.run_id, "csv")).toBe(
      `http://localhost:8000/api/v1/runs/${run.run_id}/export?format=csv`,
    );
  });

  it("round-trips the recorded run payload shape", () => {
    // Guard against the fixtures drifting from the documented contract.
    expect(run.activities.length).toBe(Object.keys(run.statuses).length);
    const stepIds = new Set(run.steps.map((s) => s.step_id));
    for (const c of run.classifications) {
      expect(stepIds.has(c.step_id)).toBe(true);
    }
    for (const activity of run.activities) {
      for (const step of activity.steps) {
        expect(stepIds.has(step.step_id)).toBe(true);
      }
    }
    expect(Object.keys(run.distribution).sort()).toEqual(["BVA", "NVA", "VA"]);
  });
});
