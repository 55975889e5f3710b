import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { FetchLike } from "../src/api.js";

/**
 * Offline test support: fixtures recorded from the analysis service plus a
 * fetch stub that replays them. No sockets, no DOM, no Python.
 */

const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURE_DIR, name), "utf-8")) as T;
}

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
  headers: Record<string, string>;
}

export interface Route {
  status?: number;
  payload: unknown;
}

export interface FetchStub {
  fetchFn: FetchLike;
  calls: RecordedCall[];
}

/** Routes keyed as "METHOD url"; any unrouted request fails the test. */
export function stubFetch(routes: Record<string, Route>): FetchStub {
  const calls: RecordedCall[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const headers = Object.fromEntries(
      Object.entries((init?.headers as Record<string, string>) ?? {}),
    );
    calls.push({
      method,
      url,
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
      headers,
    });
    const route = routes[`${method} ${url}`];
    if (!route) {
      throw new Error(`unexpected request: ${method} ${url}`);
    }
    return new Response(JSON.stringify(route.payload), {
      status: route.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetchFn, calls };
}
