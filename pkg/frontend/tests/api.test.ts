import { afterEach, expect, test, vi } from "vitest";

import { ApiError, Client } from "../src/api";

afterEach(() => {
  vi.unstubAllGlobals();
});

test("error responses surface the service detail message", async () => {
  vi.stubGlobal("fetch", async () =>
    new Response(JSON.stringify({ detail: "no such session" }),
                 { status: 404, statusText: "Not Found" }));
  const client = new Client();
  await expect(client.getState("nope")).rejects.toMatchObject({
    status: 404,
    message: "no such session",
  });
  await expect(client.getState("nope")).rejects.toBeInstanceOf(ApiError);
});

test("non-JSON error bodies fall back to the status text", async () => {
  vi.stubGlobal("fetch", async () =>
    new Response("<html>boom</html>", { status: 500,
                                        statusText: "Internal Server Error" }));
  await expect(new Client().getState("x")).rejects.toMatchObject({
    status: 500,
    message: "Internal Server Error",
  });
});

test("mutations carry the idempotency header", async () => {
  const calls: Array<{ url: string; init: RequestInit }> = [];
  vi.stubGlobal("fetch", async (url: string, init: RequestInit) => {
    calls.push({ url, init });
    return new Response(JSON.stringify({ session_id: "s", object_id: 1,
                                         rle: [], empty: true, revision: 2 }),
                        { status: 201 });
  });
  const client = new Client("http://h");
  await client.annotate("s", { type: "click", point: [1, 2] }, "rid-7");
  expect(calls[0].url).toBe("http://h/api/sessions/s/objects");
  const headers = calls[0].init.headers as Record<string, string>;
  expect(headers["X-Request-Id"]).toBe("rid-7");
  expect(JSON.parse(calls[0].init.body as string))
    .toEqual({ type: "click", point: [1, 2] });
});
