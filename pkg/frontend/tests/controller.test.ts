import { describe, expect, test } from "vitest";

import { ApiClient } from "../src/api";
import { ChatController } from "../src/controller";
import { FakeStorage, ScriptedService } from "./mockservice";

function setup(svc = new ScriptedService(), storage = new FakeStorage()) {
  const controller = new ChatController(new ApiClient("http://svc", svc.fetch), storage);
  return { svc, storage, controller };
}

describe("boot", () => {
  test("fresh start creates a session and stores its id", async () => {
    const { controller, storage } = setup();
    await controller.boot();
    expect(controller.sessionId).toBe("s1");
    expect(storage.getItem("litrag.session")).toBe("s1");
    expect(controller.messages).toEqual([]);
  });

  test("stored id restores the transcript without a new session", async () => {
    const svc = new ScriptedService();
    const storage = new FakeStorage();
    const first = setup(svc, storage).controller;
    await first.boot();
    await first.send("q1");
    const again = setup(svc, storage).controller;
    await again.boot();
    expect(again.sessionId).toBe("s1");
    expect(again.messages.map((m) => m.role)).toEqual(["user", "assistant"]);
    expect(svc.sessions.size).toBe(1);
  });

  test("stale stored id falls back to a new session", async () => {
    const svc = new ScriptedService();
    const storage = new FakeStorage();
    storage.setItem("litrag.session", "gone");
    const { controller } = setup(svc, storage);
    await controller.boot();
    expect(controller.sessionId).toBe("s1");
    expect(storage.getItem("litrag.session")).toBe("s1");
  });

  test("unreachable service flags the connection and disables sending", async () => {
    const svc = new ScriptedService();
    svc.failNext = "network";
    const { controller } = setup(svc);
    await controller.boot();
    expect(controller.connection).toBe("down");
    await controller.send("hello");
    expect(controller.messages).toEqual([]);
    expect(controller.renderApp()).toContain("Cannot reach the service");
  });
});

describe("sending", () => {
  test("optimistic bubbles then the resolved answer with references", async () => {
    const { controller } = setup();
    await controller.boot();
    const done = controller.send("what is graphene?");
    expect(controller.messages.map((m) => [m.role, m.pending])).toEqual([
      ["user", false],
      ["assistant", true],
    ]);
    await done;
    const answer = controller.messages[1];
    expect(answer.text).toBe("answer to: what is graphene?");
    expect(answer.references).toHaveLength(2);
    expect(answer.pending).toBe(false);
  });

  test("blank input is ignored", async () => {
    const { controller } = setup();
    await controller.boot();
    await controller.send("   ");
    expect(controller.messages).toEqual([]);
  });

  test("two rapid sends stay queued: one request in flight, order kept", async () => {
    const svc = new ScriptedService();
    svc.delayMs = 20;
    const { controller } = setup(svc);
    await controller.boot();
    const p1 = controller.send("q1");
    const p2 = controller.send("q2");
    expect(controller.messages).toHaveLength(4); // both pairs visible at once
    await Promise.all([p1, p2]);
    expect(svc.maxInFlight).toBe(1); // the 409 path never has to fire
    expect(controller.messages.map((m) => m.text)).toEqual([
      "q1",
      "answer to: q1",
      "q2",
      "answer to: q2",
    ]);
  });

  test("409 surfaces as 'previous answer still generating'", async () => {
    const svc = new ScriptedService();
    const { controller } = setup(svc);
    await controller.boot();
    svc.failNext = 409;
    await controller.send("q1");
    const bubble = controller.messages[1];
    expect(bubble.error).toBe(true);
    expect(bubble.text).toBe("previous answer still generating");
  });

  test("server failure becomes an error bubble with retry", async () => {
    const svc = new ScriptedService();
    const { controller } = setup(svc);
    await controller.boot();
    svc.failNext = 502;
    await controller.send("q1");
    expect(controller.messages[1].error).toBe(true);
    expect(controller.renderApp()).toContain('data-action="retry"');
    await controller.retry(1); // scripted failure cleared, this one lands
    expect(controller.messages.map((m) => m.text)).toEqual(["q1", "answer to: q1"]);
    expect(controller.messages[1].error).toBe(false);
  });

  test("network failure preserves the unsent text for the input box", async () => {
    const svc = new ScriptedService();
    const { controller } = setup(svc);
    await controller.boot();
    svc.failNext = "network";
    await controller.send("precious words");
    expect(controller.messages[1].error).toBe(true);
    expect(controller.takeLostInput()).toBe("precious words");
    expect(controller.takeLostInput()).toBeNull();
  });
});

describe("settings", () => {
  test("overrides reach the next request body", async () => {
    const svc = new ScriptedService();
    const { controller } = setup(svc);
    await controller.boot();
    expect(controller.applySettings({ k: "2", temperature: "1.5", maxTokens: "50" })).toBe(true);
    await controller.send("q");
    const sent = svc.requests.at(-1)!.body;
    expect(sent.k).toBe(2);
    expect(sent.temperature).toBe(1.5);
    expect(sent.max_tokens).toBe(50);
  });

  test("invalid values are rejected inline and nothing changes", async () => {
    const { controller } = setup();
    await controller.boot();
    expect(controller.applySettings({ k: "0", temperature: "0.3", maxTokens: "700" })).toBe(false);
    expect(controller.settings.k).toBe(3);
    expect(controller.renderApp()).toContain("field-error");
  });
});
