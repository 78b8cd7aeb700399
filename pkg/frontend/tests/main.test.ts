import { beforeEach, describe, expect, it } from "vitest";
import { bootstrap } from "../src/main.js";
import { FakeService } from "./fake_service.js";

const PAGE = `
  <form id="operator-form">
    <input id="operator-id" />
    <button type="submit">Start</button>
  </form>
  <main>
    <section id="review"></section>
    <section id="queue"></section>
  </main>
`;

describe("bootstrap", () => {
  beforeEach(() => {
    document.body.innerHTML = PAGE;
  });

  it("asks for the operator id once, then mounts both panels", async () => {
    const service = new FakeService();
    service.addPending("UNSAFE", 0.91);
    const handles = bootstrap(document, "http://svc", service.fetch);

    const form = document.getElementById("operator-form") as HTMLFormElement;
    const input = document.getElementById("operator-id") as HTMLInputElement;
    input.value = "op-42";
    form.dispatchEvent(new Event("submit", { cancelable: true }));

    expect(form.hidden).toBe(true);
    expect(document.querySelector('[data-testid="queue-list"]')).not.toBeNull();
    expect(document.querySelector('[data-testid="claim-button"]')).not.toBeNull();

    await new Promise((r) => setTimeout(r, 0));
    await new Promise((r) => setTimeout(r, 0));
    const sent = service.requests.every(
      (r) => r.headers["x-operator-id"] === "op-42",
    );
    expect(service.requests.length).toBeGreaterThan(0);
    expect(sent).toBe(true);

    handles.queue?.stop();
    handles.station?.detach(document);
  });

  it("ignores submission of a blank operator id", () => {
    bootstrap(document, "http://svc", new FakeService().fetch);
    const form = document.getElementById("operator-form") as HTMLFormElement;
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    expect(form.hidden).toBe(false);
  });
});
