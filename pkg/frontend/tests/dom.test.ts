// End-to-end DOM behavior under jsdom: mount the app against the fake
// service and drive it through real click events.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { mount } from "../src/app.js";
import type { Explorer } from "../src/controller.js";
import { FakeService } from "./fixture.js";

const flush = async (rounds = 4): Promise<void> => {
  for (let i = 0; i < rounds; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
};

let service: FakeService;
let api: ApiClient;
let container: HTMLElement;
let explorer: Explorer;

beforeEach(async () => {
  service = new FakeService();
  api = new ApiClient(service.fetchFn);
  document.body.innerHTML = '<div id="app"></div>';
  container = document.getElementById("app")!;
  explorer = mount(container, api);
  await flush();
});

function rows(): HTMLElement[] {
  return [...container.querySelectorAll<HTMLElement>(".tree-row")];
}

describe("explorer DOM", () => {
  it("fresh load shows the root with six collapsed children", () => {
    const children = rows().filter((row) => row.style.paddingLeft === "18px");
    expect(children).toHaveLength(6);
    for (const row of children) {
      expect(row.querySelector(".toggle")!.textContent).toBe("▸");
      expect(row.querySelector(".paper-count")!.textContent).toMatch(/\d+ papers/);
    }
  });

  it("a paper link appears within three toggle clicks", async () => {
    for (let click = 0; click < 3; click += 1) {
      if (container.querySelector(".paper-link")) {
        break;
      }
      const collapsed = rows().find(
        (row) => row.dataset["nodeId"] !== "L0-0" &&
          row.querySelector(".toggle")!.textContent === "▸",
      )!;
      collapsed.querySelector<HTMLButtonElement>(".toggle")!.click();
      await flush();
    }
    expect(container.querySelector(".paper-link")).not.toBeNull();
  });

  it("clicking a paper opens the detail pane with abstract and breadcrumb", async () => {
    for (let click = 0; click < 3 && !container.querySelector(".paper-link"); click += 1) {
      const collapsed = rows().find(
        (row) => row.dataset["nodeId"] !== "L0-0" &&
          row.querySelector(".toggle")!.textContent === "▸",
      )!;
      collapsed.querySelector<HTMLButtonElement>(".toggle")!.click();
      await flush();
    }
    container.querySelector<HTMLButtonElement>(".paper-link")!.click();
    await flush();
    expect(container.querySelector(".detail-abstract")!.textContent).toMatch(/abstract text/);
    expect(container.querySelector(".detail-breadcrumb")!.textContent).toContain("root");
  });

  it("search jump expands the hit's full path and highlights the leaf", async () => {
    const input = container.querySelector<HTMLInputElement>(".search-input")!;
    input.value = "fixture paper number 7";
    container.querySelector<HTMLButtonElement>(".search-button")!.click();
    await flush();
    const hit = container.querySelector<HTMLButtonElement>(".search-hit-link")!;
    hit.click();
    await flush(8);
    const leaf = explorer.state.selectedNode!;
    const leafRow = container.querySelector(`[data-node-id="${leaf}"]`)!;
    expect(leafRow.classList.contains("selected")).toBe(true);
    for (const nodeId of explorer.state.breadcrumb.map((crumb) => crumb.id)) {
      expect(explorer.state.expanded.has(nodeId)).toBe(true);
    }
    expect(leafRow.querySelector(".paper-link")).not.toBeNull();
  });

  it("empty search result shows the explicit empty state", async () => {
    const input = container.querySelector<HTMLInputElement>(".search-input")!;
    input.value = "zzzz-no-such";
    container.querySelector<HTMLButtonElement>(".search-button")!.click();
    await flush();
    expect(container.querySelector(".empty-state")!.textContent).toContain("zzzz-no-such");
  });

  it("unreachable service shows a banner whose retry recovers", async () => {
    service.down = true;
    container.querySelector<HTMLButtonElement>(".search-button")!.click();
    const input = container.querySelector<HTMLInputElement>(".search-input")!;
    input.value = "fixture";
    container.querySelector<HTMLButtonElement>(".search-button")!.click();
    await flush();
    expect(container.querySelector(".error-banner")).not.toBeNull();
    service.down = false;
    container.querySelector<HTMLButtonElement>(".retry-button")!.click();
    await flush();
    expect(container.querySelector(".error-banner")).toBeNull();
  });

  it("build switcher preserves the query text", async () => {
    const input = container.querySelector<HTMLInputElement>(".search-input")!;
    input.value = "fixture paper number 1";
    container.querySelector<HTMLButtonElement>(".search-button")!.click();
    await flush();
    const switcher = container.querySelector<HTMLSelectElement>(".build-switcher")!;
    switcher.value = "topic-fixture";
    switcher.dispatchEvent(new Event("change"));
    await flush(8);
    expect(container.querySelector<HTMLInputElement>(".search-input")!.value)
      .toBe("fixture paper number 1");
    expect(explorer.state.activeBuild).toBe("topic-fixture");
  });

  it("the whole session stays GET-only", () => {
    expect(api.log.length).toBeGreaterThan(0);
    expect(api.log.every((entry) => entry.method === "GET")).toBe(true);
  });
});
