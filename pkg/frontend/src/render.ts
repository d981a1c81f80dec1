// DOM rendering. The whole app re-renders from state on every change; only
// the expanded slice of the tree is materialized, so large builds stay cheap.

import type { SearchHit } from "./api.js";
import type { Explorer, TreeRow } from "./controller.js";

export interface Handlers {
  onToggle(nodeId: string): void;
  onPaper(paperId: string): void;
  onSearch(query: string): void;
  onJump(hit: SearchHit): void;
  onSwitchBuild(build: string): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function render(container: HTMLElement, explorer: Explorer, handlers: Handlers): void {
  const { state } = explorer;
  container.textContent = "";

  if (state.error) {
    const banner = el("div", "banner error-banner");
    banner.append(el("span", "banner-text", state.error));
    const retry = el("button", "retry-button", "Retry");
    retry.addEventListener("click", () => handlers.onRetry());
    banner.append(retry);
    container.append(banner);
  }
  for (const notice of state.notices) {
    container.append(el("div", "banner notice-banner", notice));
  }

  container.append(renderHeader(explorer, handlers));
  container.append(renderSearch(explorer, handlers));

  const main = el("div", "main");
  main.append(renderTree(explorer, handlers));
  main.append(renderDetail(explorer));
  container.append(main);

  if (state.selectedNode) {
    const target = container.querySelector(`[data-node-id="${state.selectedNode}"]`);
    if (target && typeof (target as HTMLElement).scrollIntoView === "function") {
      (target as HTMLElement).scrollIntoView({ block: "nearest" });
    }
  }
}

function renderHeader(explorer: Explorer, handlers: Handlers): HTMLElement {
  const { state } = explorer;
  const header = el("header", "header");
  header.append(el("h1", "title", "Paper hierarchy explorer"));
  const switcher = el("select", "build-switcher");
  for (const build of state.builds) {
    const option = el("option");
    option.value = build.build;
    const facet = build.contribution_type ? ` (${build.contribution_type})` : "";
    option.textContent = `${build.build}${facet}`;
    if (build.build === state.activeBuild) {
      option.selected = true;
    }
    switcher.append(option);
  }
  switcher.addEventListener("change", () => handlers.onSwitchBuild(switcher.value));
  header.append(switcher);
  return header;
}

function renderSearch(explorer: Explorer, handlers: Handlers): HTMLElement {
  const { state } = explorer;
  const section = el("section", "search");
  const input = el("input", "search-input");
  input.type = "search";
  input.placeholder = "Search paper titles";
  input.value = state.searchQuery;
  const button = el("button", "search-button", "Search");
  const submit = () => handlers.onSearch(input.value);
  button.addEventListener("click", submit);
  input.addEventListener("keydown", (event) => {
    if ((event as KeyboardEvent).key === "Enter") {
      submit();
    }
  });
  section.append(input, button);

  if (state.searchPerformed) {
    if (state.searchHits.length === 0) {
      section.append(el("div", "empty-state", `No papers match "${state.searchQuery}"`));
    } else {
      const list = el("ul", "search-hits");
      for (const hit of state.searchHits) {
        const item = el("li", "search-hit");
        const link = el("button", "search-hit-link");
        link.textContent = hit.year !== null ? `${hit.title} (${hit.year})` : hit.title;
        link.dataset["paperId"] = hit.id;
        link.addEventListener("click", () => handlers.onJump(hit));
        item.append(link);
        list.append(item);
      }
      section.append(list);
    }
  }
  return section;
}

function renderTree(explorer: Explorer, handlers: Handlers): HTMLElement {
  const wrap = el("div", "tree-pane");
  const list = el("ul", "tree");
  for (const row of explorer.visibleRows()) {
    list.append(renderRow(row, explorer, handlers));
  }
  wrap.append(list);
  return wrap;
}

function renderRow(row: TreeRow, explorer: Explorer, handlers: Handlers): HTMLElement {
  const item = el("li", "tree-row");
  item.dataset["nodeId"] = row.id;
  item.style.paddingLeft = `${row.depth * 18}px`;
  if (row.id === explorer.state.selectedNode) {
    item.classList.add("selected");
  }

  const toggle = el("button", "toggle", row.expanded ? "▾" : "▸");
  toggle.addEventListener("click", () => handlers.onToggle(row.id));
  item.append(toggle);
  item.append(el("span", "node-name", row.name));
  item.append(el("span", "paper-count", `${row.paperCount} papers`));

  if (row.expanded && row.papers.length) {
    const papers = el("ul", "papers");
    for (const paper of row.papers) {
      const entry = el("li", "paper-row");
      const link = el("button", "paper-link");
      link.textContent = paper.year !== null ? `${paper.title} (${paper.year})` : paper.title;
      link.dataset["paperId"] = paper.id;
      link.addEventListener("click", () => handlers.onPaper(paper.id));
      entry.append(link);
      papers.append(entry);
    }
    item.append(papers);
  }
  return item;
}

function renderDetail(explorer: Explorer): HTMLElement {
  const pane = el("aside", "detail-pane");
  const paper = explorer.paperDetail;
  const { state } = explorer;

  if (paper && state.selectedPaper === paper.id) {
    pane.append(el("h2", "detail-title", paper.title));
    const meta = [paper.venue, paper.year === null ? "" : String(paper.year)]
      .filter(Boolean)
      .join(", ");
    if (meta) {
      pane.append(el("p", "detail-meta", meta));
    }
    pane.append(el("p", "detail-abstract", paper.abstract));
    const activePath = state.activeBuild ? paper.paths[state.activeBuild] : undefined;
    if (activePath) {
      pane.append(
        el("p", "detail-breadcrumb", activePath.map((crumb) => crumb.name).join(" > ")),
      );
    }
    return pane;
  }

  if (state.selectedNode) {
    const view = explorer.node(state.selectedNode);
    if (view) {
      pane.append(el("h2", "detail-title", view.name));
      pane.append(
        el("p", "detail-breadcrumb", view.breadcrumb.map((crumb) => crumb.name).join(" > ")),
      );
      const summary = el("dl", "summary");
      for (const [field, value] of Object.entries(view.summary)) {
        if (!value) {
          continue;
        }
        summary.append(el("dt", "summary-field", field.replaceAll("_", " ")));
        summary.append(el("dd", "summary-value", value));
      }
      pane.append(summary);
      return pane;
    }
  }

  pane.append(el("p", "detail-placeholder", "Select a cluster or paper to see details."));
  return pane;
}
