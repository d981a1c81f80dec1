// Browser entry point: wires the controller to the DOM renderer.

import { ApiClient } from "./api.js";
import { Explorer } from "./controller.js";
import { render, type Handlers } from "./render.js";

export function mount(container: HTMLElement, api: ApiClient = new ApiClient()): Explorer {
  const explorer = new Explorer(api);
  const handlers: Handlers = {
    onToggle: (nodeId) => void explorer.toggle(nodeId),
    onPaper: (paperId) => void explorer.showPaper(paperId),
    onSearch: (query) => void explorer.runSearch(query),
    onJump: (hit) => void explorer.jumpTo(hit),
    onSwitchBuild: (build) => void explorer.switchBuild(build),
    onRetry: () => void explorer.retry(),
  };
  explorer.onChange(() => render(container, explorer, handlers));
  void explorer.load();
  return explorer;
}

const root = typeof document !== "undefined" ? document.getElementById("app") : null;
if (root) {
  mount(root);
}
