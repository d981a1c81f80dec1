// Orchestrates state, the API client, and a per-build node cache. Nodes are
// fetched lazily on first expansion; in-flight fetches are deduplicated by
// node id; 404 nodes are pruned from the view with a visible notice.

import { ApiClient, ApiError } from "./api.js";
import type { NodeView, PaperDetail, SearchHit } from "./api.js";
import {
  ExplorerState,
  clearSearch,
  collapseNode,
  expandNode,
  initialState,
  selectNode,
  selectPaper,
  setSearchQuery,
  switchBuild,
  withBuilds,
  withError,
  withNotice,
  withSearchHits,
} from "./state.js";

export interface TreeRow {
  id: string;
  name: string;
  paperCount: number;
  depth: number;
  expanded: boolean;
  papers: { id: string; title: string; year: number | null }[];
}

export class Explorer {
  state: ExplorerState = initialState();
  paperDetail: PaperDetail | null = null;
  private nodes = new Map<string, NodeView>();
  private pruned = new Set<string>();
  private inflight = new Map<string, Promise<NodeView | null>>();
  private listeners: (() => void)[] = [];

  constructor(readonly api: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  node(id: string): NodeView | undefined {
    return this.nodes.get(id);
  }

  async load(): Promise<void> {
    try {
      const builds = await this.api.hierarchies();
      this.state = withBuilds(this.state, builds);
      this.nodes.clear();
      this.pruned.clear();
      const rootId = this.state.rootId;
      if (rootId !== null) {
        this.state = expandNode(this.state, rootId);
        await this.ensureNode(rootId);
      }
    } catch (error) {
      this.state = withError(this.state, describe(error));
    }
    this.emit();
  }

  async retry(): Promise<void> {
    this.state = withError(this.state, null);
    await this.load();
  }

  /** Fetch a node once per build; null means the node was pruned (404). */
  async ensureNode(nodeId: string): Promise<NodeView | null> {
    const cached = this.nodes.get(nodeId);
    if (cached) {
      return cached;
    }
    if (this.pruned.has(nodeId)) {
      return null;
    }
    const pending = this.inflight.get(nodeId);
    if (pending) {
      return pending;
    }
    const build = this.state.activeBuild;
    if (build === null) {
      return null;
    }
    const request = this.api
      .node(build, nodeId)
      .then((view) => {
        this.nodes.set(nodeId, view);
        return view;
      })
      .catch((error: unknown) => {
        if (error instanceof ApiError && error.status === 404) {
          this.pruned.add(nodeId);
          this.state = withNotice(this.state, `node ${nodeId} no longer exists; pruned`);
          return null;
        }
        this.state = withError(this.state, describe(error));
        return null;
      })
      .finally(() => {
        this.inflight.delete(nodeId);
      });
    this.inflight.set(nodeId, request);
    return request;
  }

  /** Expand or collapse; expansion lazily fetches the node body. */
  async toggle(nodeId: string): Promise<void> {
    if (this.state.expanded.has(nodeId)) {
      this.state = collapseNode(this.state, nodeId);
    } else {
      this.state = expandNode(this.state, nodeId);
      const view = await this.ensureNode(nodeId);
      if (view) {
        this.state = selectNode(this.state, view.breadcrumb);
      }
    }
    this.emit();
  }

  async showPaper(paperId: string): Promise<void> {
    try {
      this.paperDetail = await this.api.paper(paperId);
      this.state = selectPaper(this.state, paperId);
    } catch (error) {
      this.state = withError(this.state, describe(error));
    }
    this.emit();
  }

  async runSearch(query: string): Promise<void> {
    this.state = setSearchQuery(this.state, query);
    const build = this.state.activeBuild;
    if (!query.trim() || build === null) {
      this.state = clearSearch(this.state);
      this.emit();
      return;
    }
    try {
      const response = await this.api.search(build, query);
      this.state = withSearchHits(this.state, response.hits);
    } catch (error) {
      this.state = withError(this.state, describe(error));
    }
    this.emit();
  }

  /** Expand every ancestor on the hit's path, select the leaf, and open the
   * paper's detail pane. */
  async jumpTo(hit: SearchHit): Promise<void> {
    for (const nodeId of hit.path) {
      this.state = expandNode(this.state, nodeId);
      await this.ensureNode(nodeId);
    }
    const leaf = this.nodes.get(hit.leaf);
    if (leaf) {
      this.state = selectNode(this.state, leaf.breadcrumb);
    }
    await this.showPaper(hit.id);
  }

  /** Build switch keeps the query, drops expansion, and re-runs the search
   * against the new tree (node ids are not shared between builds). */
  async switchBuild(build: string): Promise<void> {
    if (build === this.state.activeBuild) {
      return;
    }
    this.state = switchBuild(this.state, build);
    this.nodes.clear();
    this.pruned.clear();
    this.paperDetail = null;
    const rootId = this.state.rootId;
    if (rootId !== null) {
      this.state = expandNode(this.state, rootId);
      await this.ensureNode(rootId);
    }
    if (this.state.searchQuery.trim()) {
      await this.runSearch(this.state.searchQuery);
      return; // runSearch emits
    }
    this.emit();
  }

  /** Depth-first projection of the loaded, expanded portion of the tree. */
  visibleRows(): TreeRow[] {
    const rows: TreeRow[] = [];
    const rootId = this.state.rootId;
    if (rootId === null || this.pruned.has(rootId)) {
      return rows;
    }
    const walk = (nodeId: string, depth: number): void => {
      if (this.pruned.has(nodeId)) {
        return;
      }
      const view = this.nodes.get(nodeId);
      const expanded = this.state.expanded.has(nodeId);
      if (!view) {
        return;
      }
      rows.push({
        id: view.id,
        name: view.name,
        paperCount: view.paper_count,
        depth,
        expanded,
        papers: expanded ? view.papers : [],
      });
      if (!expanded) {
        return;
      }
      for (const child of view.children) {
        if (this.pruned.has(child.id)) {
          continue;
        }
        if (this.nodes.has(child.id) && this.state.expanded.has(child.id)) {
          walk(child.id, depth + 1);
        } else {
          // collapsed children render from the preview: name + paper count
          rows.push({
            id: child.id,
            name: child.name,
            paperCount: child.paper_count,
            depth: depth + 1,
            expanded: false,
            papers: [],
          });
        }
      }
    };
    walk(rootId, 0);
    return rows;
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return error.message;
  }
  if (error instanceof Error) {
    return `service unreachable: ${error.message}`;
  }
  return "service unreachable";
}
