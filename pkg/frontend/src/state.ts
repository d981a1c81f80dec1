// Explorer state and its pure transitions. The controller owns fetching;
// everything here is synchronous and unit-testable in isolation.

import type { BuildInfo, Crumb, SearchHit } from "./api.js";

export interface ExplorerState {
  builds: BuildInfo[];
  activeBuild: string | null;
  rootId: string | null;
  expanded: Set<string>;
  selectedNode: string | null;
  selectedPaper: string | null;
  breadcrumb: Crumb[];
  searchQuery: string;
  searchHits: SearchHit[];
  searchPerformed: boolean;
  error: string | null;
  notices: string[];
}

export function initialState(): ExplorerState {
  return {
    builds: [],
    activeBuild: null,
    rootId: null,
    expanded: new Set(),
    selectedNode: null,
    selectedPaper: null,
    breadcrumb: [],
    searchQuery: "",
    searchHits: [],
    searchPerformed: false,
    error: null,
    notices: [],
  };
}

export function withBuilds(state: ExplorerState, builds: BuildInfo[]): ExplorerState {
  const active = builds.length ? builds[0]!.build : null;
  const root = builds.length ? builds[0]!.root : null;
  return { ...state, builds, activeBuild: active, rootId: root, error: null };
}

/** Different trees share no node ids, so switching resets expansion and
 * selection; the search query survives the switch. */
export function switchBuild(state: ExplorerState, build: string): ExplorerState {
  const info = state.builds.find((b) => b.build === build);
  if (!info) {
    return state;
  }
  return {
    ...state,
    activeBuild: info.build,
    rootId: info.root,
    expanded: new Set(),
    selectedNode: null,
    selectedPaper: null,
    breadcrumb: [],
    searchHits: [],
    searchPerformed: false,
    notices: [],
  };
}

export function expandNode(state: ExplorerState, nodeId: string): ExplorerState {
  const expanded = new Set(state.expanded);
  expanded.add(nodeId);
  return { ...state, expanded };
}

export function collapseNode(state: ExplorerState, nodeId: string): ExplorerState {
  const expanded = new Set(state.expanded);
  expanded.delete(nodeId);
  return { ...state, expanded };
}

/** Selecting a node keeps the invariant that every ancestor of the selected
 * node is expanded (the breadcrumb comes from the service). */
export function selectNode(state: ExplorerState, breadcrumb: Crumb[]): ExplorerState {
  const expanded = new Set(state.expanded);
  for (const crumb of breadcrumb) {
    expanded.add(crumb.id);
  }
  const selected = breadcrumb.length ? breadcrumb[breadcrumb.length - 1]!.id : null;
  return { ...state, expanded, selectedNode: selected, breadcrumb: [...breadcrumb] };
}

export function selectPaper(state: ExplorerState, paperId: string | null): ExplorerState {
  return { ...state, selectedPaper: paperId };
}

export function setSearchQuery(state: ExplorerState, query: string): ExplorerState {
  return { ...state, searchQuery: query };
}

export function withSearchHits(state: ExplorerState, hits: SearchHit[]): ExplorerState {
  return { ...state, searchHits: [...hits], searchPerformed: true };
}

export function clearSearch(state: ExplorerState): ExplorerState {
  return { ...state, searchQuery: "", searchHits: [], searchPerformed: false };
}

export function withError(state: ExplorerState, message: string | null): ExplorerState {
  return { ...state, error: message };
}

export function withNotice(state: ExplorerState, notice: string): ExplorerState {
  return { ...state, notices: [...state.notices, notice] };
}
