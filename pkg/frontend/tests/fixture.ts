// In-memory stand-in for the read API, mirroring its JSON shapes: a 3-layer
// fixture build (6 top-level clusters) plus a small second build for the
// switcher tests.

import type { FetchLike } from "../src/api.js";

interface RawNode {
  id: string;
  name: string;
  layer: number;
  summary: Record<string, string>;
  children: string[];
  papers: { id: string; title: string; year: number }[];
}

export interface FixtureBuild {
  build: string;
  contribution_type: string;
  nodes: Map<string, RawNode>;
  rootId: string;
}

function threeLayerBuild(): FixtureBuild {
  const nodes = new Map<string, RawNode>();
  const root: RawNode = {
    id: "L0-0", name: "root", layer: 0, summary: {}, children: [], papers: [],
  };
  nodes.set(root.id, root);
  let l2 = 0;
  let l3 = 0;
  let paper = 0;
  for (let i = 0; i < 6; i += 1) {
    const top: RawNode = {
      id: `L1-${i}`, name: `area ${i} of science studies`, layer: 1,
      summary: { overarching_problem_domain: `domain ${i}` },
      children: [], papers: [],
    };
    nodes.set(top.id, top);
    root.children.push(top.id);
    for (let j = 0; j < 2; j += 1) {
      const mid: RawNode = {
        id: `L2-${l2}`, name: `subarea ${l2} methods group`, layer: 2,
        summary: { overarching_problem_domain: `subdomain ${l2}` },
        children: [], papers: [],
      };
      l2 += 1;
      nodes.set(mid.id, mid);
      top.children.push(mid.id);
      for (let k = 0; k < 2; k += 1) {
        const leaf: RawNode = {
          id: `L3-${l3}`, name: `leaf cluster ${l3} topics`, layer: 3,
          summary: { overarching_problem_domain: `niche ${l3}` },
          children: [], papers: [],
        };
        l3 += 1;
        nodes.set(leaf.id, leaf);
        mid.children.push(leaf.id);
        for (let p = 0; p < 2; p += 1) {
          leaf.papers.push({
            id: `p${String(paper).padStart(3, "0")}`,
            title: `fixture paper number ${paper}`,
            year: 2020 + (paper % 5),
          });
          paper += 1;
        }
      }
    }
  }
  return { build: "problem-fixture", contribution_type: "problem", nodes, rootId: "L0-0" };
}

function twoLayerBuild(): FixtureBuild {
  const nodes = new Map<string, RawNode>();
  const root: RawNode = {
    id: "L0-0", name: "root", layer: 0, summary: {}, children: [], papers: [],
  };
  nodes.set(root.id, root);
  for (let i = 0; i < 2; i += 1) {
    const leaf: RawNode = {
      id: `L1-${i}`, name: `topic bucket ${i} overview`, layer: 1,
      summary: {}, children: [],
      papers: [
        { id: `p00${i}`, title: `fixture paper number ${i}`, year: 2021 },
      ],
    };
    nodes.set(leaf.id, leaf);
    root.children.push(leaf.id);
  }
  return { build: "topic-fixture", contribution_type: "topic", nodes, rootId: "L0-0" };
}

export class FakeService {
  builds: FixtureBuild[];
  down = false;

  constructor() {
    this.builds = [threeLayerBuild(), twoLayerBuild()];
  }

  primary(): FixtureBuild {
    return this.builds[0]!;
  }

  subtreePaperCount(build: FixtureBuild, nodeId: string): number {
    const node = build.nodes.get(nodeId);
    if (!node) {
      return 0;
    }
    return (
      node.papers.length +
      node.children.reduce((sum, child) => sum + this.subtreePaperCount(build, child), 0)
    );
  }

  removeNode(buildName: string, nodeId: string): void {
    const build = this.builds.find((b) => b.build === buildName)!;
    build.nodes.delete(nodeId);
  }

  private breadcrumb(build: FixtureBuild, nodeId: string): { id: string; name: string }[] {
    const parentOf = new Map<string, string>();
    for (const node of build.nodes.values()) {
      for (const child of node.children) {
        parentOf.set(child, node.id);
      }
    }
    const path: string[] = [nodeId];
    while (parentOf.has(path[0]!)) {
      path.unshift(parentOf.get(path[0]!)!);
    }
    return path.map((id) => ({ id, name: build.nodes.get(id)?.name ?? id }));
  }

  private nodeView(build: FixtureBuild, nodeId: string): unknown {
    const node = build.nodes.get(nodeId === "root" ? build.rootId : nodeId);
    if (!node) {
      return null;
    }
    const children = node.children
      .filter((child) => build.nodes.has(child))
      .map((child) => ({
        id: child,
        name: build.nodes.get(child)!.name,
        paper_count: this.subtreePaperCount(build, child),
      }))
      .sort((a, b) => b.paper_count - a.paper_count || a.id.localeCompare(b.id));
    return {
      id: node.id,
      name: node.name,
      layer: node.layer,
      summary: node.summary,
      paper_count: this.subtreePaperCount(build, node.id),
      children,
      papers: node.papers,
      breadcrumb: this.breadcrumb(build, node.id),
    };
  }

  private searchHits(build: FixtureBuild, query: string): unknown[] {
    const needle = query.trim().toLowerCase();
    const hits: unknown[] = [];
    for (const node of build.nodes.values()) {
      for (const paper of node.papers) {
        if (paper.title.toLowerCase().includes(needle)) {
          hits.push({
            id: paper.id,
            title: paper.title,
            year: paper.year,
            leaf: node.id,
            path: this.breadcrumb(build, node.id).map((crumb) => crumb.id),
          });
        }
      }
    }
    return hits;
  }

  private paperDetail(paperId: string): unknown {
    for (const build of this.builds) {
      for (const node of build.nodes.values()) {
        const paper = node.papers.find((p) => p.id === paperId);
        if (paper) {
          const paths: Record<string, unknown> = {};
          for (const candidate of this.builds) {
            for (const candidateNode of candidate.nodes.values()) {
              if (candidateNode.papers.some((p) => p.id === paperId)) {
                paths[candidate.build] = this.breadcrumb(candidate, candidateNode.id);
              }
            }
          }
          return {
            id: paper.id,
            title: paper.title,
            abstract: `abstract text for ${paper.id}`,
            venue: "FixtureConf",
            year: paper.year,
            citation_count: 3,
            paths,
          };
        }
      }
    }
    return null;
  }

  private route(url: string): { status: number; body: unknown } {
    const [path, queryString = ""] = url.split("?");
    const parts = path!.split("/").filter(Boolean).map(decodeURIComponent);
    if (parts[0] === "hierarchies") {
      return {
        status: 200,
        body: this.builds.map((build) => ({
          build: build.build,
          contribution_type: build.contribution_type,
          builder: "fixture",
          root: build.rootId,
          stats: { depth: 3 },
        })),
      };
    }
    if (parts[0] === "node" && parts.length === 3) {
      const build = this.builds.find((b) => b.build === parts[1]);
      const body = build ? this.nodeView(build, parts[2]!) : null;
      return body ? { status: 200, body } : { status: 404, body: { detail: "unknown" } };
    }
    if (parts[0] === "search" && parts.length === 2) {
      const build = this.builds.find((b) => b.build === parts[1]);
      const query = new URLSearchParams(queryString).get("q") ?? "";
      if (!build || !query.trim()) {
        return { status: 400, body: { detail: "bad request" } };
      }
      return { status: 200, body: { query, hits: this.searchHits(build, query) } };
    }
    if (parts[0] === "paper" && parts.length === 2) {
      const body = this.paperDetail(parts[1]!);
      return body ? { status: 200, body } : { status: 404, body: { detail: "unknown" } };
    }
    return { status: 404, body: { detail: "no route" } };
  }

  fetchFn: FetchLike = async (url) => {
    if (this.down) {
      throw new TypeError("network down");
    }
    const { status, body } = this.route(url);
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    };
  };
}
