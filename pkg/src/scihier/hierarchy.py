"""Shared tree model and file contract for every builder, the evaluator, and
the serving layer: {"meta": {...}, "nodes": [...]} with stable "L{layer}-{n}"
node ids."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .util import canonical_json


class HierarchyError(Exception):
    pass


@dataclass
class HierarchyNode:
    node_id: str
    layer: int
    cluster_name: str = ""
    summary: dict[str, str] = field(default_factory=dict)
    children: list[str] = field(default_factory=list)
    paper_ids: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "layer": self.layer,
            "cluster_name": self.cluster_name,
            "summary": dict(self.summary),
            "children": list(self.children),
            "paper_ids": list(self.paper_ids),
        }


class Hierarchy:
    """Rooted tree of cluster nodes; papers hang off the deepest clusters."""

    def __init__(self, nodes: Iterable[HierarchyNode], meta: dict[str, Any] | None = None):
        self.meta: dict[str, Any] = dict(meta or {})
        self._nodes: dict[str, HierarchyNode] = {}
        self._order: list[str] = []
        for node in nodes:
            if node.node_id in self._nodes:
                raise HierarchyError(f"duplicate node id {node.node_id!r}")
            self._nodes[node.node_id] = node
            self._order.append(node.node_id)
        if not self._nodes:
            raise HierarchyError("hierarchy must have at least one node")

        self._parent: dict[str, str] = {}
        for node in self:
            for child_id in node.children:
                if child_id not in self._nodes:
                    raise HierarchyError(f"{node.node_id} references missing child {child_id!r}")
                if child_id in self._parent:
                    raise HierarchyError(f"node {child_id!r} has two parents")
                self._parent[child_id] = node.node_id

        roots = [nid for nid in self._order if nid not in self._parent]
        if len(roots) != 1:
            raise HierarchyError(f"expected exactly one root, found {len(roots)}")
        self.root_id = roots[0]
        self._subtree_papers: dict[str, frozenset[str]] = {}

    def __iter__(self):
        return (self._nodes[nid] for nid in self._order)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    @property
    def root(self) -> HierarchyNode:
        return self._nodes[self.root_id]

    def node(self, node_id: str) -> HierarchyNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise HierarchyError(f"unknown node id {node_id!r}") from None

    def children(self, node_id: str) -> list[HierarchyNode]:
        return [self._nodes[c] for c in self.node(node_id).children]

    def parent_id(self, node_id: str) -> str | None:
        self.node(node_id)
        return self._parent.get(node_id)

    def breadcrumb(self, node_id: str) -> list[str]:
        """Node ids from the root down to (and including) node_id."""
        path = [node_id]
        while path[-1] in self._parent:
            path.append(self._parent[path[-1]])
        return list(reversed(path))

    def subtree_paper_ids(self, node_id: str) -> frozenset[str]:
        cached = self._subtree_papers.get(node_id)
        if cached is not None:
            return cached
        node = self.node(node_id)
        papers = set(node.paper_ids)
        for child_id in node.children:
            papers |= self.subtree_paper_ids(child_id)
        result = frozenset(papers)
        self._subtree_papers[node_id] = result
        return result

    def max_layer(self) -> int:
        return max(node.layer for node in self)

    def layer_nodes(self, layer: int) -> list[HierarchyNode]:
        return [node for node in self if node.layer == layer]

    def cluster_leaves(self) -> list[HierarchyNode]:
        """Deepest clusters: nodes with no child clusters."""
        return [node for node in self if not node.children]

    def paper_locations(self) -> dict[str, list[str]]:
        """paper id -> ids of the nodes that hold it directly."""
        locations: dict[str, list[str]] = {}
        for node in self:
            for paper_id in node.paper_ids:
                locations.setdefault(paper_id, []).append(node.node_id)
        return locations

    def top_level_ancestor(self, node_id: str) -> str:
        """The layer-1 node on the path from the root to node_id."""
        crumb = self.breadcrumb(node_id)
        if len(crumb) < 2:
            return node_id
        return crumb[1]

    def validate_partition(self, corpus_ids: Iterable[str]) -> None:
        """Leaf-layer nodes must partition the given corpus exactly."""
        expected = set(corpus_ids)
        seen: set[str] = set()
        for node in self:
            for paper_id in node.paper_ids:
                if paper_id in seen:
                    raise HierarchyError(f"paper {paper_id!r} attached twice")
                seen.add(paper_id)
        if seen != expected:
            missing = sorted(expected - seen)[:5]
            extra = sorted(seen - expected)[:5]
            raise HierarchyError(
                f"leaf papers do not partition the corpus (missing {missing}, extra {extra})")

    def to_json_dict(self) -> dict[str, Any]:
        return {"meta": self.meta,
                "nodes": [self._nodes[nid].to_json_dict() for nid in self._order]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(canonical_json(self.to_json_dict()), encoding="utf-8")

    @classmethod
    def from_json_dict(cls, obj: dict[str, Any]) -> "Hierarchy":
        nodes = [HierarchyNode(
            node_id=n["node_id"], layer=int(n["layer"]),
            cluster_name=n.get("cluster_name", ""), summary=dict(n.get("summary", {})),
            children=list(n.get("children", [])), paper_ids=list(n.get("paper_ids", [])),
        ) for n in obj["nodes"]]
        return cls(nodes, meta=obj.get("meta", {}))

    @classmethod
    def load(cls, path: str | Path) -> "Hierarchy":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def tree_stats(h: Hierarchy) -> dict[str, Any]:
    """Depth (longest root-to-cluster path, papers excluded), branching over
    internal nodes only, node and paper counts, and per-layer widths."""
    internal = [node for node in h if node.children]
    child_counts = [len(node.children) for node in internal]
    widths: dict[int, int] = {}
    for node in h:
        widths[node.layer] = widths.get(node.layer, 0) + 1
    papers = h.paper_locations()
    return {
        "depth": h.max_layer(),
        "avg_branching": (sum(child_counts) / len(child_counts)) if child_counts else 0.0,
        "max_branching": max(child_counts) if child_counts else 0,
        "node_count": len(h),
        "paper_count": len(papers),
        "layer_widths": {str(layer): widths[layer] for layer in sorted(widths)},
        "leaf_partition": all(len(v) == 1 for v in papers.values()),
    }
