"""Read-only HTTP API over built hierarchy files; the explorer UI's backend.

Builds are immutable inputs loaded at startup, so identical requests always
produce identical responses and there are no write paths.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles

from .corpus import Corpus
from .hierarchy import Hierarchy, HierarchyError


def node_view(h: Hierarchy, node_id: str, corpus: Corpus) -> dict[str, Any]:
    """One node plus everything the explorer needs to render it: breadcrumb
    from the root, child previews (largest paper count first), and the
    resident papers for deepest-layer nodes."""
    node = h.node(node_id)
    children = []
    for child in h.children(node_id):
        children.append({
            "id": child.node_id,
            "name": child.cluster_name,
            "paper_count": len(h.subtree_paper_ids(child.node_id)),
        })
    children.sort(key=lambda c: (-c["paper_count"], c["id"]))
    papers = []
    for paper_id in node.paper_ids:
        record = corpus.get(paper_id) if paper_id in corpus else None
        papers.append({
            "id": paper_id,
            "title": record.title if record else paper_id,
            "year": record.year if record else None,
        })
    return {
        "id": node.node_id,
        "name": node.cluster_name,
        "layer": node.layer,
        "summary": dict(node.summary),
        "paper_count": len(h.subtree_paper_ids(node_id)),
        "children": children,
        "papers": papers,
        "breadcrumb": [{"id": nid, "name": h.node(nid).cluster_name}
                       for nid in h.breadcrumb(node_id)],
    }


def create_app(hierarchies: Mapping[str, Hierarchy], corpus: Corpus,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="scihier", version="0.1.0")
    builds = dict(hierarchies)
    # builds are immutable, so paper locations are computed once
    locations_by_build = {bid: h.paper_locations() for bid, h in builds.items()}

    def get_build(build: str) -> Hierarchy:
        try:
            return builds[build]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown build {build!r}")

    @app.get("/hierarchies")
    def list_hierarchies() -> list[dict[str, Any]]:
        out = []
        for build_id in sorted(builds):
            h = builds[build_id]
            out.append({
                "build": build_id,
                "contribution_type": h.meta.get("contribution_type"),
                "builder": h.meta.get("builder"),
                "root": h.root_id,
                "stats": h.meta.get("stats", {}),
            })
        return out

    @app.get("/node/{build}/{node_id}")
    def get_node(build: str, node_id: str) -> dict[str, Any]:
        h = get_build(build)
        if node_id == "root":
            node_id = h.root_id
        try:
            return node_view(h, node_id, corpus)
        except HierarchyError:
            raise HTTPException(status_code=404, detail=f"unknown node {node_id!r}")

    @app.get("/search/{build}")
    def search(build: str, q: str = "") -> dict[str, Any]:
        h = get_build(build)
        needle = q.strip().lower()
        if not needle:
            raise HTTPException(status_code=400, detail="query parameter q must be non-empty")
        locations = locations_by_build[build]
        hits = []
        for record in corpus:
            if needle in record.title.lower() and record.id in locations:
                leaf = locations[record.id][0]
                hits.append({
                    "id": record.id,
                    "title": record.title,
                    "year": record.year,
                    "leaf": leaf,
                    "path": h.breadcrumb(leaf),
                })
        return {"query": q, "hits": hits}

    @app.get("/paper/{paper_id}")
    def get_paper(paper_id: str) -> dict[str, Any]:
        if paper_id not in corpus:
            raise HTTPException(status_code=404, detail=f"unknown paper {paper_id!r}")
        record = corpus.get(paper_id)
        paths = {}
        for build_id in sorted(builds):
            h = builds[build_id]
            locations = locations_by_build[build_id].get(paper_id)
            if locations:
                paths[build_id] = [
                    {"id": nid, "name": h.node(nid).cluster_name}
                    for nid in h.breadcrumb(locations[0])
                ]
        return {
            "id": record.id,
            "title": record.title,
            "abstract": record.abstract,
            "venue": record.venue,
            "year": record.year,
            "citation_count": record.citation_count,
            "paths": paths,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def load_builds(paths: list[str | Path]) -> dict[str, Hierarchy]:
    builds = {}
    for path in paths:
        path = Path(path)
        builds[path.stem] = Hierarchy.load(path)
    return builds
