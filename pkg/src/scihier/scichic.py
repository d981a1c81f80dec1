"""Hierarchy construction over paper vectors.

Three modes share one machine: `topdown` recursively partitions papers for
every layer, `bottomup` clusters papers at the deepest layer and then groups
summary embeddings upward, and `hybrid` runs top-down for the upper half of
the layer plan and bottom-up (within each cluster of the middle layer) for
the rest. Every cluster at every layer costs exactly one summarizer call, so
a layer plan (k1..kL) costs sum(k_l) calls.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .clustering import ClusteringResult, allocate_subclusters, kmeans
from .corpus import Corpus
from .embedding import EmbedderClient, PaperVector, VectorCache, embed_texts, normalize_block
from .extraction import (CONTRIBUTION_DISPLAY_KEYS, CONTRIBUTION_FIELDS,
                         ContributionType, normalize_key)
from .hierarchy import Hierarchy, HierarchyNode, tree_stats
from .util import derive_seed, load_text_asset, render_template, stable_hash

MIN_NAME_WORDS = 5

_TYPE_PROMPT_BITS: dict[str, dict[str, Any]] = {
    "problem": {
        "specialty": "identifying and analyzing research problems and challenges",
        "focus_noun": "the research problems they address",
        "essence_noun": "problem space",
        "type_adjective": "problem-focused",
        "goals": [
            "Identify the core research problems and challenges being addressed",
            "Determine the overarching problem domain that connects these research efforts",
            "Analyze the specific difficulties, gaps, or limitations that motivate this research",
            "Understand the research questions or goals that drive these investigations",
        ],
        "reminders": [
            "Focus specifically on problems, challenges, and research gaps rather than solutions",
            "Be specific about the technical difficulties and limitations being addressed",
            "Identify both theoretical and practical challenges",
            "Consider interdisciplinary connections in problem formulation",
        ],
        "descriptions": {
            "overarching problem domain": "The broad scientific domain where these problems exist",
            "challenges/difficulties": "Specific technical, theoretical, or practical challenges that these papers address",
            "research question/goal": "The fundamental research questions or objectives that motivate this work",
        },
    },
    "solution": {
        "specialty": "characterizing technical approaches and methods",
        "focus_noun": "the solution approaches they take",
        "essence_noun": "solution space",
        "type_adjective": "solution-focused",
        "goals": [
            "Identify the core technical approaches and methods being used",
            "Determine the overarching solution domain that connects these research efforts",
            "Analyze the shared techniques, designs, or frameworks behind the work",
            "Understand what makes these approaches effective or distinctive",
        ],
        "reminders": [
            "Focus specifically on approaches and techniques rather than the problems they solve",
            "Be specific about the methods, designs, and frameworks used",
            "Identify both the common machinery and the distinctive variations",
            "Consider methodological connections across disciplines",
        ],
        "descriptions": {
            "overarching solution domain": "The broad technical domain the approaches draw on",
            "solution approach": "The shared methods and techniques these papers use",
            "novelty of the solution": "What is distinctive about the approaches in this cluster",
        },
    },
    "result": {
        "specialty": "synthesizing research findings and their impact",
        "focus_noun": "the results they report",
        "essence_noun": "result space",
        "type_adjective": "result-focused",
        "goals": [
            "Identify the key findings and outcomes being reported",
            "Determine the common thread connecting these results",
            "Analyze the evidence and measurements behind the findings",
            "Understand the potential impact of the collected results",
        ],
        "reminders": [
            "Focus specifically on findings and outcomes rather than methods",
            "Be specific about what was measured, observed, or proven",
            "Identify both immediate results and downstream implications",
            "Consider how the findings reinforce or contrast with each other",
        ],
        "descriptions": {
            "findings/results": "The common findings these papers report",
            "potential impact of the results": "Why the collected findings matter",
        },
    },
    "topic": {
        "specialty": "mapping research themes and topics",
        "focus_noun": "the topics they span",
        "essence_noun": "topic space",
        "type_adjective": "topic-focused",
        "goals": [
            "Identify the recurring themes across the items",
            "Determine the overarching topic area that connects them",
            "Analyze how the items specialize or extend the shared theme",
            "Understand the scope of the topic area",
        ],
        "reminders": [
            "Focus on themes rather than specific problems or methods",
            "Keep the abstraction level consistent across the description",
            "Identify the most specific theme that still covers every item",
        ],
        "descriptions": {
            "topics": "The shared themes that connect the items",
        },
    },
}


class BuildError(Exception):
    pass


class SummaryError(BuildError):
    pass


@dataclass(frozen=True)
class ClusterSummary:
    """Name plus a body mirroring the contribution type's schema fields."""

    cluster_name: str
    body: Mapping[str, str]

    def __post_init__(self):
        if len(self.cluster_name.split()) < MIN_NAME_WORDS:
            raise SummaryError(
                f"cluster name must have at least {MIN_NAME_WORDS} words: {self.cluster_name!r}")

    def embedding_text(self) -> str:
        return "\n".join([self.cluster_name, *self.body.values()])

    def one_line(self) -> str:
        flat = ". ".join(v for v in self.body.values() if v)
        return re.sub(r"\s+", " ", f"{self.cluster_name}. {flat}").strip()

    def to_json_dict(self) -> dict[str, str]:
        return dict(self.body)


def summary_schema_json(ctype: ContributionType) -> str:
    bits = _TYPE_PROMPT_BITS[ctype.name]
    body = {display: bits["descriptions"][display]
            for display in CONTRIBUTION_DISPLAY_KEYS[ctype.name]}
    return json.dumps({
        "Cluster Name": ("A clear and specific title focusing on the "
                         f"{bits['essence_noun']} (No less than 5 words)"),
        ctype.label: body,
    }, indent=4, ensure_ascii=False)


def render_summary_prompt(member_payloads: Sequence[str], ctype: ContributionType,
                          prompt_variant: str = "detailed") -> str:
    if not member_payloads:
        raise SummaryError("member_payloads must be non-empty")
    bits = _TYPE_PROMPT_BITS[ctype.name]
    content = "\n".join(
        f"{i}. " + re.sub(r"\s+", " ", payload).strip()
        for i, payload in enumerate(member_payloads, start=1))
    template = load_text_asset("prompts", f"summarize_{prompt_variant}.txt")
    return render_template(
        template,
        specialty=bits["specialty"],
        focus_noun=bits["focus_noun"],
        essence_noun=bits["essence_noun"],
        type_adjective=bits["type_adjective"],
        numbered_goals="\n".join(f"{i}. {g}" for i, g in enumerate(bits["goals"], start=1)),
        reminders="\n".join(f"- {r}" for r in bits["reminders"]),
        content=content,
        schema_json=summary_schema_json(ctype),
    )


def parse_cluster_summary(text: str, ctype: ContributionType) -> ClusterSummary:
    """Schema-validate a summarizer reply; prompt-template key spellings are
    folded onto the canonical field names."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SummaryError(f"summary is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SummaryError("summary must be a JSON object")
    by_canon = {normalize_key(k): v for k, v in obj.items()}
    if set(by_canon) != {"cluster_name", ctype.name}:
        raise SummaryError(
            f"summary keys must be 'Cluster Name' and {ctype.label!r}, got {sorted(obj)}")
    name = by_canon["cluster_name"]
    if not isinstance(name, str):
        raise SummaryError("'Cluster Name' must be a string")
    section = by_canon[ctype.name]
    if not isinstance(section, dict):
        raise SummaryError(f"{ctype.label!r} must be an object")
    body: dict[str, str] = {}
    for key, value in section.items():
        canon = normalize_key(key)
        if canon not in CONTRIBUTION_FIELDS[ctype.name]:
            raise SummaryError(f"unknown key {key!r} in {ctype.label}")
        if not isinstance(value, str):
            raise SummaryError(f"{ctype.label}.{key} must be a string")
        body[canon] = value
    for canon in CONTRIBUTION_FIELDS[ctype.name]:
        if canon not in body:
            raise SummaryError(f"missing key {canon!r} in {ctype.label}")
    return ClusterSummary(cluster_name=name.strip(),
                          body={k: body[k] for k in CONTRIBUTION_FIELDS[ctype.name]})


_RETRY_SUFFIX = ("\n\nYour previous reply was rejected. Return only one valid JSON "
                 "object matching the requested structure exactly, and make the "
                 "cluster name at least 5 words long. No extra text.")


def summarize_cluster(member_payloads: Sequence[str], ctype: ContributionType,
                      layer: int, gateway, prompt_variant: str = "detailed") -> ClusterSummary:
    """One summarizer call with a single repair retry, then failure."""
    prompt = render_summary_prompt(member_payloads, ctype, prompt_variant)
    last: SummaryError | None = None
    for rendered in (prompt, prompt + _RETRY_SUFFIX):
        response = gateway.chat("summarizer", rendered)
        try:
            return parse_cluster_summary(response, ctype)
        except SummaryError as exc:
            last = exc
    raise SummaryError(f"layer {layer}: schema-invalid summary after 2 attempts: {last}")


@dataclass(frozen=True)
class BuildConfig:
    mode: str = "hybrid"  # hybrid | topdown | bottomup
    contribution_type: ContributionType = ContributionType("problem")
    layer_sizes: tuple[int, ...] = (6, 40, 276)
    seed: int = 0
    prompt_variant: str = "detailed"
    restarts: int = 8
    max_iter: int = 100

    def validate(self, corpus_size: int) -> None:
        if self.mode not in ("hybrid", "topdown", "bottomup"):
            raise BuildError(f"unknown mode {self.mode!r}")
        sizes = self.layer_sizes
        if len(sizes) < 1:
            raise BuildError("layer plan must have at least one layer")
        if any(k < 1 for k in sizes):
            raise BuildError("layer sizes must be >= 1")
        if any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise BuildError(f"layer sizes must be strictly increasing: {sizes}")
        if sizes[-1] > corpus_size:
            raise BuildError(
                f"deepest layer wants {sizes[-1]} clusters for {corpus_size} papers")

    def fingerprint(self, paper_ids: Sequence[str]) -> str:
        blob = json.dumps({
            "mode": self.mode, "type": self.contribution_type.name,
            "dimensions": list(self.contribution_type.dimensions),
            "layer_sizes": list(self.layer_sizes), "seed": self.seed,
            "prompt_variant": self.prompt_variant, "papers": list(paper_ids),
        }, sort_keys=True)
        return stable_hash(blob)


class SummaryJournal:
    """Append-only record of accepted summaries, keyed by (layer, ordinal).

    Summarizer calls are the expensive, fallible step; a rerun with the same
    journal replays accepted summaries and only calls the gateway for the
    remainder, which makes interrupted builds resumable.
    """

    def __init__(self, path: str | Path, fingerprint: str):
        self.path = Path(path)
        self.fingerprint = fingerprint
        self._entries: dict[str, str] = {}
        if self.path.exists():
            lines = self.path.read_text(encoding="utf-8").splitlines()
            if lines:
                header = json.loads(lines[0])
                if header.get("fingerprint") != fingerprint:
                    raise BuildError(
                        f"journal {self.path} belongs to a different build configuration")
                for line in lines[1:]:
                    if line.strip():
                        entry = json.loads(line)
                        self._entries[entry["key"]] = entry["response"]
        else:
            self.path.write_text(json.dumps({"fingerprint": fingerprint}) + "\n",
                                 encoding="utf-8")

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def append(self, key: str, response: str) -> None:
        if key in self._entries:
            return
        self._entries[key] = response
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps({"key": key, "response": response}) + "\n")


@dataclass
class _Cluster:
    members: list[int]
    layer: int
    ordinal: int
    children: list["_Cluster"] = field(default_factory=list)
    summary: ClusterSummary | None = None

    @property
    def node_id(self) -> str:
        return f"L{self.layer}-{self.ordinal}"


def build(corpus: Corpus, vectors: Mapping[str, PaperVector], config: BuildConfig,
          gateway, embedder: EmbedderClient | None = None,
          clusterer: Callable[..., ClusteringResult] = kmeans,
          cache: VectorCache | None = None,
          journal: SummaryJournal | str | Path | None = None) -> Hierarchy:
    """Construct one contribution-type hierarchy.

    `vectors` must cover every corpus paper. An embedder is required whenever
    the bottom-up phase spans more than one layer (its upper layers cluster
    the embeddings of the layer below's summaries).
    """
    config.validate(len(corpus))
    ids = sorted(corpus.ids())
    missing = [i for i in ids if i not in vectors]
    if missing:
        raise BuildError(f"{len(missing)} papers have no vector (first: {missing[0]!r})")
    x = np.stack([vectors[i].values for i in ids])
    records = {r.id: r for r in corpus}

    sizes = config.layer_sizes
    depth = len(sizes)
    split = {"hybrid": depth // 2, "topdown": depth, "bottomup": 0}[config.mode]
    if depth - split >= 2 and embedder is None:
        raise BuildError(f"mode {config.mode!r} with {depth} layers needs an embedder "
                         "for its upper bottom-up layers")
    if isinstance(journal, (str, Path)):
        journal = SummaryJournal(journal, config.fingerprint(ids))

    def run_clusterer(rows: list[int], k: int, tag: tuple) -> ClusteringResult:
        return clusterer(x[rows], k, seed=derive_seed(config.seed, *tag),
                         restarts=config.restarts, max_iter=config.max_iter)

    def paper_payloads(cluster: _Cluster) -> list[str]:
        return [f"{records[ids[row]].title}. {records[ids[row]].abstract}"
                for row in cluster.members]

    def summarize_layer(clusters: list[_Cluster], payloads_of) -> None:
        prompts = {}
        for cluster in clusters:
            key = cluster.node_id
            replay = journal.get(key) if journal is not None else None
            if replay is not None:
                cluster.summary = parse_cluster_summary(replay, config.contribution_type)
            else:
                prompts[key] = (cluster, render_summary_prompt(
                    payloads_of(cluster), config.contribution_type, config.prompt_variant))
        keys = sorted(prompts, key=lambda k: prompts[k][0].ordinal)
        responses = gateway.chat_many("summarizer", [prompts[k][1] for k in keys])
        for key, response in zip(keys, responses):
            cluster, prompt = prompts[key]
            try:
                cluster.summary = parse_cluster_summary(response, config.contribution_type)
            except SummaryError:
                response = gateway.chat("summarizer", prompt + _RETRY_SUFFIX)
                try:
                    cluster.summary = parse_cluster_summary(response, config.contribution_type)
                except SummaryError as exc:
                    raise SummaryError(
                        f"cluster {key}: schema-invalid summary after 2 attempts: {exc}") from exc
            if journal is not None:
                journal.append(key, response)

    root = _Cluster(members=list(range(len(ids))), layer=0, ordinal=0)
    layers: dict[int, list[_Cluster]] = {0: [root]}

    # Top-down: recursively partition papers; budgets scale with parent size.
    for layer in range(1, split + 1):
        parents = layers[layer - 1]
        parent_sizes = [len(p.members) for p in parents]
        budgets = allocate_subclusters(parent_sizes, sizes[layer - 1], caps=parent_sizes)
        level: list[_Cluster] = []
        for p_idx, (parent, k_p) in enumerate(zip(parents, budgets)):
            result = run_clusterer(parent.members, k_p, ("td", layer, p_idx))
            for c_idx in range(k_p):
                rows = [parent.members[i]
                        for i in np.flatnonzero(result.assignments == c_idx)]
                cluster = _Cluster(members=rows, layer=layer, ordinal=len(level))
                parent.children.append(cluster)
                level.append(cluster)
        layers[layer] = level
        summarize_layer(level, paper_payloads)

    # Bottom-up within each middle-layer cluster: papers form the deepest
    # layer, then each upper layer clusters the summaries of the layer below.
    if split < depth:
        taus = layers[split]
        tau_sizes = [len(t.members) for t in taus]
        leaf_budgets = allocate_subclusters(tau_sizes, sizes[depth - 1], caps=tau_sizes)
        groups: list[list[_Cluster]] = []
        level = []
        for t_idx, (tau, k_t) in enumerate(zip(taus, leaf_budgets)):
            result = run_clusterer(tau.members, k_t, ("bu", depth, t_idx))
            group = []
            for c_idx in range(k_t):
                rows = [tau.members[i]
                        for i in np.flatnonzero(result.assignments == c_idx)]
                cluster = _Cluster(members=rows, layer=depth, ordinal=len(level))
                level.append(cluster)
                group.append(cluster)
            groups.append(group)
        layers[depth] = level
        summarize_layer(level, paper_payloads)

        for layer in range(depth - 1, split, -1):
            caps = [len(g) for g in groups]
            budgets = allocate_subclusters(tau_sizes, sizes[layer - 1], caps=caps)
            new_groups: list[list[_Cluster]] = []
            level = []
            for t_idx, (k_t, children) in enumerate(zip(budgets, groups)):
                texts = [c.summary.embedding_text() for c in children]
                matrix = np.stack([normalize_block(v)
                                   for v in embed_texts(embedder, texts, cache)])
                result = clusterer(matrix, k_t,
                                   seed=derive_seed(config.seed, "bu", layer, t_idx),
                                   restarts=config.restarts, max_iter=config.max_iter)
                group = []
                for c_idx in range(k_t):
                    kids = [children[i]
                            for i in np.flatnonzero(result.assignments == c_idx)]
                    cluster = _Cluster(
                        members=sorted({row for kid in kids for row in kid.members}),
                        layer=layer, ordinal=len(level))
                    cluster.children = kids
                    level.append(cluster)
                    group.append(cluster)
                new_groups.append(group)
            layers[layer] = level
            summarize_layer(level, lambda c: [kid.summary.one_line() for kid in c.children])
            groups = new_groups

        for tau, group in zip(taus, groups):
            tau.children.extend(group)

    return _assemble(layers, depth, ids, config)


def _assemble(layers: dict[int, list[_Cluster]], depth: int, ids: list[str],
              config: BuildConfig) -> Hierarchy:
    nodes: list[HierarchyNode] = []
    for layer in range(0, depth + 1):
        for cluster in layers[layer]:
            node = HierarchyNode(
                node_id=cluster.node_id,
                layer=layer,
                cluster_name="root" if layer == 0 else cluster.summary.cluster_name,
                summary={} if layer == 0 else cluster.summary.to_json_dict(),
                children=[c.node_id for c in cluster.children],
                paper_ids=sorted(ids[row] for row in cluster.members) if layer == depth else [],
            )
            nodes.append(node)
    meta = {
        "builder": "scichic",
        "mode": config.mode,
        "contribution_type": config.contribution_type.name,
        "dimensions": list(config.contribution_type.dimensions),
        "layer_sizes": list(config.layer_sizes),
        "seed": config.seed,
        "prompt_variant": config.prompt_variant,
        "corpus_size": len(ids),
    }
    hierarchy = Hierarchy(nodes, meta=meta)
    hierarchy.meta["stats"] = tree_stats(hierarchy)
    return hierarchy
