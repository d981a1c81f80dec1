"""Pure-LLM baselines over a fixed seed taxonomy of the sciences.

Two variants: parallel batch insertion (each batch edits a private clone of
the seed, clones are merged by code, not by more model calls) and incremental
per-topic editing with four actions (go down, add sibling, make parent,
discard). Creation actions are offered only where the new node would land at
depth three or below, keeping detail out of the top of the tree.
"""
from __future__ import annotations

import json
import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .hierarchy import Hierarchy, HierarchyNode, tree_stats
from .util import load_text_asset, render_template

logger = logging.getLogger(__name__)

MAX_TRAVERSAL_DEPTH = 14
CREATION_MIN_LANDING_DEPTH = 3  # new nodes may appear at depth >= 3 (root = 0)


class FlmsciError(Exception):
    pass


class MergeError(FlmsciError):
    pass


def normalize_topic(name: str) -> str:
    return re.sub(r"\s+", " ", str(name).strip()).casefold()


class TopicTree:
    """Mutable name tree; children keep insertion order, parents are tracked."""

    def __init__(self, name: str):
        self.name = str(name)
        self.children: list["TopicTree"] = []
        self.parent: "TopicTree | None" = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_nested(cls, mapping: Mapping[str, Any]) -> "TopicTree":
        if len(mapping) != 1:
            raise FlmsciError(f"expected a single root, got {len(mapping)} top-level names")
        (root_name, children), = mapping.items()
        root = cls(root_name)
        root._attach_nested(children)
        return root

    def _attach_nested(self, children: Mapping[str, Any]) -> None:
        if not isinstance(children, Mapping):
            raise FlmsciError(f"children of {self.name!r} must be an object")
        for name, grand in children.items():
            self.add_child(name)._attach_nested(grand)

    def to_nested(self) -> dict[str, Any]:
        return {self.name: self._nested_children()}

    def _nested_children(self) -> dict[str, Any]:
        return {c.name: c._nested_children() for c in self.children}

    def clone(self) -> "TopicTree":
        return TopicTree.from_nested(self.to_nested())

    # -- structure ----------------------------------------------------------

    def add_child(self, name: str) -> "TopicTree":
        child = TopicTree(name)
        child.parent = self
        self.children.append(child)
        return child

    def walk(self) -> Iterable["TopicTree"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def depth(self) -> int:
        d, node = 0, self
        while node.parent is not None:
            d, node = d + 1, node.parent
        return d

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    def find(self, name: str) -> "TopicTree | None":
        key = normalize_topic(name)
        for node in self.walk():
            if normalize_topic(node.name) == key:
                return node
        return None

    def path_names(self) -> list[str]:
        names, node = [self.name], self
        while node.parent is not None:
            node = node.parent
            names.append(node.name)
        return list(reversed(names))

    def is_descendant_of(self, other: "TopicTree") -> bool:
        node = self.parent
        while node is not None:
            if node is other:
                return True
            node = node.parent
        return False

    def contains_tree(self, other: "TopicTree") -> bool:
        """Every node of `other` exists here and its ancestry is preserved
        (intermediate nodes may have been inserted between seed levels)."""
        placed: dict[int, TopicTree] = {}
        for node in other.walk():
            mine = self.find(node.name)
            if mine is None:
                return False
            placed[id(node)] = mine
        for node in other.walk():
            for child in node.children:
                if not placed[id(child)].is_descendant_of(placed[id(node)]):
                    return False
        return True

    def to_hierarchy(self, meta: dict[str, Any] | None = None,
                     papers_by_leaf: Mapping[str, list[str]] | None = None) -> Hierarchy:
        """Convert to the shared hierarchy file contract with BFS node ids."""
        ordinals: dict[int, int] = {}
        per_layer: dict[int, int] = {}
        order: list[TopicTree] = []
        queue: deque[TopicTree] = deque([self])
        while queue:
            node = queue.popleft()
            layer = node.depth()
            ordinals[id(node)] = per_layer.get(layer, 0)
            per_layer[layer] = per_layer.get(layer, 0) + 1
            order.append(node)
            queue.extend(node.children)

        def node_id(t: TopicTree) -> str:
            return f"L{t.depth()}-{ordinals[id(t)]}"

        nodes = []
        for t in order:
            papers: list[str] = []
            if papers_by_leaf is not None and not t.children:
                papers = sorted(papers_by_leaf.get(normalize_topic(t.name), []))
            nodes.append(HierarchyNode(
                node_id=node_id(t), layer=t.depth(), cluster_name=t.name,
                summary={}, children=[node_id(c) for c in t.children],
                paper_ids=papers))
        hierarchy = Hierarchy(nodes, meta=dict(meta or {}))
        hierarchy.meta["stats"] = tree_stats(hierarchy)
        return hierarchy


def load_seed() -> TopicTree:
    """The embedded seed taxonomy rooted at Science."""
    return TopicTree.from_nested(json.loads(load_text_asset("assets", "seed_hierarchy.json")))


def load_subnode_descriptions() -> dict[str, str]:
    return json.loads(load_text_asset("assets", "subnode_descriptions.json"))


# ---------------------------------------------------------------------------
# Parallel variant
# ---------------------------------------------------------------------------

@dataclass
class ParallelResult:
    tree: TopicTree
    quarantined: list[str]
    conflicts: list[dict[str, str]]
    calls: int

    def to_hierarchy(self, papers_by_leaf=None) -> Hierarchy:
        return self.tree.to_hierarchy(
            meta={"builder": "flmsci-parallel", "quarantined": sorted(self.quarantined)},
            papers_by_leaf=papers_by_leaf)


def _batch_prompt(tree: TopicTree, batch: Sequence[str]) -> str:
    template = load_text_asset("prompts", "flmsci_parallel.txt")
    return render_template(template,
                           seed_json=json.dumps(tree.to_nested(), ensure_ascii=False),
                           topics_json=json.dumps(list(batch), ensure_ascii=False))


def _parse_clone(text: str, seed: TopicTree) -> TopicTree:
    clone = TopicTree.from_nested(json.loads(text))
    if not clone.contains_tree(seed):
        raise FlmsciError("clone does not preserve the seed taxonomy")
    return clone


def flmsci_parallel(topics: Sequence[str], batch_size: int, gateway,
                    workers: int = 4, seed_tree: TopicTree | None = None) -> ParallelResult:
    """Insert unique topics in batches, one model call per batch, each batch
    editing its own clone of the seed; clones are merged without model calls.

    An unparsable batch is retried once, then its topics land in the
    quarantine list (reported, never silently dropped). Topics a clone failed
    to place are quarantined individually.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    normalized = [normalize_topic(t) for t in topics]
    if len(set(normalized)) != len(normalized):
        raise ValueError("topics must be deduplicated before parallel insertion")
    seed = seed_tree if seed_tree is not None else load_seed()

    batches = [list(topics[i:i + batch_size]) for i in range(0, len(topics), batch_size)]
    calls = 0
    quarantined: list[str] = []
    clones: list[TopicTree] = []
    prompts = [_batch_prompt(seed, batch) for batch in batches]
    responses = gateway.chat_many("flmsci", prompts, max_workers=workers)
    calls += len(prompts)
    for batch, prompt, response in zip(batches, prompts, responses):
        clone = None
        for attempt in range(2):
            try:
                clone = _parse_clone(response, seed)
                break
            except (FlmsciError, json.JSONDecodeError, ValueError):
                if attempt == 0:
                    response = gateway.chat("flmsci", prompt)
                    calls += 1
        if clone is None:
            quarantined.extend(batch)
            continue
        for topic in batch:
            if clone.find(topic) is None:
                quarantined.append(topic)
        clones.append(clone)

    conflicts: list[dict[str, str]] = []
    merged = merge_hierarchies(clones, seed, conflicts=conflicts) if clones else seed.clone()
    return ParallelResult(tree=merged, quarantined=quarantined,
                          conflicts=conflicts, calls=calls)


def merge_hierarchies(clones: Sequence[TopicTree], seed: TopicTree,
                      conflicts: list[dict[str, str]] | None = None) -> TopicTree:
    """Union clones by normalized node name; first occurrence wins placement.

    When a later clone shows an already-merged name under a different parent,
    the existing placement is kept (conflict logged) and the newcomer's
    children are grafted into the winner, so no topic is duplicated or lost.
    Deterministic in clone order.
    """
    for i, clone in enumerate(clones):
        if not clone.contains_tree(seed):
            raise MergeError(f"clone {i} does not contain the seed taxonomy")
    merged = seed.clone()
    index: dict[str, TopicTree] = {normalize_topic(n.name): n for n in merged.walk()}

    for clone_idx, clone in enumerate(clones):
        if normalize_topic(clone.name) != normalize_topic(merged.name):
            raise MergeError(f"clone {clone_idx} root {clone.name!r} differs from seed root")
        queue: deque[tuple[TopicTree, TopicTree]] = deque([(clone, merged)])
        while queue:
            source, target = queue.popleft()
            for child in source.children:
                key = normalize_topic(child.name)
                existing = index.get(key)
                if existing is None:
                    added = target.add_child(child.name)
                    index[key] = added
                    queue.append((child, added))
                elif existing.parent is target or existing is target:
                    queue.append((child, existing))
                else:
                    record = {
                        "topic": child.name,
                        "kept_parent": existing.parent.name if existing.parent else "",
                        "dropped_parent": target.name,
                        "clone": str(clone_idx),
                    }
                    logger.info("merge conflict: %(topic)r kept under %(kept_parent)r, "
                                "dropped placement under %(dropped_parent)r", record)
                    if conflicts is not None:
                        conflicts.append(record)
                    queue.append((child, existing))
    return merged


# ---------------------------------------------------------------------------
# Incremental variant
# ---------------------------------------------------------------------------

_ACTION_GUIDANCE = {
    "go_down": 'FIRST consider "go_down" if ANY existing subnode could reasonably contain the new topic as a specialization',
    "make_parent": 'THEN consider "make_parent" if multiple existing subnodes could be grouped under a new category',
    "add_sibling": 'ONLY use "add_sibling" if the topic is FUNDAMENTALLY distinct from all existing subnodes at this level',
    "discard": '"discard" should be used for low-quality or redundant topics',
}

_ACTION_DESCRIPTIONS = {
    "go_down": '"go_down" - Use this if the topic: {new_topic} is a *more specific* subtype of one of the "subnodes" and belongs *within* it.',
    "add_sibling": '"add_sibling" - Use this if the topic: {new_topic} is on the same level of abstraction as the existing "subnodes". It should be added *alongside* them as a direct child of `{current_node}`.',
    "discard": '"discard" - Use this if the topic: {new_topic} is irrelevant, redundant, or already captured under another topic.',
    "make_parent": '"make_parent" - Use this when the new topic: {new_topic} or any one of the "subnodes" is broader or more abstract than one or more of the subnodes. In that case, make the new topic a direct child of `{current_node}` and move the relevant subnodes under it. Return them in `"child_nodes": [...]`.',
}

_ACTION_EXAMPLES = {
    "go_down": ('"go_down"\n'
                '   - "node": must be the name of one of the existing "subnodes"\n'
                '   - "explanation": an optional text with reasoning\n'
                '   - "child_nodes", "parent_node": not used.'),
    "add_sibling": ('"add_sibling"\n'
                    '   - "node": {new_topic}\n'
                    '   - "parent_node": {current_node}\n'
                    '   - "explanation": optional\n'
                    '   - "child_nodes": not used.'),
    "discard": ('"discard"\n'
                '   - "node": {new_topic}\n'
                '   - "explanation": optional\n'
                '   - "parent_node", "child_nodes": not used'),
    "make_parent": ('"make_parent"\n'
                    '   - "node": {new_topic} or one of the "subnodes" whichever is more appropriate\n'
                    '   - "child_nodes": array of the subnodes that must be moved under the new node\n'
                    '   - "explanation": optional\n'
                    '   - "parent_node": not used'),
}

_ACTION_ORDER = ("go_down", "add_sibling", "discard", "make_parent")


def allowed_actions(depth: int, has_children: bool) -> list[str]:
    """Legal actions at a node of the given depth (root = 0).

    Creation actions are offered only where the created node would land at
    depth >= 3; go_down needs children to descend into.
    """
    actions = []
    if has_children:
        actions.append("go_down")
    if depth + 1 >= CREATION_MIN_LANDING_DEPTH:
        actions.extend(["add_sibling", "make_parent"])
    actions.append("discard")
    return actions


def _incremental_prompt(topic: str, path: list[TopicTree], actions: Sequence[str]) -> str:
    node = path[-1]
    subnodes = [c.name for c in node.children]
    descriptions_block = ""
    if node.parent is None:
        descriptions_block = ("SUBNODE_DESCRIPTIONS = "
                              + json.dumps(load_subnode_descriptions(), indent=2,
                                           ensure_ascii=False) + "\n")
    ordered = [a for a in _ACTION_ORDER if a in actions]
    template = load_text_asset("prompts", "flmsci_incremental.txt")
    prompt = render_template(
        template,
        current_path=json.dumps([n.name for n in path], ensure_ascii=False),
        subnodes=json.dumps(subnodes, ensure_ascii=False),
        descriptions_block=descriptions_block,
        new_topic=topic,
        priority_guidance="\n".join(f"{i}. {_ACTION_GUIDANCE[a]}"
                                    for i, a in enumerate(ordered, start=1)),
        action_list="\n".join(f"{i}) {_ACTION_DESCRIPTIONS[a]}"
                              for i, a in enumerate(ordered, start=1)),
        usage_examples="\n\n".join(f"{i}) {_ACTION_EXAMPLES[a]}"
                                   for i, a in enumerate(ordered, start=1)),
        allowed_literals="|".join(f'"{a}"' for a in ordered),
    )
    return render_template(prompt, new_topic=topic, current_node=node.name)


@dataclass
class InsertionOutcome:
    topic: str
    action: str                 # add_sibling | make_parent | discard | duplicate
    path: list[str] = field(default_factory=list)
    reason: str = ""
    calls: int = 0
    reprompts: int = 0


class _InvalidAction(FlmsciError):
    pass


def _parse_action(text: str, allowed: Sequence[str], subnodes: Sequence[str]) -> dict[str, Any]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _InvalidAction(f"not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict) or "action" not in obj:
        raise _InvalidAction("reply must be a JSON object with an 'action' key")
    action = obj["action"]
    if action not in allowed:
        raise _InvalidAction(f"action {action!r} is not available here (allowed: {list(allowed)})")
    if action == "go_down":
        if obj.get("node") not in subnodes:
            raise _InvalidAction(f"go_down target {obj.get('node')!r} is not a subnode")
    if action == "make_parent":
        kids = obj.get("child_nodes") or []
        if not isinstance(kids, list) or not kids:
            raise _InvalidAction("make_parent needs a non-empty child_nodes list")
        bad = [k for k in kids if k not in subnodes]
        if bad:
            raise _InvalidAction(f"make_parent child_nodes {bad} are not subnodes")
        if obj.get("node") in kids:
            raise _InvalidAction("make_parent node cannot also appear in child_nodes")
    if action in ("add_sibling", "make_parent", "discard") and not obj.get("node"):
        raise _InvalidAction(f"{action} needs a 'node' name")
    return obj


def flmsci_incremental(topic: str, tree: TopicTree, gateway,
                       action_log: list[InsertionOutcome] | None = None,
                       max_depth: int = MAX_TRAVERSAL_DEPTH) -> TopicTree:
    """Place one topic by repeated prompting from the root.

    The tree is edited in place and returned. An action that is illegal for
    the current position triggers one corrective re-prompt, then the topic is
    discarded with a logged reason. A depth guard bounds runaway descents.
    """
    outcome = InsertionOutcome(topic=topic, action="discard")
    if action_log is not None:
        action_log.append(outcome)
    if tree.find(topic) is not None:
        outcome.action = "duplicate"
        outcome.reason = "topic already present"
        return tree

    path = [tree]
    while True:
        node = path[-1]
        depth = len(path) - 1
        if depth >= max_depth:
            outcome.reason = f"max traversal depth {max_depth} reached"
            break
        subnodes = [c.name for c in node.children]
        actions = allowed_actions(depth, bool(subnodes))
        prompt = _incremental_prompt(topic, path, actions)
        parsed = None
        for attempt in range(2):
            reply = gateway.chat("flmsci", prompt if attempt == 0 else
                                 prompt + "\n\nYour previous reply was invalid for this "
                                 "position. Choose one of the listed actions and return "
                                 "valid JSON only.")
            outcome.calls += 1
            try:
                parsed = _parse_action(reply, actions, subnodes)
                break
            except _InvalidAction as exc:
                outcome.reason = str(exc)
                outcome.reprompts += attempt
        if parsed is None:
            outcome.reason = f"discarded after invalid actions: {outcome.reason}"
            break

        kind = parsed["action"]
        if kind == "go_down":
            target = next(c for c in node.children if c.name == parsed["node"])
            path.append(target)
            continue
        if kind == "discard":
            outcome.reason = parsed.get("explanation") or "model discarded the topic"
            break
        # creation actions: landing depth must be >= the configured floor
        assert depth + 1 >= CREATION_MIN_LANDING_DEPTH, \
            f"creation action {kind} would land at depth {depth + 1}"
        if kind == "add_sibling":
            created = node.add_child(topic)
            outcome.action = "add_sibling"
            outcome.path = created.path_names()
            break
        # make_parent: the named node becomes a direct child of the current
        # one; listed subnodes move beneath it with their subtrees intact
        # (grandparent edges preserved). Naming an existing subnode promotes
        # it over its listed siblings instead of duplicating it.
        new_name = parsed["node"]
        parent_node = next((c for c in node.children if c.name == new_name), None)
        if parent_node is None:
            parent_node = node.add_child(new_name)
        for kid_name in parsed["child_nodes"]:
            kid = next(c for c in node.children if c.name == kid_name)
            node.children.remove(kid)
            kid.parent = parent_node
            parent_node.children.append(kid)
        if normalize_topic(new_name) != normalize_topic(topic):
            # the model grouped subnodes under something other than the topic;
            # the topic itself lands beneath the new parent, never lost
            placed = parent_node.add_child(topic)
            outcome.path = placed.path_names()
        else:
            outcome.path = parent_node.path_names()
        outcome.action = "make_parent"
        break
    return tree


def build_incremental(topics: Sequence[str], gateway,
                      seed_tree: TopicTree | None = None,
                      max_depth: int = MAX_TRAVERSAL_DEPTH
                      ) -> tuple[TopicTree, list[InsertionOutcome]]:
    """Insert topics one at a time; each insertion sees all prior ones."""
    tree = seed_tree if seed_tree is not None else load_seed()
    log: list[InsertionOutcome] = []
    for topic in topics:
        flmsci_incremental(topic, tree, gateway, action_log=log, max_depth=max_depth)
    return tree, log


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------

def predicted_calls(method: str, contributions: int | None = None,
                    branching: float | None = None, batch: int | None = None,
                    plan: Sequence[int] | None = None) -> int:
    """Model-call estimates per construction method.

    scichic sums the layer plan when one is given, else a geometric series of
    ceil(C / b^i); the parallel baseline is ceil(C / batch); the incremental
    baseline pays a root-to-leaf traversal per contribution, C * ceil(log_b C).
    """
    if method == "scichic":
        if plan is not None:
            return int(sum(plan))
        _require(contributions, branching)
        levels = max(1, math.ceil(math.log(contributions, branching)))
        return sum(math.ceil(contributions / branching ** i)
                   for i in range(1, levels + 1))
    if method == "par":
        if contributions is None or batch is None or contributions < 0 or batch < 1:
            raise ValueError("par needs contributions >= 0 and batch >= 1")
        return math.ceil(contributions / batch)
    if method == "inc":
        _require(contributions, branching)
        return contributions * max(1, math.ceil(math.log(contributions, branching)))
    raise ValueError(f"unknown method {method!r}")


def _require(contributions: int | None, branching: float | None) -> None:
    if not contributions or contributions < 1 or not branching or branching <= 1:
        raise ValueError("needs contributions >= 1 and branching > 1")


def attach_papers(tree: TopicTree, topics_by_paper: Mapping[str, Sequence[str]],
                  meta: dict[str, Any] | None = None) -> Hierarchy:
    """Attach each paper to every leaf matching one of its topics.

    Topic trees place topics, not papers, so the leaf layer is generally not
    a partition; stats flag that, and unmatched papers are counted in meta.
    """
    papers_by_leaf: dict[str, list[str]] = {}
    leaf_keys = {normalize_topic(n.name) for n in tree.walk() if not n.children}
    unattached = 0
    for paper_id in sorted(topics_by_paper):
        hit = False
        for topic in topics_by_paper[paper_id]:
            key = normalize_topic(topic)
            if key in leaf_keys:
                papers_by_leaf.setdefault(key, []).append(paper_id)
                hit = True
        if not hit:
            unattached += 1
    full_meta = dict(meta or {})
    full_meta["unattached_papers"] = unattached
    return tree.to_hierarchy(meta=full_meta, papers_by_leaf=papers_by_leaf)
