import json
import math

import pytest

from scihier.flmsci import (InsertionOutcome, MergeError, allowed_actions,
                            attach_papers, build_incremental, flmsci_incremental,
                            flmsci_parallel, load_seed, merge_hierarchies,
                            normalize_topic, predicted_calls)

from conftest import mock_gateway


class TestSeedHierarchy:
    def test_root_children(self):
        seed = load_seed()
        assert [c.name for c in seed.children] == [
            "Formal Sciences", "Natural Sciences", "Social Sciences"]

    def test_physics_subtopics_include_quantum_mechanics(self):
        physics = load_seed().find("Physics")
        assert physics is not None
        assert "Quantum Mechanics" in [c.name for c in physics.children]

    def test_astronomy_under_physical_science(self):
        seed = load_seed()
        astronomy = seed.find("Astronomy")
        assert astronomy.path_names() == [
            "Science", "Natural Sciences", "Physical Science", "Astronomy"]

    def test_names_unique_along_paths(self):
        seed = load_seed()
        for node in seed.walk():
            path = [normalize_topic(n) for n in node.path_names()]
            assert len(path) == len(set(path))


class TestParallel:
    def test_empty_topics_identity(self):
        gateway = mock_gateway()
        result = flmsci_parallel([], 100, gateway)
        assert result.calls == 0
        assert result.tree.to_nested() == load_seed().to_nested()

    def test_call_count_is_ceil(self):
        topics = [f"Synthetic Topic Number {i}" for i in range(230)]
        gateway = mock_gateway()
        result = flmsci_parallel(topics, 100, gateway)
        assert result.calls == math.ceil(230 / 100) == 3
        assert gateway.ledger.calls("flmsci") == 3

    def test_topic_conservation(self):
        topics = [f"Field Of Study {i}" for i in range(150)]
        result = flmsci_parallel(topics, 50, mock_gateway())
        for topic in topics:
            placed = result.tree.find(topic) is not None
            quarantined = topic in result.quarantined
            assert placed != quarantined or placed  # present or quarantined
            occurrences = sum(1 for n in result.tree.walk()
                              if normalize_topic(n.name) == normalize_topic(topic))
            assert occurrences == (1 if placed else 0)

    def test_unparsable_batch_quarantined_after_retry(self):
        # the second batch (the one containing the marker topic) answers garbage
        topics = [f"Regular Topic {i}" for i in range(10)] + ["MARKER Topic Unique"]
        script = [{"role": "flmsci", "prompt_contains": "MARKER Topic Unique",
                   "response": "** not json **"}]
        gateway = mock_gateway(script)
        result = flmsci_parallel(topics, 10, gateway)
        assert result.quarantined == ["MARKER Topic Unique"]
        for topic in topics[:10]:
            assert result.tree.find(topic) is not None
        # one call per batch plus one retry for the bad batch
        assert gateway.ledger.calls("flmsci") == 3

    def test_duplicate_topics_rejected(self):
        with pytest.raises(ValueError, match="dedup"):
            flmsci_parallel(["Same Topic", "same  topic"], 10, mock_gateway())

    def test_seed_preserved(self):
        topics = [f"Niche Area {i}" for i in range(40)]
        result = flmsci_parallel(topics, 20, mock_gateway())
        assert result.tree.contains_tree(load_seed())


class TestMerge:
    def test_merge_seed_with_seed_is_identity(self):
        seed = load_seed()
        merged = merge_hierarchies([seed.clone(), seed.clone()], seed)
        assert merged.to_nested() == seed.to_nested()

    def test_disjoint_additions_all_present(self):
        seed = load_seed()
        a = seed.clone()
        a.find("Physics").add_child("Quantum Thermodynamics Of Small Systems")
        b = seed.clone()
        b.find("Economics").add_child("Behavioral Market Design Theory")
        merged = merge_hierarchies([a, b], seed)
        assert merged.find("Quantum Thermodynamics Of Small Systems") is not None
        assert merged.find("Behavioral Market Design Theory") is not None

    def test_counting_oracle(self):
        seed = load_seed()
        clones, added = [], 0
        for idx, sizes in enumerate((3, 5, 2)):
            clone = seed.clone()
            host = clone.find(["Physics", "Chemistry", "Economics"][idx])
            for j in range(sizes):
                host.add_child(f"Clone {idx} Addition {j}")
            added += sizes
            clones.append(clone)
        merged = merge_hierarchies(clones, seed)
        assert merged.node_count() == seed.node_count() + added

    def test_conflict_first_parent_wins_and_logged(self):
        seed = load_seed()
        a = seed.clone()
        a.find("Physics").add_child("Contested Interdisciplinary Topic")
        b = seed.clone()
        b.find("Economics").add_child("Contested Interdisciplinary Topic")
        conflicts = []
        merged = merge_hierarchies([a, b], seed, conflicts=conflicts)
        node = merged.find("Contested Interdisciplinary Topic")
        assert node.parent.name == "Physics"
        assert len(conflicts) == 1
        assert conflicts[0]["dropped_parent"] == "Economics"

    def test_conflict_children_graft_into_winner(self):
        seed = load_seed()
        a = seed.clone()
        a.find("Physics").add_child("Contested Topic Area Here")
        b = seed.clone()
        moved = b.find("Economics").add_child("Contested Topic Area Here")
        moved.add_child("Nested Subtopic Of Contested")
        merged = merge_hierarchies([a, b], seed)
        nested = merged.find("Nested Subtopic Of Contested")
        assert nested.parent.name == "Contested Topic Area Here"
        assert nested.parent.parent.name == "Physics"

    def test_clone_missing_seed_rejected(self):
        seed = load_seed()
        broken = seed.clone()
        physics = broken.find("Physics")
        physics.parent.children.remove(physics)
        with pytest.raises(MergeError, match="clone 0"):
            merge_hierarchies([broken], seed)


def _scripted_insert(topic, steps):
    """Run one incremental insertion against a fully scripted trace."""
    script = []
    for path, response in steps:
        script.append({"role": "flmsci",
                       "prompt_contains": f"Path traced until now: {json.dumps(path)}\n",
                       "response": response})
    gateway = mock_gateway(script)
    tree = load_seed()
    log: list[InsertionOutcome] = []
    flmsci_incremental(topic, tree, gateway, action_log=log)
    return tree, log[0], gateway


class TestIncremental:
    def test_scripted_descent_and_add_sibling(self):
        topic = "Stellar Magnetohydrodynamics Simulation Methods"
        tree, outcome, _ = _scripted_insert(topic, [
            (["Science"], {"action": "go_down", "node": "Natural Sciences"}),
            (["Science", "Natural Sciences"],
             {"action": "go_down", "node": "Physical Science"}),
            (["Science", "Natural Sciences", "Physical Science"],
             {"action": "add_sibling", "node": topic, "parent_node": "Physical Science"}),
        ])
        placed = tree.find(topic)
        assert placed.parent.name == "Physical Science"
        assert outcome.action == "add_sibling"
        assert outcome.calls == 3

    def test_discard_at_root_leaves_tree_unchanged(self):
        before = load_seed().node_count()
        tree, outcome, _ = _scripted_insert("Anything At All Topic", [
            (["Science"], {"action": "discard", "node": "Anything At All Topic"}),
        ])
        assert tree.node_count() == before
        assert outcome.action == "discard"

    def test_make_parent_reparents_and_preserves_grandparent(self):
        topic = "Solid Earth And Ocean Observation"
        tree, outcome, _ = _scripted_insert(topic, [
            (["Science"], {"action": "go_down", "node": "Natural Sciences"}),
            (["Science", "Natural Sciences"],
             {"action": "go_down", "node": "Physical Science"}),
            (["Science", "Natural Sciences", "Physical Science"],
             {"action": "make_parent", "node": topic,
              "child_nodes": ["Geology", "Oceanography"]}),
        ])
        new_parent = tree.find(topic)
        assert {c.name for c in new_parent.children} == {"Geology", "Oceanography"}
        assert new_parent.parent.name == "Physical Science"
        assert new_parent.parent.parent.name == "Natural Sciences"
        assert outcome.action == "make_parent"

    def test_creation_blocked_above_layer_three(self):
        # a model that insists on add_sibling at the root gets one corrective
        # re-prompt, then the topic is discarded; the tree never changes
        before = load_seed().node_count()
        tree, outcome, gateway = _scripted_insert("Pushy Topic Insertion", [
            (["Science"], {"action": "add_sibling", "node": "Pushy Topic Insertion",
                           "parent_node": "Science"}),
        ])
        assert tree.node_count() == before
        assert outcome.action == "discard"
        assert "not available" in outcome.reason
        assert gateway.ledger.calls("flmsci") == 2  # initial + corrective

    def test_go_down_withheld_at_leaf(self):
        # descend to a leaf (Logic) and try to go further; go_down is
        # rejected there because the leaf offers no subnodes
        topic = "Modal Logic Of Program Verification"
        tree, outcome, _ = _scripted_insert(topic, [
            (["Science"], {"action": "go_down", "node": "Formal Sciences"}),
            (["Science", "Formal Sciences"], {"action": "go_down", "node": "Logic"}),
            (["Science", "Formal Sciences", "Logic"],
             {"action": "add_sibling", "node": topic, "parent_node": "Logic"}),
        ])
        assert "go_down" not in allowed_actions(depth=2, has_children=False)
        assert tree.find(topic).parent.name == "Logic"

    def test_allowed_actions_matrix(self):
        assert allowed_actions(0, True) == ["go_down", "discard"]
        assert allowed_actions(1, True) == ["go_down", "discard"]
        assert allowed_actions(2, True) == ["go_down", "add_sibling", "make_parent",
                                            "discard"]
        assert allowed_actions(3, False) == ["add_sibling", "make_parent", "discard"]

    def test_duplicate_topic_is_noop(self):
        tree = load_seed()
        gateway = mock_gateway()
        log = []
        flmsci_incremental("Quantum Mechanics", tree, gateway, action_log=log)
        assert log[0].action == "duplicate"
        assert gateway.ledger.calls("flmsci") == 0

    def test_bulk_insertions_preserve_seed_and_legality(self):
        topics = [f"Generated Research Theme {i}" for i in range(300)]
        gateway = mock_gateway()
        tree, log = build_incremental(topics, gateway)
        assert tree.contains_tree(load_seed())
        for outcome in log:
            if outcome.action in ("add_sibling", "make_parent"):
                assert len(outcome.path) - 1 >= 3  # landing depth floor
            assert outcome.calls <= 14 + 1 + outcome.reprompts

    def test_calls_bounded_by_depth(self):
        topics = [f"Depth Bound Check {i}" for i in range(40)]
        gateway = mock_gateway()
        tree, log = build_incremental(topics, gateway)
        depth = max(n.depth() for n in tree.walk())
        for outcome in log:
            assert outcome.calls <= depth + 1 + outcome.reprompts


class TestPredictedCalls:
    def test_scichic_plan_totals(self):
        assert predicted_calls("scichic", plan=(6, 40, 276)) == 322
        assert predicted_calls("scichic", plan=(6, 40, 276, 1250)) == 1572

    def test_parallel_ceil(self):
        assert predicted_calls("par", contributions=22_600, batch=100) == 226

    def test_incremental_order_of_magnitude(self):
        estimate = predicted_calls("inc", contributions=22_600, branching=40.9)
        assert 10_000 <= estimate <= 100_000

    def test_scichic_geometric_fallback(self):
        estimate = predicted_calls("scichic", contributions=1000, branching=10)
        assert estimate == 100 + 10 + 1

    def test_bad_parameters_rejected(self):
        with pytest.raises(ValueError):
            predicted_calls("par", contributions=10, batch=0)
        with pytest.raises(ValueError):
            predicted_calls("inc", contributions=0, branching=5)
        with pytest.raises(ValueError):
            predicted_calls("mystery", contributions=1, branching=2)


class TestAttachPapers:
    def test_papers_attach_to_matching_leaves(self):
        tree = load_seed()
        h = attach_papers(tree, {"pA": ["Logic"], "pB": ["Quantum Mechanics"],
                                 "pC": ["No Such Leaf"]})
        locations = h.paper_locations()
        assert len(locations["pA"]) == 1
        assert h.meta["unattached_papers"] == 1

    def test_multi_leaf_attachment_flagged(self):
        tree = load_seed()
        h = attach_papers(tree, {"p1": ["Logic", "Statistics"]})
        assert len(h.paper_locations()["p1"]) == 2
        assert h.meta["stats"]["leaf_partition"] is False
