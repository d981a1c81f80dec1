"""scihier: concept hierarchies over scientific paper corpora.

Pipeline: ingest and filter a paper corpus, decompose each paper into
contribution facets, embed the facet texts, cluster them into a multi-level
tree with model-written cluster summaries, then evaluate the tree by letting
a judge navigate it to find target papers. Pure-LLM baseline builders and a
read-only browse API are included; every stage runs offline against
deterministic mock providers.
"""

from .corpus import (Corpus, FilterPolicy, PaperRecord, Query, expand_corpus,
                     filter_papers, load_corpus, sample_queries, save_corpus)
from .clustering import ClusteringResult, allocate_subclusters, kmeans
from .embedding import (EmbedderClient, HashEmbedder, PaperVector, VectorCache,
                        embed_corpus, embed_paper, embed_texts)
from .evaluation import (EvalReport, TraversalTrace, citation_coherence, evaluate,
                         judge_agreement, load_two_layer_hierarchy, traverse)
from .extraction import (ContributionSet, ContributionType, extract_contributions,
                         extract_corpus, select_dimensions, validate_contribution_json)
from .flmsci import (TopicTree, attach_papers, build_incremental, flmsci_incremental,
                     flmsci_parallel, load_seed, merge_hierarchies, predicted_calls)
from .gateway import CallLedger, ChatParams, Gateway, MockProvider
from .hierarchy import Hierarchy, HierarchyNode, tree_stats
from .scichic import BuildConfig, ClusterSummary, SummaryJournal, build, summarize_cluster

__version__ = "0.1.0"

__all__ = [
    "BuildConfig", "CallLedger", "ChatParams", "ClusterSummary", "ClusteringResult",
    "ContributionSet", "ContributionType", "Corpus", "EmbedderClient", "EvalReport",
    "FilterPolicy", "Gateway", "HashEmbedder", "Hierarchy", "HierarchyNode",
    "MockProvider", "PaperRecord", "PaperVector", "Query", "SummaryJournal",
    "TopicTree", "TraversalTrace", "VectorCache", "allocate_subclusters",
    "attach_papers", "build", "build_incremental", "citation_coherence",
    "embed_corpus", "embed_paper", "embed_texts", "evaluate", "expand_corpus",
    "extract_contributions", "extract_corpus", "filter_papers", "flmsci_incremental",
    "flmsci_parallel", "judge_agreement", "kmeans", "load_corpus", "load_seed",
    "load_two_layer_hierarchy", "merge_hierarchies", "predicted_calls",
    "sample_queries", "save_corpus", "select_dimensions", "summarize_cluster",
    "traverse", "tree_stats", "validate_contribution_json",
]
