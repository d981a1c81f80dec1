"""Command-line entry points for every pipeline stage plus the read API."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import evaluation as eval_mod
from . import figures as figures_mod
from .clustering import kmeans
from .embedding import HashEmbedder, VectorCache, embed_corpus, load_vectors, save_vectors
from .extraction import ContributionType, extract_corpus, load_contributions, save_contributions
from .flmsci import attach_papers, build_incremental, flmsci_parallel
from .gateway import Gateway, MockProvider, build_provider, load_gateway_config
from .hierarchy import Hierarchy, tree_stats
from .scichic import BuildConfig, build
from .util import canonical_json


class CliError(click.ClickException):
    exit_code = 1


def _run(fn):
    """Surface domain errors as clean non-zero exits instead of tracebacks."""
    try:
        return fn()
    except click.ClickException:
        raise
    except Exception as exc:
        raise CliError(str(exc)) from exc


@click.group()
@click.option("--seed", default=0, type=int, show_default=True,
              help="Global random seed.")
@click.option("--mock", is_flag=True, default=False,
              help="Use the deterministic offline providers.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Gateway provider config (JSON; API keys come from the environment).")
@click.pass_context
def main(ctx: click.Context, seed: int, mock: bool, config: str | None) -> None:
    """Build, evaluate, and serve concept hierarchies over paper corpora."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, mock=mock, config=config)


def _gateway(ctx_obj: dict, judge_policy=None, max_in_flight: int = 4) -> Gateway:
    if ctx_obj.get("mock"):
        provider = MockProvider(judge_policy=judge_policy)
    elif ctx_obj.get("config"):
        provider = build_provider(load_gateway_config(ctx_obj["config"]),
                                  judge_policy=judge_policy)
    else:
        raise CliError("no provider configured: pass --mock or --config")
    return Gateway(provider, max_in_flight=max_in_flight)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--min-citation-base", default=2, show_default=True)
@click.option("--min-citation-slope", default=3, show_default=True)
@click.option("--reference-year", default=2025, show_default=True)
@click.option("--min-abstract-tokens", default=250, show_default=True)
@click.option("--require-venue/--no-require-venue", default=True, show_default=True)
def ingest(input_path, output_path, min_citation_base, min_citation_slope,
           reference_year, min_abstract_tokens, require_venue):
    """Validate a corpus file and write the quality-filtered subset."""
    def body():
        loaded = corpus_mod.load_corpus(input_path)
        policy = corpus_mod.FilterPolicy(
            min_citation_base=min_citation_base, min_citation_slope=min_citation_slope,
            reference_year=reference_year, min_abstract_tokens=min_abstract_tokens,
            require_venue=require_venue)
        kept = corpus_mod.filter_papers(loaded, policy)
        corpus_mod.save_corpus(kept, output_path)
        click.echo(f"loaded {len(loaded)} records; kept {len(kept)}; "
                   f"rejections {json.dumps(kept.rejections, sort_keys=True)}")
    _run(body)


@main.command()
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--variant", type=click.Choice(["detailed", "simplified"]),
              default="detailed", show_default=True)
@click.option("--max-in-flight", default=4, show_default=True)
@click.pass_context
def extract(ctx, corpus_path, output_path, variant, max_in_flight):
    """Decompose every paper into its contribution schema via the gateway."""
    def body():
        papers = corpus_mod.load_corpus(corpus_path)
        gateway = _gateway(ctx.obj, max_in_flight=max_in_flight)
        contributions = extract_corpus(papers, gateway, variant, max_in_flight)
        save_contributions(contributions, output_path)
        ledger = gateway.ledger_report()
        click.echo(f"extracted {len(contributions)} papers; "
                   f"extractor calls {ledger['roles'].get('extractor', {}).get('calls', 0)}")
    _run(body)


@main.command()
@click.option("--contributions", "contrib_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--type", "type_name", required=True,
              type=click.Choice(["problem", "solution", "result", "topic"]))
@click.option("--output", "output_prefix", required=True,
              help="Prefix for the <prefix>.npy / <prefix>.json vector files.")
@click.option("--dim", default=32, show_default=True,
              help="Embedding dimension of the deterministic hash embedder.")
@click.option("--cache", "cache_dir", type=click.Path(file_okay=False), default=None)
def embed(contrib_path, type_name, output_prefix, dim, cache_dir):
    """Embed each paper's selected contribution dimensions into one vector."""
    def body():
        contributions = load_contributions(contrib_path)
        ctype = ContributionType(type_name)
        client = HashEmbedder(dimension=dim)
        cache = VectorCache(cache_dir) if cache_dir else None
        vectors = embed_corpus(contributions, ctype, client, cache)
        save_vectors(vectors, output_prefix)
        click.echo(f"embedded {len(vectors)} papers "
                   f"({client.dimension}x{len(ctype.dimensions)} dims each)")
    _run(body)


def _parse_layers(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise CliError(f"--layers must be comma-separated integers, got {text!r}")


@main.command(name="build")
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vectors", "vectors_prefix", required=True,
              help="Prefix written by the embed command.")
@click.option("--layers", default=None, help="Layer plan, e.g. 6,40,276.")
@click.option("--type", "type_name", required=True,
              type=click.Choice(["problem", "solution", "result", "topic"]))
@click.option("--mode", type=click.Choice(["hybrid", "topdown", "bottomup"]),
              default="hybrid", show_default=True)
@click.option("--variant", type=click.Choice(["detailed", "simplified"]),
              default="detailed", show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--journal", "journal_path", type=click.Path(dir_okay=False), default=None,
              help="Summary journal; reruns resume from it.")
@click.option("--dim", default=32, show_default=True)
@click.option("--restarts", default=8, show_default=True)
@click.option("--max-in-flight", default=4, show_default=True)
@click.pass_context
def build_cmd(ctx, corpus_path, vectors_prefix, layers, type_name, mode, variant,
              output_path, journal_path, dim, restarts, max_in_flight):
    """Build one contribution-type hierarchy from vectors."""
    if layers is None:
        raise CliError(f"build --mode {mode} requires --layers")
    def body():
        papers = corpus_mod.load_corpus(corpus_path)
        vectors = load_vectors(vectors_prefix)
        config = BuildConfig(mode=mode, contribution_type=ContributionType(type_name),
                             layer_sizes=_parse_layers(layers), seed=ctx.obj["seed"],
                             prompt_variant=variant, restarts=restarts)
        gateway = _gateway(ctx.obj, max_in_flight=max_in_flight)
        hierarchy = build(papers, vectors, config, gateway,
                          embedder=HashEmbedder(dimension=dim), clusterer=kmeans,
                          journal=journal_path)
        hierarchy.meta["ledger"] = gateway.ledger_report(include_timing=False)
        hierarchy.save(output_path)
        stats = hierarchy.meta["stats"]
        summarizer = hierarchy.meta["ledger"]["roles"].get("summarizer", {})
        calls = summarizer.get("calls", 0)
        mean_tokens = summarizer.get("input_tokens", 0) / calls if calls else 0
        click.echo(f"built depth-{stats['depth']} tree over {stats['paper_count']} papers; "
                   f"summarizer calls {calls} (avg input tokens {mean_tokens:.0f}, "
                   f"approximate); layer widths {stats['layer_widths']}")
    _run(body)


@main.command(name="flmsci")
@click.option("--contributions", "contrib_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", type=click.Choice(["par", "inc"]), required=True)
@click.option("--batch-size", default=100, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--limit", default=None, type=int,
              help="Only insert the first N unique topics.")
@click.option("--max-in-flight", default=4, show_default=True)
@click.pass_context
def flmsci_cmd(ctx, contrib_path, variant, batch_size, output_path, limit, max_in_flight):
    """Run a pure-LLM baseline over the unique extracted topics."""
    def body():
        contributions = load_contributions(contrib_path)
        topics_by_paper = {pid: list(c.topics) for pid, c in contributions.items()}
        seen: dict[str, str] = {}
        for pid in sorted(topics_by_paper):
            for topic in topics_by_paper[pid]:
                seen.setdefault(topic.casefold(), topic)
        topics = list(seen.values())
        if limit is not None:
            topics = topics[:limit]
        gateway = _gateway(ctx.obj, max_in_flight=max_in_flight)
        if variant == "par":
            result = flmsci_parallel(topics, batch_size, gateway, workers=max_in_flight)
            hierarchy = attach_papers(result.tree, topics_by_paper,
                                      meta={"builder": "flmsci-parallel",
                                            "quarantined": sorted(result.quarantined)})
            note = f"quarantined {len(result.quarantined)}"
        else:
            tree, log = build_incremental(topics, gateway)
            hierarchy = attach_papers(tree, topics_by_paper,
                                      meta={"builder": "flmsci-incremental"})
            note = f"placed {sum(1 for o in log if o.action != 'discard')}"
        hierarchy.meta["ledger"] = gateway.ledger_report(include_timing=False)
        hierarchy.save(output_path)
        calls = hierarchy.meta["ledger"]["roles"].get("flmsci", {}).get("calls", 0)
        click.echo(f"inserted {len(topics)} topics; model calls {calls}; {note}")
    _run(body)


@main.command(name="eval")
@click.option("--hierarchy", "hierarchy_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--judge", "judge_name",
              type=click.Choice(["oracle", "random", "adversarial", "provider"]),
              default="oracle", show_default=True)
@click.option("--runs", default=5, show_default=True)
@click.option("--queries", "queries_per_run", default=100, show_default=True)
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--figures/--no-figures", "render_figures", default=True, show_default=True)
@click.option("--max-in-flight", default=4, show_default=True)
@click.pass_context
def eval_cmd(ctx, hierarchy_path, corpus_path, judge_name, runs, queries_per_run,
             output_dir, render_figures, max_in_flight):
    """Traversal evaluation; writes report.json, traces.jsonl, and figures."""
    def body():
        hierarchy = Hierarchy.load(hierarchy_path)
        papers = corpus_mod.load_corpus(corpus_path)
        in_tree = set(hierarchy.paper_locations())
        pool_corpus = corpus_mod.Corpus(r for r in papers if r.id in in_tree)
        if not len(pool_corpus):
            raise CliError("no corpus papers appear in the hierarchy")
        pool = corpus_mod.sample_queries(pool_corpus, len(pool_corpus), ctx.obj["seed"])
        per_run = min(queries_per_run, len(pool))

        policy = None
        if judge_name != "provider":
            targets = {r.title: r.id for r in pool_corpus}
            policy = {
                "oracle": eval_mod.OracleJudgePolicy(hierarchy, targets),
                "random": eval_mod.RandomJudgePolicy(seed=ctx.obj["seed"]),
                "adversarial": eval_mod.AdversarialJudgePolicy(hierarchy, targets),
            }[judge_name]
            gateway = Gateway(MockProvider(judge_policy=policy),
                              max_in_flight=max_in_flight)
        else:
            gateway = _gateway(ctx.obj, max_in_flight=max_in_flight)

        traces: list[eval_mod.TraversalTrace] = []
        report = eval_mod.evaluate(hierarchy, pool, gateway, runs=runs,
                                   seed=ctx.obj["seed"], queries_per_run=per_run,
                                   titles=papers.titles(), max_in_flight=max_in_flight,
                                   collect_traces=traces)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_dict = report.to_json_dict()
        coherence = eval_mod.citation_coherence(papers, hierarchy)
        report_dict["citation_coherence"] = coherence
        (out / "report.json").write_text(canonical_json(report_dict), encoding="utf-8")
        eval_mod.save_traces(traces, out / "traces.jsonl")
        if render_figures:
            fig_dir = out / "figures"
            fig_dir.mkdir(exist_ok=True)
            figures_mod.render_accuracy_figure(report_dict, fig_dir / "accuracy_by_run.png")
            if coherence["ratio"] is not None:
                figures_mod.render_citation_figure(coherence,
                                                   fig_dir / "citation_coherence.png")
        click.echo(f"strict {report.strict_mean:.1f} +- {report.strict_std:.1f}; "
                   f"l1 {report.l1_mean:.1f} +- {report.l1_std:.1f}; "
                   f"judge calls {report.judge_calls}; report in {out}")
    _run(body)


@main.command()
@click.option("--hierarchy", "hierarchy_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--figure", "figure_path", type=click.Path(dir_okay=False), default=None,
              help="Also render the layer-width figure to this file.")
def stats(hierarchy_path, figure_path):
    """Print structure statistics for a built hierarchy."""
    def body():
        hierarchy = Hierarchy.load(hierarchy_path)
        computed = tree_stats(hierarchy)
        click.echo(canonical_json(computed).rstrip("\n"))
        if figure_path:
            figures_mod.render_structure_figure(computed, figure_path)
    _run(body)


@main.command()
@click.option("--hierarchy", "hierarchy_paths", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Static explorer assets served under /ui.")
def serve(hierarchy_paths, corpus_path, host, port, ui_dir):
    """Serve the read-only browse API over one or more builds."""
    def body():
        import uvicorn

        from .service import create_app, load_builds

        builds = load_builds(list(hierarchy_paths))
        papers = corpus_mod.load_corpus(corpus_path)
        app = create_app(builds, papers, ui_dir=ui_dir)
        uvicorn.run(app, host=host, port=port)
    _run(body)


if __name__ == "__main__":
    main(sys.argv[1:])
