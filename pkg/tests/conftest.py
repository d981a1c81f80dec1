import random

import pytest

from scihier.corpus import Corpus, PaperRecord
from scihier.embedding import HashEmbedder, embed_corpus
from scihier.extraction import ContributionType, extract_corpus
from scihier.gateway import Gateway, MockProvider

_WORDS = ("quantum neural protein ocean galaxy polymer graph causal plasma genome "
          "ribosome laser membrane exoplanet catalyst tensor synapse glacier enzyme "
          "photon qubit antibody magnetar sediment").split()


def make_corpus(n: int, seed: int = 0, *, year: int = 2024, citations: int = 50,
                venue: str = "TestConf", abstract_sentences: int = 3,
                cite_within: int = 0) -> Corpus:
    """Synthetic corpus with distinct titles; optionally cites earlier papers."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        w = rng.sample(_WORDS, 5)
        sentences = " ".join(
            f"We analyse {w[j % 5]} {w[(j + 1) % 5]} systems using {w[(j + 2) % 5]} "
            f"methods and report {w[(j + 3) % 5]} improvements."
            for j in range(abstract_sentences))
        cited = []
        if cite_within and i:
            cited = [f"p{rng.randrange(i):04d}" for _ in range(min(cite_within, i))]
        records.append(PaperRecord(
            id=f"p{i:04d}",
            title=f"{w[0].title()} {w[1]} interactions in {w[2]} systems no {i}",
            abstract=sentences, venue=venue, year=year, citation_count=citations,
            outbound_citations=tuple(cited)))
    return Corpus(records)


def mock_gateway(script=None, judge_policy=None, max_in_flight: int = 4) -> Gateway:
    return Gateway(MockProvider(script=script, judge_policy=judge_policy),
                   max_in_flight=max_in_flight, backoff_base=0.0)


def extracted_vectors(corpus, type_name: str = "problem", dim: int = 16):
    """Mock-extract a corpus and embed one contribution type."""
    gateway = mock_gateway()
    contributions = extract_corpus(corpus, gateway)
    ctype = ContributionType(type_name)
    client = HashEmbedder(dimension=dim)
    vectors = embed_corpus(contributions, ctype, client)
    return contributions, ctype, client, vectors


@pytest.fixture
def small_corpus():
    return make_corpus(60, seed=7)
