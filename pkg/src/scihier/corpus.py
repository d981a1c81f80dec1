"""Paper-record I/O: loading, validation, quality filtering, corpus expansion
through a pluggable search client, and deterministic query sampling."""
from __future__ import annotations

import datetime
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol

from .util import content_words, whitespace_tokens


class CorpusError(Exception):
    pass


class ParseError(CorpusError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateIdError(CorpusError):
    def __init__(self, paper_id: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate paper id {paper_id!r}{where}")
        self.paper_id = paper_id


class ExpansionError(CorpusError):
    def __init__(self, message: str, partial: "Corpus"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class PaperRecord:
    """One paper. `outbound_citations` holds ids of papers this one cites."""

    id: str
    title: str
    abstract: str
    venue: str = ""
    year: int = 0
    citation_count: int = 0
    outbound_citations: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise CorpusError("paper id must be non-empty")
        if not self.title:
            raise CorpusError(f"paper {self.id!r}: title must be non-empty")
        if self.citation_count < 0:
            raise CorpusError(f"paper {self.id!r}: negative citation_count")


_RECORD_FIELDS = ("id", "title", "abstract", "venue", "year",
                  "citation_count", "outbound_citations")


def record_from_json(obj: dict, *, max_year: int | None = None) -> PaperRecord:
    if not isinstance(obj, dict):
        raise CorpusError("record must be a JSON object")
    unknown = set(obj) - set(_RECORD_FIELDS)
    if unknown:
        raise CorpusError(f"unknown record fields: {sorted(unknown)}")
    year = int(obj.get("year", 0))
    ceiling = max_year if max_year is not None else datetime.date.today().year
    if year > ceiling:
        raise CorpusError(f"paper {obj.get('id')!r}: year {year} is in the future")
    # Missing citation_count is treated as 0: unverified papers count as uncited.
    return PaperRecord(
        id=str(obj.get("id", "")),
        title=str(obj.get("title", "")),
        abstract=str(obj.get("abstract", "")),
        venue=str(obj.get("venue", "")),
        year=year,
        citation_count=int(obj.get("citation_count") or 0),
        outbound_citations=tuple(obj.get("outbound_citations") or ()),
    )


def record_to_json(record: PaperRecord) -> dict:
    return {
        "id": record.id,
        "title": record.title,
        "abstract": record.abstract,
        "venue": record.venue,
        "year": record.year,
        "citation_count": record.citation_count,
        "outbound_citations": list(record.outbound_citations),
    }


class Corpus:
    """Immutable ordered collection of papers with unique ids."""

    def __init__(self, records: Iterable[PaperRecord]):
        self._records: list[PaperRecord] = []
        self._by_id: dict[str, PaperRecord] = {}
        for record in records:
            if record.id in self._by_id:
                raise DuplicateIdError(record.id)
            self._by_id[record.id] = record
            self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self._records)

    def __contains__(self, paper_id: str) -> bool:
        return paper_id in self._by_id

    def get(self, paper_id: str) -> PaperRecord:
        return self._by_id[paper_id]

    def ids(self) -> list[str]:
        return [r.id for r in self._records]

    def titles(self) -> dict[str, str]:
        return {r.id: r.title for r in self._records}


def load_corpus(path: str | Path, *, max_year: int | None = None) -> Corpus:
    """Read a UTF-8 line-delimited JSON corpus, one record per line."""
    records: list[PaperRecord] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            try:
                record = record_from_json(obj, max_year=max_year)
            except CorpusError as exc:
                raise ParseError(str(exc), lineno) from exc
            if record.id in seen:
                raise DuplicateIdError(record.id, line=lineno)
            seen[record.id] = lineno
            records.append(record)
    return Corpus(records)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in corpus:
            handle.write(json.dumps(record_to_json(record), sort_keys=True,
                                    ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class FilterPolicy:
    """Quality gate: citation floor grows with paper age from a fixed
    reference year (a config value, never the wall clock)."""

    min_citation_base: int = 2
    min_citation_slope: int = 3
    reference_year: int = 2025
    min_abstract_tokens: int = 250
    require_venue: bool = True

    def __post_init__(self):
        for name in ("min_citation_base", "min_citation_slope",
                     "reference_year", "min_abstract_tokens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def citation_threshold(self, year: int) -> int:
        return self.min_citation_base + self.min_citation_slope * (self.reference_year - year)


class FilteredCorpus(Corpus):
    """Filter output; carries per-criterion rejection counts."""

    def __init__(self, records: Iterable[PaperRecord], rejections: dict[str, int]):
        super().__init__(records)
        self.rejections = dict(rejections)


def filter_papers(corpus: Corpus, policy: FilterPolicy | None = None,
                  tokenizer: Callable[[str], int] = whitespace_tokens) -> FilteredCorpus:
    """Keep records passing all three predicates: citations, abstract length, venue.

    The token counter is injectable; the default is a whitespace word count.
    """
    policy = policy or FilterPolicy()
    kept: list[PaperRecord] = []
    rejections = {"citations": 0, "abstract_tokens": 0, "venue": 0}
    for record in corpus:
        ok = True
        if record.citation_count < policy.citation_threshold(record.year):
            rejections["citations"] += 1
            ok = False
        if tokenizer(record.abstract) < policy.min_abstract_tokens:
            rejections["abstract_tokens"] += 1
            ok = False
        if policy.require_venue and not record.venue.strip():
            rejections["venue"] += 1
            ok = False
        if ok:
            kept.append(record)
    return FilteredCorpus(kept, rejections)


class PaperSearchClient(Protocol):
    """Keyword search contract: request = keyword + limit, response = candidates."""

    def search(self, keyword: str, limit: int) -> list[PaperRecord]: ...


def default_keywords(record: PaperRecord, count: int = 5) -> list[str]:
    """Deterministic keyword stand-in: leading content words of the title."""
    return content_words(record.title, limit=count)


def expand_corpus(seed: Corpus, search_client: PaperSearchClient,
                  per_keyword_limit: int = 5, *,
                  policy: FilterPolicy | None = None,
                  tokenizer: Callable[[str], int] = whitespace_tokens,
                  keyword_fn: Callable[[PaperRecord], list[str]] = default_keywords,
                  candidate_limit: int = 50,
                  max_in_flight: int = 4,
                  allow_partial: bool = False) -> Corpus:
    """Grow the corpus by querying each seed paper's keywords.

    Candidates run through the same quality filter as the seed; at most
    `per_keyword_limit` new records are admitted per keyword, in client order.
    Requests may run concurrently; admission order is canonicalized by
    (seed paper id, keyword index, candidate rank).
    """
    policy = policy or FilterPolicy()
    requests: list[tuple[str, int, str]] = []
    for record in sorted(seed, key=lambda r: r.id):
        for k_index, keyword in enumerate(keyword_fn(record)):
            requests.append((record.id, k_index, keyword))

    def fetch(req: tuple[str, int, str]) -> tuple[tuple[str, int, str], list[PaperRecord] | Exception]:
        try:
            return req, search_client.search(req[2], candidate_limit)
        except Exception as exc:  # transport failures surface with keyword context
            return req, exc

    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = dict((req, res) for req, res in pool.map(fetch, requests))

    admitted: list[PaperRecord] = list(seed)
    known = set(seed.ids())
    failures: list[str] = []
    for req in requests:
        seed_id, k_index, keyword = req
        result = results[req]
        if isinstance(result, Exception):
            failures.append(f"keyword {keyword!r} (seed {seed_id}): {result}")
            continue
        passing = filter_papers(Corpus(_dedupe(result)), policy, tokenizer)
        taken = 0
        for candidate in passing:
            if taken >= per_keyword_limit:
                break
            if candidate.id in known:
                continue
            known.add(candidate.id)
            admitted.append(candidate)
            taken += 1
    expanded = Corpus(admitted)
    if failures and not allow_partial:
        raise ExpansionError("; ".join(failures), partial=expanded)
    return expanded


def _dedupe(records: Iterable[PaperRecord]) -> list[PaperRecord]:
    seen: set[str] = set()
    out = []
    for r in records:
        if r.id not in seen:
            seen.add(r.id)
            out.append(r)
    return out


@dataclass(frozen=True)
class Query:
    """Evaluation query: locate `paper_id` given its title and abstract."""

    paper_id: str
    title: str
    abstract: str


def sample_queries(corpus: Corpus, n: int, seed: int) -> list[Query]:
    """Sample n distinct papers as queries; deterministic in the seed."""
    if n > len(corpus):
        raise ValueError(f"cannot sample {n} queries from {len(corpus)} papers")
    ordered = sorted(corpus, key=lambda r: r.id)
    rng = random.Random(seed)
    picked = rng.sample(ordered, n)
    return [Query(paper_id=r.id, title=r.title, abstract=r.abstract) for r in picked]
