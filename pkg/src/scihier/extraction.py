"""Decompose papers (title + abstract) into the fixed contribution schema.

Four contribution types are extracted per paper: the problem addressed, the
solution taken, the result found, and the overarching topics. Each scalar
field may be blank when the abstract does not state it, but never absent.
"""
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .corpus import Corpus, PaperRecord
from .util import load_text_asset, render_template

CONTRIBUTION_FIELDS: dict[str, tuple[str, ...]] = {
    "problem": ("overarching_problem_domain", "challenges_difficulties",
                "research_question_goal"),
    "solution": ("overarching_solution_domain", "solution_approach",
                 "novelty_of_the_solution"),
    "result": ("findings_results", "potential_impact_of_the_results"),
    "topic": ("topics",),
}

CONTRIBUTION_TYPE_LABELS = {
    "problem": "Problem", "solution": "Solution",
    "result": "Result", "topic": "Topic",
}

# Key spellings used in prompt templates and tolerated in model output;
# normalize_key folds them onto the canonical field names above.
CONTRIBUTION_DISPLAY_KEYS: dict[str, tuple[str, ...]] = {
    "problem": ("overarching problem domain", "challenges/difficulties",
                "research question/goal"),
    "solution": ("overarching solution domain", "solution approach",
                 "novelty of the solution"),
    "result": ("findings/results", "potential impact of the results"),
    "topic": ("topics",),
}

PROMPT_VARIANTS = ("detailed", "simplified")


class ExtractionError(Exception):
    pass


class MalformedJSONError(ExtractionError):
    pass


class SchemaError(ExtractionError):
    pass


def normalize_key(key: str) -> str:
    out = re.sub(r"[ /]+", "_", key.strip().lower())
    return re.sub(r"_+", "_", out).strip("_")


def normalize_topics(topics: Iterable[str]) -> tuple[str, ...]:
    """Trim, collapse internal whitespace, and drop case-insensitive duplicates
    (first spelling wins)."""
    seen: set[str] = set()
    out: list[str] = []
    for raw in topics:
        cleaned = re.sub(r"\s+", " ", str(raw).strip())
        if not cleaned:
            continue
        folded = cleaned.casefold()
        if folded not in seen:
            seen.add(folded)
            out.append(cleaned)
    return tuple(out)


def dimension_count() -> int:
    """Schema arity: total number of dimensions across the four types."""
    return sum(len(fields) for fields in CONTRIBUTION_FIELDS.values())


@dataclass(frozen=True)
class ContributionType:
    """A contribution type plus the ordered subset of its fields to embed."""

    name: str
    dimensions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.name not in CONTRIBUTION_FIELDS:
            raise ValueError(f"unknown contribution type {self.name!r}")
        dims = self.dimensions or CONTRIBUTION_FIELDS[self.name]
        object.__setattr__(self, "dimensions", tuple(dims))
        schema = CONTRIBUTION_FIELDS[self.name]
        if not self.dimensions:
            raise ValueError("selected dimensions must be non-empty")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise ValueError("selected dimensions must be distinct")
        for dim in self.dimensions:
            if dim not in schema:
                raise ValueError(f"{dim!r} is not a {self.name} field")

    @property
    def label(self) -> str:
        return CONTRIBUTION_TYPE_LABELS[self.name]


@dataclass(frozen=True)
class ContributionSet:
    """Structured extraction for one paper; blank fields allowed, absent not."""

    problem: Mapping[str, str] = field(default_factory=dict)
    solution: Mapping[str, str] = field(default_factory=dict)
    result: Mapping[str, str] = field(default_factory=dict)
    topics: tuple[str, ...] = ()
    rationale: str = ""

    def __post_init__(self):
        for type_name in ("problem", "solution", "result"):
            given = dict(getattr(self, type_name))
            normalized = {}
            for key, value in given.items():
                canon = normalize_key(key)
                if canon not in CONTRIBUTION_FIELDS[type_name]:
                    raise SchemaError(f"unknown {type_name} field {key!r}")
                normalized[canon] = str(value)
            for canon in CONTRIBUTION_FIELDS[type_name]:
                normalized.setdefault(canon, "")
            object.__setattr__(self, type_name,
                               {k: normalized[k] for k in CONTRIBUTION_FIELDS[type_name]})
        object.__setattr__(self, "topics", normalize_topics(self.topics))
        object.__setattr__(self, "rationale", str(self.rationale))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "problem": dict(self.problem),
            "solution": dict(self.solution),
            "result": dict(self.result),
            "topics": list(self.topics),
            "rationale": self.rationale,
        }


def validate_contribution_json(text: str) -> ContributionSet:
    """Strict schema check on raw model output.

    Unknown keys are rejected by name; key spellings from the prompt templates
    (spaces, slashes) are folded onto the canonical field names first.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJSONError(f"not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("top level must be a JSON object")

    by_canon: dict[str, tuple[str, Any]] = {}
    for key, value in obj.items():
        canon = normalize_key(key)
        if canon in by_canon:
            raise SchemaError(f"duplicate key {key!r}")
        by_canon[canon] = (key, value)

    required = {"problem", "solution", "result", "topics", "rationale"}
    unknown = set(by_canon) - required
    if unknown:
        original = by_canon[sorted(unknown)[0]][0]
        raise SchemaError(f"unknown key {original!r}")
    missing = required - set(by_canon)
    if missing:
        raise SchemaError(f"missing required key {sorted(missing)[0]!r}")

    sections = {}
    for type_name in ("problem", "solution", "result"):
        original, section = by_canon[type_name]
        if not isinstance(section, dict):
            raise SchemaError(f"{original!r} must be an object")
        fields_seen = {}
        for key, value in section.items():
            canon = normalize_key(key)
            if canon not in CONTRIBUTION_FIELDS[type_name]:
                raise SchemaError(f"unknown key {key!r} in {type_name}")
            if canon in fields_seen:
                raise SchemaError(f"duplicate key {key!r} in {type_name}")
            if value is not None and not isinstance(value, str):
                raise SchemaError(f"{type_name}.{key} must be a string")
            fields_seen[canon] = value or ""
        for canon in CONTRIBUTION_FIELDS[type_name]:
            if canon not in fields_seen:
                raise SchemaError(f"missing required key {canon!r} in {type_name}")
        sections[type_name] = fields_seen

    topics = by_canon["topics"][1]
    if not isinstance(topics, list) or any(not isinstance(t, str) for t in topics):
        raise SchemaError("'topics' must be a list of strings")
    rationale = by_canon["rationale"][1]
    if rationale is not None and not isinstance(rationale, str):
        raise SchemaError("'rationale' must be a string")

    return ContributionSet(problem=sections["problem"], solution=sections["solution"],
                           result=sections["result"], topics=tuple(topics),
                           rationale=rationale or "")


def serialize_contributions(cset: ContributionSet) -> str:
    return json.dumps(cset.to_json_dict(), sort_keys=True, ensure_ascii=False)


def select_dimensions(cset: ContributionSet, ctype: ContributionType) -> list[str]:
    """The C' field texts in declared order; blanks stay as empty strings."""
    texts = []
    for dim in ctype.dimensions:
        if dim == "topics":
            texts.append("; ".join(cset.topics))
        else:
            texts.append(getattr(cset, ctype.name)[dim])
    return texts


_RETRY_SUFFIX = ("\n\nYour previous reply did not match the required structure. "
                 "Return only valid JSON matching the structure exactly. No extra text.")


def extraction_prompt(paper: PaperRecord, prompt_variant: str = "detailed") -> str:
    if prompt_variant not in PROMPT_VARIANTS:
        raise ValueError(f"unknown prompt variant {prompt_variant!r}")
    template = load_text_asset("prompts", f"extract_{prompt_variant}.txt")
    return render_template(template, title=paper.title, abstract=paper.abstract)


def extract_contributions(paper: PaperRecord, gateway,
                          prompt_variant: str = "detailed") -> ContributionSet:
    """One extraction call with a single JSON-repair retry, then failure."""
    prompt = extraction_prompt(paper, prompt_variant)
    last_error: ExtractionError | None = None
    for attempt, rendered in enumerate((prompt, prompt + _RETRY_SUFFIX), start=1):
        response = gateway.chat("extractor", rendered)
        try:
            return validate_contribution_json(response)
        except ExtractionError as exc:
            last_error = exc
    raise ExtractionError(
        f"paper {paper.id!r}: schema-invalid extractor output after 2 attempts: {last_error}")


def extract_corpus(corpus: Corpus, gateway, prompt_variant: str = "detailed",
                   max_in_flight: int = 4) -> dict[str, ContributionSet]:
    """Batch driver; gateway concurrency stays bounded, output is id-ordered."""
    records = sorted(corpus, key=lambda r: r.id)
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        extracted = list(pool.map(
            lambda r: extract_contributions(r, gateway, prompt_variant), records))
    return {r.id: c for r, c in zip(records, extracted)}


def save_contributions(by_id: Mapping[str, ContributionSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for paper_id in sorted(by_id):
            line = {"paper_id": paper_id, "contributions": by_id[paper_id].to_json_dict()}
            handle.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")


def load_contributions(path: str | Path) -> dict[str, ContributionSet]:
    out: dict[str, ContributionSet] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            body = obj["contributions"]
            out[obj["paper_id"]] = ContributionSet(
                problem=body["problem"], solution=body["solution"],
                result=body["result"], topics=tuple(body["topics"]),
                rationale=body["rationale"])
    return out
