"""Provider-agnostic chat access: retries, token accounting, a call ledger,
bounded concurrency, and deterministic mock providers for offline runs."""
from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

from .util import content_words, stable_hash, whitespace_tokens


class GatewayError(Exception):
    pass


class TransientProviderError(GatewayError):
    """Retryable failure: connection, timeout, rate limit, server error."""


class ProviderConfigError(GatewayError):
    """Non-retryable failure: bad endpoint, missing API key, auth rejection."""


class RetryExhaustedError(GatewayError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class ChatParams:
    temperature: float = 0.0
    max_tokens: int | None = None


class ChatProvider(Protocol):
    name: str

    def complete(self, role: str, prompt: str, params: ChatParams) -> str: ...


@dataclass
class RoleStats:
    calls: int = 0
    attempts: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    wall_clock: float = 0.0


class CallLedger:
    """Thread-safe per-role accounting of gateway traffic."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._roles: dict[str, RoleStats] = {}

    def record(self, role: str, input_tokens: int, output_tokens: int,
               wall_clock: float, attempts: int) -> None:
        with self._lock:
            stats = self._roles.setdefault(role, RoleStats())
            stats.calls += 1
            stats.attempts += attempts
            stats.input_tokens += input_tokens
            stats.output_tokens += output_tokens
            stats.wall_clock += wall_clock

    def calls(self, role: str | None = None) -> int:
        with self._lock:
            if role is not None:
                stats = self._roles.get(role)
                return stats.calls if stats else 0
            return sum(s.calls for s in self._roles.values())

    def mean_input_tokens(self, role: str) -> float:
        with self._lock:
            stats = self._roles.get(role)
            if not stats or not stats.calls:
                return 0.0
            return stats.input_tokens / stats.calls

    def snapshot(self, include_timing: bool = True) -> dict[str, Any]:
        """Immutable copy. Timing is dropped from persisted artifacts so that
        repeat runs with identical seeds stay byte-identical."""
        with self._lock:
            roles = {}
            for role, s in sorted(self._roles.items()):
                entry = {
                    "calls": s.calls,
                    "attempts": s.attempts,
                    "input_tokens": s.input_tokens,
                    "output_tokens": s.output_tokens,
                }
                if include_timing:
                    entry["wall_clock"] = s.wall_clock
                roles[role] = entry
            total = {
                "calls": sum(s.calls for s in self._roles.values()),
                "input_tokens": sum(s.input_tokens for s in self._roles.values()),
                "output_tokens": sum(s.output_tokens for s in self._roles.values()),
            }
            return {"roles": roles, "total": total, "token_counting": "approximate"}


class Gateway:
    """Chat entry point shared by every pipeline stage.

    Retries transient provider failures with exponential backoff (config
    errors surface immediately), caps in-flight requests, and records every
    call in the ledger under the caller's role.
    """

    def __init__(self, provider: ChatProvider, *, max_retries: int = 3,
                 backoff_base: float = 0.5, max_in_flight: int = 4,
                 token_counter: Callable[[str], int] = whitespace_tokens,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.provider = provider
        self.ledger = CallLedger()
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.max_in_flight = max(1, max_in_flight)
        self.token_counter = token_counter
        self._sleep = sleep
        self._slot = threading.BoundedSemaphore(self.max_in_flight)

    def chat(self, role: str, prompt: str, params: ChatParams | None = None) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        params = params or ChatParams()
        started = time.perf_counter()
        attempts = 0
        while True:
            attempts += 1
            try:
                with self._slot:
                    text = self.provider.complete(role, prompt, params)
                break
            except TransientProviderError as exc:
                if attempts > self.max_retries:
                    raise RetryExhaustedError(
                        f"{role} call failed after {attempts} attempts: {exc}",
                        attempts=attempts,
                    ) from exc
                self._sleep(self.backoff_base * (2 ** (attempts - 1)))
        elapsed = time.perf_counter() - started
        self.ledger.record(role, self.token_counter(prompt),
                           self.token_counter(text), elapsed, attempts)
        return text

    def chat_many(self, role: str, prompts: Sequence[str],
                  params: ChatParams | None = None,
                  max_workers: int | None = None) -> list[str]:
        """Issue prompts with bounded concurrency; results keep prompt order.

        Worker count defaults to the gateway's in-flight cap, which also
        bounds any larger override.
        """
        if not prompts:
            return []
        workers = min(max_workers or self.max_in_flight, self.max_in_flight)
        if workers <= 1 or len(prompts) == 1:
            return [self.chat(role, p, params) for p in prompts]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: self.chat(role, p, params), prompts))

    def ledger_report(self, include_timing: bool = True) -> dict[str, Any]:
        return self.ledger.snapshot(include_timing=include_timing)


# ---------------------------------------------------------------------------
# Mock provider
# ---------------------------------------------------------------------------

_TITLE_RE = re.compile(r"^(?:QUERY )?(?:TARGET )?[Tt]itle: ?(.*)$", re.MULTILINE)
_ABSTRACT_RE = re.compile(
    r"^(?:QUERY )?(?:TARGET )?[Aa]bstract: ?(.*?)(?:\n\s*\n|\Z)", re.MULTILINE | re.DOTALL
)
_OPTION_RE = re.compile(r"^\s*(\d+)\.\s+\[", re.MULTILINE)
_MEMBER_RE = re.compile(r"^\s*\d+\.\s+(.+)$", re.MULTILINE)
_NEW_TOPIC_RE = re.compile(r'^New topic: "(.*)"$', re.MULTILINE)


def load_mock_script(path: str | Path) -> list[dict[str, Any]]:
    """Script file: JSON array of {role?, prompt_contains | prompt_hash, response}."""
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise ProviderConfigError("mock script must be a JSON array")
    for i, entry in enumerate(entries):
        if "response" not in entry:
            raise ProviderConfigError(f"mock script entry {i} has no response")
        if "prompt_contains" not in entry and "prompt_hash" not in entry:
            raise ProviderConfigError(
                f"mock script entry {i} needs prompt_contains or prompt_hash")
    return entries


class MockProvider:
    """Deterministic offline provider.

    Responses come from an optional script (first match on role + prompt
    substring or stable prompt hash wins), else from a per-role fallback:
    extractor and summarizer synthesize schema-valid JSON from the prompt
    content, taxonomy editing gets a plausible deterministic placement, and
    the judge delegates to a pluggable policy (uniform pseudo-random hash of
    the prompt when none is set).
    """

    name = "mock"

    def __init__(self, script: Sequence[dict[str, Any]] | None = None,
                 judge_policy: Callable[[str], str] | None = None) -> None:
        self.script = list(script or [])
        self.judge_policy = judge_policy

    def complete(self, role: str, prompt: str, params: ChatParams) -> str:
        scripted = self._scripted(role, prompt)
        if scripted is not None:
            return scripted
        if role == "extractor":
            return self._extract(prompt)
        if role == "summarizer":
            return self._summarize(prompt)
        if role == "judge":
            return self._judge(prompt)
        if role == "flmsci":
            return self._flmsci(prompt)
        return f"[mock:{role}] {prompt[:120]}"

    def _scripted(self, role: str, prompt: str) -> str | None:
        digest = stable_hash(prompt)
        for entry in self.script:
            if entry.get("role") not in (None, role):
                continue
            contains = entry.get("prompt_contains")
            if contains is not None and contains not in prompt:
                continue
            if "prompt_hash" in entry and entry["prompt_hash"] != digest:
                continue
            response = entry["response"]
            return response if isinstance(response, str) else json.dumps(response)
        return None

    # -- role fallbacks ----------------------------------------------------

    @staticmethod
    def _phrase(words: list[str], start: int, n: int, default: str) -> str:
        picked = words[start:start + n]
        return " ".join(picked) if picked else default

    def _extract(self, prompt: str) -> str:
        title_m = _TITLE_RE.search(prompt)
        abstract_m = _ABSTRACT_RE.search(prompt)
        title = title_m.group(1).strip() if title_m else ""
        abstract = abstract_m.group(1).strip() if abstract_m else ""
        tw = content_words(title)
        aw = content_words(abstract)
        h = int(stable_hash(title + "\n" + abstract), 16)

        def from_abstract(start: int, n: int) -> str:
            return self._phrase(aw, start, n, "") if aw else ""

        topics = []
        for i in range(3):
            chunk = tw[i:i + 2] or aw[2 * i:2 * i + 2]
            if chunk:
                topics.append(" ".join(chunk).title())
        payload = {
            "problem": {
                "overarching_problem_domain": self._phrase(tw, 0, 3, "general science").title(),
                "challenges/difficulties": from_abstract(h % 3, 5),
                "research_question/goal": ("How to " + self._phrase(tw, 1, 4, "characterize the system")) if tw else "",
            },
            "solution": {
                "overarching_solution_domain": self._phrase(tw, 2, 3, "").title(),
                "solution_approach": from_abstract((h // 3) % 4, 6),
                "novelty_of_the_solution": from_abstract((h // 7) % 5, 4),
            },
            "result": {
                "findings/results": from_abstract((h // 11) % 4, 7),
                "potential_impact_of_the_results": from_abstract((h // 13) % 3, 5),
            },
            "topics": topics,
            "rationale": "Fields taken verbatim from the stated title and abstract.",
        }
        return json.dumps(payload)

    def _summarize(self, prompt: str) -> str:
        from .extraction import CONTRIBUTION_DISPLAY_KEYS, CONTRIBUTION_TYPE_LABELS

        type_name = "problem"
        for name, label in CONTRIBUTION_TYPE_LABELS.items():
            if f'"{label}"' in prompt:
                type_name = name
                break
        members = []
        content_at = prompt.find("content to analyze:")
        if content_at >= 0:
            block = prompt[content_at:]
            members = [m.strip() for m in _MEMBER_RE.findall(block)]
        seed_words = content_words(members[0] if members else prompt, limit=4)
        pad = ["research", "cluster", "synthesis", "overview", "group"]
        name_words = [w.title() for w in seed_words]
        while len(name_words) < 5:
            name_words.append(pad[len(name_words) % len(pad)].title())
        h = int(stable_hash(prompt), 16)
        body = {}
        for i, display in enumerate(CONTRIBUTION_DISPLAY_KEYS[type_name]):
            source = members[(h + i) % len(members)] if members else ""
            snippet = " ".join(content_words(source, limit=8)) or "shared theme"
            body[display] = f"Across {max(len(members), 1)} members: {snippet}"
        return json.dumps({
            "Cluster Name": " ".join(name_words),
            CONTRIBUTION_TYPE_LABELS[type_name]: body,
        })

    def _judge(self, prompt: str) -> str:
        if self.judge_policy is not None:
            return self.judge_policy(prompt)
        numbers = [int(n) for n in _OPTION_RE.findall(prompt)]
        if not numbers:
            return "1"
        pick = int(stable_hash(prompt), 16) % len(numbers)
        return str(numbers[pick])

    def _flmsci(self, prompt: str) -> str:
        if _NEW_TOPIC_RE.search(prompt):
            return self._flmsci_incremental(prompt)
        return self._flmsci_parallel(prompt)

    def _flmsci_incremental(self, prompt: str) -> str:
        topic = _NEW_TOPIC_RE.search(prompt).group(1)
        path_m = re.search(r"^Path traced until now: (\[.*\])$", prompt, re.MULTILINE)
        path = json.loads(path_m.group(1)) if path_m else ["Science"]
        sub_m = re.search(r"^subnodes = (\[.*\])$", prompt, re.MULTILINE)
        subnodes = json.loads(sub_m.group(1)) if sub_m else []
        allowed_m = re.search(r'^  "action": (.+),$', prompt, re.MULTILINE)
        allowed = re.findall(r'"(\w+)"', allowed_m.group(1)) if allowed_m else ["discard"]
        h = int(stable_hash(topic + "||" + json.dumps(path)), 16)

        if "add_sibling" in allowed:
            roll = h % 20
            if roll < 9 or not subnodes:
                return json.dumps({"action": "add_sibling", "node": topic,
                                   "parent_node": path[-1]})
            if roll < 11 and "make_parent" in allowed:
                return json.dumps({"action": "make_parent", "node": topic,
                                   "child_nodes": [subnodes[h % len(subnodes)]]})
            if roll == 19:
                return json.dumps({"action": "discard", "node": topic})
            return json.dumps({"action": "go_down",
                               "node": subnodes[h % len(subnodes)]})
        if "go_down" in allowed and subnodes:
            return json.dumps({"action": "go_down",
                               "node": subnodes[h % len(subnodes)]})
        return json.dumps({"action": "discard", "node": topic})

    def _flmsci_parallel(self, prompt: str) -> str:
        tree_m = re.search(r"children\):\n(\{.*?\})\n\nNew topics", prompt, re.DOTALL)
        topics_m = re.search(r"array\):\n(\[.*?\])\n\nInstructions", prompt, re.DOTALL)
        if not tree_m or not topics_m:
            return "{}"
        tree = json.loads(tree_m.group(1))
        topics = json.loads(topics_m.group(1))

        slots: list[dict] = []

        def collect(node: dict, depth: int) -> None:
            for child in node.values():
                if depth >= 1:
                    slots.append(child)
                collect(child, depth + 1)

        collect(tree, 0)
        for topic in topics:
            target = slots[int(stable_hash(topic), 16) % len(slots)] if slots else tree
            target.setdefault(topic, {})
        return json.dumps(tree)


# ---------------------------------------------------------------------------
# HTTP provider (OpenAI-style chat completions); exercised offline only
# through its config validation, never in the test suite.
# ---------------------------------------------------------------------------

class HttpProvider:
    def __init__(self, config: dict[str, Any]) -> None:
        self.name = config.get("provider", "http")
        self.endpoint = config.get("endpoint")
        self.model = config.get("model")
        key_env = config.get("api_key_env", "")
        if not self.endpoint or not self.model:
            raise ProviderConfigError("provider config needs endpoint and model")
        if not key_env:
            raise ProviderConfigError("provider config needs api_key_env (keys never live in config)")
        self.api_key = os.environ.get(key_env, "")
        if not self.api_key:
            raise ProviderConfigError(f"environment variable {key_env} is not set")
        self.timeout = float(config.get("timeout", 60))

    def complete(self, role: str, prompt: str, params: ChatParams) -> str:
        import requests

        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        }
        if params.max_tokens is not None:
            payload["max_tokens"] = params.max_tokens
        try:
            resp = requests.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise ProviderConfigError(f"auth rejected ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"status {resp.status_code}")
        if resp.status_code != 200:
            raise GatewayError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError(f"malformed provider response: {exc}") from exc


def build_provider(config: dict[str, Any],
                   judge_policy: Callable[[str], str] | None = None) -> ChatProvider:
    """Instantiate a provider from a config dict ({"provider": "mock"|...})."""
    kind = config.get("provider", "mock")
    if kind == "mock":
        script = None
        if config.get("script"):
            script = load_mock_script(config["script"])
        return MockProvider(script=script, judge_policy=judge_policy)
    return HttpProvider(config)


def load_gateway_config(path: str | Path) -> dict[str, Any]:
    config = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(config, dict):
        raise ProviderConfigError("gateway config must be a JSON object")
    return config
