"""Small shared helpers: stable hashing, seeds, token counting, canonical JSON."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from typing import Any

_STOPWORDS = frozenset(
    """a an and are as at be but by for from in into is it its of on or over
    that the their these this to towards under using via we with within""".split()
)


def stable_hash(text: str, length: int = 16) -> str:
    """Process-independent hex digest (builtin hash() is salted per process)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def derive_seed(base: int, *parts: Any) -> int:
    """Derive a child RNG seed from a base seed and a label path."""
    tag = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(f"{base}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def whitespace_tokens(text: str) -> int:
    """Approximate token count; the default, injectable everywhere it is used."""
    return len(text.split())


def content_words(text: str, limit: int | None = None) -> list[str]:
    """Lowercased words with stopwords and short fragments removed, order kept."""
    words = []
    for raw in text.lower().split():
        word = raw.strip(".,;:!?()[]{}\"'`")
        if len(word) >= 3 and word not in _STOPWORDS and word not in words:
            words.append(word)
    return words[:limit] if limit is not None else words


def canonical_json(obj: Any) -> str:
    """Deterministic serialization used for every persisted artifact."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_template(template: str, **values: Any) -> str:
    """Replace {name} placeholders literally.

    Templates contain JSON braces, so str.format would require escaping the
    whole file; plain replacement of known keys avoids that.
    """
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def load_text_asset(package_dir: str, filename: str) -> str:
    ref = resources.files("scihier").joinpath(package_dir).joinpath(filename)
    return ref.read_text(encoding="utf-8")
