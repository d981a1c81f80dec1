"""Contribution texts to fixed-dimension vectors: pluggable embedder clients,
a content-addressed persistent cache, and per-paper block concatenation."""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .extraction import ContributionSet, ContributionType, select_dimensions

_NORM_EPS = 1e-12


class EmbeddingError(Exception):
    pass


class DimensionMismatchError(EmbeddingError):
    pass


class EmbedderClient(Protocol):
    name: str
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HashEmbedder:
    """Deterministic offline embedder: the text seeds an RNG whose draws form
    the vector, so equal texts map to equal vectors across processes."""

    def __init__(self, dimension: int = 32, name: str = "hash-mock"):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.name = name

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            digest = hashlib.sha256(
                f"{self.name}|{self.dimension}|{text}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            vec = rng.standard_normal(self.dimension)
            norm = float(np.linalg.norm(vec))
            out.append(vec / norm if norm > _NORM_EPS else vec)
        return out


def cache_key(client_name: str, dimension: int, text: str) -> str:
    """Provider swaps must not poison the cache, so the key covers the
    client identity and dimension tag as well as the exact text."""
    return hashlib.sha256(f"{client_name}|{dimension}|{text}".encode("utf-8")).hexdigest()


class VectorCache:
    """Vector store, optionally persisted as raw float64 bytes plus an
    append-only JSON-lines index. Safe for concurrent readers and writers."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.RLock()
        self._memory: dict[str, np.ndarray] = {}
        self._dir: Path | None = None
        if path is not None:
            self._dir = Path(path)
            self._dir.mkdir(parents=True, exist_ok=True)
            self._load()

    @property
    def _index_path(self) -> Path:
        return self._dir / "index.jsonl"

    @property
    def _data_path(self) -> Path:
        return self._dir / "vectors.bin"

    def _load(self) -> None:
        if not self._index_path.exists() or not self._data_path.exists():
            return
        raw = np.fromfile(self._data_path, dtype=np.float64)
        with open(self._index_path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                entry = json.loads(line)
                start, count = entry["offset"], entry["count"]
                self._memory[entry["key"]] = raw[start:start + count].copy()

    def __len__(self) -> int:
        with self._lock:
            return len(self._memory)

    def lookup(self, key: str) -> np.ndarray | None:
        with self._lock:
            vec = self._memory.get(key)
            return None if vec is None else vec.copy()

    def store(self, key: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        with self._lock:
            if key in self._memory:
                return
            self._memory[key] = vec.copy()
            if self._dir is not None:
                offset = self._data_path.stat().st_size // 8 if self._data_path.exists() else 0
                with open(self._data_path, "ab") as data:
                    data.write(vec.tobytes())
                with open(self._index_path, "a", encoding="utf-8") as index:
                    index.write(json.dumps(
                        {"key": key, "offset": offset, "count": int(vec.size)}) + "\n")


def embed_texts(client: EmbedderClient, texts: Sequence[str],
                cache: VectorCache | None = None) -> list[np.ndarray]:
    """Embed texts through the cache; misses are batched into one client call.

    The empty string never reaches the client: it maps to the zero vector.
    """
    d = client.dimension
    results: list[np.ndarray | None] = [None] * len(texts)
    keys = [cache_key(client.name, d, t) for t in texts]
    pending: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        if text == "":
            results[i] = np.zeros(d, dtype=np.float64)
            continue
        if cache is not None:
            hit = cache.lookup(keys[i])
            if hit is not None:
                if hit.size != d:
                    raise DimensionMismatchError(
                        f"cache entry has dimension {hit.size}, client declares {d}")
                results[i] = hit
                continue
        pending.setdefault(texts[i], []).append(i)

    if pending:
        batch = list(pending)
        vectors = client.embed_batch(batch)
        if len(vectors) != len(batch):
            raise EmbeddingError(
                f"client returned {len(vectors)} vectors for {len(batch)} texts")
        for text, vec in zip(batch, vectors):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (d,):
                raise DimensionMismatchError(
                    f"client {client.name!r} returned shape {arr.shape}, expected ({d},)")
            if not np.all(np.isfinite(arr)):
                raise EmbeddingError(f"client {client.name!r} returned non-finite values")
            for i in pending[text]:
                results[i] = arr
                if cache is not None:
                    cache.store(keys[i], arr)
    return [r.copy() for r in results]  # type: ignore[union-attr]


@dataclass(frozen=True)
class PaperVector:
    """Concatenation of per-dimension embeddings: block_dim * n_blocks values."""

    paper_id: str
    values: np.ndarray
    block_dim: int
    n_blocks: int

    def __post_init__(self):
        if self.values.size != self.block_dim * self.n_blocks:
            raise EmbeddingError(
                f"vector for {self.paper_id!r} has {self.values.size} values, "
                f"expected {self.block_dim * self.n_blocks}")
        if not np.all(np.isfinite(self.values)):
            raise EmbeddingError(f"vector for {self.paper_id!r} has non-finite entries")


def normalize_block(vec: np.ndarray) -> np.ndarray:
    """Unit L2 norm per field block; zero (blank) blocks stay zero."""
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > _NORM_EPS else vec


def embed_paper(paper_id: str, cset: ContributionSet, ctype: ContributionType,
                client: EmbedderClient, cache: VectorCache | None = None) -> PaperVector:
    """Embed each selected dimension, L2-normalize per block, concatenate in
    the declared dimension order."""
    texts = select_dimensions(cset, ctype)
    blocks = [normalize_block(v) for v in embed_texts(client, texts, cache)]
    return PaperVector(paper_id=paper_id, values=np.concatenate(blocks),
                       block_dim=client.dimension, n_blocks=len(texts))


def embed_corpus(contributions: Mapping[str, ContributionSet], ctype: ContributionType,
                 client: EmbedderClient, cache: VectorCache | None = None
                 ) -> dict[str, PaperVector]:
    """Embed every paper's selected dimensions in one batched pass."""
    ids = sorted(contributions)
    flat: list[str] = []
    for paper_id in ids:
        flat.extend(select_dimensions(contributions[paper_id], ctype))
    vectors = embed_texts(client, flat, cache)
    n = len(ctype.dimensions)
    out: dict[str, PaperVector] = {}
    for row, paper_id in enumerate(ids):
        blocks = [normalize_block(v) for v in vectors[row * n:(row + 1) * n]]
        out[paper_id] = PaperVector(paper_id=paper_id, values=np.concatenate(blocks),
                                    block_dim=client.dimension, n_blocks=n)
    return out


def save_vectors(vectors: Mapping[str, PaperVector], prefix: str | Path) -> None:
    prefix = Path(prefix)
    ids = sorted(vectors)
    matrix = np.stack([vectors[i].values for i in ids]) if ids else np.zeros((0, 0))
    np.save(str(prefix.with_suffix(".npy")), matrix)
    first = vectors[ids[0]] if ids else None
    meta = {"ids": ids,
            "block_dim": first.block_dim if first else 0,
            "n_blocks": first.n_blocks if first else 0}
    prefix.with_suffix(".json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_vectors(prefix: str | Path) -> dict[str, PaperVector]:
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
    matrix = np.load(str(prefix.with_suffix(".npy")))
    return {
        paper_id: PaperVector(paper_id=paper_id, values=matrix[row],
                              block_dim=meta["block_dim"], n_blocks=meta["n_blocks"])
        for row, paper_id in enumerate(meta["ids"])
    }
