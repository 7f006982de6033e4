"""HTTP client for an external sentence-embedding service, with disk cache.

Wire contract: POST ``{"model": ..., "texts": [...]}``, response
``{"embeddings": [[...], ...]}`` aligned to the request. Server errors
(status >= 500) and transport failures are retried with exponential backoff;
4xx responses are fatal immediately. Vectors are cached on disk keyed by the
SHA-256 of (endpoint, model, text) so a provider or model change can never
serve stale vectors. An optional bearer token is read from the
``CAPRANK_PROVIDER_TOKEN`` environment variable and never written to logs or
the cache.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .errors import (
    DimensionDriftError,
    InvalidConfigError,
    MalformedResponseError,
    ProviderUnavailableError,
)

__all__ = ["ProviderConfig", "EmbeddingProvider", "fetch_embeddings", "TOKEN_ENV_VAR"]

TOKEN_ENV_VAR = "CAPRANK_PROVIDER_TOKEN"


@dataclass(frozen=True)
class ProviderConfig:
    """Connection, batching, retry, and cache settings for one provider."""

    endpoint: str
    model: str
    timeout: float = 30.0
    max_in_flight: int = 8
    batch_size: int = 8
    max_attempts: int = 3
    backoff_base: float = 0.25
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if not self.endpoint or not self.model:
            raise InvalidConfigError("endpoint and model must be non-empty")
        if self.timeout <= 0 or self.max_in_flight < 1 or self.batch_size < 1:
            raise InvalidConfigError("timeout, max_in_flight, batch_size must be positive")
        if self.max_attempts < 1 or self.backoff_base < 0:
            raise InvalidConfigError("retry policy values must be positive")


class EmbeddingProvider:
    """Fetches embeddings with bounded concurrency and a content-keyed cache."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        self._cache_dir = Path(config.cache_dir) if config.cache_dir else None
        if self._cache_dir is not None:
            self._cache_dir.mkdir(parents=True, exist_ok=True)

    # -- cache -------------------------------------------------------------

    def _cache_key(self, text: str) -> str:
        payload = json.dumps(
            [self.config.endpoint, self.config.model, text], ensure_ascii=False
        ).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def _cache_path(self, text: str) -> Optional[Path]:
        if self._cache_dir is None:
            return None
        return self._cache_dir / f"{self._cache_key(text)}.json"

    def _cache_read(self, text: str) -> Optional[np.ndarray]:
        path = self._cache_path(text)
        if path is None or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            return np.asarray(entry["vector"], dtype=np.float64)
        except (ValueError, KeyError, OSError):
            return None  # unreadable cache entries are treated as misses

    def _cache_write(self, text: str, vector: np.ndarray) -> None:
        path = self._cache_path(text)
        if path is None:
            return
        entry = {
            "endpoint": self.config.endpoint,
            "model": self.config.model,
            "vector": [float(x) for x in vector],
        }
        tmp = path.with_suffix(f".tmp.{os.getpid()}")
        tmp.write_text(json.dumps(entry), encoding="utf-8")
        os.replace(tmp, path)

    # -- network -----------------------------------------------------------

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post_batch(self, texts: list[str]) -> list[np.ndarray]:
        last_error = "no attempt made"
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.config.endpoint,
                    json={"model": self.config.model, "texts": texts},
                    headers=self._headers(),
                    timeout=self.config.timeout,
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc.__class__.__name__}"
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            if response.status_code >= 400:
                raise ProviderUnavailableError(
                    f"provider rejected request with status {response.status_code}"
                )
            return self._parse_batch(response, len(texts))
        raise ProviderUnavailableError(
            f"provider unreachable after {self.config.max_attempts} attempts ({last_error})"
        )

    @staticmethod
    def _parse_batch(response, expected: int) -> list[np.ndarray]:
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {exc}") from None
        embeddings = body.get("embeddings") if isinstance(body, dict) else None
        if not isinstance(embeddings, list) or len(embeddings) != expected:
            raise MalformedResponseError(
                f"expected {expected} embeddings, got "
                f"{len(embeddings) if isinstance(embeddings, list) else 'none'}"
            )
        vectors = []
        for vec in embeddings:
            if not isinstance(vec, list) or not vec:
                raise MalformedResponseError("each embedding must be a non-empty array")
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or not np.isfinite(arr).all():
                raise MalformedResponseError("embeddings must be finite 1-D vectors")
            vectors.append(arr)
        return vectors

    # -- public ------------------------------------------------------------

    def fetch(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Return one vector per text, consulting the cache first.

        Cache hits skip the network entirely; misses are fetched in batches
        through a pool of at most ``max_in_flight`` concurrent requests.
        Raises :class:`DimensionDriftError` if the provider returns vectors of
        differing dimension within one call.
        """
        resolved: dict[str, np.ndarray] = {}
        missing: list[str] = []
        for text in texts:
            if text in resolved:
                continue
            cached = self._cache_read(text)
            if cached is not None:
                resolved[text] = cached
            else:
                missing.append(text)
        missing = list(dict.fromkeys(missing))

        if missing:
            batches = [
                missing[i : i + self.config.batch_size]
                for i in range(0, len(missing), self.config.batch_size)
            ]
            with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
                results = list(pool.map(self._post_batch, batches))
            for batch, vectors in zip(batches, results):
                for text, vector in zip(batch, vectors):
                    resolved[text] = vector
                    self._cache_write(text, vector)

        dims = {v.size for v in resolved.values()}
        if len(dims) > 1:
            raise DimensionDriftError(
                f"provider returned inconsistent dimensions {sorted(dims)}"
            )
        return [resolved[text] for text in texts]


def fetch_embeddings(config: ProviderConfig, texts: Sequence[str]) -> list[np.ndarray]:
    """One-shot convenience wrapper around :meth:`EmbeddingProvider.fetch`."""
    return EmbeddingProvider(config).fetch(texts)
