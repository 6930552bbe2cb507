"""HTTP embedding gateway and token counting.

The engine never runs model inference in-process. Embeddings come from any
service speaking the common embeddings wire shape:

    POST {endpoint_url}  {"model": <name>, "input": [<text>, ...]}
    -> 200 {"data": [{"index": 0, "embedding": [...]}, ...]}

Requests are batched and issued with bounded parallelism; callers observe a
synchronous, order-preserving call.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .errors import DimensionMismatch, PartialFailure, ServiceUnreachable

logger = logging.getLogger(__name__)

_RETRY_BASE_S = 0.5  # one retry per failed batch, exponential backoff base
_REQUEST_TIMEOUT_S = 60.0


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real vector. All values are finite."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding values must be finite (no NaN/Inf)")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EmbeddingConfig:
    endpoint_url: str
    model_name: str = "bge-base-en-v1.5"
    expected_dim: int = 768
    em_token_limit: int = 768
    batch_size: int = 32
    max_parallel_requests: int = 4

    def __post_init__(self):
        if self.expected_dim <= 0:
            raise ValueError("expected_dim must be positive")
        if self.em_token_limit <= 0:
            raise ValueError("em_token_limit must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.max_parallel_requests <= 0:
            raise ValueError("max_parallel_requests must be positive")


@dataclass(frozen=True)
class TokenizerConfig:
    """Token accounting: a chars-per-token heuristic or an external endpoint."""

    mode: str = "heuristic"  # "heuristic" | "external"
    chars_per_token: float = 4.0
    external_url: str | None = None

    def __post_init__(self):
        if self.mode not in ("heuristic", "external"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")
        if self.mode == "heuristic" and self.chars_per_token <= 0:
            raise ValueError("chars_per_token must be positive")
        if self.mode == "external" and not self.external_url:
            raise ValueError("external tokenizer mode requires external_url")


def token_count(text: str, tok: TokenizerConfig) -> int:
    """Number of tokens in ``text`` under the configured tokenizer."""
    if tok.mode == "heuristic":
        return math.ceil(len(text) / tok.chars_per_token)
    try:
        resp = requests.post(
            tok.external_url, json={"input": text}, timeout=_REQUEST_TIMEOUT_S
        )
    except requests.RequestException as exc:
        raise ServiceUnreachable(f"tokenizer endpoint unreachable: {exc}") from exc
    if resp.status_code >= 400:
        raise ServiceUnreachable(
            f"tokenizer endpoint returned status {resp.status_code}"
        )
    return int(resp.json()["count"])


def _post_batch(config: EmbeddingConfig, batch: list[str]) -> list[EmbeddingVector]:
    resp = requests.post(
        config.endpoint_url,
        json={"model": config.model_name, "input": batch},
        timeout=_REQUEST_TIMEOUT_S,
    )
    if resp.status_code >= 400:
        raise ServiceUnreachable(
            f"embedding service returned status {resp.status_code}: {resp.text[:200]}"
        )
    payload = resp.json()
    items = sorted(payload["data"], key=lambda item: item["index"])
    if len(items) != len(batch):
        raise ServiceUnreachable(
            f"embedding service returned {len(items)} vectors for {len(batch)} inputs"
        )
    return [EmbeddingVector(tuple(item["embedding"])) for item in items]


def _embed_batch_with_retry(
    config: EmbeddingConfig, batch: list[str]
) -> list[EmbeddingVector]:
    attempt = 0
    while True:
        try:
            return _post_batch(config, batch)
        except (requests.RequestException, ServiceUnreachable, KeyError, ValueError) as exc:
            if attempt >= 1:
                raise ServiceUnreachable(f"embedding batch failed after retry: {exc}") from exc
            delay = _RETRY_BASE_S * (2**attempt)
            logger.warning("embedding batch failed (%s); retrying in %.1fs", exc, delay)
            time.sleep(delay)
            attempt += 1


def embed_texts(
    texts: list[str],
    config: EmbeddingConfig,
    tokenizer: TokenizerConfig | None = None,
) -> list[EmbeddingVector]:
    """Embed ``texts`` in input order.

    Texts are grouped into batches of ``config.batch_size`` and issued with
    at most ``config.max_parallel_requests`` concurrent requests. Inputs
    whose token count exceeds the embedding model's token limit are still
    sent (services truncate) but logged as a warning, since oversize inputs
    lose precision.

    Raises PartialFailure (with failed input indexes) when some batches fail
    after one retry, ServiceUnreachable when all of them do, and
    DimensionMismatch when the service returns vectors of an unexpected
    dimension.
    """
    if not texts:
        raise ValueError("texts must be non-empty")

    tok = tokenizer or TokenizerConfig()
    oversize = [i for i, t in enumerate(texts) if token_count(t, tok) > config.em_token_limit]
    if oversize:
        logger.warning(
            "%d of %d inputs exceed the embedding token limit (%d); "
            "they will be sent anyway and may lose precision",
            len(oversize),
            len(texts),
            config.em_token_limit,
        )

    batches = [
        texts[i : i + config.batch_size] for i in range(0, len(texts), config.batch_size)
    ]
    results: list[list[EmbeddingVector] | None] = [None] * len(batches)
    errors: dict[int, Exception] = {}

    with ThreadPoolExecutor(max_workers=config.max_parallel_requests) as pool:
        futures = {
            pool.submit(_embed_batch_with_retry, config, batch): i
            for i, batch in enumerate(batches)
        }
        for fut, i in futures.items():
            try:
                results[i] = fut.result()
            except Exception as exc:  # noqa: BLE001 - collected and re-raised below
                errors[i] = exc

    if errors:
        if len(errors) == len(batches):
            raise ServiceUnreachable(
                f"all {len(batches)} embedding batches failed: {next(iter(errors.values()))}"
            )
        failed_inputs = []
        for i in sorted(errors):
            start = i * config.batch_size
            failed_inputs.extend(range(start, min(start + config.batch_size, len(texts))))
        raise PartialFailure(
            f"{len(errors)} of {len(batches)} embedding batches failed", failed_inputs
        )

    vectors = [v for batch in results for v in batch]  # type: ignore[union-attr]
    for i, vec in enumerate(vectors):
        if vec.dim != config.expected_dim:
            raise DimensionMismatch(
                f"service returned dimension {vec.dim} for input {i}, "
                f"expected {config.expected_dim} (misconfigured model?)"
            )
    return vectors
