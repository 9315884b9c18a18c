"""LLM gateway: structured completions, embeddings, retries, and providers.

All text-generation and embedding traffic goes through LlmGateway. The mock
provider is fully rule-based and byte-deterministic so every downstream
algorithm is testable with exact expectations; the HTTP provider talks to any
chat-completions + embeddings endpoint.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import zlib
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import httpx
import jsonschema
import numpy as np

from .corpus import parse_markdown_table
from .prompts import PromptTemplate, fill_template, get_template
from .textutil import most_frequent_token, tokenize

logger = logging.getLogger(__name__)


class GatewayError(Exception):
    """Base class for gateway failures."""


class ConfigurationError(GatewayError):
    """Provider configuration is unusable (e.g. missing API key)."""


class RetryableProviderError(GatewayError):
    """Transient provider failure (timeout, connection, 5xx)."""


class ProviderUnavailable(GatewayError):
    """Provider kept failing after all retries."""


class SchemaViolation(GatewayError):
    """Provider output never validated against the template schema."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class ProviderConfig:
    base_url: str = ""
    model_name: str = "gpt-4o-mini"
    embedding_model_name: str = "text-embedding-3-small"
    api_key_env: str = "SCOUT_LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2
    embedding_dim: int = 256
    temperature: float = 0.0
    max_in_flight: int = 8
    backoff_base: float = 0.25


@dataclass(frozen=True)
class CompletionRequest:
    """A filled prompt plus the structured metadata providers may use.

    The filled prompt is what an HTTP provider dispatches; the mock provider
    keys its rules off template_name and bindings instead of re-parsing text.
    """

    template_name: str
    prompt: str
    bindings: dict[str, str] = field(hash=False)
    output_schema: dict = field(hash=False)


@dataclass(frozen=True)
class StructuredResult:
    parsed: object
    raw: str
    attempts: int


class LlmGateway:
    """Shared, thread-safe front door for completions and embeddings."""

    def __init__(self, provider, config: ProviderConfig | None = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.provider = provider
        self.config = config or ProviderConfig()
        self._sleeper = sleeper
        self._gate = threading.Semaphore(self.config.max_in_flight)

    @property
    def embedding_dim(self) -> int:
        return self.provider.embedding_dim

    def complete_structured(self, template: PromptTemplate | str,
                            bindings: dict[str, str]) -> StructuredResult:
        """Run one structured completion, retrying transient and schema errors.

        Schema violations are re-prompted with the parse error appended; after
        max_retries the call fails with SchemaViolation carrying the raw text.
        """
        if isinstance(template, str):
            template = get_template(template)
        prompt = fill_template(template, bindings)
        attempts = self.config.max_retries + 1
        current_prompt = prompt
        raw = ""
        last_error = ""
        for attempt in range(1, attempts + 1):
            try:
                with self._gate:
                    raw = self.provider.complete(CompletionRequest(
                        template_name=template.name,
                        prompt=current_prompt,
                        bindings=dict(bindings),
                        output_schema=template.output_schema,
                    ))
            except RetryableProviderError as err:
                last_error = str(err)
                if attempt == attempts:
                    raise ProviderUnavailable(
                        f"provider failed after {attempts} attempts: {err}") from err
                self._sleeper(self.config.backoff_base * (2 ** (attempt - 1)))
                continue
            try:
                parsed = json.loads(raw)
                jsonschema.validate(parsed, template.output_schema)
                return StructuredResult(parsed=parsed, raw=raw, attempts=attempt)
            except (json.JSONDecodeError, jsonschema.ValidationError) as err:
                last_error = str(err).splitlines()[0]
                current_prompt = (
                    f"{prompt}\n\nYour previous response was invalid: {last_error}\n"
                    "Respond with JSON matching the output schema exactly.")
        raise SchemaViolation(
            f"output for {template.name!r} still invalid after {attempts} attempts: "
            f"{last_error}", raw=raw)

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed a batch of texts, preserving order; one vector per input."""
        if not texts:
            raise ValueError("texts must be nonempty")
        for i, text in enumerate(texts):
            if not text.strip():
                raise ValueError(f"text at position {i} is empty")
        attempts = self.config.max_retries + 1
        for attempt in range(1, attempts + 1):
            try:
                with self._gate:
                    vectors = self.provider.embed(list(texts))
                break
            except RetryableProviderError as err:
                if attempt == attempts:
                    raise ProviderUnavailable(
                        f"embedding failed after {attempts} attempts: {err}") from err
                self._sleeper(self.config.backoff_base * (2 ** (attempt - 1)))
        out = []
        for i, vec in enumerate(vectors):
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.embedding_dim,):
                raise GatewayError(
                    f"provider returned vector of shape {arr.shape} at position {i}, "
                    f"expected ({self.embedding_dim},)")
            out.append(arr)
        if len(out) != len(texts):
            raise GatewayError(
                f"provider returned {len(out)} vectors for {len(texts)} texts")
        return out


# --------------------------------------------------------------------------
# Mock provider
# --------------------------------------------------------------------------

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?$")
_DATE_RE = re.compile(r"^\d{4}[-/]\d{1,2}([-/]\d{1,2})?([ T].*)?$")

# Keyword tables for granularity inference, scanned finest-first so a table
# carrying both a date and a year column is tagged at daily resolution.
_TEMPORAL_KEYWORDS: list[tuple[str, str]] = [
    ("second", "Second"),
    ("minute", "Minute"),
    ("hour", "Hour"),
    ("date", "Day"),
    ("day", "Day"),
    ("week", "Week"),
    ("month", "Month"),
    ("quarter", "Quarter"),
    ("year", "Year"),
]
_SPATIAL_KEYWORDS: list[tuple[str, str]] = [
    ("latitude", "Latitude/Longitude"),
    ("longitude", "Latitude/Longitude"),
    ("coordinate", "Latitude/Longitude"),
    ("address", "Street Address"),
    ("zip", "Zip Code/Postal Code"),
    ("postal", "Zip Code/Postal Code"),
    ("neighborhood", "Neighborhood/Region"),
    ("neighbourhood", "Neighborhood/Region"),
    ("region", "Neighborhood/Region"),
    ("city", "City"),
    ("town", "City"),
    ("county", "County/District"),
    ("district", "County/District"),
    ("state", "State/Province"),
    ("province", "State/Province"),
    ("country", "Country"),
    ("nation", "Country"),
    ("continent", "Continent"),
]


def _infer_type(values: Sequence[str]) -> str:
    cells = [v for v in values if v.strip()]
    if not cells:
        return "unknown"
    if all(_INT_RE.match(v.strip()) for v in cells):
        return "integer"
    if all(_FLOAT_RE.match(v.strip()) for v in cells):
        return "number"
    if all(_DATE_RE.match(v.strip()) for v in cells):
        return "date"
    return "text"


class MockProvider:
    """Deterministic rule-based provider for offline runs and tests.

    Completions are derived from the request bindings with fixed rules;
    embeddings hash character trigrams into seeded buckets and L2-normalize,
    so lexically similar texts land near each other.
    """

    def __init__(self, embedding_dim: int = 256, seed: int = 0):
        self.embedding_dim = embedding_dim
        self.seed = seed & 0xFFFFFFFF

    # -- completions --------------------------------------------------------

    def complete(self, request: CompletionRequest) -> str:
        handler = getattr(self, f"_complete_{request.template_name}", None)
        if handler is None:
            raise ConfigurationError(
                f"mock provider has no rule for template {request.template_name!r}")
        return json.dumps(handler(request.bindings), ensure_ascii=False)

    def _complete_metadata_augmentation(self, b: dict[str, str]) -> dict:
        header, rows = parse_markdown_table(b.get("example_rows", ""))
        columns = {
            name: [row[i] for row in rows if i < len(row)]
            for i, name in enumerate(header)
        }
        types = {name: _infer_type(values) for name, values in columns.items()}

        description = b.get("description", "").strip()
        if description:
            summary = description.split(". ")[0].rstrip(".") + "."
        else:
            summary = f"{b.get('title', 'Untitled')}: a table of {len(header)} columns."

        purposes: list[str] = []
        if any(t in ("integer", "number") for t in types.values()):
            purposes.append("training a regression model")
        if any(t == "text" for t in types.values()):
            purposes.append("training a classification model")
        if any(t == "date" for t in types.values()) or any(
                kw in name.lower() for name in header
                for kw, _ in _TEMPORAL_KEYWORDS):
            purposes.append("temporal analysis")
        purposes.append("visualization")

        descriptions = []
        for name in header:
            samples = [v for v in columns[name] if v.strip()][:2]
            text = (f"Sample values include {', '.join(samples)}."
                    if samples else "No sampled values.")
            descriptions.append(
                {"column_name": name, "type": types[name], "description": text})
        return {
            "description_summary": summary,
            "dataset_purposes": purposes,
            "dataset_sources": "N/A",
            "column_descriptions": descriptions,
        }

    def _complete_granularity_annotation(self, b: dict[str, str]) -> dict:
        header, _ = parse_markdown_table(b.get("example_rows", ""))
        names = [name.lower() for name in header]
        temporal = ""
        for keyword, tag in _TEMPORAL_KEYWORDS:
            if any(keyword in name for name in names):
                temporal = tag
                break
        spatial = ""
        for keyword, tag in _SPATIAL_KEYWORDS:
            if any(keyword in name for name in names):
                spatial = tag
                break
        return {"temporal_granularity": temporal, "spatial_granularity": spatial}

    def _complete_hypothetical_schemas(self, b: dict[str, str]) -> list[dict]:
        tokens = tokenize(b.get("query", ""))[:4] or ["records"]
        base = tokens[0]
        return [
            {
                "table_name": f"{base}_records",
                "column_names": ["id", *tokens, "value"],
                "data_types": ["INT", *(["TEXT"] * len(tokens)), "FLOAT"],
                "example_row": ["1", *tokens, "0.5"],
            },
            {
                "table_name": f"{base}_by_year",
                "column_names": ["year", *tokens, "count"],
                "data_types": ["INT", *(["TEXT"] * len(tokens)), "INT"],
                "example_row": ["2020", *tokens, "42"],
            },
            {
                "table_name": f"{base}_summary",
                "column_names": [*(f"{t}_score" for t in tokens), "region"],
                "data_types": [*(["FLOAT"] * len(tokens)), "TEXT"],
                "example_row": [*(["0.7"] * len(tokens)), "Europe"],
            },
        ]

    def _complete_reformulation(self, b: dict[str, str]) -> dict:
        label = most_frequent_token([b.get("cluster", "")]) or "related topics"
        query = b.get("query", "").strip()
        return {
            "query": f"Analyze {label} in the context of {query}",
            "reason": f"focuses on {label}",
        }

    def _complete_column_concepts(self, b: dict[str, str]) -> list[str]:
        try:
            groups = json.loads(b.get("cluster", "[]"))
        except json.JSONDecodeError:
            groups = [[b.get("cluster", "")]]
        if not isinstance(groups, list):
            groups = [[str(groups)]]
        labels: list[str] = []
        seen: set[str] = set()
        for group in groups:
            members = [str(m) for m in (group if isinstance(group, list) else [group])]
            counts = Counter(t for m in members for t in tokenize(m))
            ranked = [t for t, _ in counts.most_common()]
            label = ranked[0] if ranked else "misc"
            if label in seen and len(ranked) > 1:
                label = f"{ranked[0]} {ranked[1]}"
            seen.add(label)
            labels.append(label)
        return labels

    def _complete_relevance_indicators(self, b: dict[str, str]) -> dict:
        query_tokens = tokenize(b.get("query", ""))
        corpus_text = " ".join(
            b.get(k, "") for k in ("description", "schema", "purpose"))
        present = set(tokenize(corpus_text))
        overlap = sorted(t for t in query_tokens if t in present)
        missing = [t for t in query_tokens if t not in present]
        if overlap:
            utilities = (f"Mentions {', '.join(overlap[:3])}, "
                         "matching the search intent.")
        else:
            utilities = "No significant utilities."
        if missing:
            limitations = f"Does not mention {', '.join(missing[:2])}."
        else:
            limitations = "No significant limitations."
        return {"utilities": utilities, "limitations": limitations}

    # -- embeddings ----------------------------------------------------------

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.embedding_dim, dtype=np.float64)
        data = text.lower()
        grams = ([data[i:i + 3] for i in range(len(data) - 2)]
                 if len(data) >= 3 else [data])
        for gram in grams:
            h = zlib.crc32(gram.encode("utf-8"), self.seed)
            bucket = h % self.embedding_dim
            sign = 1.0 if (h >> 16) & 1 else -1.0
            vec[bucket] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # Degenerate hash cancellation; fall back to a single whole-text bucket.
            h = zlib.crc32(data.encode("utf-8"), self.seed)
            vec[h % self.embedding_dim] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)


# --------------------------------------------------------------------------
# HTTP provider
# --------------------------------------------------------------------------


class HttpProvider:
    """Chat-completions + embeddings client for an OpenAI-style endpoint."""

    def __init__(self, config: ProviderConfig):
        if not config.base_url:
            raise ConfigurationError("base_url is required for the HTTP provider")
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            raise ConfigurationError(
                f"API key environment variable {config.api_key_env} is not set")
        self.config = config
        self.embedding_dim = config.embedding_dim
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    def _post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except (httpx.TimeoutException, httpx.TransportError) as err:
            raise RetryableProviderError(f"{path}: {err}") from err
        if response.status_code >= 500:
            raise RetryableProviderError(
                f"{path}: server error {response.status_code}")
        if response.status_code != 200:
            raise GatewayError(
                f"{path}: provider error {response.status_code}: {response.text[:200]}")
        return response.json()

    def complete(self, request: CompletionRequest) -> str:
        body = self._post("/chat/completions", {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "response_format": {"type": "json_object"},
            "messages": [{"role": "user", "content": request.prompt}],
        })
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as err:
            raise GatewayError(f"malformed completion response: {err}") from err

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = self._post("/embeddings", {
            "model": self.config.embedding_model_name,
            "input": list(texts),
        })
        try:
            items = sorted(body["data"], key=lambda d: d["index"])
            return [item["embedding"] for item in items]
        except (KeyError, TypeError) as err:
            raise GatewayError(f"malformed embedding response: {err}") from err


def gateway_from_env(config: ProviderConfig | None = None) -> LlmGateway:
    """Build a gateway from environment: SCOUT_MOCK=1 selects the mock."""
    config = config or ProviderConfig()
    if os.environ.get("SCOUT_MOCK", "") == "1" or not (
            config.base_url or os.environ.get("SCOUT_LLM_BASE_URL", "")):
        return LlmGateway(MockProvider(embedding_dim=config.embedding_dim), config)
    if not config.base_url:
        config.base_url = os.environ["SCOUT_LLM_BASE_URL"]
    return LlmGateway(HttpProvider(config), config)
