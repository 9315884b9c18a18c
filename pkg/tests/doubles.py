"""Provider test doubles: call counting, scripted failures, outages."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

from scout.gateway import CompletionRequest, MockProvider, RetryableProviderError


class CountingProvider:
    """Delegates to a real provider while counting traffic per template."""

    def __init__(self, inner=None):
        self.inner = inner or MockProvider()
        self.completions: Counter[str] = Counter()
        self.embed_batches = 0
        self.embedded_texts = 0

    @property
    def embedding_dim(self) -> int:
        return self.inner.embedding_dim

    def complete(self, request: CompletionRequest) -> str:
        self.completions[request.template_name] += 1
        return self.inner.complete(request)

    def embed(self, texts: Sequence[str]):
        self.embed_batches += 1
        self.embedded_texts += len(texts)
        return self.inner.embed(texts)

    def calls(self, template_name: str) -> int:
        return self.completions[template_name]


class FlakyProvider:
    """Returns garbage for the first ``bad_calls`` completions, then delegates."""

    def __init__(self, bad_calls: int, inner=None, garbage: str = "not json {"):
        self.inner = inner or MockProvider()
        self.remaining_bad = bad_calls
        self.garbage = garbage

    @property
    def embedding_dim(self) -> int:
        return self.inner.embedding_dim

    def complete(self, request: CompletionRequest) -> str:
        if self.remaining_bad > 0:
            self.remaining_bad -= 1
            return self.garbage
        return self.inner.complete(request)

    def embed(self, texts: Sequence[str]):
        return self.inner.embed(texts)


class DownProvider:
    """Every call fails with a transient error, like an unreachable endpoint."""

    def __init__(self, embedding_dim: int = 256):
        self.embedding_dim = embedding_dim

    def complete(self, request: CompletionRequest) -> str:
        raise RetryableProviderError("connection refused")

    def embed(self, texts: Sequence[str]):
        raise RetryableProviderError("connection refused")


class ScriptedSchemasProvider:
    """Answers hypothetical_schemas with a fixed count; delegates the rest."""

    def __init__(self, schema_count: int, inner=None):
        self.inner = inner or MockProvider()
        self.schema_count = schema_count
        self.schema_calls = 0

    @property
    def embedding_dim(self) -> int:
        return self.inner.embedding_dim

    def complete(self, request: CompletionRequest) -> str:
        if request.template_name != "hypothetical_schemas":
            return self.inner.complete(request)
        self.schema_calls += 1
        import json
        schemas = [
            {
                "table_name": f"table_{i}",
                "column_names": ["a", "b"],
                "data_types": ["INT", "TEXT"],
                "example_row": ["1", "x"],
            }
            for i in range(self.schema_count)
        ]
        return json.dumps(schemas)

    def embed(self, texts: Sequence[str]):
        return self.inner.embed(texts)
