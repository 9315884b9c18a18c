"""Prompt templates and their structured-output schemas.

Each template carries the exact prompt body (with named placeholders) and a
JSON Schema describing the only response shape the gateway accepts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Placeholder names that may appear in prompt bodies.
PLACEHOLDERS = frozenset({
    "title", "description", "example_rows", "query", "cluster",
    "filters", "schema", "purpose", "source",
})


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    output_schema: dict = field(hash=False)

    def required_placeholders(self) -> set[str]:
        return {p for p in PLACEHOLDERS if "{" + p + "}" in self.body}


_METADATA_AUGMENTATION = PromptTemplate(
    name="metadata_augmentation",
    body="""Given following dataset details, you must extract information about this dataset.
Dataset Details:
- Title: {title}
- Description: {description}
- Dataset Preview: {example_rows}

Directly answer each question, be brief and to the point:
1. Description Summary: In 1-3 sentences, provide a brief and summarized description of the dataset.
2. Purposes: Provide a list of analytical, data science, visualization, or machine learning tasks that can be performed with this dataset. e.g., ["training a regression model", "temporal analysis"]
3. Dataset Source & Collection Methods: Gather the source(s) of this dataset, which could include names and/or affiliations of persons, website URLs, web-APIs, synthetic sources, human annotations, and so on. If no information is available about the source of the data, output 'N/A'.
4. Column Descriptions: For each column in the dataset, provide a brief description for the column with its data type.""",
    output_schema={
        "type": "object",
        "properties": {
            "description_summary": {"type": "string"},
            "dataset_purposes": {"type": "array", "items": {"type": "string"}},
            "dataset_sources": {"type": "string"},
            "column_descriptions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "column_name": {"type": "string"},
                        "type": {"type": "string"},
                        "description": {"type": "string"},
                    },
                    "required": ["column_name", "type", "description"],
                },
            },
        },
        "required": ["description_summary", "dataset_purposes",
                     "dataset_sources", "column_descriptions"],
    },
)

_GRANULARITY_ANNOTATION = PromptTemplate(
    name="granularity_annotation",
    body="""Given a dataset with the following details, determine the most likely temporal and/or spatial granularity reflected in the dataset.
Dataset Details:
- Title: {title}
- Description: {description}
- Dataset Preview: {example_rows}

Select the temporal granularity from the following options:
Year, Quarter, Month, Week, Day, Hour, Minute, or Second.
Select the spatial granularity from the following options:
Continent, Country, State/Province, County/District, City, Neighborhood/Region, Zip Code/Postal Code, Street Address, Residential Address, or Latitude/Longitude.
Identify the temporal and/or spatial granularity only if reflected in the dataset. Leave the respective field(s) empty if the granularity cannot be inferred from the table.""",
    output_schema={
        "type": "object",
        "properties": {
            "temporal_granularity": {"type": "string"},
            "spatial_granularity": {"type": "string"},
        },
        "required": ["temporal_granularity", "spatial_granularity"],
    },
)

_HYPOTHETICAL_SCHEMAS = PromptTemplate(
    name="hypothetical_schemas",
    body="""Given the task of {query}, generate three dataset schemas to implement the task.
Only generate three table schemas, excluding any introductory phrases and focusing exclusively on the tasks themselves.
Generate the table names and corresponding column names, data types, and example rows. For example:
Example Task: Datasets to train a machine learning model to predict housing prices
Example Output: (Parts omitted for brevity)
[
  {
    "table_name": "Properties",
    "column_names": ["id", "num_bedrooms", "num_bathrooms", "sqft", "year_built", "location", "price"],
    "data_types": ["INT", "INT", "INT", "FLOAT", "INT", "TEXT", "FLOAT"],
    "example_row": [101, 3, 2, 1450.5, 2005, "Seattle, WA", 675000.0]
  },
  {
    "table_name": "NeighborhoodStats",
    "column_names": [...],
    "data_types": [...],
    "example_row": [...]
  },
  {
    "table_name": "PropertySalesHistory",
    "column_names": [...],
    "data_types": [...],
    "example_row": [...]
  }
]""",
    output_schema={
        "type": "array",
        "items": {
            "type": "object",
            "properties": {
                "table_name": {"type": "string"},
                "column_names": {"type": "array", "items": {"type": "string"}},
                "data_types": {"type": "array", "items": {"type": "string"}},
                # The body's example row mixes numbers and strings, so any
                # JSON scalar is acceptable here; values are coerced to text.
                "example_row": {
                    "type": "array",
                    "items": {"type": ["string", "number", "boolean", "null"]},
                },
            },
            "required": ["table_name", "column_names", "data_types", "example_row"],
        },
    },
)

_REFORMULATION = PromptTemplate(
    name="reformulation",
    body="""Generate a dataset search query matching a collection of given dataset names, such that it:
- Incorporates the common theme of these dataset names: {cluster}
- Relates to the original task: {query}
- Is specific enough to include both a topic, as well as a clear objective.

Also provide a brief reason (under 10 words) why this query improves upon {query}.
Example Output:
{
    "query": "Analyze voter demographics in presidential elections", "reason": "adds demographic focus"
}""",
    output_schema={
        "type": "object",
        "properties": {
            "query": {"type": "string"},
            "reason": {"type": "string"},
        },
        "required": ["query", "reason"],
    },
)

_COLUMN_CONCEPTS = PromptTemplate(
    name="column_concepts",
    body="""You are an assistant that returns a flat list of words. The input will be a list with nested elements. For each nested element, return 1 to 2 representative words that best represent the topic of the nested group. The representative word should also make sense in context with the {query}. The words should be lower case single words without special characters (like hyphens or underscores). The output must be a valid JSON array with no additional formatting, symbols, or repetitions.

Input: {cluster}""",
    output_schema={
        "type": "array",
        "items": {"type": "string"},
    },
)

_RELEVANCE_INDICATORS = PromptTemplate(
    name="relevance_indicators",
    body="""You are an assistant that explains what makes the following dataset search result relevant or irrelevant, given my task and applied search filters.
Dataset Details:
- Description: {description}
- Example Rows: {schema}
- Purpose of dataset: {purpose}
- Dataset Collection Method: {source}

Dataset Search Specifications:
- Dataset search query: {query}
- Applied filters: {filters}

Instructions:
1. Utilities: Identify the strongest factors that make this dataset useful. Look for the presence of relevant attributes, high data quality, and matching intent. If there are no strong advantages, return "No significant utilities."
2. Limitations: Identify limitations such as missing relevant attributes, specific geographical locations (e.g., "dataset only contains records of location X"), specific temporal ranges (e.g., "data belongs to X and Y time range"), poor data quality and missing or incomplete data. If no major issues exist, return "No significant limitations."

Guidelines:
- Stay factual: Base responses strictly on the provided dataset details. Do not assume information that isn't explicitly stated.
- Be concise: Limit each response to 1-2 sentences.
- Avoid hallucination: If no strong reason exists for relevance or irrelevance, default to "No significant utilities" or "No significant limitations".""",
    output_schema={
        "type": "object",
        "properties": {
            "utilities": {"type": "string"},
            "limitations": {"type": "string"},
        },
        "required": ["utilities", "limitations"],
    },
)

TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        _METADATA_AUGMENTATION,
        _GRANULARITY_ANNOTATION,
        _HYPOTHETICAL_SCHEMAS,
        _REFORMULATION,
        _COLUMN_CONCEPTS,
        _RELEVANCE_INDICATORS,
    )
}


def get_template(name: str) -> PromptTemplate:
    try:
        return TEMPLATES[name]
    except KeyError:
        raise KeyError(f"unknown prompt template {name!r}") from None


_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(sorted(PLACEHOLDERS)) + r")\}")


def fill_template(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute placeholders, refusing dispatch with any left unresolved.

    Substitution is single-pass over the body, so binding values are never
    rescanned for placeholders.
    """
    missing = template.required_placeholders() - set(bindings)
    if missing:
        raise ValueError(
            f"template {template.name!r} missing bindings: {sorted(missing)}")
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], template.body)
