// Typed client for the search service JSON contract. The UI talks to the
// backend exclusively through these calls.

export interface GranularityPair {
  temporal: string | null;
  spatial: string | null;
}

export interface ResultRow {
  dataset_id: string;
  rank: number;
  score: number;
  per_schema_scores: number[];
  title: string;
  summary: string;
  tags: string[];
  num_rows: number;
  num_cols: number;
  size_bytes: number;
  downloads: number | null;
  usability_score: number | null;
  granularity: GranularityPair;
}

export interface Reformulation {
  query: string;
  reason: string;
  matching_count: number;
  dataset_ids: string[];
}

export interface Concept {
  label: string;
  members: [string, string][];
}

export interface GranularitySuggestions {
  temporal: string[];
  spatial: string[];
}

export interface SearchResponse {
  state_digest: string;
  query: { text: string; task_type: string | null };
  filters: Record<string, unknown>;
  total_results: number;
  results: ResultRow[];
  reformulations: Reformulation[] | null;
  concepts: Concept[] | null;
  granularity_suggestions: GranularitySuggestions | null;
}

export interface SuggestionsResponse {
  state_digest: string;
  reformulations: Reformulation[];
  concepts: Concept[];
  granularity_suggestions: GranularitySuggestions;
}

export interface ColumnDescription {
  column_name: string;
  type: string;
  description: string;
}

export interface DatasetDetail {
  dataset_id: string;
  status: string;
  title: string;
  filename: string;
  description: string;
  tags: string[];
  size_bytes: number;
  num_rows: number;
  num_cols: number;
  columns: { name: string; sampled_values: string[] }[];
  usability_score: number | null;
  downloads: number | null;
  preview_markdown: string;
  augmented: {
    description_summary: string;
    dataset_purposes: string[];
    dataset_sources: string;
    column_descriptions: ColumnDescription[];
    low_confidence: boolean;
  } | null;
  granularity: GranularityPair;
}

export interface RelevanceIndicator {
  dataset_id: string;
  state_digest: string;
  utilities: string;
  limitations: string;
}

export interface AttributeHit {
  dataset_id: string;
  column_name: string;
  similarity: number;
  title: string;
}

export interface FiltersPayload {
  title_contains?: string;
  description_contains?: string;
  tags_any?: string[];
  min_rows?: number;
  max_rows?: number;
  min_cols?: number;
  max_cols?: number;
  max_size_bytes?: number;
  concepts?: { label: string; members: [string, string][] }[];
  temporal?: string;
  spatial?: string;
  attribute_query?: string;
}

export interface SearchRequest {
  query: string;
  task_type?: string | null;
  filters?: FiltersPayload;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public exactFiltersAvailable = false,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  let fallback = false;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") detail = body.detail;
    fallback = body.exact_filters_available === true;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail, fallback);
}

async function getJson<T>(url: string, signal?: AbortSignal): Promise<T> {
  const response = await fetch(url, { signal });
  if (!response.ok) throw await parseError(response);
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  async search(
    request: SearchRequest,
    options: { defer?: boolean; signal?: AbortSignal } = {},
  ): Promise<SearchResponse> {
    const suffix = options.defer ? "?defer_suggestions=true" : "";
    const response = await fetch(`${this.base}/api/search${suffix}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
      signal: options.signal,
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as SearchResponse;
  }

  suggestions(digest: string, signal?: AbortSignal): Promise<SuggestionsResponse> {
    const query = encodeURIComponent(digest);
    return getJson(`${this.base}/api/search/suggestions?digest=${query}`, signal);
  }

  dataset(id: string, signal?: AbortSignal): Promise<DatasetDetail> {
    return getJson(`${this.base}/api/datasets/${encodeURIComponent(id)}`, signal);
  }

  relevance(
    id: string,
    digest: string,
    signal?: AbortSignal,
  ): Promise<RelevanceIndicator> {
    const path = `/api/datasets/${encodeURIComponent(id)}/relevance`;
    const query = encodeURIComponent(digest);
    return getJson(`${this.base}${path}?digest=${query}`, signal);
  }

  attributes(
    q: string,
    k = 50,
    signal?: AbortSignal,
  ): Promise<{ dataset_ids: string[]; hits: AttributeHit[] }> {
    const query = encodeURIComponent(q);
    return getJson(`${this.base}/api/attributes/search?q=${query}&k=${k}`, signal);
  }

  health(): Promise<{ status: string; datasets: number }> {
    return getJson(`${this.base}/api/health`);
  }
}
