// Controller: owns all state mutations and API traffic. Every query or
// filter change funnels through runSearch so the digest stays fresh and
// superseded requests are cancelled.

import {
  ApiClient,
  ApiError,
  type Concept,
  type FiltersPayload,
  type RelevanceIndicator,
  type SearchResponse,
} from "./api";
import {
  Store,
  emptyFilters,
  type FilterState,
  type SessionState,
  type TextFilterMode,
} from "./state";

export const TASK_TYPES = [
  "regression",
  "classification",
  "visualization",
  "temporal_analysis",
  "other",
] as const;

function isAbort(error: unknown): boolean {
  return error instanceof DOMException && error.name === "AbortError";
}

function payloadFromFilters(filters: FilterState): FiltersPayload | undefined {
  const payload: FiltersPayload = {};
  if (filters.concepts.length > 0) {
    payload.concepts = filters.concepts.map((c) => ({
      label: c.label,
      members: c.members,
    }));
  }
  if (filters.temporal !== null) payload.temporal = filters.temporal;
  if (filters.spatial !== null) payload.spatial = filters.spatial;
  if (filters.textFilter !== null) {
    if (filters.textFilter.mode === "exact") {
      payload.title_contains = filters.textFilter.text;
    } else {
      payload.attribute_query = filters.textFilter.text;
    }
  }
  if (filters.minRows !== null) payload.min_rows = filters.minRows;
  if (filters.maxRows !== null) payload.max_rows = filters.maxRows;
  return Object.keys(payload).length > 0 ? payload : undefined;
}

export class AppController {
  readonly store = new Store();
  private seq = 0;
  private inflight: AbortController | null = null;
  // one relevance fetch per (digest, dataset); in-flight promises coalesce
  private indicatorFetches = new Map<string, Promise<RelevanceIndicator>>();

  constructor(private api: ApiClient) {}

  get state(): SessionState {
    return this.store.get();
  }

  setQueryText(text: string): void {
    this.store.update({ queryText: text });
  }

  setTaskType(taskType: string | null): void {
    this.store.update({ taskType });
    if (this.state.phase !== "welcome") void this.runSearch();
  }

  submitQuery(text: string): Promise<void> {
    this.store.update({ queryText: text });
    return this.runSearch();
  }

  acceptReformulation(query: string): Promise<void> {
    this.store.update({ queryText: query });
    return this.runSearch();
  }

  toggleConcept(concept: Concept): Promise<void> {
    const filters = this.state.filters;
    const active = filters.concepts.some((c) => c.label === concept.label);
    const concepts = active
      ? filters.concepts.filter((c) => c.label !== concept.label)
      : [...filters.concepts, { label: concept.label, members: concept.members }];
    this.store.update({ filters: { ...filters, concepts } });
    return this.runSearch();
  }

  toggleTemporal(value: string): Promise<void> {
    const filters = this.state.filters;
    const temporal = filters.temporal === value ? null : value;
    this.store.update({ filters: { ...filters, temporal } });
    return this.runSearch();
  }

  toggleSpatial(value: string): Promise<void> {
    const filters = this.state.filters;
    const spatial = filters.spatial === value ? null : value;
    this.store.update({ filters: { ...filters, spatial } });
    return this.runSearch();
  }

  setTextFilter(text: string, mode: TextFilterMode): Promise<void> {
    const trimmed = text.trim();
    const filters = this.state.filters;
    const textFilter = trimmed === "" ? null : { text: trimmed, mode };
    this.store.update({ filters: { ...filters, textFilter } });
    return this.runSearch();
  }

  toggleTextFilterMode(): Promise<void> {
    const filters = this.state.filters;
    if (filters.textFilter === null) return Promise.resolve();
    const mode: TextFilterMode =
      filters.textFilter.mode === "exact" ? "semantic" : "exact";
    this.store.update({
      filters: { ...filters, textFilter: { ...filters.textFilter, mode } },
    });
    return this.runSearch();
  }

  setRowBounds(minRows: number | null, maxRows: number | null): Promise<void> {
    const filters = this.state.filters;
    this.store.update({ filters: { ...filters, minRows, maxRows } });
    return this.runSearch();
  }

  removeFilter(kind: string, key?: string): Promise<void> {
    const filters = { ...this.state.filters };
    switch (kind) {
      case "concept":
        filters.concepts = filters.concepts.filter((c) => c.label !== key);
        break;
      case "temporal":
        filters.temporal = null;
        break;
      case "spatial":
        filters.spatial = null;
        break;
      case "text":
        filters.textFilter = null;
        break;
      case "rows":
        filters.minRows = null;
        filters.maxRows = null;
        break;
      default:
        return Promise.resolve();
    }
    this.store.update({ filters });
    return this.runSearch();
  }

  clearFilters(): Promise<void> {
    this.store.update({ filters: emptyFilters() });
    return this.runSearch();
  }

  async runSearch(): Promise<void> {
    const { queryText, taskType, filters } = this.state;
    if (queryText.trim() === "") return;
    const ticket = ++this.seq;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.store.update({
      phase: "searching",
      errorMessage: null,
      suggestionsPending: false,
    });
    let response: SearchResponse;
    try {
      response = await this.api.search(
        {
          query: queryText.trim(),
          task_type: taskType,
          filters: payloadFromFilters(filters),
        },
        { defer: true, signal: controller.signal },
      );
    } catch (error) {
      if (isAbort(error) || ticket !== this.seq) return;
      this.applySearchError(error);
      return;
    }
    if (ticket !== this.seq) return;
    const deferred = response.reformulations === null;
    const digestChanged = this.state.digest !== response.state_digest;
    this.store.update({
      phase: "ready",
      degraded: false,
      digest: response.state_digest,
      totalResults: response.total_results,
      results: response.results,
      reformulations: response.reformulations,
      concepts: response.concepts,
      granularity: response.granularity_suggestions,
      suggestionsPending: deferred,
      ...(digestChanged ? { relevance: null } : {}),
    });
    const selected = this.state.selectedDataset;
    if (selected !== null) {
      void this.ensureRelevance(selected, response.state_digest);
    }
    if (deferred) {
      await this.fetchSuggestions(ticket, response.state_digest, controller.signal);
    }
  }

  private async fetchSuggestions(
    ticket: number,
    digest: string,
    signal: AbortSignal,
  ): Promise<void> {
    try {
      const bundle = await this.api.suggestions(digest, signal);
      if (ticket !== this.seq) return;
      this.store.update({
        reformulations: bundle.reformulations,
        concepts: bundle.concepts,
        granularity: bundle.granularity_suggestions,
        suggestionsPending: false,
      });
    } catch (error) {
      if (isAbort(error) || ticket !== this.seq) return;
      this.store.update({ suggestionsPending: false });
    }
  }

  private applySearchError(error: unknown): void {
    if (error instanceof ApiError && error.status === 503) {
      this.store.update({
        phase: "ready",
        degraded: true,
        suggestionsPending: false,
        errorMessage: error.exactFiltersAvailable
          ? "Semantic search is unavailable; exact filters still work."
          : error.message,
      });
      return;
    }
    const message = error instanceof Error ? error.message : String(error);
    this.store.update({
      phase: "error",
      suggestionsPending: false,
      errorMessage: message,
    });
  }

  async showDataset(id: string): Promise<void> {
    const digest = this.state.digest;
    this.store.update({
      selectedDataset: id,
      detail: null,
      detailLoading: true,
      relevance: null,
      relevanceLoading: digest !== null,
    });
    const detailPromise = this.api.dataset(id);
    if (digest !== null) void this.ensureRelevance(id, digest);
    try {
      const detail = await detailPromise;
      if (this.state.selectedDataset !== id) return;
      this.store.update({ detail, detailLoading: false });
    } catch (error) {
      if (this.state.selectedDataset !== id) return;
      const message = error instanceof Error ? error.message : String(error);
      this.store.update({ detailLoading: false, errorMessage: message });
    }
  }

  closeDetail(): void {
    this.store.update({
      selectedDataset: null,
      detail: null,
      detailLoading: false,
      relevance: null,
      relevanceLoading: false,
    });
  }

  // Fetches at most once per (digest, dataset): repeat views reuse the memo,
  // a digest change misses it and triggers regeneration.
  private async ensureRelevance(id: string, digest: string): Promise<void> {
    const key = `${digest}:${id}`;
    let promise = this.indicatorFetches.get(key);
    if (promise === undefined) {
      promise = this.api.relevance(id, digest);
      this.indicatorFetches.set(key, promise);
    }
    this.store.update({ relevanceLoading: true });
    let indicator: RelevanceIndicator;
    try {
      indicator = await promise;
    } catch (error) {
      this.indicatorFetches.delete(key);
      if (this.state.selectedDataset === id && this.state.digest === digest) {
        this.store.update({ relevanceLoading: false });
      }
      if (!isAbort(error) && !(error instanceof ApiError)) throw error;
      return;
    }
    if (this.state.selectedDataset === id && this.state.digest === digest) {
      this.store.update({ relevance: indicator, relevanceLoading: false });
    }
  }
}
