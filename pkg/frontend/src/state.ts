// Single mutable session state with subscriber notification. Renders read
// from here; the controller is the only writer.

import type {
  Concept,
  DatasetDetail,
  GranularitySuggestions,
  Reformulation,
  RelevanceIndicator,
  ResultRow,
} from "./api";

export type Phase = "welcome" | "searching" | "ready" | "error";

export interface ConceptFilterState {
  label: string;
  members: [string, string][];
}

// The free-text filter chip carries a mode toggle: semantic matches columns
// by embedding similarity, exact requires the text in the dataset title.
export type TextFilterMode = "semantic" | "exact";

export interface TextFilterState {
  text: string;
  mode: TextFilterMode;
}

export interface FilterState {
  concepts: ConceptFilterState[];
  temporal: string | null;
  spatial: string | null;
  textFilter: TextFilterState | null;
  minRows: number | null;
  maxRows: number | null;
}

export interface SessionState {
  phase: Phase;
  queryText: string;
  taskType: string | null;
  filters: FilterState;
  digest: string | null;
  totalResults: number;
  results: ResultRow[];
  // null until suggestions arrive; deferred searches fill them in later
  reformulations: Reformulation[] | null;
  concepts: Concept[] | null;
  granularity: GranularitySuggestions | null;
  suggestionsPending: boolean;
  selectedDataset: string | null;
  detail: DatasetDetail | null;
  detailLoading: boolean;
  relevance: RelevanceIndicator | null;
  relevanceLoading: boolean;
  errorMessage: string | null;
  // set after a 503: semantic search is down but exact filters still work
  degraded: boolean;
}

export function emptyFilters(): FilterState {
  return {
    concepts: [],
    temporal: null,
    spatial: null,
    textFilter: null,
    minRows: null,
    maxRows: null,
  };
}

export function initialState(): SessionState {
  return {
    phase: "welcome",
    queryText: "",
    taskType: null,
    filters: emptyFilters(),
    digest: null,
    totalResults: 0,
    results: [],
    reformulations: null,
    concepts: null,
    granularity: null,
    suggestionsPending: false,
    selectedDataset: null,
    detail: null,
    detailLoading: false,
    relevance: null,
    relevanceLoading: false,
    errorMessage: null,
    degraded: false,
  };
}

export function hasActiveFilters(filters: FilterState): boolean {
  return (
    filters.concepts.length > 0 ||
    filters.temporal !== null ||
    filters.spatial !== null ||
    filters.textFilter !== null ||
    filters.minRows !== null ||
    filters.maxRows !== null
  );
}

export type Listener = (state: SessionState) => void;

export class Store {
  private state: SessionState = initialState();
  private listeners: Listener[] = [];

  get(): SessionState {
    return this.state;
  }

  update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
