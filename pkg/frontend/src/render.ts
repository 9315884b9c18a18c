// View layer: stateless full re-render from SessionState. Every number on
// screen comes straight from an API field; the view computes none itself.

import type { AppController } from "./app";
import { TASK_TYPES } from "./app";
import type { DatasetDetail, ResultRow } from "./api";
import { hasActiveFilters, type SessionState } from "./state";

type Child = Node | string | null | undefined;

type Attrs = Record<string, string | EventListener>;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.slice(2), value);
    } else if (key === "value" && "value" in node) {
      (node as HTMLInputElement).value = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    node.append(child);
  }
  return node;
}

interface FocusSnapshot {
  id: string;
  value: string;
  start: number | null;
  end: number | null;
}

function captureFocus(): FocusSnapshot | null {
  const active = document.activeElement;
  if (!(active instanceof HTMLInputElement) || active.id === "") return null;
  let start: number | null = null;
  let end: number | null = null;
  try {
    start = active.selectionStart;
    end = active.selectionEnd;
  } catch {
    // number inputs refuse selection access
  }
  return { id: active.id, value: active.value, start, end };
}

function restoreFocus(snapshot: FocusSnapshot | null): void {
  if (snapshot === null) return;
  const input = document.getElementById(snapshot.id);
  if (!(input instanceof HTMLInputElement)) return;
  input.value = snapshot.value;
  input.focus();
  if (snapshot.start !== null && snapshot.end !== null) {
    try {
      input.setSelectionRange(snapshot.start, snapshot.end);
    } catch {
      // ignore inputs without selection support
    }
  }
}

function formatBytes(size: number): string {
  if (size >= 1 << 30) return `${(size / (1 << 30)).toFixed(1)} GB`;
  if (size >= 1 << 20) return `${(size / (1 << 20)).toFixed(1)} MB`;
  if (size >= 1 << 10) return `${(size / (1 << 10)).toFixed(1)} KB`;
  return `${size} B`;
}

function inputValue(id: string): string {
  const input = document.getElementById(id);
  return input instanceof HTMLInputElement ? input.value : "";
}

function buildHeader(state: SessionState, app: AppController): HTMLElement {
  const input = el("input", {
    id: "query-input",
    type: "search",
    placeholder: "Describe the dataset you need, in keywords or a sentence",
    autocomplete: "off",
    value: state.queryText,
  });
  const taskSelect = el(
    "select",
    {
      id: "task-type",
      onchange: (event) => {
        const value = (event.target as HTMLSelectElement).value;
        app.setTaskType(value === "" ? null : value);
      },
    },
    el("option", { value: "" }, "any task"),
    ...TASK_TYPES.map((task) => {
      const option = el("option", { value: task }, task.replace("_", " "));
      if (state.taskType === task) option.selected = true;
      return option;
    }),
  );
  const form = el(
    "form",
    {
      id: "search-form",
      onsubmit: (event) => {
        event.preventDefault();
        void app.submitQuery(input.value);
      },
    },
    input,
    taskSelect,
    el("button", { id: "search-button", type: "submit" }, "Search"),
  );
  return el(
    "header",
    { class: "topbar" },
    el("span", { class: "brand" }, "scout"),
    form,
  );
}

function buildBanner(state: SessionState): HTMLElement | null {
  if (state.degraded) {
    return el(
      "div",
      { class: "banner degraded", role: "alert" },
      state.errorMessage ?? "Semantic search is unavailable.",
    );
  }
  if (state.phase === "error" && state.errorMessage !== null) {
    return el(
      "div",
      { class: "banner error", role: "alert" },
      state.errorMessage,
    );
  }
  return null;
}

function buildWelcome(): HTMLElement {
  return el(
    "section",
    { id: "getting-started", class: "card" },
    el("h2", {}, "Find the right dataset"),
    el(
      "p",
      {},
      "Type what you are looking for, in plain words or a full sentence. ",
      "Pick a task type to tune the results toward regression, ",
      "classification, visualization, or temporal analysis.",
    ),
    el(
      "ul",
      {},
      el("li", {}, "“covid hospitalizations by region”"),
      el("li", {}, "“I want to predict apartment prices from amenities”"),
      el("li", {}, "“daily air quality measurements for major cities”"),
    ),
    el(
      "p",
      {},
      "After a search you can refine with suggested reformulations, ",
      "concept filters, and granularity filters from the left panel.",
    ),
  );
}

function buildReformulationRow(
  state: SessionState,
  app: AppController,
): HTMLElement | null {
  if (state.suggestionsPending) {
    return el(
      "div",
      { id: "suggestions-loading", class: "chip-row muted" },
      "Loading suggestions…",
    );
  }
  const reformulations = state.reformulations;
  if (reformulations === null || reformulations.length === 0) return null;
  return el(
    "div",
    { id: "reformulation-row", class: "chip-row" },
    el("span", { class: "chip-row-label" }, "Try instead:"),
    ...reformulations.map((ref) =>
      el(
        "button",
        {
          class: "chip reformulation-chip",
          type: "button",
          "data-query": ref.query,
          onclick: () => void app.acceptReformulation(ref.query),
        },
        ref.query,
        el(
          "span",
          { class: "chip-tooltip", role: "tooltip" },
          `${ref.reason} (${ref.matching_count} matching)`,
        ),
      ),
    ),
  );
}

function buildAppliedChips(
  state: SessionState,
  app: AppController,
): HTMLElement | null {
  if (!hasActiveFilters(state.filters)) return null;
  const chips: HTMLElement[] = [];
  const remove = (kind: string, key?: string) =>
    el(
      "button",
      {
        class: "chip-remove",
        type: "button",
        "data-kind": kind,
        "aria-label": `remove ${kind} filter`,
        onclick: () => void app.removeFilter(kind, key),
      },
      "×",
    );
  for (const concept of state.filters.concepts) {
    chips.push(
      el(
        "span",
        { class: "chip applied-chip", "data-kind": "concept", "data-key": concept.label },
        `concept: ${concept.label}`,
        remove("concept", concept.label),
      ),
    );
  }
  if (state.filters.temporal !== null) {
    chips.push(
      el(
        "span",
        { class: "chip applied-chip", "data-kind": "temporal" },
        `temporal: ${state.filters.temporal}`,
        remove("temporal"),
      ),
    );
  }
  if (state.filters.spatial !== null) {
    chips.push(
      el(
        "span",
        { class: "chip applied-chip", "data-kind": "spatial" },
        `spatial: ${state.filters.spatial}`,
        remove("spatial"),
      ),
    );
  }
  if (state.filters.textFilter !== null) {
    const { text, mode } = state.filters.textFilter;
    const label = mode === "exact" ? `title contains: ${text}` : `columns like: ${text}`;
    chips.push(
      el(
        "span",
        { class: "chip applied-chip", "data-kind": "text" },
        label,
        el(
          "button",
          {
            id: "chip-mode-toggle",
            class: "chip-mode",
            type: "button",
            title: "switch between exact and semantic matching",
            onclick: () => void app.toggleTextFilterMode(),
          },
          mode,
        ),
        remove("text"),
      ),
    );
  }
  if (state.filters.minRows !== null || state.filters.maxRows !== null) {
    const min = state.filters.minRows ?? "any";
    const max = state.filters.maxRows ?? "any";
    chips.push(
      el(
        "span",
        { class: "chip applied-chip", "data-kind": "rows" },
        `rows: ${min}–${max}`,
        remove("rows"),
      ),
    );
  }
  return el(
    "div",
    { id: "applied-filters", class: "chip-row" },
    el("span", { class: "chip-row-label" }, "Applied:"),
    ...chips,
    el(
      "button",
      {
        id: "clear-filters",
        class: "link-button",
        type: "button",
        onclick: () => void app.clearFilters(),
      },
      "clear all",
    ),
  );
}

function buildFilterPanel(state: SessionState, app: AppController): HTMLElement {
  const sections: Child[] = [el("h2", {}, "Filters")];

  const modeSelect = el(
    "select",
    { id: "filter-mode" },
    el("option", { value: "semantic" }, "semantic columns"),
    el("option", { value: "exact" }, "exact title"),
  );
  sections.push(
    el(
      "form",
      {
        id: "text-filter-form",
        class: "filter-entry",
        onsubmit: (event) => {
          event.preventDefault();
          const mode = modeSelect.value === "exact" ? "exact" : "semantic";
          void app.setTextFilter(inputValue("filter-text"), mode);
        },
      },
      el("input", {
        id: "filter-text",
        type: "text",
        placeholder: "attribute or keyword",
        autocomplete: "off",
        value: state.filters.textFilter?.text ?? "",
      }),
      modeSelect,
      el("button", { id: "apply-text-filter", type: "submit" }, "Add"),
    ),
  );

  sections.push(
    el(
      "form",
      {
        id: "rows-form",
        class: "filter-entry",
        onsubmit: (event) => {
          event.preventDefault();
          const min = inputValue("min-rows");
          const max = inputValue("max-rows");
          void app.setRowBounds(
            min === "" ? null : Number(min),
            max === "" ? null : Number(max),
          );
        },
      },
      el("input", {
        id: "min-rows",
        type: "number",
        min: "0",
        placeholder: "min rows",
        value: state.filters.minRows?.toString() ?? "",
      }),
      el("input", {
        id: "max-rows",
        type: "number",
        min: "0",
        placeholder: "max rows",
        value: state.filters.maxRows?.toString() ?? "",
      }),
      el("button", { id: "apply-rows", type: "submit" }, "Apply"),
    ),
  );

  if (state.suggestionsPending) {
    sections.push(el("p", { class: "muted" }, "Loading suggestions…"));
  }

  if (state.concepts !== null && state.concepts.length > 0) {
    sections.push(el("h3", {}, "Concepts"));
    sections.push(
      el(
        "div",
        { id: "concept-suggestions", class: "chip-column" },
        ...state.concepts.map((concept) => {
          const active = state.filters.concepts.some(
            (c) => c.label === concept.label,
          );
          const columns = concept.members
            .map(([dataset, column]) => `${dataset}.${column}`)
            .join(", ");
          return el(
            "button",
            {
              class: active
                ? "chip suggestion-concept active"
                : "chip suggestion-concept",
              type: "button",
              "data-label": concept.label,
              title: columns,
              "aria-pressed": active ? "true" : "false",
              onclick: () => void app.toggleConcept(concept),
            },
            concept.label,
          );
        }),
      ),
    );
  }

  if (state.granularity !== null) {
    const granularityGroup = (
      axis: "temporal" | "spatial",
      values: string[],
      applied: string | null,
      toggle: (value: string) => void,
    ): Child[] => {
      if (values.length === 0) return [];
      return [
        el("h3", {}, axis === "temporal" ? "Temporal granularity" : "Spatial granularity"),
        el(
          "div",
          { class: "chip-column", "data-axis": axis },
          ...values.map((value) =>
            el(
              "button",
              {
                class:
                  applied === value
                    ? "chip suggestion-granularity active"
                    : "chip suggestion-granularity",
                type: "button",
                "data-axis": axis,
                "data-value": value,
                "aria-pressed": applied === value ? "true" : "false",
                onclick: () => toggle(value),
              },
              value,
            ),
          ),
        ),
      ];
    };
    sections.push(
      ...granularityGroup(
        "temporal",
        state.granularity.temporal,
        state.filters.temporal,
        (value) => void app.toggleTemporal(value),
      ),
      ...granularityGroup(
        "spatial",
        state.granularity.spatial,
        state.filters.spatial,
        (value) => void app.toggleSpatial(value),
      ),
    );
  }

  return el("aside", { id: "filter-panel" }, ...sections);
}

function buildResultRow(row: ResultRow, app: AppController): HTMLElement {
  const meta = [
    `${row.num_rows.toLocaleString()} rows`,
    `${row.num_cols} cols`,
    formatBytes(row.size_bytes),
  ];
  if (row.downloads !== null) meta.push(`${row.downloads.toLocaleString()} downloads`);
  if (row.granularity.temporal !== null) meta.push(`temporal: ${row.granularity.temporal}`);
  if (row.granularity.spatial !== null) meta.push(`spatial: ${row.granularity.spatial}`);
  return el(
    "li",
    {
      class: "result-row",
      "data-id": row.dataset_id,
      tabindex: "0",
      onclick: () => void app.showDataset(row.dataset_id),
      onkeydown: (event) => {
        if ((event as KeyboardEvent).key === "Enter") {
          void app.showDataset(row.dataset_id);
        }
      },
    },
    el("span", { class: "result-rank" }, String(row.rank)),
    el(
      "div",
      { class: "result-body" },
      el("h3", { class: "result-title" }, row.title),
      el("p", { class: "result-summary" }, row.summary),
      el("p", { class: "result-meta" }, meta.join(" · ")),
      row.tags.length > 0
        ? el(
            "p",
            { class: "result-tags" },
            ...row.tags.map((tag) => el("span", { class: "tag" }, tag)),
          )
        : null,
    ),
  );
}

function buildResults(state: SessionState, app: AppController): HTMLElement {
  const children: Child[] = [];
  const reformulations = buildReformulationRow(state, app);
  if (reformulations !== null) children.push(reformulations);
  const applied = buildAppliedChips(state, app);
  if (applied !== null) children.push(applied);
  if (state.phase === "searching") {
    children.push(el("p", { id: "search-status", class: "muted" }, "Searching…"));
  } else {
    children.push(
      el(
        "div",
        { class: "results-heading" },
        el("h2", {}, "Results"),
        el(
          "span",
          { id: "result-count", class: "count-badge" },
          `${state.totalResults} datasets`,
        ),
      ),
    );
    if (state.results.length === 0) {
      children.push(
        el(
          "p",
          { id: "no-results", class: "muted" },
          "No datasets matched. Loosen a filter or try a reformulation.",
        ),
      );
    } else {
      children.push(
        el(
          "ul",
          { id: "result-list" },
          ...state.results.map((row) => buildResultRow(row, app)),
        ),
      );
    }
  }
  return el("section", { id: "results-column" }, ...children);
}

function buildDetailBody(detail: DatasetDetail): HTMLElement {
  const children: Child[] = [
    el("h2", { class: "detail-title" }, detail.title),
    el("p", { class: "detail-id muted" }, detail.dataset_id),
  ];
  const summary = detail.augmented?.description_summary ?? detail.description;
  if (summary !== "") children.push(el("p", { class: "detail-summary" }, summary));
  const facts = [
    `${detail.num_rows.toLocaleString()} rows`,
    `${detail.num_cols} cols`,
    formatBytes(detail.size_bytes),
  ];
  if (detail.downloads !== null) facts.push(`${detail.downloads.toLocaleString()} downloads`);
  if (detail.usability_score !== null) facts.push(`usability ${detail.usability_score}`);
  if (detail.granularity.temporal !== null) facts.push(`temporal: ${detail.granularity.temporal}`);
  if (detail.granularity.spatial !== null) facts.push(`spatial: ${detail.granularity.spatial}`);
  children.push(el("p", { class: "detail-meta muted" }, facts.join(" · ")));
  if (detail.tags.length > 0) {
    children.push(
      el(
        "p",
        { class: "detail-tags" },
        ...detail.tags.map((tag) => el("span", { class: "tag" }, tag)),
      ),
    );
  }
  if (detail.augmented !== null && detail.augmented.dataset_purposes.length > 0) {
    children.push(
      el("h3", {}, "Suited for"),
      el(
        "ul",
        { class: "detail-purposes" },
        ...detail.augmented.dataset_purposes.map((purpose) => el("li", {}, purpose)),
      ),
    );
  }
  if (detail.columns.length > 0) {
    const descriptions = new Map(
      (detail.augmented?.column_descriptions ?? []).map((column) => [
        column.column_name,
        column,
      ]),
    );
    children.push(
      el("h3", {}, "Columns"),
      el(
        "ul",
        { class: "detail-columns" },
        ...detail.columns.map((column) => {
          const described = descriptions.get(column.name);
          return el(
            "li",
            {},
            el("code", {}, column.name),
            described !== undefined
              ? el("span", { class: "muted" }, ` ${described.type}: ${described.description}`)
              : null,
          );
        }),
      ),
    );
  }
  if (detail.preview_markdown !== "") {
    children.push(
      el("h3", {}, "Preview"),
      el("pre", { class: "detail-preview" }, detail.preview_markdown),
    );
  }
  return el("div", { class: "detail-body" }, ...children);
}

function buildDetailPane(state: SessionState, app: AppController): HTMLElement | null {
  if (state.selectedDataset === null) return null;
  const children: Child[] = [
    el(
      "button",
      {
        id: "close-detail",
        class: "link-button",
        type: "button",
        onclick: () => app.closeDetail(),
      },
      "close ×",
    ),
  ];
  if (state.detailLoading) {
    children.push(el("p", { class: "muted detail-loading" }, "Loading dataset…"));
  } else if (state.detail !== null) {
    children.push(buildDetailBody(state.detail));
  }
  children.push(el("h3", {}, "Relevance to your search"));
  if (state.relevance !== null) {
    children.push(
      el(
        "div",
        { class: "callout utilities" },
        el("h4", {}, "Utilities"),
        el("p", {}, state.relevance.utilities),
      ),
      el(
        "div",
        { class: "callout limitations" },
        el("h4", {}, "Limitations"),
        el("p", {}, state.relevance.limitations),
      ),
    );
  } else if (state.relevanceLoading) {
    children.push(
      el(
        "p",
        { id: "relevance-loading", class: "muted" },
        "Generating relevance indicators…",
      ),
    );
  } else {
    children.push(
      el("p", { class: "muted" }, "Run a search to see task-specific relevance."),
    );
  }
  return el("aside", { id: "detail-pane", class: "open" }, ...children);
}

export function render(
  root: HTMLElement,
  state: SessionState,
  app: AppController,
): void {
  const snapshot = captureFocus();
  const children: Child[] = [buildHeader(state, app)];
  const banner = buildBanner(state);
  if (banner !== null) children.push(banner);
  if (state.phase === "welcome") {
    children.push(el("main", { class: "welcome" }, buildWelcome()));
  } else {
    children.push(
      el(
        "main",
        { class: "workspace" },
        buildFilterPanel(state, app),
        buildResults(state, app),
      ),
    );
  }
  const detail = buildDetailPane(state, app);
  if (detail !== null) children.push(detail);
  root.replaceChildren(el("div", { class: "app" }, ...children));
  restoreFocus(snapshot);
}
