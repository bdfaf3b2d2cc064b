/** DOM wiring for the feedback loop: upload, grid, marks, submit, reset. */

import { ApiError, RetrievalClient, type FetchLike } from "./api.js";
import {
  feedbackSets,
  pageFromResponse,
  toggleMark,
  type SessionPage,
} from "./state.js";

export interface MountOptions {
  baseUrl?: string;
  fetchFn?: FetchLike;
}

export function mount(root: HTMLElement, options: MountOptions = {}): void {
  const doc = root.ownerDocument;
  const client = new RetrievalClient(options.baseUrl ?? "", options.fetchFn);

  let page: SessionPage | null = null;
  let busy = false;

  root.innerHTML = `
    <header>
      <h1>Sub-image search</h1>
      <p data-role="status"></p>
    </header>
    <section data-role="upload-view">
      <input type="file" accept="image/*" data-role="file-input">
      <button type="button" data-role="upload" disabled>Search</button>
    </section>
    <section data-role="results-view" hidden>
      <div class="toolbar">
        <span>Iteration <strong data-role="iteration"></strong></span>
        <label>
          <input type="checkbox" data-role="rest-negative" checked>
          mark everything else irrelevant
        </label>
        <button type="button" data-role="submit">Send feedback</button>
        <button type="button" data-role="reset">New search</button>
      </div>
      <div class="grid" data-role="grid"></div>
    </section>
    <p class="error" data-role="error" hidden></p>
  `;

  const el = <T extends HTMLElement>(role: string): T => {
    const found = root.querySelector<T>(`[data-role="${role}"]`);
    if (!found) throw new Error(`missing element: ${role}`);
    return found;
  };

  const uploadView = el<HTMLElement>("upload-view");
  const resultsView = el<HTMLElement>("results-view");
  const fileInput = el<HTMLInputElement>("file-input");
  const uploadButton = el<HTMLButtonElement>("upload");
  const iterationEl = el<HTMLElement>("iteration");
  const restNegative = el<HTMLInputElement>("rest-negative");
  const submitButton = el<HTMLButtonElement>("submit");
  const resetButton = el<HTMLButtonElement>("reset");
  const grid = el<HTMLElement>("grid");
  const errorEl = el<HTMLElement>("error");
  const statusEl = el<HTMLElement>("status");

  function showError(message: string): void {
    errorEl.textContent = message;
    errorEl.hidden = false;
  }

  function clearError(): void {
    errorEl.textContent = "";
    errorEl.hidden = true;
  }

  function renderGrid(): void {
    if (!page) return;
    iterationEl.textContent = String(page.iteration);
    grid.innerHTML = "";
    for (const card of page.cards) {
      const figure = doc.createElement("figure");
      figure.className = `card mark-${card.mark}`;
      figure.dataset.imageId = String(card.imageId);

      const img = doc.createElement("img");
      img.src = client.imageUrl(card.url);
      img.alt = `result ${card.rank}`;
      figure.appendChild(img);

      const caption = doc.createElement("figcaption");
      caption.textContent = `#${card.rank} · ${card.score.toFixed(4)}`;
      figure.appendChild(caption);

      const controls = doc.createElement("div");
      controls.className = "marks";
      for (const mark of ["positive", "negative"] as const) {
        const button = doc.createElement("button");
        button.type = "button";
        button.dataset.mark = mark;
        button.textContent = mark === "positive" ? "+" : "−";
        button.setAttribute("aria-pressed", String(card.mark === mark));
        button.addEventListener("click", () => {
          if (busy || !page) return;
          page = toggleMark(page, card.imageId, mark);
          renderGrid();
        });
        controls.appendChild(button);
      }
      figure.appendChild(controls);
      grid.appendChild(figure);
    }
  }

  function showResults(): void {
    uploadView.hidden = true;
    resultsView.hidden = false;
    renderGrid();
  }

  function showUpload(): void {
    page = null;
    resultsView.hidden = true;
    uploadView.hidden = false;
    fileInput.value = "";
    uploadButton.disabled = true;
  }

  function setBusy(value: boolean): void {
    busy = value;
    uploadButton.disabled = value || !fileInput.files?.length;
    submitButton.disabled = value;
    resetButton.disabled = value;
  }

  /** Run one request at a time; ignore triggers while one is in flight. */
  async function guarded(action: () => Promise<void>): Promise<void> {
    if (busy) return;
    clearError();
    setBusy(true);
    try {
      await action();
    } catch (error) {
      showError(error instanceof ApiError ? error.message : String(error));
    } finally {
      setBusy(false);
    }
  }

  fileInput.addEventListener("change", () => {
    uploadButton.disabled = busy || !fileInput.files?.length;
  });

  uploadButton.addEventListener("click", () =>
    guarded(async () => {
      const file = fileInput.files?.[0];
      if (!file) return;
      page = pageFromResponse(await client.createSession(file, file.name));
      showResults();
    }),
  );

  submitButton.addEventListener("click", () =>
    guarded(async () => {
      if (!page) return;
      const { positives, negatives } = feedbackSets(page, restNegative.checked);
      page = pageFromResponse(
        await client.sendFeedback(page.sessionId, positives, negatives),
      );
      renderGrid();
    }),
  );

  resetButton.addEventListener("click", () =>
    guarded(async () => {
      const ending = page;
      showUpload();
      if (ending) await client.endSession(ending.sessionId);
    }),
  );

  client
    .health()
    .then((health) => {
      statusEl.textContent = `${health.images} images indexed, ${health.paletteSize} colors`;
    })
    .catch(() => {
      statusEl.textContent = "service unreachable";
    });
}
