import { ApiClient, ApiError } from './api.js';
import {
  appShell,
  composerView,
  errorBanner,
  fillTemplate,
  galleryView,
  healthBar,
  referencePanel,
  resultsView,
  timelineView,
  type ComposerState,
} from './render.js';
import { SessionStore } from './session.js';
import type {
  Garment,
  GarmentsPage,
  Health,
  RetrieveRequest,
  SessionTurn,
  TemplateInventory,
} from './types.js';

export interface App {
  root: HTMLElement;
  api: ApiClient;
  store: SessionStore;
  ready: Promise<void>;
  whenIdle(): Promise<void>;
  currentTurn(): SessionTurn | null;
  importSession(text: string): Promise<void>;
}

const PAGE_SIZE = 12;

/**
 * Wires the whole single-page client onto one root element. All state lives
 * here and in the SessionStore; the DOM is re-rendered per region from pure
 * templates, and one delegated listener pair handles every action.
 */
export function createApp(root: HTMLElement, api: ApiClient): App {
  root.innerHTML = appShell();
  const region = (id: string): HTMLElement => {
    const el = root.querySelector<HTMLElement>(`#${id}`);
    if (el === null) throw new Error(`missing region #${id}`);
    return el;
  };

  const store = new SessionStore();
  let health: Health | null = null;
  let inventory: TemplateInventory | null = null;
  let page = 1;
  let gallery: GarmentsPage | null = null;
  const filters = { split: '', category: '' };
  const composer: ComposerState = { templateIndex: null, chosen: {}, k: 10, branchOverride: '' };
  let reference: Garment | null = null;
  let current: SessionTurn | null = null;
  let lastRequest: RetrieveRequest | null = null;

  // every user-triggered async op is tracked so tests can await quiescence
  const pending = new Set<Promise<unknown>>();
  function track<T>(promise: Promise<T>): Promise<T> {
    pending.add(promise);
    promise.catch(() => undefined).finally(() => pending.delete(promise));
    return promise;
  }
  async function whenIdle(): Promise<void> {
    while (pending.size > 0) {
      await Promise.allSettled([...pending]);
    }
  }

  function renderHealth(): void {
    region('health').innerHTML = health === null ? '' : healthBar(health);
  }
  function renderGallery(): void {
    if (gallery === null) return;
    region('gallery').innerHTML = galleryView(
      gallery,
      filters,
      health?.splits ?? [],
      inventory?.categories ?? [],
      store.referenceId,
    );
  }
  function renderReference(): void {
    region('reference').innerHTML = referencePanel(reference);
  }
  function renderComposer(): void {
    const area = region('composer').querySelector<HTMLTextAreaElement>('[data-role=feedback]');
    const kept = area === null ? '' : area.value;
    const maxK = health === null ? 50 : health.gallery_size;
    region('composer').innerHTML = composerView(inventory, composer, maxK, store.inFlight);
    const fresh = region('composer').querySelector<HTMLTextAreaElement>('[data-role=feedback]');
    if (fresh !== null) fresh.value = kept;
  }
  function renderResults(): void {
    region('results').innerHTML = resultsView(current);
  }
  function renderTimeline(): void {
    region('timeline').innerHTML = timelineView(store.turns, current?.turn ?? null);
  }
  function showError(message: string, retryable: boolean): void {
    region('error').innerHTML = errorBanner(message, retryable);
  }
  function clearError(): void {
    region('error').innerHTML = '';
  }

  async function loadGallery(): Promise<void> {
    gallery = await api.garments({
      split: filters.split || undefined,
      category: filters.category || undefined,
      page,
      page_size: PAGE_SIZE,
    });
    renderGallery();
  }

  async function init(): Promise<void> {
    try {
      [health, inventory] = await Promise.all([api.health(), api.templates()]);
      filters.split = health.split;
      composer.k = Math.min(10, health.gallery_size);
      renderHealth();
      renderComposer();
      renderReference();
      renderResults();
      renderTimeline();
      await loadGallery();
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err), false);
    }
  }

  async function setReference(id: string): Promise<void> {
    store.setReference(id);
    reference = await api.garment(id);
    renderReference();
    renderGallery();
  }

  function feedbackText(): string {
    const area = region('composer').querySelector<HTMLTextAreaElement>('[data-role=feedback]');
    return area === null ? '' : area.value.trim();
  }

  async function sendRequest(request: RetrieveRequest): Promise<void> {
    clearError();
    lastRequest = request;
    const turnId = store.beginTurn();
    renderComposer();
    try {
      const response = await api.retrieve(request);
      const turn = store.completeTurn(turnId, request.reference_id, request.feedback, response);
      if (turn === null) return; // a newer turn superseded this response
      current = turn;
      renderResults();
      renderTimeline();
    } catch (err) {
      if (!store.failTurn(turnId)) return;
      const detail = err instanceof ApiError && err.field !== null ? ` (field: ${err.field})` : '';
      showError(`${err instanceof Error ? err.message : String(err)}${detail}`, true);
    } finally {
      renderComposer();
    }
  }

  async function send(): Promise<void> {
    if (store.inFlight) return;
    const feedback = feedbackText();
    if (store.referenceId === null) {
      showError('pick a reference garment first', false);
      return;
    }
    if (feedback === '') {
      showError('write or build a feedback sentence first', false);
      return;
    }
    const kInput = region('composer').querySelector<HTMLInputElement>('[data-role=k]');
    const maxK = health === null ? 50 : health.gallery_size;
    composer.k = Math.min(Math.max(1, Number(kInput?.value ?? composer.k) || 1), maxK);
    const request: RetrieveRequest = {
      reference_id: store.referenceId,
      feedback,
      k: composer.k,
    };
    if (composer.branchOverride !== '') request.branch_override = composer.branchOverride;
    await sendRequest(request);
  }

  async function importSession(text: string): Promise<void> {
    clearError();
    const imported = SessionStore.importJson(text);
    store.turns = [];
    current = null;
    for (const [i, recorded] of imported.turns.entries()) {
      store.setReference(recorded.reference_id);
      await sendRequest({
        reference_id: recorded.reference_id,
        feedback: recorded.feedback,
        k: recorded.results.length,
        branch_override: recorded.branch,
      });
      const replayed = store.turns[store.turns.length - 1];
      if (replayed === undefined) throw new Error(`replay failed at turn ${i + 1}`);
      const same =
        replayed.results.length === recorded.results.length &&
        replayed.results.every((r, j) => r.id === recorded.results[j]?.id);
      if (!same) {
        showError(`replay diverged from the recorded session at turn ${i + 1}`, false);
        return;
      }
    }
    renderReference();
    if (store.referenceId !== null) {
      reference = await api.garment(store.referenceId);
      renderReference();
    }
  }

  function exportSession(): void {
    const json = store.exportJson();
    let box = region('timeline').querySelector<HTMLTextAreaElement>('[data-role=session-json]');
    if (box === null) {
      box = document.createElement('textarea');
      box.setAttribute('data-role', 'session-json');
      box.rows = 6;
      region('timeline').appendChild(box);
    }
    box.value = json;
    // real browsers also get a download; jsdom has no createObjectURL
    if (typeof URL.createObjectURL === 'function') {
      const anchor = document.createElement('a');
      anchor.href = URL.createObjectURL(new Blob([json], { type: 'application/json' }));
      anchor.download = 'session.json';
      anchor.click();
    }
  }

  root.addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>('[data-action]');
    if (target === null) return;
    const action = target.dataset.action;
    const id = target.dataset.id ?? '';
    switch (action) {
      case 'select-reference':
      case 'promote':
        track(setReference(id).catch((err) => showError(String(err), false)));
        break;
      case 'page-prev':
        page = Math.max(1, page - 1);
        track(loadGallery());
        break;
      case 'page-next':
        page += 1;
        track(loadGallery());
        break;
      case 'send':
        track(send());
        break;
      case 'retry':
        if (lastRequest !== null) track(sendRequest(lastRequest));
        break;
      case 'insert-template': {
        const template =
          composer.templateIndex === null ? null : inventory?.templates[composer.templateIndex];
        const area = region('composer').querySelector<HTMLTextAreaElement>('[data-role=feedback]');
        if (template != null && area !== null) {
          area.value = fillTemplate(template.text, composer.chosen);
        }
        break;
      }
      case 'restore': {
        const index = Number(target.dataset.index);
        current = store.restore(index);
        renderResults();
        renderTimeline();
        renderGallery();
        track(
          api.garment(store.referenceId ?? '').then((g) => {
            reference = g;
            renderReference();
          }),
        );
        break;
      }
      case 'export-session':
        exportSession();
        break;
      case 'dismiss-error':
        clearError();
        break;
      default:
        break;
    }
  });

  root.addEventListener('change', (event) => {
    const el = event.target as HTMLElement;
    if (el instanceof HTMLSelectElement) {
      const filter = el.dataset.filter;
      if (filter === 'split' || filter === 'category') {
        filters[filter] = el.value;
        page = 1;
        track(loadGallery());
        return;
      }
      if (el.dataset.action === 'pick-template') {
        composer.templateIndex = el.value === '' ? null : Number(el.value);
        composer.chosen = {};
        renderComposer();
        return;
      }
      const slot = el.dataset.slot;
      if (slot !== undefined) {
        if (el.value === '') {
          delete composer.chosen[slot];
        } else {
          composer.chosen[slot] = el.value;
        }
        renderComposer();
        return;
      }
      if (el.dataset.role === 'branch-override') {
        composer.branchOverride = el.value as ComposerState['branchOverride'];
        return;
      }
    }
    if (el instanceof HTMLInputElement && el.dataset.role === 'import-file') {
      const file = el.files?.[0];
      if (file !== undefined) {
        track(
          file.text().then(
            (text) => importSession(text),
            (err) => showError(String(err), false),
          ),
        );
      }
    }
  });

  const ready = track(init());

  return {
    root,
    api,
    store,
    ready,
    whenIdle,
    currentTurn: () => current,
    importSession: (text) => track(importSession(text)),
  };
}
